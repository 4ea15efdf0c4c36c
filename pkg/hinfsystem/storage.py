from os import path
from typing import Any, Optional
from logging import getLogger
from mlregistry import Registry
from mlregistry import get_hash
from hinfsystem.settings import Settings
from hinfsystem.weights import Weights
from hinfsystem.aggregate import ControllerStructure
from hinfsystem.plants import ParabolicPlant, WavePlant
from hinfsystem.structures import SharedDenominator, Static, RowQuasi, ScheduledQuadratic

logger = getLogger(__name__)

class Storage[T]:
    '''
    Coordinates a registry of named types with the stored parameters of their instances.
    '''
    registry: Registry[T]
    weights: Weights
    category: str

    @classmethod
    def register(cls, type: type):
        if type.__name__ in cls.registry.keys():
            return
        logger.info(f'Registering {type.__name__} in category {cls.category}')
        cls.registry.register(type, cls.category)

    def get(self, name: str, *args, **kwargs) -> Optional[T]:
        '''
        Build a registered object by name and restore its parameters when some were stored.

        Parameters:
            name (str): The registered type name.
            *args: Positional arguments of the type.
            **kwargs: Keyword arguments of the type.
        '''
        if name not in self.registry.keys():
            return None
        object = self.registry.get(name)(*args, **kwargs)
        if hasattr(self, 'weights'):
            self.weights.restore(object, self.key(object))
        return object

    def key(self, object: T) -> str:
        return f'{self.category}:{get_hash(object)}'

    def store(self, object: T):
        '''
        Store the parameters of a registered object.
        '''
        assert object.__class__.__name__ in self.registry.keys(), f'{object.__class__.__name__} not registered in {self.category}'
        logger.info(f'Storing {object.__class__.__name__} in category {self.category}')
        if hasattr(self, 'weights'):
            self.weights.store(object, self.key(object))

    def restore(self, object: T) -> bool:
        assert object.__class__.__name__ in self.registry.keys(), f'{object.__class__.__name__} not registered in {self.category}'
        return self.weights.restore(object, self.key(object)) if hasattr(self, 'weights') else False

class Structures(Storage[ControllerStructure]):
    '''
    Controller structures, hashed by their shape arguments so that parameters tuned for one
    structure are restored into any instance of the same shape.
    '''
    category = 'structure'
    registry = Registry(exclude_parameters={'x', 'id'})

    def __init__(self, folder: str | None = None, settings: Settings | None = None):
        self.settings = settings or Settings()
        directory = self.settings.output.weights
        self.weights = Weights(path.join(directory, folder) if folder else directory)

class Plants(Storage[Any]):
    category = 'plant'
    registry = Registry()

ALIASES = {
    'parabolic': 'ParabolicPlant',
    'wave': 'WavePlant',
    'shared-denominator': 'SharedDenominator',
    'static': 'Static',
    'row-quasi': 'RowQuasi',
    'scheduled': 'ScheduledQuadratic'
}

def register_defaults():
    '''
    Register the plants and the named structures of the package.
    '''
    for plant in (ParabolicPlant, WavePlant):
        Plants.register(plant)
    for structure in (SharedDenominator, Static, RowQuasi, ScheduledQuadratic):
        Structures.register(structure)

def resolve(name: str) -> str:
    return ALIASES.get(name, name)
