from pytest import fixture, approx
from mlregistry import get_metadata, get_hash
from hinfsystem.settings import Settings
from hinfsystem.storage import Structures, Plants, register_defaults, resolve
from hinfsystem.structures import SharedDenominator, Static
from hinfsystem.plants import ParabolicPlant, WavePlant, parabolic_structure

@fixture(scope='session')
def registry():
    register_defaults()
    yield

@fixture
def settings(tmp_path) -> Settings:
    settings = Settings()
    settings.output.weights = str(tmp_path / 'weights')
    return settings


def test_initialization(registry):
    structure = SharedDenominator(5, 2, id='K2')
    metadata = get_metadata(structure)
    assert metadata.name == 'SharedDenominator'
    assert metadata.arguments == {'channels': 5, 'order': 2}
    assert metadata.type == 'structure'
    plant = WavePlant(q=3.0)
    metadata = get_metadata(plant)
    assert metadata.arguments == {'q': 3.0}
    assert metadata.type == 'plant'


def test_retrieval(registry, settings):
    structures = Structures(settings=settings)
    plants = Plants()
    assert 'SharedDenominator' in structures.registry.keys()
    assert 'Static' in structures.registry.keys()
    assert 'ParabolicPlant' in plants.registry.keys()
    assert resolve('wave') == 'WavePlant'

    structure = structures.get(resolve('shared-denominator'), channels=3, order=1)
    plant = plants.get(resolve('parabolic'))
    assert isinstance(structure, SharedDenominator)
    assert isinstance(plant, ParabolicPlant)
    assert structures.get('Unknown') is None


def test_parameters_survive_a_restart(registry, settings):
    structures = Structures(settings=settings)
    tuned = parabolic_structure('model-matching')
    structures.store(tuned)
    assert structures.weights.exists(structures.key(tuned))

    fresh = structures.get('SharedDenominator', 5, 2)
    assert fresh.vector() == approx(tuned.vector())
    assert get_hash(fresh) == get_hash(tuned)


def test_missing_parameters_leave_the_structure(registry, settings):
    structures = Structures('empty', settings=settings)
    static = Static(3, x=[1.0, 2.0, 3.0])
    assert not structures.restore(static)
    assert static.vector() == approx([1.0, 2.0, 3.0])
