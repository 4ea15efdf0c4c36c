from os import path, makedirs
from logging import getLogger
from torch import save, load
from torch.nn import Module

logger = getLogger(__name__)

class Weights[T: Module]:
    '''
    Keeps the parameter vectors of controller structures as torch state dicts, one file per key.

    Args:
        directory (str): Where the files live, created when missing.
    '''
    def __init__(self, directory: str):
        self.location = directory
        makedirs(self.location, exist_ok=True)

    def file(self, key: str) -> str:
        return path.join(self.location, key.replace(':', '-') + '.pth')

    def exists(self, key: str) -> bool:
        return path.exists(self.file(key))

    def store(self, module: T, key: str):
        '''
        Save the state dict of a structure under a key.
        '''
        logger.info(f'Storing parameters of {module.__class__.__name__} as {key}')
        save(module.state_dict(), self.file(key))

    def restore(self, module: T, key: str) -> bool:
        '''
        Load the state dict stored under a key into a structure. A missing file leaves the
        structure untouched and is logged.

        Returns:
            bool: Whether parameters were restored.
        '''
        try:
            module.load_state_dict(load(self.file(key), weights_only=True))
        except FileNotFoundError:
            logger.warning(f'No stored parameters for {module.__class__.__name__} under {key}')
            return False
        logger.info(f'Restored parameters of {module.__class__.__name__} from {key}')
        return True
