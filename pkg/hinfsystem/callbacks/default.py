from typing import Any
from logging import getLogger
from pybondi.callbacks import Callback

logger = getLogger(__name__)

class Default(Callback):
    '''
    Logs every accepted iterate of a synthesis run and the best certified value on flush.
    '''
    def __init__(self):
        super().__init__()
        self.best = None

    def __call__(self, id: Any, record: Any, *args, **kwargs):
        self.best = record.value if self.best is None else min(self.best, record.value)
        logger.info(f'Structure {id}, iterate {record.iteration}: value {record.value:.6g}, verdict {record.verdict}, backtracks {record.backtracks}')

    def flush(self):
        logger.info(f'End of synthesis, best certified value {self.best}')

    def reset(self):
        self.best = None
