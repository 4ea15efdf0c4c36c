from typing import Any
from datetime import datetime
from dataclasses import dataclass
from pybondi import Event

@dataclass
class Stepped(Event):
    '''
    The Stepped event signals that the optimizer accepted a new iterate of a controller
    structure. The record carries the certified value and the stability verdict of the iterate.
    '''
    id: Any
    iteration: int
    record: Any

@dataclass
class Synthesized(Event):
    '''
    The Synthesized event signals that a synthesis run over a controller structure has finished.
    '''
    id: Any
    start: datetime
    end: datetime
    value: float
    iterations: int
    reason: str

@dataclass
class Analyzed(Event):
    '''
    The Analyzed event signals that a closed loop was certified, carrying the certificate hash.
    '''
    id: Any
    verdict: str
    hash: str
