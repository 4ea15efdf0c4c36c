from abc import ABC, abstractmethod
from typing import Any
from typing import Sequence
import numpy as np
import torch
from torch import Tensor
from torch.nn import Module, Parameter
from pybondi.aggregate import Root
from hinfsystem.xfer import TransferExpr, StateSpace, Parametric, RhpPoleInfo, realize

class ControllerStructure(Module, ABC):
    '''
    A structured controller K(x, s) depending differentiably on a vector x of tunable parameters.
    It is the aggregate of a synthesis run: it owns the root that publishes the domain events,
    the iteration counter and the parameter vector.

    Attributes:
        root (Root): The aggregate root, initialized with an identifier.
        iteration (int): The number of accepted optimizer steps.
        x (Parameter): The tunable parameters, float64.
        shape (tuple[int, int]): (controls, measurements).
    '''

    def __init__(self, id: Any, shape: tuple[int, int], x: Sequence[float] | Tensor):
        super().__init__()
        self.root = Root(id=id)
        self.iteration = 0
        self.shape = tuple(shape)
        self.x = Parameter(torch.as_tensor(np.asarray(x, dtype=float), dtype=torch.float64).clone())

    @property
    def id(self) -> Any:
        return self.root.id

    @property
    def size(self) -> int:
        '''
        The number of tunable parameters.
        '''
        return self.x.numel()

    def vector(self) -> np.ndarray:
        return self.x.detach().numpy().copy()

    def assign(self, x: Sequence[float] | np.ndarray):
        '''
        Overwrite the parameters in place.
        '''
        with torch.no_grad():
            self.x.copy_(torch.as_tensor(np.asarray(x, dtype=float), dtype=torch.float64))

    @abstractmethod
    def forward(self, s: Tensor) -> Tensor:
        '''
        Evaluate K(x, s) on a one dimensional complex128 batch, keeping the autograd graph.

        Returns:
            Tensor: A (N, controls, measurements) complex128 tensor.
        '''

    @abstractmethod
    def expr(self) -> TransferExpr:
        '''
        An immutable snapshot of K at the current parameters.
        '''

    def unstable_poles(self) -> RhpPoleInfo:
        '''
        The open right half plane and imaginary axis poles of K at the current parameters.
        '''
        return RhpPoleInfo()

    def realization(self) -> StateSpace:
        return realize(self.expr())

    def parametric(self) -> Parametric:
        '''
        The structure as a live node for use inside closed-loop expressions.
        '''
        return Parametric(self)
