'''
Named controller structures. All of them are rows mapping the measurements to one control input.
'''
from typing import Any
from typing import Sequence
from logging import getLogger
import numpy as np
import torch
from torch import Tensor
from hinfsystem.aggregate import ControllerStructure
from hinfsystem.polynomials import Polynomial, QuasiPolynomial
from hinfsystem.xfer import TransferExpr, Rational, QuasiRational, Constant, StateSpace, RhpPoleInfo, hstack

logger = getLogger(__name__)

AXIS_TOLERANCE = 1e-12

def _powers(s: Tensor, degree: int) -> Tensor:
    return torch.stack([s**k for k in range(degree + 1)], dim=1)

def pole_info(roots: np.ndarray) -> RhpPoleInfo:
    '''
    Classify the roots of a real denominator into open right half plane poles and imaginary axis
    poles, each conjugate pair reported once with its nonnegative frequency.
    '''
    roots = np.asarray(roots, dtype=complex)
    axis = roots[np.abs(roots.real) <= AXIS_TOLERANCE]
    unstable = roots[roots.real > AXIS_TOLERANCE]
    axis_poles = [(abs(root.imag), 1) for root in axis if root.imag >= 0]
    return RhpPoleInfo(len(unstable), tuple(axis_poles), tuple(unstable))

class SharedDenominator(ControllerStructure):
    '''
    Rational row controller [n_1/d, ..., n_m/d] with a monic denominator d of the given order
    shared by all the channels and numerators of the same order.

    The parameters are laid out as the ascending coefficients a_0, ..., a_{order-1} of
    d(s) = s^order + ... + a_0 followed by the ascending coefficients of every numerator, which
    gives order + channels (order + 1) parameters.

    Args:
        channels (int): Number of measurements.
        order (int): Degree of the shared denominator.
        x (Sequence[float]): Initial parameters, a static zero controller with d(s) = (s + 1)^order
            by default.
        id (Any): Identifier of the aggregate root.
    '''

    def __init__(self, channels: int = 5, order: int = 2, x: Sequence[float] | None = None, id: Any = 'K2'):
        if x is None:
            denominator = Polynomial((1.0, 1.0))
            d = Polynomial((1.0,))
            for _ in range(order):
                d = d * denominator
            x = list(d.coeffs[:-1]) + [0.0] * channels * (order + 1)
        if len(x) != order + channels * (order + 1):
            raise ValueError(f'Expected {order + channels * (order + 1)} parameters, got {len(x)}')
        super().__init__(id, (1, channels), x)
        self.channels = channels
        self.order = order

    @classmethod
    def from_coefficients(cls, numerators: Sequence[Sequence[float]], denominator: Sequence[float], id: Any = 'K2') -> 'SharedDenominator':
        '''
        Build the structure from printed coefficients in descending degree; the denominator must be
        monic and the numerators are padded to its degree.
        '''
        d = Polynomial.descending(denominator)
        if d.leading != 1.0:
            raise ValueError('The shared denominator must be monic')
        x = list(d.coeffs[:-1])
        for numerator in numerators:
            coeffs = list(Polynomial.descending(numerator).coeffs)
            x += coeffs + [0.0] * (d.degree + 1 - len(coeffs))
        return cls(len(numerators), d.degree, x=x, id=id)

    def split(self, x: np.ndarray | None = None) -> tuple[Polynomial, list[Polynomial]]:
        x = self.vector() if x is None else x
        d = Polynomial(list(x[:self.order]) + [1.0])
        numerators = x[self.order:].reshape(self.channels, self.order + 1)
        return d, [Polynomial(row) for row in numerators]

    def forward(self, s: Tensor) -> Tensor:
        x = self.x.to(torch.complex128)
        powers = _powers(s, self.order)
        denominator = powers[:, :self.order] @ x[:self.order] + powers[:, self.order]
        numerators = powers @ x[self.order:].reshape(self.channels, self.order + 1).T
        return (numerators / denominator[:, None])[:, None, :]

    def expr(self) -> TransferExpr:
        d, numerators = self.split()
        return hstack(*[Rational(n, d) for n in numerators])

    def unstable_poles(self) -> RhpPoleInfo:
        d, _ = self.split()
        return pole_info(d.roots())

    def realization(self) -> StateSpace:
        '''
        Observable canonical realization of order equal to the degree of d.
        '''
        d, numerators = self.split()
        A = np.zeros((self.order, self.order))
        A[1:, :-1] = np.eye(self.order - 1)
        A[:, -1] = -np.asarray(d.coeffs[:-1])
        B = np.zeros((self.order, self.channels))
        D = np.zeros((1, self.channels))
        for index, numerator in enumerate(numerators):
            coeffs = np.zeros(self.order + 1)
            coeffs[:len(numerator.coeffs)] = numerator.coeffs
            D[0, index] = coeffs[-1]
            B[:, index] = coeffs[:-1] - coeffs[-1] * np.asarray(d.coeffs[:-1])
        C = np.zeros((1, self.order))
        C[0, -1] = 1.0
        return StateSpace(A, B, C, D)

class Static(ControllerStructure):
    '''
    A constant gain row.
    '''

    def __init__(self, channels: int = 3, x: Sequence[float] | None = None, id: Any = 'static'):
        super().__init__(id, (1, channels), np.zeros(channels) if x is None else x)
        self.channels = channels

    def forward(self, s: Tensor) -> Tensor:
        return self.x.to(torch.complex128)[None, None, :].expand(len(s), 1, self.channels)

    def expr(self) -> TransferExpr:
        return Constant(self.vector()[None, :])

class RowQuasi(ControllerStructure):
    '''
    Row controller whose active channels are n_i(s) / (a(s) + exp(-theta s) b(s)), with a monic
    of the given order, b of lower degree and numerators of the same order as a. The inactive
    channels hold a fixed constant offset.

    Args:
        channels (int): Number of measurements.
        active (Sequence[int]): Indices of the tuned channels.
        order (int): Degree of a.
        theta (float): Delay of the b term.
        offset (Sequence[float]): Constant entries of the inactive channels.
        x (Sequence[float]): Ascending coefficients of a without its leading one, then of b, then
            of every active numerator.
    '''

    def __init__(
        self,
        channels: int = 3,
        active: Sequence[int] = (0,),
        order: int = 1,
        theta: float = 1.0,
        offset: Sequence[float] | None = None,
        x: Sequence[float] | None = None,
        id: Any = 'row-quasi'
    ):
        active = tuple(active)
        if x is None:
            x = [1.0] * order + [0.0] * order + [0.0] * len(active) * (order + 1)
        if len(x) != 2 * order + len(active) * (order + 1):
            raise ValueError(f'Expected {2 * order + len(active) * (order + 1)} parameters, got {len(x)}')
        super().__init__(id, (1, channels), x)
        self.channels = channels
        self.active = active
        self.order = order
        self.theta = theta
        self.offset = np.zeros(channels) if offset is None else np.asarray(offset, dtype=float)

    def split(self) -> tuple[QuasiPolynomial, list[Polynomial]]:
        x = self.vector()
        a = Polynomial(list(x[:self.order]) + [1.0])
        b = Polynomial(x[self.order:2 * self.order])
        numerators = x[2 * self.order:].reshape(len(self.active), self.order + 1)
        return QuasiPolynomial([(a, 0.0), (b, self.theta)]), [Polynomial(row) for row in numerators]

    def forward(self, s: Tensor) -> Tensor:
        x = self.x.to(torch.complex128)
        powers = _powers(s, self.order)
        a = powers[:, :self.order] @ x[:self.order] + powers[:, self.order]
        b = powers[:, :self.order] @ x[self.order:2 * self.order]
        denominator = a + torch.exp(-self.theta * s) * b
        numerators = powers @ x[2 * self.order:].reshape(len(self.active), self.order + 1).T
        entries = numerators / denominator[:, None]
        columns = [
            entries[:, self.active.index(index)] if index in self.active
            else torch.full((len(s),), complex(value), dtype=torch.complex128)
            for index, value in enumerate(self.offset)
        ]
        return torch.stack(columns, dim=1)[:, None, :]

    def expr(self) -> TransferExpr:
        denominator, numerators = self.split()
        entries: list[TransferExpr] = [Constant([[value]]) for value in self.offset]
        for index, numerator in zip(self.active, numerators):
            entries[index] = QuasiRational(QuasiPolynomial.constant(numerator), denominator)
        return hstack(*entries)

    def unstable_poles(self) -> RhpPoleInfo:
        from hinfsystem.quasipoly import rhp_zero_count
        denominator, _ = self.split()
        return RhpPoleInfo(rhp_zero_count(denominator))

NOMINAL = (-1.049, -1.049, -0.05402)
FIRST = (-0.1102, -0.1102, -0.1053)
SECOND = (0.03901, 0.03901, 0.02855)

class ScheduledQuadratic(ControllerStructure):
    '''
    Static row scheduled in the anti-damping parameter q:

        K(q, x) = K(q0) + (q - q0) K1(x) + (q - q0)^2 K2(x)

    with x holding the three entries of K1 followed by the three entries of K2. Set the attribute
    q to evaluate the frozen controller at another operating point.
    '''

    def __init__(self, q: float = 3.0, q0: float = 3.0, nominal: Sequence[float] = NOMINAL, x: Sequence[float] | None = None, id: Any = 'scheduled'):
        super().__init__(id, (1, 3), list(FIRST) + list(SECOND) if x is None else x)
        self.q = q
        self.q0 = q0
        self.nominal = np.asarray(nominal, dtype=float)

    def gains(self) -> Tensor:
        delta = self.q - self.q0
        nominal = torch.as_tensor(self.nominal, dtype=torch.float64)
        return nominal + delta * self.x[:3] + delta**2 * self.x[3:]

    def forward(self, s: Tensor) -> Tensor:
        return self.gains().to(torch.complex128)[None, None, :].expand(len(s), 1, 3)

    def expr(self) -> TransferExpr:
        return Constant(self.gains().detach().numpy()[None, :])
