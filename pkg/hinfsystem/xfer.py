'''
Algebra and evaluation of irrational transfer matrices.

Every node evaluates on a one dimensional batch of complex points and returns a stack of matrices
of shape (N, outputs, inputs) together with its s-derivative. Public evaluation goes through
`TransferExpr.eval` and `TransferExpr.eval_deriv`, which accept scalars or arrays of any shape and
split large batches in chunks.
'''
from __future__ import annotations
from abc import ABC, abstractmethod
from math import inf
from typing import Any
from typing import Callable
from typing import Sequence
from dataclasses import dataclass
from logging import getLogger
import numpy as np
import torch
from scipy.signal import tf2ss
from hinfsystem.polynomials import Polynomial, QuasiPolynomial, as_polynomial
from hinfsystem.exceptions import SingularAt, DimensionMismatch, NotFiniteDimensional

logger = getLogger(__name__)

CHUNK = 512

type Pair = tuple[np.ndarray, np.ndarray]

@dataclass(frozen=True)
class Envelope:
    '''
    Conservative entrywise description of a transfer matrix along the imaginary axis beyond a
    frequency w: for every w' >= w, |F(jw')_ik - center_ik| <= radius_ik (w / w')^order.
    '''
    center: np.ndarray
    radius: np.ndarray
    order: float = inf

    @staticmethod
    def _order(*pairs: tuple[np.ndarray, float]) -> float:
        orders = [order for radius, order in pairs if np.any(radius > 0)]
        return min(orders, default=inf)

    def __add__(self, other: Envelope) -> Envelope:
        return Envelope(
            self.center + other.center,
            self.radius + other.radius,
            self._order((self.radius, self.order), (other.radius, other.order))
        )

    def __matmul__(self, other: Envelope) -> Envelope:
        first = np.abs(self.center) @ other.radius
        second = self.radius @ np.abs(other.center)
        third = self.radius @ other.radius
        return Envelope(
            self.center @ other.center,
            first + second + third,
            self._order((first, other.order), (second, self.order), (third, self.order + other.order))
        )

    def scale(self, factor: complex) -> Envelope:
        return Envelope(self.center * factor, self.radius * abs(factor), self.order)

    def sup(self) -> float:
        '''
        Upper bound for the largest singular value of F(jw') for every w' >= w.
        '''
        return float(np.linalg.norm(np.abs(self.center) + self.radius, 2))

    def tail_integral(self, omega: float) -> float:
        '''
        Upper bound for the integral of trace(F^H F) over [omega, inf).
        '''
        if np.any(self.center != 0):
            return inf
        if not np.any(self.radius > 0):
            return 0.0
        if self.order <= 0.5:
            return inf
        return float(np.sum(self.radius**2)) * omega / (2 * self.order - 1)

def _batch(s) -> tuple[np.ndarray, tuple[int, ...]]:
    array = np.asarray(s, dtype=complex)
    return array.reshape(-1), array.shape

def _singular_point(mask: np.ndarray, s: np.ndarray) -> complex:
    return complex(s[np.argmax(mask)])

def _inverse(matrix: np.ndarray, s: np.ndarray) -> np.ndarray:
    try:
        inverse = np.linalg.inv(matrix)
    except np.linalg.LinAlgError:
        determinant = np.abs(np.linalg.det(matrix))
        raise SingularAt(_singular_point(determinant == 0, s)) from None
    bad = ~np.all(np.isfinite(inverse), axis=(-2, -1))
    if np.any(bad):
        raise SingularAt(_singular_point(bad, s))
    return inverse

class TransferExpr(ABC):
    '''
    A composable transfer matrix with outputs x inputs entries, evaluable at complex points
    together with its analytic s-derivative.
    '''

    @property
    @abstractmethod
    def shape(self) -> tuple[int, int]:...

    @abstractmethod
    def _pair(self, s: np.ndarray) -> Pair:...

    def _value(self, s: np.ndarray) -> np.ndarray:
        return self._pair(s)[0]

    def _tensor(self, s: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    @property
    def parametric(self) -> bool:
        '''
        True when the expression depends on a live controller structure.
        '''
        return False

    def envelope(self, omega: float) -> Envelope | None:
        '''
        A conservative bound of the expression on [j omega, j inf), or None when no analytic bound
        is available.
        '''
        return None

    def eval(self, s) -> np.ndarray:
        '''
        Evaluate the expression at one or many complex points.

        Parameters:
            s (complex | ArrayLike): The evaluation points.

        Returns:
            ndarray: Values with shape s.shape + (outputs, inputs).
        '''
        points, batch = _batch(s)
        values = [self._value(points[start:start + CHUNK]) for start in range(0, len(points), CHUNK)]
        values = np.concatenate(values) if values else np.zeros((0, *self.shape), dtype=complex)
        return values.reshape(batch + self.shape)

    def eval_deriv(self, s) -> np.ndarray:
        '''
        Evaluate the s-derivative of the expression at one or many complex points.
        '''
        return self.eval_pair(s)[1]

    def eval_pair(self, s) -> Pair:
        points, batch = _batch(s)
        values, derivatives = [], []
        for start in range(0, len(points), CHUNK):
            value, derivative = self._pair(points[start:start + CHUNK])
            values.append(value)
            derivatives.append(derivative)
        if not values:
            empty = np.zeros((0, *self.shape), dtype=complex)
            return empty.reshape(batch + self.shape), empty.reshape(batch + self.shape)
        return (
            np.concatenate(values).reshape(batch + self.shape),
            np.concatenate(derivatives).reshape(batch + self.shape)
        )

    def tensor(self, s: torch.Tensor) -> torch.Tensor:
        '''
        Evaluate the expression with torch on a one dimensional complex128 tensor, keeping the
        autograd graph of every controller structure inside the expression.
        '''
        if not self.parametric:
            return torch.from_numpy(self.eval(s.detach().numpy()))
        return self._tensor(s)

    def __add__(self, other) -> TransferExpr:
        return Sum(self, _coerce(other, self))

    def __radd__(self, other) -> TransferExpr:
        return Sum(_coerce(other, self), self)

    def __neg__(self) -> TransferExpr:
        return Scale(self, -1.0)

    def __sub__(self, other) -> TransferExpr:
        return Sum(self, Scale(_coerce(other, self), -1.0))

    def __rsub__(self, other) -> TransferExpr:
        return Sum(_coerce(other, self), Scale(self, -1.0))

    def __matmul__(self, other: TransferExpr) -> TransferExpr:
        return Product(self, other)

    def __mul__(self, other) -> TransferExpr:
        if isinstance(other, TransferExpr):
            return Product(self, other)
        return Scale(self, other)

    def __rmul__(self, other) -> TransferExpr:
        return Scale(self, other)

    def __getitem__(self, key) -> TransferExpr:
        rows, cols = key
        return Select(self, _indices(rows, self.shape[0]), _indices(cols, self.shape[1]))

def _indices(key, size: int) -> tuple[int, ...]:
    if isinstance(key, slice):
        return tuple(range(size))[key]
    if isinstance(key, int):
        return (key,)
    return tuple(int(index) for index in key)

def _coerce(value, like: TransferExpr) -> TransferExpr:
    if isinstance(value, TransferExpr):
        return value
    rows, cols = like.shape
    if rows != cols:
        raise DimensionMismatch(f'A scalar can only be added to a square expression, got {like.shape}')
    return Constant(np.eye(rows) * value)

@dataclass(frozen=True, eq=False)
class Rational(TransferExpr):
    '''
    A scalar real-rational transfer function num(s)/den(s).
    '''
    num: Polynomial
    den: Polynomial

    def __post_init__(self):
        object.__setattr__(self, 'num', as_polynomial(self.num))
        object.__setattr__(self, 'den', as_polynomial(self.den))
        if self.den.is_zero:
            raise ValueError('The denominator of a rational block cannot be zero')

    @property
    def shape(self) -> tuple[int, int]:
        return (1, 1)

    def _pair(self, s: np.ndarray) -> Pair:
        n, d = self.num(s), self.den(s)
        if np.any(d == 0):
            raise SingularAt(_singular_point(d == 0, s))
        dn, dd = self.num.deriv()(s), self.den.deriv()(s)
        value = n / d
        derivative = (dn * d - n * dd) / d**2
        return value[:, None, None], derivative[:, None, None]

    def _value(self, s: np.ndarray) -> np.ndarray:
        d = self.den(s)
        if np.any(d == 0):
            raise SingularAt(_singular_point(d == 0, s))
        return (self.num(s) / d)[:, None, None]

    def poles(self) -> np.ndarray:
        return self.den.roots()

    def envelope(self, omega: float) -> Envelope | None:
        if self.num.degree > self.den.degree:
            return None
        magnitudes = np.abs(self.poles())
        if magnitudes.size and omega <= magnitudes.max():
            return None
        center = self.num.leading / self.den.leading if self.num.degree == self.den.degree else 0.0
        remainder = self.num - center * self.den
        if remainder.is_zero:
            return Envelope(np.array([[center]], dtype=complex), np.zeros((1, 1)))
        numerator = sum(abs(c) * omega**k for k, c in enumerate(remainder.coeffs))
        denominator = abs(self.den.leading) * np.prod(omega - magnitudes)
        order = self.den.degree - remainder.degree
        return Envelope(np.array([[center]], dtype=complex), np.array([[numerator / denominator]]), float(order))

def tf(num: Sequence[float] | float, den: Sequence[float] | float) -> Rational:
    '''
    Build a rational block from coefficients in descending degree, as in python-control.
    '''
    num = [num] if np.isscalar(num) else num
    den = [den] if np.isscalar(den) else den
    return Rational(Polynomial.descending(num), Polynomial.descending(den))

@dataclass(frozen=True, eq=False)
class Delay(TransferExpr):
    theta: float

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError(f'Delays must be nonnegative, got {self.theta}')

    @property
    def shape(self) -> tuple[int, int]:
        return (1, 1)

    def _pair(self, s: np.ndarray) -> Pair:
        value = np.exp(-self.theta * s)
        return value[:, None, None], (-self.theta * value)[:, None, None]

    def envelope(self, omega: float) -> Envelope | None:
        if self.theta == 0:
            return Envelope(np.ones((1, 1), dtype=complex), np.zeros((1, 1)))
        return Envelope(np.zeros((1, 1), dtype=complex), np.ones((1, 1)), 0.0)

@dataclass(frozen=True, eq=False)
class QuasiRational(TransferExpr):
    '''
    A ratio of quasi-polynomials num(s)/den(s).
    '''
    num: QuasiPolynomial
    den: QuasiPolynomial

    def __post_init__(self):
        if self.den.is_zero:
            raise ValueError('The denominator of a quasi-rational block cannot be zero')

    @property
    def shape(self) -> tuple[int, int]:
        return (1, 1)

    def _pair(self, s: np.ndarray) -> Pair:
        n, d = self.num(s), self.den(s)
        if np.any(d == 0):
            raise SingularAt(_singular_point(d == 0, s))
        dn, dd = self.num.derivative()(s), self.den.derivative()(s)
        return (n / d)[:, None, None], ((dn * d - n * dd) / d**2)[:, None, None]

CLOSURES: dict[str, Callable[..., 'Closure']] = {}

def closure(tag: str):
    '''
    Register a factory of analytic closures under a tag, so closures can be rebuilt from their
    tag and parameters when decoded from JSON.
    '''
    def decorator(factory: Callable[..., Closure]) -> Callable[..., Closure]:
        CLOSURES[tag] = factory
        return factory
    return decorator

@dataclass(frozen=True, eq=False)
class Closure(TransferExpr):
    '''
    A scalar analytic function given by an evaluator and a hand-differentiated derivative.

    Parameters:
        tag (str): Name of the registered factory that builds the closure.
        parameters (dict): Arguments of the factory, JSON serializable.
        evaluator (Callable): Maps a batch of points to values.
        derivative (Callable): Maps a batch of points to derivatives.
        bound (Callable | None): Optional map from a frequency to an Envelope.
        realization (TransferExpr | None): Optional equivalent expression built from causal
            blocks, used by the time-domain simulators.
    '''
    tag: str
    parameters: dict[str, Any]
    evaluator: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    bound: Callable[[float], Envelope | None] | None = None
    realization: TransferExpr | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return (1, 1)

    def _pair(self, s: np.ndarray) -> Pair:
        value = np.asarray(self.evaluator(s), dtype=complex)
        if not np.all(np.isfinite(value)):
            raise SingularAt(_singular_point(~np.isfinite(value), s))
        derivative = np.asarray(self.derivative(s), dtype=complex)
        return value[:, None, None], derivative[:, None, None]

    def _value(self, s: np.ndarray) -> np.ndarray:
        value = np.asarray(self.evaluator(s), dtype=complex)
        if not np.all(np.isfinite(value)):
            raise SingularAt(_singular_point(~np.isfinite(value), s))
        return value[:, None, None]

    def envelope(self, omega: float) -> Envelope | None:
        return self.bound(omega) if self.bound else None

@closure('integrated_delay')
def integrated_delay(theta: float = 1.0) -> Closure:
    '''
    The stable entire function (1 - exp(-theta s))/s, evaluated by its Taylor series near the
    removable singularity at the origin.
    '''
    def evaluator(s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        small = np.abs(theta * s) < 1e-3
        safe = np.where(small, 1.0, s)
        z = theta * s
        series = theta * (1 - z / 2 + z**2 / 6 - z**3 / 24 + z**4 / 120)
        return np.where(small, series, (1 - np.exp(-theta * safe)) / safe)

    def derivative(s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        small = np.abs(theta * s) < 1e-3
        safe = np.where(small, 1.0, s)
        z = theta * s
        series = theta**2 * (-1 / 2 + z / 3 - z**2 / 8 + z**3 / 30)
        exact = (theta * np.exp(-theta * safe) * safe - (1 - np.exp(-theta * safe))) / safe**2
        return np.where(small, series, exact)

    def bound(omega: float) -> Envelope:
        return Envelope(np.zeros((1, 1), dtype=complex), np.array([[2.0 / omega]]), 1.0)

    realization = Product(tf([1.0], [1.0, 0.0]), Sum(Constant(np.ones((1, 1))), Scale(Delay(theta), -1.0)))
    return Closure('integrated_delay', {'theta': theta}, evaluator, derivative, bound, realization)

@dataclass(frozen=True, eq=False)
class Constant(TransferExpr):
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=complex))
        object.__setattr__(self, 'matrix', matrix)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def _pair(self, s: np.ndarray) -> Pair:
        value = np.broadcast_to(self.matrix, (len(s), *self.shape)).copy()
        return value, np.zeros_like(value)

    def envelope(self, omega: float) -> Envelope | None:
        return Envelope(self.matrix.copy(), np.zeros(self.shape))

def identity(size: int) -> Constant:
    return Constant(np.eye(size))

def zeros(outputs: int, inputs: int) -> Constant:
    return Constant(np.zeros((outputs, inputs)))

@dataclass(frozen=True, eq=False)
class StateSpace(TransferExpr):
    '''
    A finite-dimensional transfer matrix C (sI - A)^{-1} B + D.
    '''
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in 'ABCD':
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        states = self.A.shape[0]
        if self.A.shape != (states, states) or self.B.shape[0] != states or self.C.shape[1] != states:
            raise DimensionMismatch(f'Inconsistent realization {self.A.shape}, {self.B.shape}, {self.C.shape}')
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise DimensionMismatch(f'Feedthrough of shape {self.D.shape} does not match {self.C.shape[0]}x{self.B.shape[1]}')

    @property
    def shape(self) -> tuple[int, int]:
        return self.D.shape

    @property
    def states(self) -> int:
        return self.A.shape[0]

    def _resolvent(self, s: np.ndarray) -> np.ndarray:
        return s[:, None, None] * np.eye(self.states) - self.A

    def _pair(self, s: np.ndarray) -> Pair:
        if self.states == 0:
            value = np.broadcast_to(self.D.astype(complex), (len(s), *self.shape)).copy()
            return value, np.zeros_like(value)
        resolvent = self._resolvent(s)
        try:
            X = np.linalg.solve(resolvent, np.broadcast_to(self.B, (len(s), *self.B.shape)))
            Y = np.linalg.solve(resolvent, X)
        except np.linalg.LinAlgError:
            raise SingularAt(complex(s[0]), 'Resolvent of the realization is singular') from None
        return self.C @ X + self.D, -(self.C @ Y)

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.states else np.array([], dtype=complex)

    def envelope(self, omega: float) -> Envelope | None:
        if self.states == 0:
            return Envelope(self.D.astype(complex), np.zeros(self.shape))
        norm = np.linalg.norm(self.A, 2)
        if omega <= norm:
            return None
        # C (sI - A)^{-1} B = C A^k B / s^{k+1} + C A^{k+1} (sI - A)^{-1} B / s^{k+1} past the
        # vanishing Markov parameters.
        scale = max(np.linalg.norm(self.C, 2) * np.linalg.norm(self.B, 2), 1.0)
        C = self.C
        for power in range(4):
            markov = C @ self.B
            if power == 3 or np.max(np.abs(markov), initial=0.0) > 1e-12 * scale:
                break
            C = C @ self.A
            scale *= max(norm, 1.0)
        head = np.abs(markov) / omega**(power + 1)
        rest = np.outer(np.linalg.norm(C @ self.A, axis=1), np.linalg.norm(self.B, axis=0))
        radius = head + rest / (omega**(power + 1) * (omega - norm))
        return Envelope(self.D.astype(complex), radius, float(power + 1))

def _check_same(left: TransferExpr, right: TransferExpr):
    if left.shape != right.shape:
        raise DimensionMismatch(f'Cannot add {left.shape} and {right.shape}')

@dataclass(frozen=True, eq=False)
class Sum(TransferExpr):
    left: TransferExpr
    right: TransferExpr

    def __post_init__(self):
        _check_same(self.left, self.right)

    @property
    def shape(self) -> tuple[int, int]:
        return self.left.shape

    @property
    def parametric(self) -> bool:
        return self.left.parametric or self.right.parametric

    def _pair(self, s: np.ndarray) -> Pair:
        a, da = self.left._pair(s)
        b, db = self.right._pair(s)
        return a + b, da + db

    def _value(self, s: np.ndarray) -> np.ndarray:
        return self.left._value(s) + self.right._value(s)

    def _tensor(self, s: torch.Tensor) -> torch.Tensor:
        return self.left.tensor(s) + self.right.tensor(s)

    def envelope(self, omega: float) -> Envelope | None:
        a, b = self.left.envelope(omega), self.right.envelope(omega)
        return a + b if a and b else None

@dataclass(frozen=True, eq=False)
class Product(TransferExpr):
    '''
    The matrix product left(s) right(s), that is, right followed by left in series.
    '''
    left: TransferExpr
    right: TransferExpr

    def __post_init__(self):
        if self.left.shape[1] != self.right.shape[0]:
            raise DimensionMismatch(f'Cannot multiply {self.left.shape} by {self.right.shape}')

    @property
    def shape(self) -> tuple[int, int]:
        return (self.left.shape[0], self.right.shape[1])

    @property
    def parametric(self) -> bool:
        return self.left.parametric or self.right.parametric

    def _pair(self, s: np.ndarray) -> Pair:
        a, da = self.left._pair(s)
        b, db = self.right._pair(s)
        return a @ b, da @ b + a @ db

    def _value(self, s: np.ndarray) -> np.ndarray:
        return self.left._value(s) @ self.right._value(s)

    def _tensor(self, s: torch.Tensor) -> torch.Tensor:
        return self.left.tensor(s) @ self.right.tensor(s)

    def envelope(self, omega: float) -> Envelope | None:
        a, b = self.left.envelope(omega), self.right.envelope(omega)
        return a @ b if a and b else None

@dataclass(frozen=True, eq=False)
class Scale(TransferExpr):
    expr: TransferExpr
    factor: complex

    @property
    def shape(self) -> tuple[int, int]:
        return self.expr.shape

    @property
    def parametric(self) -> bool:
        return self.expr.parametric

    def _pair(self, s: np.ndarray) -> Pair:
        value, derivative = self.expr._pair(s)
        return value * self.factor, derivative * self.factor

    def _value(self, s: np.ndarray) -> np.ndarray:
        return self.expr._value(s) * self.factor

    def _tensor(self, s: torch.Tensor) -> torch.Tensor:
        return self.expr.tensor(s) * self.factor

    def envelope(self, omega: float) -> Envelope | None:
        envelope = self.expr.envelope(omega)
        return envelope.scale(self.factor) if envelope else None

@dataclass(frozen=True, eq=False)
class Inverse(TransferExpr):
    expr: TransferExpr

    def __post_init__(self):
        rows, cols = self.expr.shape
        if rows != cols:
            raise DimensionMismatch(f'Cannot invert a {rows}x{cols} expression')

    @property
    def shape(self) -> tuple[int, int]:
        return self.expr.shape

    @property
    def parametric(self) -> bool:
        return self.expr.parametric

    def _pair(self, s: np.ndarray) -> Pair:
        value, derivative = self.expr._pair(s)
        inverse = _inverse(value, s)
        return inverse, -(inverse @ derivative @ inverse)

    def _value(self, s: np.ndarray) -> np.ndarray:
        return _inverse(self.expr._value(s), s)

    def _tensor(self, s: torch.Tensor) -> torch.Tensor:
        return torch.linalg.inv(self.expr.tensor(s))

@dataclass(frozen=True, eq=False)
class Feedback(TransferExpr):
    '''
    The interconnection plant (I - sign controller plant)^{-1}; sign=-1 is negative feedback.
    '''
    plant: TransferExpr
    controller: TransferExpr
    sign: int = -1

    def __post_init__(self):
        outputs, inputs = self.plant.shape
        if self.controller.shape != (inputs, outputs):
            raise DimensionMismatch(f'Controller {self.controller.shape} does not close a loop around {self.plant.shape}')

    @property
    def shape(self) -> tuple[int, int]:
        return self.plant.shape

    @property
    def parametric(self) -> bool:
        return self.plant.parametric or self.controller.parametric

    def _loop(self, s: np.ndarray, G: np.ndarray, K: np.ndarray) -> np.ndarray:
        return _inverse(np.eye(self.plant.shape[1]) - self.sign * (K @ G), s)

    def _pair(self, s: np.ndarray) -> Pair:
        G, dG = self.plant._pair(s)
        K, dK = self.controller._pair(s)
        inverse = self._loop(s, G, K)
        dM = -self.sign * (dK @ G + K @ dG)
        value = G @ inverse
        return value, dG @ inverse - value @ dM @ inverse

    def _value(self, s: np.ndarray) -> np.ndarray:
        G, K = self.plant._value(s), self.controller._value(s)
        return G @ self._loop(s, G, K)

    def _tensor(self, s: torch.Tensor) -> torch.Tensor:
        G, K = self.plant.tensor(s), self.controller.tensor(s)
        eye = torch.eye(self.plant.shape[1], dtype=G.dtype)
        return G @ torch.linalg.inv(eye - self.sign * (K @ G))

    def envelope(self, omega: float) -> Envelope | None:
        plant, controller = self.plant.envelope(omega), self.controller.envelope(omega)
        if plant and controller and not np.any(plant.center != 0):
            gain = plant.sup() * controller.sup()
            if gain < 1:
                radius = np.linalg.norm(plant.radius, 2) / (1 - gain)
                return Envelope(np.zeros(self.shape, dtype=complex), np.full(self.shape, radius), plant.order)
        return _realized_envelope(self, omega)

def _realized_envelope(expr: TransferExpr, omega: float) -> Envelope | None:
    try:
        return realize(expr).envelope(omega)
    except NotFiniteDimensional:
        return None

def feedback(plant: TransferExpr, controller: TransferExpr, sign: int = -1) -> Feedback:
    return Feedback(plant, controller, sign)

@dataclass(frozen=True, eq=False)
class Block(TransferExpr):
    '''
    A block matrix of expressions given row by row.
    '''
    rows: tuple[tuple[TransferExpr, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(row) for row in self.rows)
        object.__setattr__(self, 'rows', rows)
        if not rows or not rows[0]:
            raise DimensionMismatch('A block needs at least one entry')
        widths = [entry.shape[1] for entry in rows[0]]
        for row in rows:
            if len(row) != len(widths):
                raise DimensionMismatch('Every block row needs the same number of entries')
            height = row[0].shape[0]
            for entry, width in zip(row, widths):
                if entry.shape != (height, width):
                    raise DimensionMismatch(f'Block entry of shape {entry.shape} does not fit {(height, width)}')

    @property
    def shape(self) -> tuple[int, int]:
        return (sum(row[0].shape[0] for row in self.rows), sum(entry.shape[1] for entry in self.rows[0]))

    @property
    def parametric(self) -> bool:
        return any(entry.parametric for row in self.rows for entry in row)

    def _pair(self, s: np.ndarray) -> Pair:
        pairs = [[entry._pair(s) for entry in row] for row in self.rows]
        value = np.concatenate([np.concatenate([v for v, _ in row], axis=2) for row in pairs], axis=1)
        derivative = np.concatenate([np.concatenate([d for _, d in row], axis=2) for row in pairs], axis=1)
        return value, derivative

    def _value(self, s: np.ndarray) -> np.ndarray:
        return np.concatenate([np.concatenate([entry._value(s) for entry in row], axis=2) for row in self.rows], axis=1)

    def _tensor(self, s: torch.Tensor) -> torch.Tensor:
        return torch.cat([torch.cat([entry.tensor(s) for entry in row], dim=2) for row in self.rows], dim=1)

    def envelope(self, omega: float) -> Envelope | None:
        envelopes = [[entry.envelope(omega) for entry in row] for row in self.rows]
        if any(envelope is None for row in envelopes for envelope in row):
            return None
        return Envelope(
            np.block([[envelope.center for envelope in row] for row in envelopes]),
            np.block([[envelope.radius for envelope in row] for row in envelopes]),
            Envelope._order(*[(envelope.radius, envelope.order) for row in envelopes for envelope in row])
        )

def hstack(*entries: TransferExpr) -> Block:
    return Block((tuple(entries),))

def vstack(*entries: TransferExpr) -> Block:
    return Block(tuple((entry,) for entry in entries))

def diag(*entries: TransferExpr) -> Block:
    return Block(tuple(
        tuple(entry if i == j else zeros(entry.shape[0], other.shape[1]) for j, other in enumerate(entries))
        for i, entry in enumerate(entries)
    ))

@dataclass(frozen=True, eq=False)
class Select(TransferExpr):
    expr: TransferExpr
    rows: tuple[int, ...]
    cols: tuple[int, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.rows), len(self.cols))

    @property
    def parametric(self) -> bool:
        return self.expr.parametric

    def _pair(self, s: np.ndarray) -> Pair:
        value, derivative = self.expr._pair(s)
        index = np.ix_(range(len(s)), self.rows, self.cols)
        return value[index], derivative[index]

    def _value(self, s: np.ndarray) -> np.ndarray:
        return self.expr._value(s)[np.ix_(range(len(s)), self.rows, self.cols)]

    def _tensor(self, s: torch.Tensor) -> torch.Tensor:
        value = self.expr.tensor(s)
        return value[:, list(self.rows)][:, :, list(self.cols)]

    def envelope(self, omega: float) -> Envelope | None:
        envelope = self.expr.envelope(omega)
        if envelope is None:
            return None
        index = np.ix_(self.rows, self.cols)
        return Envelope(envelope.center[index], envelope.radius[index], envelope.order)

@dataclass(frozen=True, eq=False)
class Det(TransferExpr):
    '''
    The determinant of a square expression, as a scalar expression. Its derivative is the sum of
    the determinants with one row replaced by its derivative, which stays exact at singular points.
    '''
    expr: TransferExpr

    def __post_init__(self):
        rows, cols = self.expr.shape
        if rows != cols:
            raise DimensionMismatch(f'Determinant of a non square {rows}x{cols} expression')

    @property
    def shape(self) -> tuple[int, int]:
        return (1, 1)

    @property
    def parametric(self) -> bool:
        return self.expr.parametric

    def _pair(self, s: np.ndarray) -> Pair:
        value, derivative = self.expr._pair(s)
        determinant = np.linalg.det(value)
        total = np.zeros_like(determinant)
        for row in range(value.shape[1]):
            replaced = value.copy()
            replaced[:, row, :] = derivative[:, row, :]
            total = total + np.linalg.det(replaced)
        return determinant[:, None, None], total[:, None, None]

    def _value(self, s: np.ndarray) -> np.ndarray:
        return np.linalg.det(self.expr._value(s))[:, None, None]

    def _tensor(self, s: torch.Tensor) -> torch.Tensor:
        return torch.linalg.det(self.expr.tensor(s))[:, None, None]

    def envelope(self, omega: float) -> Envelope | None:
        return self.expr.envelope(omega) if self.expr.shape == (1, 1) else None

@dataclass(frozen=True, eq=False)
class LowerLFT(TransferExpr):
    '''
    The lower linear fractional transformation of a partitioned plant [[P11, P12], [P21, P22]]
    closed by u = -K y, that is P11 - P12 K (I + P22 K)^{-1} P21.

    Parameters:
        plant (TransferExpr): The generalized plant with inputs (w, u) and outputs (z, y).
        controller (TransferExpr): The controller K mapping y to u.
        performance (int): Number of performance outputs z.
        disturbances (int): Number of exogenous inputs w.
    '''
    plant: TransferExpr
    controller: TransferExpr
    performance: int
    disturbances: int

    def __post_init__(self):
        outputs, inputs = self.plant.shape
        measurements, controls = outputs - self.performance, inputs - self.disturbances
        if self.controller.shape != (controls, measurements):
            raise DimensionMismatch(f'Controller {self.controller.shape} does not fit plant {self.plant.shape}')

    @property
    def shape(self) -> tuple[int, int]:
        return (self.performance, self.disturbances)

    @property
    def parametric(self) -> bool:
        return self.plant.parametric or self.controller.parametric

    def _split(self, P):
        z, w = self.performance, self.disturbances
        return P[..., :z, :w], P[..., :z, w:], P[..., z:, :w], P[..., z:, w:]

    def _pair(self, s: np.ndarray) -> Pair:
        P, dP = self.plant._pair(s)
        K, dK = self.controller._pair(s)
        P11, P12, P21, P22 = self._split(P)
        dP11, dP12, dP21, dP22 = self._split(dP)
        inverse = _inverse(np.eye(P22.shape[-2]) + P22 @ K, s)
        X = K @ inverse
        dM = dP22 @ K + P22 @ dK
        dX = dK @ inverse - X @ dM @ inverse
        value = P11 - P12 @ X @ P21
        derivative = dP11 - dP12 @ X @ P21 - P12 @ dX @ P21 - P12 @ X @ dP21
        return value, derivative

    def _value(self, s: np.ndarray) -> np.ndarray:
        P11, P12, P21, P22 = self._split(self.plant._value(s))
        K = self.controller._value(s)
        return P11 - P12 @ K @ _inverse(np.eye(P22.shape[-2]) + P22 @ K, s) @ P21

    def _tensor(self, s: torch.Tensor) -> torch.Tensor:
        P11, P12, P21, P22 = self._split(self.plant.tensor(s))
        K = self.controller.tensor(s)
        eye = torch.eye(P22.shape[-2], dtype=P22.dtype)
        return P11 - P12 @ K @ torch.linalg.inv(eye + P22 @ K) @ P21

    def envelope(self, omega: float) -> Envelope | None:
        return _realized_envelope(self, omega)

def _realize_feedback(expr: Feedback) -> StateSpace:
    G, K, sign = realize(expr.plant), realize(expr.controller), expr.sign
    try:
        N = np.linalg.inv(np.eye(G.D.shape[0]) - sign * G.D @ K.D)
    except np.linalg.LinAlgError:
        raise NotFiniteDimensional('The feedback loop is not well posed') from None
    # y = Yg xg + Yk xk + Yr r and e = Eg xg + Ek xk + Er r
    Yg, Yk, Yr = N @ G.C, sign * N @ G.D @ K.C, N @ G.D
    Eg, Ek, Er = sign * K.D @ Yg, sign * (K.C + K.D @ Yk), np.eye(G.D.shape[1]) + sign * K.D @ Yr
    A = np.block([[G.A + G.B @ Eg, G.B @ Ek], [K.B @ Yg, K.A + K.B @ Yk]])
    return StateSpace(A, np.vstack([G.B @ Er, K.B @ Yr]), np.hstack([Yg, Yk]), Yr)

def _realize_lft(expr: LowerLFT) -> StateSpace:
    P, K = realize(expr.plant), realize(expr.controller)
    z, w = expr.performance, expr.disturbances
    B1, B2 = P.B[:, :w], P.B[:, w:]
    C1, C2 = P.C[:z], P.C[z:]
    D11, D12, D21, D22 = P.D[:z, :w], P.D[:z, w:], P.D[z:, :w], P.D[z:, w:]
    try:
        M = np.linalg.inv(np.eye(K.D.shape[0]) + K.D @ D22)
    except np.linalg.LinAlgError:
        raise NotFiniteDimensional('The interconnection is not well posed') from None
    # u = Ux x + Uk xk + Uw w and y = Yx x + Yk xk + Yw w
    Ux, Uk, Uw = -M @ K.D @ C2, -M @ K.C, -M @ K.D @ D21
    Yx, Yk, Yw = C2 + D22 @ Ux, D22 @ Uk, D21 + D22 @ Uw
    A = np.block([[P.A + B2 @ Ux, B2 @ Uk], [K.B @ Yx, K.A + K.B @ Yk]])
    B = np.vstack([B1 + B2 @ Uw, K.B @ Yw])
    C = np.hstack([C1 + D12 @ Ux, D12 @ Uk])
    return StateSpace(A, B, C, D11 + D12 @ Uw)

@dataclass(frozen=True, eq=False)
class Parametric(TransferExpr):
    '''
    A live controller structure inside an expression. Numeric evaluation uses a snapshot of the
    current parameters, torch evaluation keeps the autograd graph to the parameters.
    '''
    structure: Any

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.structure.shape)

    @property
    def parametric(self) -> bool:
        return True

    def _pair(self, s: np.ndarray) -> Pair:
        return self.structure.expr()._pair(s)

    def _value(self, s: np.ndarray) -> np.ndarray:
        return self.structure.expr()._value(s)

    def _tensor(self, s: torch.Tensor) -> torch.Tensor:
        return self.structure(s)

    def envelope(self, omega: float) -> Envelope | None:
        return self.structure.expr().envelope(omega)

@dataclass(frozen=True)
class RhpPoleInfo:
    '''
    Declared unstable poles of an open loop.

    Parameters:
        count (int): Number of poles in the open right half plane.
        axis_poles (tuple[tuple[float, int], ...]): Imaginary axis poles as (frequency, order) with
            nonnegative frequencies, each positive frequency standing for the pair +-j omega.
        locations (tuple[complex, ...]): Known locations of the right half plane poles.
    '''
    count: int = 0
    axis_poles: tuple[tuple[float, int], ...] = ()
    locations: tuple[complex, ...] = ()

    def __post_init__(self):
        merged: dict[float, int] = {}
        for omega, order in self.axis_poles:
            if order < 1:
                raise ValueError(f'Pole orders must be positive, got {order}')
            merged[abs(float(omega))] = merged.get(abs(float(omega)), 0) + int(order)
        object.__setattr__(self, 'axis_poles', tuple(sorted(merged.items())))
        object.__setattr__(self, 'locations', tuple(complex(location) for location in self.locations))
        if self.count < 0:
            raise ValueError('The number of unstable poles cannot be negative')

    @property
    def axis_count(self) -> int:
        return sum(order * (2 if omega > 0 else 1) for omega, order in self.axis_poles)

    @property
    def N_p(self) -> int:
        return self.count + self.axis_count

    def frequencies(self) -> list[float]:
        return [abs(location) for location in self.locations] + [omega for omega, _ in self.axis_poles]

    def __add__(self, other: RhpPoleInfo) -> RhpPoleInfo:
        return RhpPoleInfo(
            self.count + other.count,
            self.axis_poles + other.axis_poles,
            self.locations + other.locations
        )

@dataclass(frozen=True, eq=False)
class Regularized(TransferExpr):
    '''
    The modified function f h, where h cancels the declared imaginary axis poles of f. At points
    within a tiny distance of a declared pole the value and derivative are recovered from a
    symmetric pair of neighbouring points, where f h is analytic.
    '''
    f: TransferExpr
    h: Rational
    poles: tuple[float, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return (1, 1)

    @property
    def parametric(self) -> bool:
        return self.f.parametric

    def _direct(self, s: np.ndarray) -> Pair:
        f, df = self.f._pair(s)
        h, dh = self.h._pair(s)
        return f * h, df * h + f * dh

    def _pair(self, s: np.ndarray) -> Pair:
        near = np.zeros(len(s), dtype=bool)
        steps = np.zeros(len(s))
        for omega in self.poles:
            for target in {1j * omega, -1j * omega}:
                delta = 1e-6 * max(1.0, omega)
                close = np.abs(s - target) < delta
                near |= close
                steps = np.where(close, delta, steps)
        if not np.any(near):
            return self._direct(s)
        value = np.empty((len(s), 1, 1), dtype=complex)
        derivative = np.empty((len(s), 1, 1), dtype=complex)
        if np.any(~near):
            value[~near], derivative[~near] = self._direct(s[~near])
        h = 1j * steps[near]
        upper, _ = self._direct(s[near] + h)
        lower, _ = self._direct(s[near] - h)
        value[near] = (upper + lower) / 2
        derivative[near] = (upper - lower) / (2 * h[:, None, None])
        return value, derivative

    def _tensor(self, s: torch.Tensor) -> torch.Tensor:
        return self.f.tensor(s) * self.h.tensor(s)

    def envelope(self, omega: float) -> Envelope | None:
        f, h = self.f.envelope(omega), self.h.envelope(omega)
        return f @ h if f and h else None

def regularizer(axis_poles: Sequence[tuple[float, int]], beta: float = 1.0) -> Rational:
    '''
    The factor h(s) = prod ((s^2 + w^2)/(s + beta)^2)^p over the axis poles, with (s/(s + beta))^p
    for a pole at the origin. It is holomorphic on the closed right half plane, vanishes exactly
    at the declared poles and tends to one at infinity.
    '''
    num, den = Polynomial((1.0,)), Polynomial((1.0,))
    shift = Polynomial((beta, 1.0))
    for omega, order in RhpPoleInfo(axis_poles=tuple(axis_poles)).axis_poles:
        for _ in range(order):
            if omega == 0:
                num, den = num * Polynomial((0.0, 1.0)), den * shift
            else:
                num, den = num * Polynomial((omega**2, 0.0, 1.0)), den * shift * shift
    return Rational(num, den)

def regularize(f: TransferExpr, axis_poles: Sequence[tuple[float, int]] = (), beta: float = 1.0) -> TransferExpr:
    '''
    Cancel the imaginary axis poles of the scalar return difference f, returning f h.

    Parameters:
        f (TransferExpr): The scalar return difference.
        axis_poles (Sequence[tuple[float, int]]): Declared axis poles (frequency, order).
        beta (float): The pole of the regularizing factor.
    '''
    if f.shape != (1, 1):
        raise DimensionMismatch(f'Only scalar expressions can be regularized, got {f.shape}')
    if not axis_poles:
        return f
    h = regularizer(axis_poles, beta)
    poles = tuple(omega for omega, _ in RhpPoleInfo(axis_poles=tuple(axis_poles)).axis_poles)
    return Regularized(f, h, poles)

@dataclass(frozen=True)
class ClosedLoop:
    '''
    The four blocks of the closed loop of G and K under u = -K y, stacked in T.
    '''
    input_sensitivity: TransferExpr
    control: TransferExpr
    plant: TransferExpr
    sensitivity: TransferExpr

    @property
    def T(self) -> Block:
        return Block(((self.input_sensitivity, self.control), (self.plant, self.sensitivity)))

def _square_check(G: TransferExpr, K: TransferExpr):
    if K.shape != (G.shape[1], G.shape[0]):
        raise DimensionMismatch(f'Controller {K.shape} does not close a loop around {G.shape}')

def sensitivity(G: TransferExpr, K: TransferExpr) -> Inverse:
    _square_check(G, K)
    return Inverse(Sum(identity(G.shape[0]), Product(G, K)))

def closed_loop(G: TransferExpr, K: TransferExpr) -> ClosedLoop:
    '''
    Build the closed loop of plant G (outputs x inputs) and controller K (inputs x outputs).
    '''
    _square_check(G, K)
    outputs, inputs = G.shape
    S = sensitivity(G, K)
    S_input = Inverse(Sum(identity(inputs), Product(K, G)))
    return ClosedLoop(
        input_sensitivity=S_input,
        control=Scale(Product(K, S), -1.0),
        plant=Product(S, G),
        sensitivity=S
    )

def return_difference(G: TransferExpr, K: TransferExpr) -> Det:
    '''
    The scalar f = det(I + G K), formed on the smaller side through det(I + G K) = det(I + K G).
    '''
    _square_check(G, K)
    outputs, inputs = G.shape
    if outputs <= inputs:
        return Det(Sum(identity(outputs), Product(G, K)))
    return Det(Sum(identity(inputs), Product(K, G)))

def realize(expr: TransferExpr) -> StateSpace:
    '''
    A (not necessarily minimal) state-space realization of a finite-dimensional expression.

    Raises:
        NotFiniteDimensional: When the expression contains delays, closures or quasi-polynomials.
    '''
    match expr:
        case StateSpace():
            return expr
        case Constant():
            if np.any(expr.matrix.imag != 0):
                raise NotFiniteDimensional('Complex constants have no real realization')
            rows, cols = expr.shape
            return StateSpace(np.zeros((0, 0)), np.zeros((0, cols)), np.zeros((rows, 0)), expr.matrix.real)
        case Rational():
            if expr.num.degree > expr.den.degree:
                raise NotFiniteDimensional('Improper rational blocks have no realization')
            if expr.den.degree == 0:
                gain = (expr.num.leading if not expr.num.is_zero else 0.0) / expr.den.leading
                return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[gain]])
            return StateSpace(*tf2ss(expr.num.to_descending(), expr.den.to_descending()))
        case Delay(theta=0.0):
            return realize(Constant(np.ones((1, 1))))
        case Scale():
            inner = realize(expr.expr)
            if complex(expr.factor).imag != 0:
                raise NotFiniteDimensional('Complex scaling has no real realization')
            factor = complex(expr.factor).real
            return StateSpace(inner.A, inner.B, inner.C * factor, inner.D * factor)
        case Sum():
            a, b = realize(expr.left), realize(expr.right)
            return StateSpace(
                _blockdiag(a.A, b.A), np.vstack([a.B, b.B]), np.hstack([a.C, b.C]), a.D + b.D
            )
        case Product():
            left, right = realize(expr.left), realize(expr.right)
            A = np.block([
                [right.A, np.zeros((right.states, left.states))],
                [left.B @ right.C, left.A]
            ])
            return StateSpace(A, np.vstack([right.B, left.B @ right.D]), np.hstack([left.D @ right.C, left.C]), left.D @ right.D)
        case Select():
            inner = realize(expr.expr)
            return StateSpace(inner.A, inner.B[:, list(expr.cols)], inner.C[list(expr.rows), :], inner.D[np.ix_(expr.rows, expr.cols)])
        case Block():
            return _realize_block(expr)
        case Feedback():
            return _realize_feedback(expr)
        case LowerLFT():
            return _realize_lft(expr)
        case Parametric():
            return realize(expr.structure.expr())
        case _:
            raise NotFiniteDimensional(f'{type(expr).__name__} blocks are not finite-dimensional')

def _blockdiag(*matrices: np.ndarray) -> np.ndarray:
    rows = sum(matrix.shape[0] for matrix in matrices)
    cols = sum(matrix.shape[1] for matrix in matrices)
    result = np.zeros((rows, cols))
    row = col = 0
    for matrix in matrices:
        result[row:row + matrix.shape[0], col:col + matrix.shape[1]] = matrix
        row, col = row + matrix.shape[0], col + matrix.shape[1]
    return result

def _realize_block(expr: Block) -> StateSpace:
    outputs, inputs = expr.shape
    parts = []
    row_offset = 0
    for row in expr.rows:
        col_offset = 0
        for entry in row:
            parts.append((realize(entry), row_offset, col_offset))
            col_offset += entry.shape[1]
        row_offset += row[0].shape[0]
    states = sum(part.states for part, _, _ in parts)
    A = _blockdiag(*[part.A for part, _, _ in parts]) if states else np.zeros((0, 0))
    B, C, D = np.zeros((states, inputs)), np.zeros((outputs, states)), np.zeros((outputs, inputs))
    offset = 0
    for part, row, col in parts:
        rows, cols = part.shape
        B[offset:offset + part.states, col:col + cols] = part.B
        C[row:row + rows, offset:offset + part.states] = part.C
        D[row:row + rows, col:col + cols] = part.D
        offset += part.states
    return StateSpace(A, B, C, D)
