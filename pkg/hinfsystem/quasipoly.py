'''
Stability of quasi-polynomials: the delay-margin recipe for P(s) = A(s) + B(s) exp(-h s) with
A(s) = s^2 + x1 s and B(s) = x2 s + x3, the exact first crossing delay of general A + B exp(-h s),
and an argument-principle zero counter on rectangles, which also counts the unstable poles of
controller expressions.
'''
from math import inf, pi, sqrt
from typing import Callable
from dataclasses import dataclass
from logging import getLogger
import numpy as np
from scipy.optimize import root_scalar, newton
from scipy.signal import ss2tf
from hinfsystem.settings import Settings, NyquistSettings
from hinfsystem.polynomials import Polynomial, QuasiPolynomial, S, as_polynomial
from hinfsystem.xfer import (
    TransferExpr, RhpPoleInfo, Block, Sum, Scale, Select, Product, Delay, Closure, QuasiRational, StateSpace, realize
)
from hinfsystem.structures import pole_info
from hinfsystem.sampling import probe_bound, refine
from hinfsystem.nyquist import winding_number
from hinfsystem.exceptions import (
    NoPositiveRoot, AOnAxisZero, ZeroOnContour, RefinementBudgetExceeded, OriginOnPolygon, SingularAt, NotFiniteDimensional
)

logger = getLogger(__name__)

@dataclass(frozen=True)
class DelayMarginProblem:
    '''
    The characteristic quasi-polynomial s^2 + x1 s + (x2 s + x3) exp(-h s).
    '''
    x1: float
    x2: float
    x3: float
    h: float = 1.0

    @property
    def A(self) -> Polynomial:
        return Polynomial((0.0, self.x1, 1.0))

    @property
    def B(self) -> Polynomial:
        return Polynomial((self.x3, self.x2))

    def quasipolynomial(self, h: float | None = None) -> QuasiPolynomial:
        return QuasiPolynomial([(self.A, 0.0), (self.B, self.h if h is None else h)])

def _residual(x1: float) -> tuple[Callable[[float], float], Callable[[float], float], float]:
    right = sqrt(5 - 2 * x1**2 + x1**4) / 2
    function = lambda w: 4 * w**3 - 2 * w * (1 - x1**2) - right
    derivative = lambda w: 12 * w**2 - 2 * (1 - x1**2)
    return function, derivative, right

def omega_sigma(x1: float) -> float:
    '''
    The positive root of 4 w^3 - 2 w (1 - x1^2) = sqrt(5 - 2 x1^2 + x1^4) / 2.

    Raises:
        NoPositiveRoot: When x1 <= -1, where the recipe does not apply.
    '''
    if x1 <= -1:
        raise NoPositiveRoot(f'The delay margin recipe needs x1 > -1, got {x1}')
    function, derivative, right = _residual(x1)
    guess = (right / 4)**(1 / 3)
    result = root_scalar(function, fprime=derivative, x0=guess, method='newton', xtol=1e-15, maxiter=100)
    if result.converged and result.root > 0:
        return float(result.root)
    high = max(1.0, guess)
    while function(high) <= 0:
        high *= 2
    result = root_scalar(function, bracket=(0.0, high), method='brentq', xtol=1e-15)
    if not result.converged or result.root <= 0:
        raise NoPositiveRoot(f'No positive root for x1={x1}')
    return float(result.root)

def h_sigma0(x1: float, x2: float, x3: float) -> float:
    '''
    The smallest positive solution of w h = arg(-B(j w) / A(j w)) + 2 k pi at w = omega_sigma(x1),
    with arg taken in [0, 2 pi). Returns inf when B vanishes identically.

    Raises:
        AOnAxisZero: When A(j omega_sigma) = 0.
    '''
    if x2 == 0 and x3 == 0:
        return inf
    omega = omega_sigma(x1)
    s = 1j * omega
    A = s**2 + x1 * s
    if A == 0:
        raise AOnAxisZero(f'A vanishes at j{omega}')
    B = x2 * s + x3
    argument = float(np.angle(-B / A)) % (2 * pi)
    return (argument if argument > 0 else 2 * pi) / omega

def _on_axis(polynomial: Polynomial) -> np.ndarray:
    '''
    Coefficients, ascending in w, of the complex polynomial p(j w).
    '''
    return np.array([c * 1j**k for k, c in enumerate(polynomial.coeffs)], dtype=complex)

def _modulus_squared(polynomial: Polynomial) -> np.ndarray:
    coefficients = _on_axis(polynomial)
    if coefficients.size == 0:
        return np.zeros(1)
    return np.polynomial.polynomial.polymul(coefficients, np.conj(coefficients)).real

def delay_margin(A: Polynomial, B: Polynomial) -> float:
    '''
    The smallest delay h > 0 at which A(s) + B(s) exp(-h s) has a zero on the imaginary axis. The
    crossing frequencies are the nonnegative real roots of |A(j w)|^2 = |B(j w)|^2 and the delays
    follow from exp(-j w h) = -A(j w) / B(j w). Below the returned delay the zero count in the
    right half plane equals the one of A + B.
    '''
    A, B = as_polynomial(A), as_polynomial(B)
    if B.is_zero:
        return inf
    if (A + B)(0.0) == 0:
        return 0.0
    difference = np.polynomial.polynomial.polysub(_modulus_squared(A), _modulus_squared(B))
    difference = np.trim_zeros(difference, 'b')
    if difference.size == 0:
        raise ValueError('|A(jw)| = |B(jw)| on the whole axis')
    if difference.size == 1:
        return inf
    roots = np.polynomial.polynomial.polyroots(difference)
    scale = max(1.0, float(np.max(np.abs(roots))))
    frequencies = sorted({float(r.real) for r in roots if abs(r.imag) <= 1e-9 * scale and r.real > 0})
    margin = inf
    for omega in frequencies:
        s = 1j * omega
        ratio = -A(s) / B(s)
        phase = float(-np.angle(ratio)) % (2 * pi)
        margin = min(margin, (phase if phase > 0 else 2 * pi) / omega)
    return margin

@dataclass(frozen=True)
class Rectangle:
    re: tuple[float, float]
    im: tuple[float, float]

    def corners(self) -> list[complex]:
        (a, b), (c, d) = self.re, self.im
        return [complex(a, c), complex(b, c), complex(b, d), complex(a, d)]

    @property
    def center(self) -> complex:
        return complex(sum(self.re) / 2, sum(self.im) / 2)

    def contains(self, s: complex) -> bool:
        return self.re[0] < s.real < self.re[1] and self.im[0] < s.imag < self.im[1]

@dataclass(frozen=True)
class RegionCount:
    '''
    Number of zeros of an analytic function inside a rectangle, with the smallest magnitude met
    on the contour and the number of contour nodes.
    '''
    rectangle: Rectangle
    count: int
    margin: float
    nodes: int

    def to_dict(self) -> dict:
        return {'re': list(self.rectangle.re), 'im': list(self.rectangle.im), 'count': self.count, 'margin': self.margin, 'nodes': self.nodes}

type Analytic = QuasiPolynomial | Polynomial | TransferExpr

def _functions(P: Analytic) -> tuple[Callable, Callable]:
    if isinstance(P, TransferExpr):
        return (lambda s: P.eval(s)[..., 0, 0]), (lambda s: P.eval_deriv(s)[..., 0, 0])
    if isinstance(P, Polynomial):
        return P, P.deriv()
    return P, P.derivative()

def _rectangle(rect: Rectangle | tuple) -> Rectangle:
    if isinstance(rect, Rectangle):
        return rect
    re, im = rect
    return Rectangle(tuple(re), tuple(im))

def count_zeros(P: Analytic, rect: Rectangle | tuple, settings: NyquistSettings | None = None) -> RegionCount:
    '''
    Count the zeros of P inside a rectangle by the winding of P along the counterclockwise
    boundary, every edge sampled adaptively under the first-order condition.

    Parameters:
        P (QuasiPolynomial | Polynomial | TransferExpr): The analytic function.
        rect (Rectangle | tuple): The rectangle, or ((re_min, re_max), (im_min, im_max)).

    Raises:
        ZeroOnContour: When P vanishes on or too close to the boundary.
    '''
    settings = settings or Settings().nyquist
    rect = _rectangle(rect)
    function, derivative = _functions(P)
    corners = rect.corners()
    magnitude = lambda z: np.abs(derivative(z))
    points, margin = [], inf
    try:
        for start, end in zip(corners, corners[1:] + corners[:1]):
            direction = end - start
            length = abs(direction)
            unit = direction / length
            refinement = refine(
                evaluate=lambda t: np.asarray(function(start + unit * t), dtype=complex),
                bound=lambda lows, highs: probe_bound(lambda t: magnitude(start + unit * t), lows, highs, settings),
                accept=lambda a, b, bound, width, _: bound * width < np.abs(a) + np.abs(b),
                seed=np.linspace(0.0, length, settings.seed_nodes),
                settings=settings,
                label='contour edge'
            )
            points.append(refinement.values[:-1])
            margin = min(margin, float(np.min(np.abs(refinement.values))))
        polygon = np.concatenate(points)
        count = winding_number(polygon, settings)
    except (RefinementBudgetExceeded, OriginOnPolygon, SingularAt) as error:
        raise ZeroOnContour(f'Zero on or near the contour of {rect}') from error
    logger.info(f'{count} zeros in {rect} from {len(polygon)} contour nodes')
    return RegionCount(rect, count, margin, len(polygon))

def locate_zero(P: Analytic, guess: complex | Rectangle | tuple, tolerance: float = 1e-14) -> complex:
    '''
    Polish a zero of P by Newton iterations, from a guess or from the center of a rectangle.
    '''
    if not isinstance(guess, (complex, float, int)):
        guess = _rectangle(guess).center
    function, derivative = _functions(P)
    root = newton(
        lambda z: complex(np.asarray(function(np.asarray(z, dtype=complex)))),
        complex(guess),
        fprime=lambda z: complex(np.asarray(derivative(np.asarray(z, dtype=complex)))),
        tol=tolerance,
        maxiter=100
    )
    return complex(root)

def rhp_zero_count(P: QuasiPolynomial, settings: NyquistSettings | None = None, extent: float | None = None) -> int:
    '''
    Number of zeros of P with nonnegative real part. Retarded quasi-polynomials are scanned on a
    rectangle enclosing the root bound; otherwise the imaginary extent is doubled until two
    consecutive rectangles agree.
    '''
    settings = settings or Settings().nyquist
    if P.is_retarded():
        radius = P.root_bound()
        return count_zeros(P, ((0.0, radius), (-radius, radius)), settings).count
    width = 10.0 if extent is None else extent
    height = width
    previous = count_zeros(P, ((0.0, width), (-height, height)), settings).count
    for _ in range(8):
        height *= 2
        current = count_zeros(P, ((0.0, width), (-height, height)), settings).count
        if current == previous:
            return current
        previous = current
    logger.warning(f'Zero counts did not settle up to Im = {height:g}')
    return previous

ENTIRE_CLOSURES = {'integrated_delay'}

CANCELLATION = 1e-6

def _entry(expr: TransferExpr, i: int, j: int) -> TransferExpr:
    match expr:
        case Block():
            top = 0
            for row in expr.rows:
                height = row[0].shape[0]
                if i < top + height:
                    left = 0
                    for entry in row:
                        if j < left + entry.shape[1]:
                            return _entry(entry, i - top, j - left)
                        left += entry.shape[1]
                top += height
        case Sum():
            return Sum(_entry(expr.left, i, j), _entry(expr.right, i, j))
        case Scale():
            return Scale(_entry(expr.expr, i, j), expr.factor)
        case Select():
            return _entry(expr.expr, expr.rows[i], expr.cols[j])
    return expr if expr.shape == (1, 1) else expr[i, j]

def _cancelled_poles(realization: StateSpace) -> np.ndarray:
    '''
    Poles of a single-input single-output realization left after cancelling the zeros that
    coincide with them.
    '''
    if realization.states == 0:
        return np.zeros(0, dtype=complex)
    num, den = ss2tf(realization.A, realization.B, realization.C, realization.D)
    num = np.asarray(num, dtype=float).ravel()
    if np.all(np.abs(num) <= 1e-12 * max(1.0, np.max(np.abs(den)))):
        return np.zeros(0, dtype=complex)
    zeros = list(np.roots(np.trim_zeros(num, 'f')))
    poles = []
    for pole in np.roots(den):
        distances = [abs(pole - zero) for zero in zeros]
        if distances and min(distances) <= CANCELLATION * max(1.0, abs(pole)):
            zeros.pop(int(np.argmin(distances)))
        else:
            poles.append(pole)
    return np.asarray(poles, dtype=complex)

def _merge(*groups: np.ndarray) -> np.ndarray:
    '''
    The union of pole lists, a pole shared by several lists kept with its largest multiplicity.
    '''
    clusters: list[list] = []
    for group in groups:
        counts = [0] * len(clusters)
        for pole in group:
            for index, (center, _) in enumerate(clusters):
                if abs(pole - center) <= CANCELLATION * max(1.0, abs(center)):
                    counts[index] += 1
                    break
            else:
                clusters.append([pole, 0])
                counts.append(1)
        for cluster, count in zip(clusters, counts):
            cluster[1] = max(cluster[1], count)
    return np.asarray([center for center, count in clusters for _ in range(count)], dtype=complex)

def _unique(*groups: list[QuasiPolynomial]) -> list[QuasiPolynomial]:
    unique: list[QuasiPolynomial] = []
    for group in groups:
        unique += [den for den in group if den not in unique]
    return unique

def _siso_poles(entry: TransferExpr) -> tuple[np.ndarray, list[QuasiPolynomial]]:
    '''
    The poles of a scalar entry, as the roots of its finite-dimensional part and the
    quasi-polynomial denominators whose zeros are its other poles.
    '''
    try:
        return _cancelled_poles(realize(entry)), []
    except NotFiniteDimensional:
        pass
    match entry:
        case Delay():
            return np.zeros(0, dtype=complex), []
        case Closure() if entry.tag in ENTIRE_CLOSURES:
            return np.zeros(0, dtype=complex), []
        case QuasiRational():
            return np.zeros(0, dtype=complex), [entry.den]
        case Scale():
            return _siso_poles(entry.expr)
        case Sum():
            (a, left), (b, right) = _siso_poles(entry.left), _siso_poles(entry.right)
            return _merge(a, b), _unique(left, right)
        case Product() if entry.left.shape == (1, 1):
            (a, left), (b, right) = _siso_poles(entry.left), _siso_poles(entry.right)
            return np.concatenate([a, b]), left + right
    raise NotFiniteDimensional(f'Cannot count the unstable poles of a {type(entry).__name__} block')

def controller_poles(K: TransferExpr, settings: NyquistSettings | None = None) -> RhpPoleInfo:
    '''
    The unstable and imaginary axis poles of a row or column controller: the poles of its
    finite-dimensional entries after cancellations, a pole shared by several entries counted once,
    plus the right half plane zeros of the distinct denominators of its quasi-rational entries.

    Raises:
        NotFiniteDimensional: When K is not a row or a column, or when an entry holds blocks whose
            poles cannot be counted, such as inverses or feedback around delays.
        ZeroOnContour: When a quasi-rational denominator vanishes on the imaginary axis.
    '''
    settings = settings or Settings().nyquist
    rows, cols = K.shape
    if min(rows, cols) != 1:
        raise NotFiniteDimensional(f'Poles are counted for row or column controllers, got {rows}x{cols}')
    roots, denominators = [], []
    for i in range(rows):
        for j in range(cols):
            poles, dens = _siso_poles(_entry(K, i, j))
            roots.append(poles)
            denominators = _unique(denominators, dens)
    info = pole_info(_merge(*roots)) + RhpPoleInfo(sum(rhp_zero_count(den, settings) for den in denominators))
    logger.info(f'Controller with {info.count} unstable poles and {info.axis_count} imaginary axis poles')
    return info

def ad_hoc_quasipolynomial(d: Polynomial, n3: Polynomial, n1: Polynomial, q: float) -> QuasiPolynomial:
    '''
    The closed-loop quasi-polynomial of the anti-stable wave equation under the row controller
    [n1/d, 0, n3/d]:

        (1 - q) s (d + n3) + (1 - q) s Q exp(-2s) (n3 - d) + 2 n1 exp(-s),  Q = (1 + q)/(1 - q)
    '''
    d, n3, n1 = as_polynomial(d), as_polynomial(n3), as_polynomial(n1)
    Q = (1 + q) / (1 - q)
    return QuasiPolynomial([
        ((1 - q) * S * (d + n3), 0.0),
        (2.0 * n1, 1.0),
        ((1 - q) * Q * S * (n3 - d), 2.0)
    ])

def check_ad_hoc_stabilizer(d: Polynomial, n3: Polynomial, n1: Polynomial, q: float, settings: NyquistSettings | None = None) -> bool:
    '''
    True when the wave loop under the row controller [n1/d, 0, n3/d] has no closed right half
    plane zeros of its characteristic quasi-polynomial.

    Raises:
        ZeroOnContour: When a zero lies on the imaginary axis.
    '''
    d, n3, n1 = as_polynomial(d), as_polynomial(n3), as_polynomial(n1)
    if max(n3.degree, n1.degree) > d.degree:
        raise ValueError('The numerators cannot exceed the degree of the denominator')
    count = rhp_zero_count(ad_hoc_quasipolynomial(d, n3, n1, q), settings)
    logger.info(f'Ad hoc stabilizer check: {count} zeros in the closed right half plane')
    return count == 0

def bisect_delay(problem: DelayMarginProblem, low: float, high: float, resolution: float = 1e-3, settings: NyquistSettings | None = None) -> tuple[float, float]:
    '''
    Bracket the delay where zeros of A + B exp(-h s) enter the right half plane, by bisection on
    the zero count between a stable delay low and an unstable delay high.
    '''
    settings = settings or Settings().nyquist
    unstable = lambda h: rhp_zero_count(problem.quasipolynomial(h), settings) > 0
    if unstable(low) or not unstable(high):
        raise ValueError(f'No stability switch bracketed by [{low}, {high}]')
    while high - low > resolution:
        middle = (low + high) / 2
        if unstable(middle):
            high = middle
        else:
            low = middle
    return low, high
