'''
The two boundary-controlled plants of the case studies, their finite-dimensional companions, the
published controllers and weighting filters, and the closed-loop channels the synthesis programs
minimize.

The parabolic plant is the reaction-diffusion equation x_t = x_xx + c x on [0, L] with x(0, t) = 0
and the delayed Dirichlet actuation x(L, t) = u(t - D), measured at five points. The wave plant is
the anti-damped string x_tt = x_xx on [0, 1] with x_x(0, t) = -q x_t(0, t) and the Neumann
actuation x_x(1, t) = u(t), measured through x(0, t), x(1, t) and x_t(1, t).
'''
from math import pi, factorial
from typing import Sequence
from dataclasses import dataclass, field
from logging import getLogger
import numpy as np
import control as ct
from scipy.signal import tf2ss
from hinfsystem.polynomials import Polynomial, QuasiPolynomial, S, as_quasi, delayed
from hinfsystem.structures import SharedDenominator, ScheduledQuadratic, NOMINAL, pole_info
from hinfsystem.xfer import (
    TransferExpr, Envelope, Closure, closure, integrated_delay, QuasiRational, StateSpace,
    Constant, Delay, Feedback, LowerLFT, Inverse, RhpPoleInfo, tf, identity, hstack, vstack, diag, realize
)

logger = getLogger(__name__)

SERIES_TERMS = 8

def _sinh_series(a: float, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    value = np.zeros_like(w)
    derivative = np.zeros_like(w)
    for k in range(SERIES_TERMS):
        coefficient = a**(2 * k + 1) / factorial(2 * k + 1)
        value = value + coefficient * w**k
        if k:
            derivative = derivative + k * coefficient * w**(k - 1)
    return value, derivative

def _sinh_ratio(s: np.ndarray, L: float, c: float, xi: float) -> tuple[np.ndarray, np.ndarray]:
    '''
    The ratio sinh(z xi)/sinh(z L) with z = sqrt(s - c) and its s-derivative. Away from s = c the
    exponentials are scaled by exp(-z L), which keeps them bounded on the principal branch.
    '''
    w = np.asarray(s, dtype=complex) - c
    z = np.sqrt(w)
    small = np.abs(z) * L < 1e-2
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        safe = np.where(small, 1.0, z)
        lead = np.exp(safe * (xi - L))
        near, far = np.exp(-2 * safe * xi), np.exp(-2 * safe * L)
        ratio = lead * (1 - near) / (1 - far)
        dz = (lead * ((xi - L) * (1 - near) + 2 * xi * near) - 2 * L * far * ratio) / (1 - far)
        derivative = dz / (2 * safe)
        if np.any(small):
            top, dtop = _sinh_series(xi, w)
            bottom, dbottom = _sinh_series(L, w)
            ratio = np.where(small, top / bottom, ratio)
            derivative = np.where(small, (dtop * bottom - top * dbottom) / bottom**2, derivative)
    return ratio, derivative

@closure('parabolic')
def parabolic(L: float = 2 * pi, D: float = 1.0, c: float = 0.5, xi: float = 2 * pi) -> Closure:
    '''
    G(s, xi) = exp(-D s) sinh(sqrt(s - c) xi) / sinh(sqrt(s - c) L), the transfer from the delayed
    boundary input to the state at xi.
    '''
    if not 0 <= xi <= L:
        raise ValueError(f'The measurement point {xi} lies outside [0, {L}]')

    def evaluator(s: np.ndarray) -> np.ndarray:
        if xi == 0:
            return np.zeros(np.shape(s), dtype=complex)
        ratio, _ = _sinh_ratio(s, L, c, xi)
        return np.exp(-D * np.asarray(s, dtype=complex)) * ratio

    def derivative(s: np.ndarray) -> np.ndarray:
        if xi == 0:
            return np.zeros(np.shape(s), dtype=complex)
        ratio, dratio = _sinh_ratio(s, L, c, xi)
        return np.exp(-D * np.asarray(s, dtype=complex)) * (dratio - D * ratio)

    def bound(omega: float) -> Envelope | None:
        a = float(np.sqrt(1j * omega - c).real)
        if xi == 0:
            return Envelope(np.zeros((1, 1), dtype=complex), np.zeros((1, 1)))
        if a <= 0:
            return None
        radius = np.exp(-a * (L - xi)) * (1 + np.exp(-2 * a * xi)) / (1 - np.exp(-2 * a * L))
        return Envelope(np.zeros((1, 1), dtype=complex), np.array([[radius]]), 0.0)

    parameters = {'L': float(L), 'D': float(D), 'c': float(c), 'xi': float(xi)}
    return Closure('parabolic', parameters, evaluator, derivative, bound)

@dataclass
class ParabolicPlant:
    '''
    The delayed reaction-diffusion plant.

    Attributes:
        L (float): Length of the domain.
        D (float): Input delay.
        c (float): Constant reaction coefficient.
        sensors (tuple[float, ...]): Measurement points, i L / 6 for i = 1, ..., 5 by default.
    '''
    L: float = 2 * pi
    D: float = 1.0
    c: float = 0.5
    sensors: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not self.sensors:
            self.sensors = tuple(index * self.L / 6 for index in range(1, 6))
        self.sensors = tuple(float(xi) for xi in self.sensors)

    def at(self, xi: float) -> Closure:
        return parabolic(self.L, self.D, self.c, xi)

    def tf(self) -> TransferExpr:
        '''
        The column of transfers from the input to every sensor.
        '''
        return vstack(*[self.at(xi) for xi in self.sensors])

    def poles(self, count: int = 5) -> np.ndarray:
        '''
        The first modes s_k = c - k^2 pi^2 / L^2. The removable point s = c is not a pole.
        '''
        k = np.arange(1, count + 1)
        return self.c - k**2 * pi**2 / self.L**2

    def unstable_poles(self) -> RhpPoleInfo:
        count = max(1, int(np.ceil(self.L * np.sqrt(max(self.c, 0.0)) / pi)) + 1)
        return pole_info(self.poles(count))

def parabolic_tf(plant: ParabolicPlant, xi: float) -> Closure:
    return plant.at(xi)

def _interpolation(xi: float, h: float, n: int) -> tuple[np.ndarray, float]:
    '''
    Linear interpolation weights of a point on the grid j h, j = 0, ..., n + 1, split into the
    weights of the interior nodes and the weight of the actuated boundary node.
    '''
    position = xi / h
    j = min(int(np.floor(position)), n)
    t = position - j
    weights = np.zeros(n + 2)
    weights[j] += 1 - t
    weights[j + 1] += t
    return weights[1:n + 1], float(weights[n + 1])

def _delay_block(D: float, order: int) -> StateSpace:
    if D == 0 or order == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[1.0]])
    num, den = ct.pade(D, order)
    return StateSpace(*tf2ss(num, den))

@dataclass(frozen=True)
class ReducedParabolic:
    '''
    Finite-difference and Pade model of the parabolic plant.

    Attributes:
        G (StateSpace): The model from the input to the sensors.
        P (StateSpace): The plant of the quadratic program, inputs (d, u) with d acting on every
            state, outputs (x, W_u u, y).
        grid (ndarray): The interior nodes.
        performance (int): Number of performance outputs of P.
        disturbances (int): Number of disturbance inputs of P.
    '''
    G: StateSpace
    P: StateSpace
    grid: np.ndarray
    performance: int
    disturbances: int

def reduced_parabolic(plant: ParabolicPlant, n_space: int = 50, pade_order: int = 3) -> ReducedParabolic:
    '''
    Discretize the parabolic plant with central differences on n_space interior nodes, Dirichlet
    conditions at both ends, the right one fed by a Pade approximation of the input delay.
    '''
    if n_space < 2:
        raise ValueError(f'At least two interior nodes are needed, got {n_space}')
    n, h = n_space, plant.L / (n_space + 1)
    laplacian = (np.diag(np.full(n, -2.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / h**2
    Ax = laplacian + plant.c * np.eye(n)
    boundary = np.zeros((n, 1))
    boundary[-1, 0] = 1 / h**2

    pade = _delay_block(plant.D, pade_order)
    states = n + pade.states
    A = np.zeros((states, states))
    A[:n, :n] = Ax
    A[:n, n:] = boundary @ pade.C
    A[n:, n:] = pade.A
    B = np.vstack([boundary @ pade.D, pade.B])
    rows = [_interpolation(xi, h, n) for xi in plant.sensors]
    C = np.array([np.concatenate([interior, edge * pade.C[0]]) for interior, edge in rows])
    D = np.array([[edge * pade.D[0, 0]] for _, edge in rows])
    G = StateSpace(A, B, C, D)

    weight = realize(tf([1.0, 0.0], [0.01, 1.0]))
    total = states + weight.states
    m = len(plant.sensors)
    Ap = np.zeros((total, total))
    Ap[:states, :states] = A
    Ap[states:, states:] = weight.A
    B2 = np.vstack([B, weight.B])
    Cp = np.zeros((total + 1 + m, total))
    Cp[:total] = np.eye(total)
    Cp[total, states:] = weight.C[0]
    Cp[total + 1:, :states] = C
    Dp = np.zeros((total + 1 + m, total + 1))
    Dp[total, total] = weight.D[0, 0]
    Dp[total + 1:, total:] = D
    P = StateSpace(Ap, np.hstack([np.eye(total), B2]), Cp, Dp)
    logger.info(f'Reduced parabolic model with {states} states, quadratic plant with {total} states')
    return ReducedParabolic(G, P, h * np.arange(1, n + 1), total + 1, total)

@dataclass
class WavePlant:
    '''
    The anti-stable wave plant G = [N_1, N_2, N_3] / (s (1 - Q exp(-2s))), Q = (1 + q)/(1 - q),
    with N_1 = 2 exp(-s)/(1 - q), N_2 = 1 + Q exp(-2s) and N_3 = s N_2.
    '''
    q: float = 3.0

    def __post_init__(self):
        if self.q < 0 or self.q == 1:
            raise ValueError(f'The anti-damping parameter must be nonnegative and different from one, got {self.q}')

    @property
    def Q(self) -> float:
        return (1 + self.q) / (1 - self.q)

    @property
    def numerators(self) -> tuple[QuasiPolynomial, QuasiPolynomial, QuasiPolynomial]:
        reflected = QuasiPolynomial([(1.0, 0.0), (self.Q, 2.0)])
        return delayed(2 / (1 - self.q), 1.0), reflected, reflected * S

    @property
    def denominator(self) -> QuasiPolynomial:
        return QuasiPolynomial([(S, 0.0), (-self.Q * S, 2.0)])

    def tf(self) -> TransferExpr:
        return vstack(*[QuasiRational(numerator, self.denominator) for numerator in self.numerators])

    def chain(self) -> float:
        '''
        Real part log|Q| / 2 of the neutral chain of open-loop poles.
        '''
        return float(np.log(abs(self.Q)) / 2)

def wave_tf(q: float = 3.0) -> WavePlant:
    return WavePlant(q)

@dataclass(frozen=True)
class WaveDecomposition:
    '''
    The wave plant closed by K0 = [0, 0, 1], split as G/(1 + G_3) = G_tilde + Phi with G_tilde
    rational and unstable and Phi stable and infinite-dimensional.
    '''
    plant: WavePlant
    G_tilde: StateSpace
    Phi: TransferExpr

    @property
    def prestabilized(self) -> TransferExpr:
        return self.G_tilde + self.Phi

def wave_decompose(plant: WavePlant | float = 3.0) -> WaveDecomposition:
    plant = plant if isinstance(plant, WavePlant) else WavePlant(plant)
    q, Q = plant.q, plant.Q
    G_tilde = StateSpace([[0.0]], [[1.0]], [[1 / (1 - q)], [(1 + Q) / 2], [0.0]], [[0.0], [0.0], [0.5]])
    Phi = vstack(
        integrated_delay(1.0) * (-1 / (1 - q)),
        integrated_delay(2.0) * (-Q / 2),
        Delay(2.0) * (Q / 2)
    )
    return WaveDecomposition(plant, G_tilde, Phi)

def wave_characteristic(plant: WavePlant, numerators: Sequence, denominator) -> QuasiPolynomial:
    '''
    The closed-loop quasi-polynomial s (1 - Q exp(-2s)) d + sum n_i N_i of the wave plant under the
    row controller [n_1/d, n_2/d, n_3/d], for polynomial or quasi-polynomial n_i and d.
    '''
    d = as_quasi(denominator)
    total = plant.denominator * d
    for numerator, N in zip(numerators, plant.numerators):
        total = total + as_quasi(numerator) * N
    return total

def wave_prestabilized(plant: WavePlant, numerators: Sequence, denominator) -> TransferExpr:
    '''
    G0 = G (1 + K0 G)^{-1} for the row controller K0 = [n_1/d, n_2/d, n_3/d], with entries
    N_i d / (s (1 - Q exp(-2s)) d + sum n_j N_j).
    '''
    d = as_quasi(denominator)
    characteristic = wave_characteristic(plant, numerators, d)
    return vstack(*[QuasiRational(N * d, characteristic) for N in plant.numerators])

def recover_controller(K_tilde: TransferExpr, Phi: TransferExpr, K0: TransferExpr | None = None) -> TransferExpr:
    '''
    Undo the loop transformation K_tilde = feedback(K, Phi), returning K0 + feedback(K_tilde, -Phi).
    '''
    K = Feedback(K_tilde, -Phi)
    return K if K0 is None else K0 + K

def prestabilizer(channels: int = 3) -> Constant:
    gains = np.zeros((1, channels))
    gains[0, -1] = 1.0
    return Constant(gains)

def scheduled_controller(q: float, x: Sequence[float] | None = None, q0: float = 3.0, nominal: Sequence[float] = NOMINAL) -> TransferExpr:
    '''
    The controller K0 + feedback(K_tilde(q, x), -Phi(q)) scheduled in the anti-damping parameter.
    '''
    K_tilde = ScheduledQuadratic(q, q0, nominal, x=x).expr()
    return recover_controller(K_tilde, wave_decompose(q).Phi, prestabilizer())

INITIAL = (
    ((0.001653, 0.822, 5.557), (0.01467, 3.125, 20.69), (0.0221, 4.784, 31.2), (0.01733, 3.715, 24.34), (0.00231, 0.9017, 6.596)),
    (1.0, 4.315, 18.3)
)

MODEL_MATCHING = (
    ((0.1343, 0.4535, 11.34), (0.52, 1.755, 45.23), (0.7443, 2.621, 65.23), (0.5976, 2.036, 52.82), (0.3446, 2.621, 20.47)),
    (1.0, 10.66, 38.39)
)

MIXED_SENSITIVITY = (
    ((0.0002403, 0.3159, 2.629), (0.0125, 7.134, 37.54), (-0.02098, 6.46, 73.02), (-0.01589, 6.447, 49.82), (0.007613, 1.283, 11.02)),
    (1.0, 2.291, 19.85)
)

MIXED_SENSITIVITY_SENSOR = (
    ((0.00336, 0.4678, 2.196), (-0.002542, 6.097, 21.47), (0.08966, 3.947, 33.65), (-0.01911, 5.889, 27.07), (-0.006395, 0.7398, 5.143)),
    (1.0, 3.731, 21.2)
)

SMALL_GAIN = ((0.3218, 0.0643), (1.0, 100.1, 10.0))

PARABOLIC_FIXTURES = {
    'initial': INITIAL,
    'model-matching': MODEL_MATCHING,
    'mixed-sensitivity': MIXED_SENSITIVITY,
    'mixed-sensitivity-sensor': MIXED_SENSITIVITY_SENSOR
}

def parabolic_structure(name: str = 'initial') -> SharedDenominator:
    '''
    A published parabolic controller as a tunable structure with a shared second order denominator.
    '''
    numerators, denominator = PARABOLIC_FIXTURES[name]
    return SharedDenominator.from_coefficients(numerators, denominator, id=name)

def quasi_polynomial_controller(q: float = 3.0, x3: float = 4.0**-3) -> TransferExpr:
    '''
    The row [(1 - q)(s + x3)/(s + 1), 0, 1] designed with the delay margin recipe.
    '''
    return hstack(tf([1 - q, (1 - q) * x3], [1.0, 1.0]), Constant([[0.0]]), Constant([[1.0]]))

def quasi_polynomial_row(q: float = 3.0, x3: float = 4.0**-3) -> tuple[list[Polynomial], Polynomial]:
    '''
    The numerators and the shared denominator s + 1 of the delay margin controller.
    '''
    d = Polynomial((1.0, 1.0))
    return [Polynomial(((1 - q) * x3, 1 - q)), Polynomial(()), d], d

def wave_objective_plant(q: float = 3.0) -> TransferExpr:
    '''
    The wave plant closed by the delay margin controller, the stable G0 of the finite-dimensional
    increment design.
    '''
    return wave_prestabilized(WavePlant(q), *quasi_polynomial_row(q))

def backstepping_controller(q: float = 3.0, c0: float = 1.0) -> TransferExpr:
    '''
    The row [c0 (1 - q) s/(s + c0 (1 - exp(-s))), 0, 1], written with the entire function
    (1 - exp(-s))/s so that it stays finite at the origin.
    '''
    first = Inverse(identity(1) + integrated_delay(1.0) * c0) * (c0 * (1 - q))
    return hstack(first, Constant([[0.0]]), Constant([[1.0]]))

def finite_dimensional_controller() -> TransferExpr:
    return hstack(
        tf([-2.992, -303.5, -104.7, -0.488], [1.0, 102.2, 101.7, 0.522]),
        tf([-0.04494, -4.047, 0.001097], [1.0, 101.2, 0.522]),
        tf([1.207, 122.7, 0.5271], [1.0, 101.2, 0.522])
    )

def small_gain_initializer(channels: int = 3) -> SharedDenominator:
    '''
    The increment n0/d0 [1, 1, 1] with n0 = 0.3218 s + 0.0643 and d0 = s^2 + 100.1 s + 10.
    '''
    numerator, denominator = SMALL_GAIN
    return SharedDenominator.from_coefficients([numerator] * channels, denominator, id='small-gain')

def fixture_controllers(q: float = 3.0, c0: float = 1.0) -> dict[str, TransferExpr]:
    '''
    Every published controller, by name. The wave controllers are rows over (x(0), x(1), x_t(1)).
    '''
    fixtures: dict[str, TransferExpr] = {name: parabolic_structure(name).expr() for name in PARABOLIC_FIXTURES}
    fixtures['quasi-polynomial'] = quasi_polynomial_controller(q)
    fixtures['backstepping'] = backstepping_controller(q, c0)
    fixtures['finite-dimensional'] = finite_dimensional_controller()
    fixtures['small-gain'] = quasi_polynomial_controller(q) + small_gain_initializer().expr()
    fixtures['scheduled'] = scheduled_controller(q)
    return fixtures

def weight_filters() -> dict[str, TransferExpr]:
    return {
        'parabolic-control': tf([0.1, 0.0], [1e-3, 1.0]),
        'parabolic-error': Constant(np.diag([3.0, 0.0, 0.0, 0.0, 0.0])),
        'parabolic-error-sensor': Constant(np.diag([1.0, 0.0, 0.0, 0.0, 0.2])),
        'quadratic-control': tf([1.0, 0.0], [0.01, 1.0]),
        'wave-error': diag(tf([0.01, 0.5002], [1.0, 0.01429]), tf([0.99, 0.0007147], [1.0, 0.07941]), Constant([[0.01]])),
        'wave-control': Constant([[0.01]])
    }

def complementary(G: TransferExpr, K: TransferExpr) -> TransferExpr:
    '''
    (I + G K)^{-1} G K, formed as G (I + K G)^{-1} K.
    '''
    return Feedback(G, K) @ K

def model_matching_channel(G: TransferExpr, G_red: TransferExpr, K0: TransferExpr, K: TransferExpr) -> TransferExpr:
    '''
    The distance between the reference loop of the reduced model under K0 and the loop of the
    infinite-dimensional plant under K, on the channel from the reference to y - y_r.
    '''
    return complementary(G_red, K0) - complementary(G, K)

def mixed_sensitivity_channel(G: TransferExpr, K: TransferExpr, W_e: TransferExpr, W_u: TransferExpr) -> TransferExpr:
    '''
    The stack [W_e (I + G K)^{-1}; W_u K (I + G K)^{-1}].
    '''
    sensitivity = identity(G.shape[0]) - complementary(G, K)
    control = Inverse(identity(G.shape[1]) + K @ G) @ K
    return vstack(W_e @ sensitivity, W_u @ control)

def wave_objective_channel(G0: TransferExpr, K1: TransferExpr, weights: dict[str, TransferExpr] | None = None) -> TransferExpr:
    weights = weights or weight_filters()
    return mixed_sensitivity_channel(G0, K1, weights['wave-error'], weights['wave-control'])

def lqg_channel(reduced: ReducedParabolic, K: TransferExpr) -> LowerLFT:
    '''
    The channel from the state disturbance to (x, W_u u) of the reduced plant under u = -K y.
    '''
    return LowerLFT(reduced.P, K, reduced.performance, reduced.disturbances)
