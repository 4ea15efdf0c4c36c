'''
Certified H-infinity and H2 estimates of stable transfer matrices sampled on the imaginary axis,
and inexact subgradients of the H-infinity norm with respect to controller parameters.
'''
from math import inf, sqrt
from typing import Sequence
from warnings import warn
from dataclasses import dataclass, field
from logging import getLogger
import numpy as np
import torch
from torch import Tensor
from scipy.optimize import minimize_scalar
from hinfsystem.settings import Settings
from hinfsystem.xfer import TransferExpr
from hinfsystem.sampling import probe_bound, refine, log_seed, Refinement
from hinfsystem.exceptions import SingularAt, UnboundedOnAxis, TailBoundMissing, DegenerateSingularGap

logger = getLogger(__name__)

MAX_ACTIVE = 8

def sigma_max(T: TransferExpr, omega) -> np.ndarray:
    '''
    Largest singular value of T(j w) at every frequency.
    '''
    values = T.eval(1j * np.asarray(omega, dtype=float))
    return np.linalg.svd(values, compute_uv=False)[..., 0]

def _derivative_norm(T: TransferExpr):
    def magnitude(omega: np.ndarray) -> np.ndarray:
        return np.linalg.norm(T.eval_deriv(1j * omega), axis=(-2, -1))
    return magnitude

@dataclass(frozen=True)
class ActiveFrequency:
    omega: float
    sigma: float
    u: np.ndarray
    v: np.ndarray
    gap: float

@dataclass(frozen=True)
class NormEstimate:
    '''
    A certified H-infinity estimate: gamma <= norm <= gamma + theta on [0, cutoff], with the tail
    beyond the cutoff bounded analytically or assumed.

    Parameters:
        gamma (float): Largest sampled value of the maximum singular value.
        theta (float): The tolerance.
        nodes (ndarray): The accepted frequencies.
        values (ndarray): Maximum singular values at the nodes.
        active (tuple[ActiveFrequency, ...]): Frequencies where the peak is attained within the
            active threshold, with their singular pairs.
        cutoff (float): End of the certified band.
        tail (str): 'analytic' when an envelope bounds the tail below gamma, else 'assumed'.
    '''
    gamma: float
    theta: float
    nodes: np.ndarray
    values: np.ndarray
    active: tuple[ActiveFrequency, ...]
    cutoff: float
    tail: str = 'analytic'

    def to_dict(self) -> dict:
        return {
            'gamma': self.gamma,
            'theta': self.theta,
            'nodes': len(self.nodes),
            'cutoff': self.cutoff,
            'tail': self.tail,
            'active': [{'omega': active.omega, 'sigma': active.sigma} for active in self.active]
        }

    def rows(self) -> list[tuple[float, float]]:
        return [(float(w), float(phi)) for w, phi in zip(self.nodes, self.values)]

@dataclass(frozen=True)
class H2Estimate:
    '''
    A certified estimate of the integral of trace(T^H T) over [0, inf) within theta. The H2 norm
    follows the one-sided convention norm^2 = value / pi.
    '''
    value: float
    tail: float
    theta: float
    cutoff: float
    nodes: np.ndarray = field(repr=False)

    @property
    def norm(self) -> float:
        return sqrt(max(self.value, 0.0) / np.pi)

    def to_dict(self) -> dict:
        return {'value': self.value, 'norm': self.norm, 'tail': self.tail, 'theta': self.theta, 'cutoff': self.cutoff, 'nodes': len(self.nodes)}

def _peak_refinement(T: TransferExpr, low: float, high: float, theta: float, floor: float, settings: Settings) -> Refinement:
    peaks: list[tuple[float, float]] = []

    def evaluate(omega: np.ndarray) -> np.ndarray:
        try:
            values = sigma_max(T, omega)
        except SingularAt as error:
            raise UnboundedOnAxis(f'Pole on the imaginary axis near s={error.s}') from error
        if not np.all(np.isfinite(values)):
            raise UnboundedOnAxis('Non finite values on the imaginary axis')
        index = int(np.argmax(values))
        peaks.append(max([(float(values[index]), float(omega[index]))] + peaks[-1:]))
        levels = settings.norms.growth_levels
        if len(peaks) > levels and 0 < settings.norms.growth_factor * peaks[-1 - levels][0] < peaks[-1][0]:
            raise UnboundedOnAxis(
                f'Peak grew from {peaks[-1 - levels][0]:.3g} to {peaks[-1][0]:.3g} within {levels} refinements, '
                f'pole on the imaginary axis near {peaks[-1][1]:.6g} rad/s'
            )
        return values

    magnitude = _derivative_norm(T)

    def accept(a, b, bound, width, seen):
        gamma = max(floor, float(np.max(seen)))
        return bound * width < 2 * gamma + 2 * theta - a - b

    return refine(
        evaluate=evaluate,
        bound=lambda lows, highs: probe_bound(magnitude, lows, highs, settings.nyquist),
        accept=accept,
        seed=log_seed(low, high, settings.nyquist.seed_nodes),
        settings=settings.nyquist,
        label='peak grid'
    )

def _singular_pair(T: TransferExpr, omega: float, settings: Settings) -> ActiveFrequency:
    value = T.eval(1j * omega)
    U, sigma, Vh = np.linalg.svd(value)
    gap = float(sigma[0] - sigma[1]) if len(sigma) > 1 else inf
    if gap < settings.norms.gap_tolerance:
        logger.warning(f'Degenerate singular gap {gap:.3g} at {omega:.6g} rad/s')
        warn(f'Top singular values at {omega:.6g} rad/s differ by {gap:.3g}', DegenerateSingularGap)
    return ActiveFrequency(float(omega), float(sigma[0]), U[:, 0], Vh[0].conj(), gap)

def _actives(T: TransferExpr, nodes: np.ndarray, values: np.ndarray, settings: Settings) -> tuple[float, tuple[ActiveFrequency, ...]]:
    gamma = float(np.max(values))
    threshold = (1 - settings.norms.active_threshold) * gamma
    left = np.concatenate([[-inf], values[:-1]])
    right = np.concatenate([values[1:], [-inf]])
    candidates = np.flatnonzero((values >= left) & (values >= right) & (values >= threshold))
    candidates = candidates[np.argsort(values[candidates])[::-1]][:MAX_ACTIVE]
    polished = []
    for index in candidates:
        low, high = nodes[max(index - 1, 0)], nodes[min(index + 1, len(nodes) - 1)]
        omega = nodes[index]
        if high > low:
            result = minimize_scalar(lambda w: -float(sigma_max(T, w)), bounds=(low, high), method='bounded', options={'xatol': 1e-10 * max(1.0, high)})
            if -result.fun > values[index]:
                omega = float(result.x)
        polished.append(omega)
    actives = [_singular_pair(T, omega, settings) for omega in polished]
    gamma = max([gamma] + [active.sigma for active in actives])
    actives = [active for active in actives if active.sigma >= (1 - settings.norms.active_threshold) * gamma]
    return gamma, tuple(sorted(actives, key=lambda active: active.omega))

def hinf_norm(T: TransferExpr, theta: float | None = None, cutoff: float | None = None, settings: Settings | None = None) -> NormEstimate:
    '''
    Certified H-infinity norm of a stable transfer matrix.

    The band [0, cutoff] is refined until L (w_i+1 - w_i) < 2 gamma + 2 theta - phi_i - phi_i+1 on
    every interval, phi being the largest singular value and L a bound of the Frobenius norm of
    T'. Without an explicit cutoff the band is doubled until the envelope of T bounds the tail by
    gamma; when T has no envelope the default cutoff is used and the tail is assumed.

    Parameters:
        T (TransferExpr): The stable transfer matrix.
        theta (float): The tolerance, the configured one by default.
        cutoff (float): Optional end of the band.

    Raises:
        UnboundedOnAxis: When a probe hits a pole of T, or when the sampled peak keeps growing
            under refinement as it does next to an undeclared imaginary axis pole.
        RefinementBudgetExceeded: When the peak cannot be certified within the node budget.
    '''
    settings = settings or Settings()
    theta = settings.norms.theta if theta is None else theta
    tail = 'analytic'
    if cutoff is None:
        high = settings.nyquist.cutoff_factor * settings.nyquist.cutoff_floor
        if T.envelope(high) is None and T.envelope(settings.norms.default_cutoff) is None:
            high, tail = settings.norms.default_cutoff, 'assumed'
            logger.warning(f'No tail bound available, the peak is certified on [0, {high:.4g}] only')
    else:
        high = float(cutoff)
        envelope = T.envelope(high)
        tail = 'assumed'

    parts = [_peak_refinement(T, 0.0, high, theta, 0.0, settings)]
    gamma = float(np.max(parts[0].values))
    if cutoff is None and tail == 'analytic':
        for _ in range(settings.norms.tail_doublings):
            envelope = T.envelope(high)
            if envelope is not None and envelope.sup() <= gamma:
                break
            parts.append(_peak_refinement(T, high, 2 * high, theta, gamma, settings))
            gamma = max(gamma, float(np.max(parts[-1].values)))
            high *= 2
        else:
            tail = 'assumed'
            logger.warning(f'Tail bound not reached, the peak is certified on [0, {high:.4g}] only')
    elif cutoff is not None and envelope is not None and envelope.sup() <= gamma:
        tail = 'analytic'

    nodes = np.concatenate([parts[0].nodes] + [part.nodes[1:] for part in parts[1:]])
    values = np.concatenate([parts[0].values] + [part.values[1:] for part in parts[1:]])
    gamma, active = _actives(T, nodes, values, settings)
    logger.info(f'H-infinity estimate {gamma:.6g} within {theta:g} from {len(nodes)} nodes on [0, {high:.4g}]')
    return NormEstimate(gamma, theta, nodes, values, active, high, tail)

def hinf_subgradient(T: TransferExpr, estimate: NormEstimate, parameters: Sequence[Tensor]) -> np.ndarray:
    '''
    An inexact subgradient of x -> ||T(x)||_inf: the equal-weight average over the active
    frequencies of the gradients of Re(u^H T(x, j w) v), with (u, v) the top singular pair.

    Parameters:
        T (TransferExpr): The channel, depending on the parameters through Parametric nodes.
        estimate (NormEstimate): A fresh estimate of T at the current parameters.
        parameters (Sequence[Tensor]): The tunable tensors.
    '''
    parameters = list(parameters)
    if not estimate.active or not T.parametric:
        return np.zeros(sum(parameter.numel() for parameter in parameters))
    s = torch.tensor([1j * active.omega for active in estimate.active], dtype=torch.complex128)
    u = torch.from_numpy(np.stack([active.u for active in estimate.active])).to(torch.complex128)
    v = torch.from_numpy(np.stack([active.v for active in estimate.active])).to(torch.complex128)
    values = T.tensor(s)
    objective = torch.einsum('nm,nmp,np->n', u.conj(), values, v).real.mean()
    gradients = torch.autograd.grad(objective, parameters, allow_unused=True)
    return np.concatenate([
        (gradient if gradient is not None else torch.zeros_like(parameter)).detach().reshape(-1).numpy()
        for gradient, parameter in zip(gradients, parameters)
    ])

def _frobenius_squared(T: TransferExpr, omega: np.ndarray) -> np.ndarray:
    try:
        values = T.eval(1j * np.asarray(omega, dtype=float))
    except SingularAt as error:
        raise UnboundedOnAxis(f'Pole on the imaginary axis near s={error.s}') from error
    return np.sum(np.abs(values)**2, axis=(-2, -1))

def h2_integral(T: TransferExpr, theta: float | None = None, cutoff: float | None = None, tail: float | None = None, settings: Settings | None = None) -> H2Estimate:
    '''
    Certified integral of f(w) = trace(T(j w)^H T(j w)) over [0, inf) within theta.

    Piecewise-linear quadrature on [0, cutoff] is refined until (cutoff / 4)(w_i+1 - w_i) L <= theta/2
    on every interval, L bounding |f'| by 2 ||T||_F ||T'||_F. The tail beyond the cutoff must be
    bounded by theta/2, either from the supplied bound or from the envelope of T.

    Parameters:
        T (TransferExpr): A stable strictly proper transfer matrix.
        theta (float): The tolerance.
        cutoff (float): Optional end of the band; doubled from a default until the tail is small.
        tail (float): Optional bound on the integral beyond the cutoff.

    Raises:
        TailBoundMissing: When no tail bound can be derived and none is supplied.
    '''
    settings = settings or Settings()
    theta = settings.norms.theta if theta is None else theta
    high = float(cutoff) if cutoff is not None else settings.nyquist.cutoff_factor * settings.nyquist.cutoff_floor
    if tail is None:
        for _ in range(settings.norms.tail_doublings + 1):
            envelope = T.envelope(high)
            tail = envelope.tail_integral(high) if envelope is not None else inf
            if tail <= theta / 2:
                break
            high *= 2
        if tail > theta / 2:
            raise TailBoundMissing(f'No tail bound below {theta / 2:g} up to {high:.4g} rad/s')
    elif tail > theta / 2:
        raise TailBoundMissing(f'The supplied tail bound {tail:g} exceeds {theta / 2:g}')

    def magnitude(omega: np.ndarray) -> np.ndarray:
        values, derivatives = T.eval_pair(1j * omega)
        return 2 * np.linalg.norm(values, axis=(-2, -1)) * np.linalg.norm(derivatives, axis=(-2, -1))

    refinement = refine(
        evaluate=lambda omega: _frobenius_squared(T, omega),
        bound=lambda lows, highs: probe_bound(magnitude, lows, highs, settings.nyquist),
        accept=lambda a, b, bound, width, _: (high / 4) * width * bound <= theta / 2,
        seed=log_seed(0.0, high, settings.nyquist.seed_nodes),
        settings=settings.nyquist,
        label='H2 grid'
    )
    value = float(np.trapezoid(refinement.values, refinement.nodes))
    logger.info(f'H2 integral {value:.6g} within {theta:g} from {len(refinement.nodes)} nodes, tail {tail:.3g}')
    return H2Estimate(value, float(tail), theta, high, refinement.nodes)

def h2_gradient(T: TransferExpr, estimate: H2Estimate, parameters: Sequence[Tensor], settings: Settings | None = None) -> np.ndarray:
    '''
    Gradient of the H2 norm sqrt(value / pi) by torch on a thinned copy of the certified grid.
    '''
    settings = settings or Settings()
    parameters = list(parameters)
    if not T.parametric:
        return np.zeros(sum(parameter.numel() for parameter in parameters))
    count = min(len(estimate.nodes), settings.norms.gradient_nodes)
    index = np.unique(np.round(np.linspace(0, len(estimate.nodes) - 1, count)).astype(int))
    nodes = torch.from_numpy(estimate.nodes[index])
    values = T.tensor(1j * nodes.to(torch.complex128))
    integrand = (values.abs()**2).sum(dim=(-2, -1))
    integral = torch.trapezoid(integrand, nodes)
    norm = max(estimate.norm, 1e-12)
    gradients = torch.autograd.grad(integral / (2 * np.pi * norm), parameters, allow_unused=True)
    return np.concatenate([
        (gradient if gradient is not None else torch.zeros_like(parameter)).detach().reshape(-1).numpy()
        for gradient, parameter in zip(gradients, parameters)
    ])
