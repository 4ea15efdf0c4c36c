'''
Certified closed-loop stability through the modified Nyquist curve.

The return difference f = det(I + G K) is regularized against its imaginary axis poles, sampled
adaptively on [0, j cutoff] until the first-order sampling condition holds on every interval,
completed by conjugate symmetry into the closed polygon of the clockwise Nyquist contour, and its
winding number about the origin is counted by ray crossings. A stable loop winds exactly n_p times
counterclockwise, n_p being the number of open right half plane poles of G and K together.
'''
import json
from enum import Enum
from hashlib import sha256
from dataclasses import dataclass, field
from logging import getLogger
import numpy as np
from hinfsystem.settings import Settings, NyquistSettings
from hinfsystem.xfer import TransferExpr, RhpPoleInfo, return_difference, regularize
from hinfsystem.sampling import probe_bound, refine, log_seed
from hinfsystem.exceptions import (
    SingularAt, OriginOnPolygon, DeclaredInfoInconsistent, RefinementBudgetExceeded
)

logger = getLogger(__name__)

class Verdict(str, Enum):
    STABLE = 'Stable'
    UNSTABLE = 'Unstable'
    INCONCLUSIVE = 'Inconclusive'

def _scalar(f: TransferExpr, omega) -> np.ndarray:
    return f.eval(1j * np.asarray(omega, dtype=float))[..., 0, 0]

def _derivative_magnitude(f: TransferExpr):
    return lambda omega: np.abs(f.eval_deriv(1j * np.asarray(omega, dtype=float))[..., 0, 0])

@dataclass(frozen=True)
class SamplingPlan:
    '''
    Frequencies 0 = w_0 < ... < w_N = cutoff with the values of the regularized return difference
    and the first-order bound used on every interval.
    '''
    nodes: np.ndarray
    values: np.ndarray
    bounds: np.ndarray
    cutoff: float

    def check(self) -> bool:
        '''
        True when the sampling condition holds on every interval.
        '''
        widths = np.diff(self.nodes)
        return bool(np.all(self.bounds * widths < np.abs(self.values[:-1]) + np.abs(self.values[1:])))

    def polygon(self) -> np.ndarray:
        '''
        The closed polygon: values on the positive axis followed by their conjugates in reverse,
        ending at the first vertex.
        '''
        return np.concatenate([self.values, np.conj(self.values[::-1])[1:]])

    def rows(self) -> list[tuple[float, float, float]]:
        return [(float(w), float(v.real), float(v.imag)) for w, v in zip(self.nodes, self.values)]

def first_order_bound(f: TransferExpr, low: float, high: float, settings: NyquistSettings | None = None) -> float:
    '''
    A bound L with |f'(j w)| <= L for w in [low, high].

    Parameters:
        f (TransferExpr): A scalar expression without poles on the interval.
        low (float): Left end of the interval in rad/s.
        high (float): Right end of the interval in rad/s.

    Raises:
        SingularAt: When a probe hits a pole.
    '''
    settings = settings or Settings().nyquist
    return float(probe_bound(_derivative_magnitude(f), np.array([low]), np.array([high]), settings)[0])

def adaptive_sample(f: TransferExpr, cutoff: float, settings: NyquistSettings | None = None) -> SamplingPlan:
    '''
    Sample the scalar expression f on [0, j cutoff] until L (w_i+1 - w_i) < |f(j w_i)| + |f(j w_i+1)|
    holds on every interval.

    Raises:
        RefinementBudgetExceeded: When f has a zero on or very close to the sampled segment.
    '''
    settings = settings or Settings().nyquist
    magnitude = _derivative_magnitude(f)
    refinement = refine(
        evaluate=lambda omega: _scalar(f, omega),
        bound=lambda lows, highs: probe_bound(magnitude, lows, highs, settings),
        accept=lambda a, b, bound, width, _: bound * width < np.abs(a) + np.abs(b),
        seed=log_seed(0.0, cutoff, settings.seed_nodes),
        settings=settings,
        label='Nyquist plan'
    )
    return SamplingPlan(refinement.nodes, refinement.values, refinement.bounds, float(cutoff))

def _segment_distances(points: np.ndarray) -> np.ndarray:
    start, end = points[:-1], points[1:]
    direction = end - start
    length = np.abs(direction)**2
    safe = np.where(length > 0, length, 1.0)
    t = np.clip(-np.real(np.conj(start) * direction) / safe, 0.0, 1.0)
    return np.abs(start + np.where(length > 0, t, 0.0) * direction)

def winding_number(points: np.ndarray, settings: NyquistSettings | None = None, rng: np.random.Generator | None = None) -> int:
    '''
    Signed winding number about the origin of a closed polygon, counterclockwise positive, by
    counting crossings of a ray with a random direction.

    Parameters:
        points (ndarray): The vertices; the polygon is closed if the last vertex differs from
            the first.
        settings (NyquistSettings): Tolerances and the seed of the ray directions.
        rng (Generator): Optional source of ray directions.

    Raises:
        OriginOnPolygon: When a vertex or an edge passes within the origin tolerance of zero.
    '''
    settings = settings or Settings().nyquist
    points = np.asarray(points, dtype=complex)
    if points[0] != points[-1]:
        points = np.append(points, points[0])
    if np.min(np.abs(points)) < settings.origin_tolerance or np.min(_segment_distances(points)) < settings.origin_tolerance:
        raise OriginOnPolygon('The polygon passes through the origin')
    rng = rng or np.random.default_rng(settings.seed)
    for _ in range(100):
        angle = rng.uniform(0, 2 * np.pi)
        rotated = points * np.exp(-1j * angle)
        near_ray = (np.abs(rotated.imag) < settings.ray_tolerance) & (rotated.real > 0)
        if not np.any(near_ray):
            break
    else:
        raise OriginOnPolygon('No ray direction avoids the vertices of the polygon')
    x, y = rotated.real, rotated.imag
    above = y >= 0
    crossing = above[1:] != above[:-1]
    x0, x1, y0, y1 = x[:-1][crossing], x[1:][crossing], y[:-1][crossing], y[1:][crossing]
    position = (x0 * y1 - x1 * y0) / (y1 - y0)
    upward = above[1:][crossing]
    return int(np.sum(np.where(position > 0, np.where(upward, 1, -1), 0)))

class _Fails(Exception):...

def _tail(f: TransferExpr, cutoff: float, upper: float, alpha: float, settings: NyquistSettings) -> tuple[bool, str]:
    envelope = f.envelope(cutoff)
    if envelope is not None and envelope.center[0, 0].real - envelope.radius[0, 0] > alpha:
        return True, 'analytic'
    if upper <= cutoff:
        return False, 'none'

    def evaluate(omega: np.ndarray) -> np.ndarray:
        values = _scalar(f, omega).real
        if np.any(values <= alpha):
            raise _Fails
        return values

    magnitude = _derivative_magnitude(f)
    try:
        refine(
            evaluate=evaluate,
            bound=lambda lows, highs: probe_bound(magnitude, lows, highs, settings),
            accept=lambda a, b, bound, width, _: (a + b - bound * width) / 2 > alpha,
            seed=log_seed(cutoff, upper, settings.seed_nodes),
            settings=settings,
            label='tail sweep'
        )
    except (_Fails, RefinementBudgetExceeded):
        return False, 'none'
    envelope = f.envelope(upper)
    if envelope is not None and envelope.center[0, 0].real - envelope.radius[0, 0] > alpha:
        return True, 'swept+analytic'
    return True, 'swept'

def verify_tail(f: TransferExpr, cutoff: float, upper: float | None = None, alpha: float | None = None, settings: NyquistSettings | None = None) -> bool:
    '''
    Certify Re f(j w) > alpha for w >= cutoff, either analytically from the envelope of f or by a
    bound-certified sweep of [cutoff, upper].

    Parameters:
        f (TransferExpr): The scalar return difference.
        cutoff (float): Start of the tail in rad/s.
        upper (float): End of the swept band, the configured tail maximum by default.
        alpha (float): The required margin, the configured tail alpha by default.
    '''
    settings = settings or Settings().nyquist
    certified, _ = _tail(
        f, cutoff, settings.tail_max if upper is None else upper,
        settings.tail_alpha if alpha is None else alpha, settings
    )
    return certified

@dataclass(frozen=True)
class NyquistCertificate:
    '''
    The outcome of a Nyquist test with everything needed to audit it.

    Parameters:
        plan (SamplingPlan): The certified sampling of the regularized return difference.
        winding (int): Counterclockwise winding of the closed polygon about the origin.
        expected (int): The declared number of open right half plane poles.
        margin (float): Smallest magnitude at the nodes.
        tail (bool): Whether Re f > alpha was certified beyond the cutoff.
        tail_mode (str): How the tail was certified: analytic, swept, swept+analytic or none.
        alpha (float): The tail margin.
        verdict (Verdict): Stable, Unstable or Inconclusive.
    '''
    plan: SamplingPlan
    winding: int | None
    expected: int
    margin: float
    tail: bool
    tail_mode: str
    alpha: float
    verdict: Verdict
    notes: tuple[str, ...] = field(default=())

    @property
    def stable(self) -> bool:
        return self.verdict == Verdict.STABLE

    @property
    def hash(self) -> str:
        digest = sha256()
        digest.update(np.ascontiguousarray(self.plan.nodes).tobytes())
        digest.update(np.ascontiguousarray(self.plan.values).tobytes())
        digest.update(json.dumps([self.winding, self.expected, self.verdict.value]).encode())
        return digest.hexdigest()

    def to_dict(self) -> dict:
        return {
            'verdict': self.verdict.value,
            'winding': self.winding,
            'expected': self.expected,
            'cutoff': self.plan.cutoff,
            'nodes': len(self.plan.nodes),
            'margin': self.margin,
            'condition': self.plan.check(),
            'tail': self.tail,
            'tail_mode': self.tail_mode,
            'alpha': self.alpha,
            'notes': list(self.notes),
            'hash': self.hash
        }

def _cutoff(info: RhpPoleInfo, settings: NyquistSettings) -> float:
    return settings.cutoff_factor * max([settings.cutoff_floor, *info.frequencies()])

def certify(f: TransferExpr, info: RhpPoleInfo, settings: NyquistSettings | None = None, tail_max: float | None = None) -> NyquistCertificate:
    '''
    Run the Nyquist test on a scalar return difference f with declared unstable open-loop poles.
    '''
    settings = settings or Settings().nyquist
    upper = settings.tail_max if tail_max is None else tail_max
    cutoff = _cutoff(info, settings)
    try:
        for _ in range(settings.cutoff_doublings + 1):
            tail, mode = _tail(f, cutoff, upper, settings.tail_alpha, settings)
            if tail:
                break
            logger.info(f'Tail not certified beyond {cutoff:.4g} rad/s, doubling the cutoff')
            cutoff *= 2
        if not tail:
            cutoff = _cutoff(info, settings)
        plan = adaptive_sample(regularize(f, info.axis_poles, settings.beta), cutoff, settings)
    except SingularAt as error:
        raise DeclaredInfoInconsistent(f'A probe met an undeclared pole near s={error.s}') from error

    notes = []
    margin = float(np.min(np.abs(plan.values)))
    try:
        winding = winding_number(plan.polygon(), settings)
    except OriginOnPolygon as error:
        winding = None
        notes.append(str(error))
    if winding is None or not tail or margin <= 0:
        verdict = Verdict.INCONCLUSIVE
    elif winding == info.count:
        verdict = Verdict.STABLE
    else:
        verdict = Verdict.UNSTABLE
    if tail and mode == 'swept':
        notes.append(f'Tail assumed beyond {upper:.4g} rad/s')
    certificate = NyquistCertificate(plan, winding, info.count, margin, tail, mode, settings.tail_alpha, verdict, tuple(notes))
    logger.info(f'Nyquist test: {verdict.value}, winding {winding}, expected {info.count}, {len(plan.nodes)} nodes, cutoff {cutoff:.4g}')
    return certificate

def check_stability(G: TransferExpr, K: TransferExpr, info: RhpPoleInfo, settings: NyquistSettings | None = None, tail_max: float | None = None) -> NyquistCertificate:
    '''
    Decide the stability of the negative feedback loop of G and K.

    Parameters:
        G (TransferExpr): The plant.
        K (TransferExpr): The controller.
        info (RhpPoleInfo): Declared open right half plane and imaginary axis poles of G and K.
        tail_max (float): End of the band swept when no analytic tail bound exists.

    Raises:
        DeclaredInfoInconsistent: When a probe hits a pole not declared in info.
        RefinementBudgetExceeded: When the return difference has a zero near the axis.
    '''
    return certify(return_difference(G, K), info, settings, tail_max)

def check_stability_prestabilized(G0: TransferExpr, K: TransferExpr, K0: TransferExpr, info: RhpPoleInfo | None = None, settings: NyquistSettings | None = None, tail_max: float | None = None) -> NyquistCertificate:
    '''
    Decide the stability of the loop of G and K from the stable pre-stabilized plant
    G0 = G (I + K0 G)^{-1} and the increment K - K0.

    Parameters:
        G0 (TransferExpr): The plant closed by K0, stable.
        K (TransferExpr): The controller under test.
        K0 (TransferExpr): The pre-stabilizing controller.
        info (RhpPoleInfo): Declared unstable poles of K - K0, none by default.
    '''
    return check_stability(G0, K - K0, info or RhpPoleInfo(), settings, tail_max)
