'''
Adaptive refinement of frequency grids driven by first-order bounds. The same engine certifies
Nyquist polygons, H-infinity peaks, H2 integrals, tail sweeps and contour integrals: only the
function sampled and the per-interval acceptance test change.
'''
from typing import Callable
from dataclasses import dataclass
from logging import getLogger
import numpy as np
from hinfsystem.settings import NyquistSettings
from hinfsystem.exceptions import RefinementBudgetExceeded

logger = getLogger(__name__)

type Magnitude = Callable[[np.ndarray], np.ndarray]
type Acceptance = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

def chebyshev_fractions(probes: int) -> np.ndarray:
    '''
    Chebyshev-Lobatto points mapped to [0, 1], endpoints included.
    '''
    return (1 - np.cos(np.pi * np.arange(probes) / (probes - 1))) / 2

def probe_bound(magnitude: Magnitude, lows: np.ndarray, highs: np.ndarray, settings: NyquistSettings, depth: int = 0) -> np.ndarray:
    '''
    First-order bounds on a batch of intervals: the safety factor times the largest probed
    magnitude of the derivative, with intervals whose probes vary by more than the allowed ratio
    split in halves and bounded again.

    Parameters:
        magnitude (Callable): Maps a flat array of abscissas to derivative magnitudes.
        lows (ndarray): Left ends of the intervals.
        highs (ndarray): Right ends of the intervals.
        settings (NyquistSettings): Probe count, safety factor, variation ratio and depth.
    '''
    lows, highs = np.asarray(lows, dtype=float), np.asarray(highs, dtype=float)
    if lows.size == 0:
        return np.zeros(0)
    fractions = chebyshev_fractions(settings.probes)
    points = lows[:, None] + (highs - lows)[:, None] * fractions[None, :]
    values = np.asarray(magnitude(points.ravel()), dtype=float).reshape(points.shape)
    top, bottom = values.max(axis=1), values.min(axis=1)
    bound = settings.safety_factor * top
    varying = (top > settings.variation * bottom) & (depth < settings.max_depth)
    if np.any(varying):
        middle = (lows[varying] + highs[varying]) / 2
        left = probe_bound(magnitude, lows[varying], middle, settings, depth + 1)
        right = probe_bound(magnitude, middle, highs[varying], settings, depth + 1)
        bound[varying] = np.maximum(left, right)
    return bound

def log_seed(low: float, high: float, count: int) -> np.ndarray:
    '''
    A log-uniform seed grid on [low, high]; a grid starting at zero gets the origin plus a
    log-uniform grid over four decades below high.
    '''
    if low == 0:
        return np.concatenate([[0.0], np.geomspace(high * 1e-4, high, count - 1)])
    return np.geomspace(low, high, count)

@dataclass(frozen=True)
class Refinement:
    '''
    An accepted grid: sorted nodes, the sampled values at the nodes and the first-order bound
    used on every interval.
    '''
    nodes: np.ndarray
    values: np.ndarray
    bounds: np.ndarray

def refine(
    evaluate: Callable[[np.ndarray], np.ndarray],
    bound: Callable[[np.ndarray, np.ndarray], np.ndarray],
    accept: Acceptance,
    seed: np.ndarray,
    settings: NyquistSettings,
    label: str = 'grid'
) -> Refinement:
    '''
    Bisect the intervals of a seed grid until every interval passes the acceptance test.

    Parameters:
        evaluate (Callable): Maps an array of nodes to sampled values.
        bound (Callable): Maps arrays of left and right ends to first-order bounds.
        accept (Callable): Receives (left values, right values, bounds, widths, all values so
            far) and returns a boolean mask of accepted intervals. Acceptance must be monotone
            under refinement: an interval once accepted stays accepted.
        seed (ndarray): The initial sorted grid.
        settings (NyquistSettings): Carries the node budget.
        label (str): Name used in log messages.

    Raises:
        RefinementBudgetExceeded: When more nodes than the budget are needed, or an interval
            shrinks to the resolution of floating point numbers.
    '''
    seed = np.unique(np.asarray(seed, dtype=float))
    values = np.asarray(evaluate(seed))
    seen = [values]
    lows, highs = seed[:-1], seed[1:]
    low_values, high_values = values[:-1], values[1:]
    accepted: list[tuple[np.ndarray, ...]] = []
    count = len(seed)
    while lows.size:
        widths = highs - lows
        bounds = bound(lows, highs)
        mask = np.asarray(accept(low_values, high_values, bounds, widths, np.concatenate(seen)), dtype=bool)
        accepted.append((lows[mask], highs[mask], low_values[mask], high_values[mask], bounds[mask]))
        failing = ~mask
        if not np.any(failing):
            break
        lows, highs = lows[failing], highs[failing]
        low_values, high_values = low_values[failing], high_values[failing]
        middle = (lows + highs) / 2
        if np.any((middle <= lows) | (middle >= highs)) or np.any(highs - lows < 1e-13 * np.maximum(1.0, np.abs(highs))):
            raise RefinementBudgetExceeded(f'Refinement of the {label} stalled near {lows[0]}')
        count += len(middle)
        if count > settings.budget:
            raise RefinementBudgetExceeded(f'Refinement of the {label} needs more than {settings.budget} nodes')
        middle_values = np.asarray(evaluate(middle))
        seen.append(middle_values)
        lows, highs = np.concatenate([lows, middle]), np.concatenate([middle, highs])
        low_values = np.concatenate([low_values, middle_values])
        high_values = np.concatenate([middle_values, high_values])

    lows = np.concatenate([part[0] for part in accepted])
    order = np.argsort(lows)
    lows = lows[order]
    highs = np.concatenate([part[1] for part in accepted])[order]
    low_values = np.concatenate([part[2] for part in accepted])[order]
    high_values = np.concatenate([part[3] for part in accepted])[order]
    bounds = np.concatenate([part[4] for part in accepted])[order]
    nodes = np.concatenate([lows, highs[-1:]])
    node_values = np.concatenate([low_values, high_values[-1:]])
    logger.info(f'Accepted {label} with {len(nodes)} nodes')
    return Refinement(nodes, node_values, bounds)
