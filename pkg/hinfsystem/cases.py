'''
Scripted end-to-end runs of the case studies, each checked against numeric criteria.
'''
from math import log, pi
from typing import Callable
from dataclasses import dataclass, asdict
from logging import getLogger
import numpy as np
from pybondi.callbacks import Callback
from hinfsystem.settings import Settings
from hinfsystem.normest import hinf_norm
from hinfsystem.nyquist import Verdict
from hinfsystem.quasipoly import (
    DelayMarginProblem, count_zeros, locate_zero, rhp_zero_count, delay_margin, h_sigma0, omega_sigma, check_ad_hoc_stabilizer
)
from hinfsystem.polynomials import QuasiPolynomial
from hinfsystem.xfer import TransferExpr, Constant, hstack, tf
from hinfsystem.plants import (
    ParabolicPlant,
    WavePlant,
    reduced_parabolic,
    parabolic_structure,
    small_gain_initializer,
    finite_dimensional_controller,
    quasi_polynomial_controller,
    scheduled_controller,
    wave_objective_plant,
    quasi_polynomial_row,
    model_matching_channel,
    mixed_sensitivity_channel,
    wave_objective_channel,
    weight_filters
)
from hinfsystem.synth import ChannelBuilder, SynthesisProblem, Direct, Prestabilized, DiskMargin, Result, optimize, small_gain_margin
from hinfsystem.sim import SimConfig, Trajectory, simulate_parabolic, simulate_wave

logger = getLogger(__name__)

WAVE_CUTOFF = 1e3

@dataclass
class Criterion:
    '''
    A checked quantity with its admissible interval.
    '''
    name: str
    value: float
    low: float | None = None
    high: float | None = None

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        return (self.low is None or self.value >= self.low) and (self.high is None or self.value <= self.high)

    def to_dict(self) -> dict:
        return asdict(self) | {'passed': self.passed}

def _flag(name: str, condition: bool) -> Criterion:
    return Criterion(name, 1.0 if condition else 0.0, 1.0, 1.0)

def refined(config: SimConfig) -> SimConfig:
    '''
    The configuration with halved spatial and time steps.
    '''
    return config.model_copy(update={'nodes': 2 * config.nodes, 'step': None if config.step is None else config.step / 2})

def grid_change(coarse: Trajectory, fine: Trajectory) -> float:
    '''
    Relative change of the terminal energy between a run and its refined counterpart.
    '''
    return float(abs(fine.energy[-1] - coarse.energy[-1]) / abs(coarse.energy[-1]))

def _history_checks(result: Result, theta: float) -> list[Criterion]:
    values = [record.value for record in result.history]
    windings = {record.winding for record in result.history}
    return [
        _flag('every accepted iterate stable', all(record.verdict == Verdict.STABLE.value for record in result.history)),
        _flag('winding number constant', len(windings) == 1),
        _flag('certified value non increasing', all(b <= a + theta for a, b in zip(values, values[1:])))
    ]

@dataclass
class CaseReport:
    case: str
    criteria: list[Criterion]
    result: Result | None = None
    artifacts: dict | None = None

    @property
    def passed(self) -> bool:
        return all(criterion.passed for criterion in self.criteria)

    def to_dict(self) -> dict:
        return {
            'case': self.case,
            'passed': self.passed,
            'criteria': [criterion.to_dict() for criterion in self.criteria],
            'final': None if self.result is None else {'x': [float(value) for value in self.result.x], 'value': self.result.value, 'reason': self.result.reason},
            'artifacts': self.artifacts or {}
        }

def parabolic_problem(objective: str = 'model-matching', structure: str = 'initial', plant: ParabolicPlant | None = None) -> SynthesisProblem:
    '''
    A synthesis problem on the parabolic plant, tuning a published controller in its shared
    denominator structure.

    Parameters:
        objective (str): 'model-matching' against the reduced model closed by the initial
            controller, or 'mixed-sensitivity' with the parabolic weights.
        structure (str): The published controller to start from.
        plant (ParabolicPlant): The plant, the default one when omitted.
    '''
    plant = plant or ParabolicPlant()
    G = plant.tf()
    match objective:
        case 'model-matching':
            reduced = reduced_parabolic(plant)
            K0 = parabolic_structure('initial').expr()
            channel: ChannelBuilder = lambda K: model_matching_channel(G, reduced.G, K0, K)
        case 'mixed-sensitivity':
            weights = weight_filters()
            channel = lambda K: mixed_sensitivity_channel(G, K, weights['parabolic-error'], weights['parabolic-control'])
        case _:
            raise ValueError(f'Unknown parabolic objective {objective}')
    return SynthesisProblem(channel, parabolic_structure(structure), Direct(G, plant.unstable_poles()))

def wave_problem(q: float = 3.0, alpha: float = 0.5) -> SynthesisProblem:
    '''
    The finite-dimensional increment design on the wave plant closed by the delay margin
    controller, started from the small gain initializer and kept inside the disk margin alpha.
    '''
    G0 = wave_objective_plant(q)
    gate = Prestabilized(G0, tail_max=WAVE_CUTOFF, cutoff=WAVE_CUTOFF)
    return SynthesisProblem(lambda K: wave_objective_channel(G0, K), small_gain_initializer(), gate, [DiskMargin(alpha)], cutoff=WAVE_CUTOFF)

def parabolic_model_matching(settings: Settings, callback: Callback | None = None) -> CaseReport:
    problem = parabolic_problem('model-matching')
    theta = settings.norms.theta
    K0 = problem.structure.expr()
    published = parabolic_structure('model-matching')
    criteria = [
        Criterion('winding at the initial controller', problem.gate.certify(problem.structure, settings).winding or 0, 1, 1),
        Criterion('winding at the published controller', problem.gate.certify(published, settings).winding or 0, 1, 1),
        Criterion('objective at the initial controller', hinf_norm(problem.objective(K0), theta, settings=settings).gamma, 1.63, 1.99),
        Criterion('objective at the published controller', hinf_norm(problem.objective(published.expr()), theta, settings=settings).gamma, 0.76, 0.92)
    ]
    result = optimize(problem, settings=settings, callback=callback)
    criteria += _history_checks(result, theta)
    criteria.append(Criterion('final objective', result.value, None, 1.0))
    return CaseReport('parabolic-mm', criteria, result)

def parabolic_mixed_sensitivity(settings: Settings, callback: Callback | None = None) -> CaseReport:
    plant = ParabolicPlant()
    problem = parabolic_problem('mixed-sensitivity', plant=plant)
    theta = settings.norms.theta
    published = parabolic_structure('mixed-sensitivity')
    initial = hinf_norm(problem.objective(problem.structure.expr()), theta, settings=settings).gamma
    criteria = [
        _flag('published controller stable', problem.gate.certify(published, settings).stable),
        Criterion('objective at the published controller', hinf_norm(problem.objective(published.expr()), theta, settings=settings).gamma)
    ]
    result = optimize(problem, settings=settings, callback=callback)
    criteria += _history_checks(result, theta)
    criteria.append(Criterion('final objective', result.value, None, initial + theta))
    sensor = parabolic_structure('mixed-sensitivity-sensor').expr()
    config = SimConfig.parabolic(settings.simulation)
    trajectory = simulate_parabolic(plant, sensor, config)
    change = grid_change(trajectory, simulate_parabolic(plant, sensor, refined(config)))
    ratio = float(trajectory.energy[-1] / trajectory.energy[0])
    wobble = float(np.max(np.abs(trajectory.controls)) / np.max(np.abs(trajectory.surface[0])))
    criteria += [
        Criterion('closed loop energy ratio of the sensor design', ratio, None, 1e-2),
        Criterion('actuated boundary peak over the initial surface peak', wobble, None, 1.5),
        Criterion('terminal energy change under grid refinement', change, None, 0.05)
    ]
    artifacts = {'energy_ratio': ratio, 'settle_time': trajectory.settle_time(), 'boundary_peak': wobble, 'grid_change': change}
    return CaseReport('parabolic-ms', criteria, result, artifacts)

def wave_finite_dimensional(settings: Settings, callback: Callback | None = None, q: float = 3.0) -> CaseReport:
    problem = wave_problem(q)
    G0 = problem.gate.G0
    theta = settings.norms.theta
    margin = small_gain_margin(G0, problem.structure.expr(), theta, settings)
    published = hinf_norm(problem.objective(finite_dimensional_controller() - quasi_polynomial_controller(q)), theta, WAVE_CUTOFF, settings)
    criteria = [
        _flag('small gain at the initial increment', bool(margin['holds'])),
        Criterion('objective at the published controller', published.gamma, 1.79, 2.19),
        Criterion('nodes at the published controller', float(len(published.nodes)))
    ]
    result = optimize(problem, settings=settings, callback=callback)
    criteria += _history_checks(result, theta)
    criteria.append(Criterion('winding number', float(result.history[-1].winding or 0), 0, 0))
    criteria.append(Criterion('disk margin residual', max(record.residuals['disk-margin'] for record in result.history), None, theta))
    criteria.append(Criterion('final objective', result.value, None, 2.2))
    return CaseReport('wave-fd', criteria, result, {'small_gain': {key: float(value) for key, value in margin.items()}})

def wave_scheduled(settings: Settings, callback: Callback | None = None, operating: tuple[float, ...] = (2.0, 3.0, 4.0)) -> CaseReport:
    criteria, artifacts = [], {}
    for q in operating:
        config = SimConfig.wave(settings.simulation)
        K = scheduled_controller(q)
        trajectory = simulate_wave(WavePlant(q), K, config)
        change = grid_change(trajectory, simulate_wave(WavePlant(q), K, refined(config)))
        ratio = float(trajectory.energy[-1] / trajectory.energy[0])
        artifacts[f'q={q:g}'] = {'energy_ratio': ratio, 'settle_time': trajectory.settle_time(), 'grid_change': change}
        criteria.append(Criterion(f'energy ratio at q={q:g}', ratio, None, 1.0))
        criteria.append(Criterion(f'terminal energy change under grid refinement at q={q:g}', change, None, 0.05))
    return CaseReport('wave-sched', criteria, None, artifacts)

def destabilized_controller(q: float = 3.0, gain: float = 10.0) -> TransferExpr:
    '''
    The delay margin controller with its first channel amplified by the gain.
    '''
    (n1, _, _), d = quasi_polynomial_row(q)
    return hstack(tf((n1 * gain).to_descending(), d.to_descending()), Constant([[0.0]]), Constant([[1.0]]))

def wave_quasi_polynomial(settings: Settings, callback: Callback | None = None, q: float = 3.0) -> CaseReport:
    plant = WavePlant(q)
    zeros = QuasiPolynomial([(1.0, 0.0), (plant.Q, 2.0)])
    criteria = []
    for k in range(3):
        rectangle = ((0.0, 1.0), (-0.5 + k * pi, 0.5 + k * pi))
        count = count_zeros(zeros, rectangle, settings.nyquist)
        criteria.append(Criterion(f'output zeros in strip {k}', count.count, 1, 1))
        zero = locate_zero(zeros, rectangle)
        criteria.append(Criterion(f'output zero real part in strip {k}', zero.real, log(2) / 2 - 1e-6, log(2) / 2 + 1e-6))
    problem = DelayMarginProblem(1.0, 1.0, 4.0**-3)
    margin = delay_margin(problem.A, problem.B)
    recipe = h_sigma0(problem.x1, problem.x2, problem.x3)
    criteria += [
        Criterion('exact delay margin', margin, 1.0),
        Criterion('recipe delay margin', recipe, 1.0),
        Criterion('right half plane zeros at delay one', rhp_zero_count(problem.quasipolynomial(1.0), settings.nyquist), 0, 0)
    ]
    (n1, _, n3), d = quasi_polynomial_row(q)
    criteria.append(_flag('delay margin controller stabilizes', check_ad_hoc_stabilizer(d, n3, n1, q, settings.nyquist)))
    criteria.append(_flag('tenfold gain destabilizes', not check_ad_hoc_stabilizer(d, n3, n1 * 10.0, q, settings.nyquist)))
    config = SimConfig.wave(settings.simulation)
    stable = simulate_wave(plant, quasi_polynomial_controller(q), config)
    unstable = simulate_wave(plant, destabilized_controller(q), config)
    change = grid_change(stable, simulate_wave(plant, quasi_polynomial_controller(q), refined(config)))
    growth = float(unstable.energy[-1] / unstable.energy[0])
    criteria += [
        _flag('closed loop with the delay margin controller bounded', stable.finite),
        Criterion('energy ratio under the tenfold gain', growth, 1.0),
        Criterion('terminal energy of the tenfold gain over the delay margin controller', float(unstable.energy[-1] / stable.energy[-1]), 1.0),
        Criterion('terminal energy change under grid refinement', change, None, 0.05)
    ]
    artifacts = {
        'omega_sigma': omega_sigma(problem.x1),
        'h_sigma0': recipe,
        'delay_margin': margin,
        'printed_delay': 16 * pi,
        'destabilized_energy_ratio': growth,
        'grid_change': change
    }
    return CaseReport('wave-quasi', criteria, None, artifacts)

CASES: dict[str, Callable[..., CaseReport]] = {
    'parabolic-mm': parabolic_model_matching,
    'parabolic-ms': parabolic_mixed_sensitivity,
    'wave-fd': wave_finite_dimensional,
    'wave-sched': wave_scheduled,
    'wave-quasi': wave_quasi_polynomial
}
