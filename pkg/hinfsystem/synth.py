'''
Nonsmooth structured synthesis. A bundle trust-region method drives the certified H-infinity (or
H2) norm of a closed-loop channel down over the parameters of a controller structure, while a
Nyquist gate certifies every trial point and a sensitivity barrier keeps the iterates away from
the stability boundary.
'''
from abc import ABC, abstractmethod
from math import log
from typing import Callable, Literal, Sequence
from datetime import datetime, timezone
from dataclasses import dataclass, field, asdict
from logging import getLogger
import numpy as np
import torch
import control as ct
from scipy.optimize import linprog
from pybondi.callbacks import Callback
from hinfsystem import events
from hinfsystem.settings import Settings
from hinfsystem.aggregate import ControllerStructure
from hinfsystem.xfer import TransferExpr, Inverse, RhpPoleInfo, identity, realize, return_difference
from hinfsystem.nyquist import NyquistCertificate, Verdict, check_stability
from hinfsystem.normest import H2Estimate, hinf_norm, hinf_subgradient, h2_integral, h2_gradient
from hinfsystem.exceptions import (
    HinfSystemError,
    InitialPointUnstable,
    StalledAtStabilityBoundary,
    NotFiniteDimensional
)

logger = getLogger(__name__)

type ChannelBuilder = Callable[[TransferExpr], TransferExpr]

def input_sensitivity(G: TransferExpr, K: TransferExpr) -> TransferExpr:
    return Inverse(identity(K.shape[0]) + K @ G)

def barrier_value(G: TransferExpr, K: TransferExpr, theta: float | None = None, cutoff: float | None = None, settings: Settings | None = None) -> float:
    '''
    The stability barrier S = ||(I + K G)^{-1}||_inf of a loop certified stable. It equals one for
    K = 0 and grows without bound as the loop approaches instability.
    '''
    return hinf_norm(input_sensitivity(G, K), theta, cutoff, settings).gamma

class Gate(ABC):
    '''
    Certifies the stability of the loop closed by a controller structure at its current parameters.
    '''
    tail_max: float | None = None
    cutoff: float | None = None

    @abstractmethod
    def loop(self, K: TransferExpr) -> tuple[TransferExpr, TransferExpr]:
        '''
        The pair (plant, controller) whose negative feedback loop is certified.
        '''

    @abstractmethod
    def info(self, structure: ControllerStructure) -> RhpPoleInfo:...

    def certify(self, structure: ControllerStructure, settings: Settings | None = None) -> NyquistCertificate:
        settings = settings or Settings()
        G, K = self.loop(structure.expr())
        return check_stability(G, K, self.info(structure), settings.nyquist, self.tail_max)

    def sensitivity(self, K: TransferExpr) -> TransferExpr:
        G, K = self.loop(K)
        return input_sensitivity(G, K)

@dataclass
class Direct(Gate):
    '''
    Certifies the loop of the plant G and the structure, G having the declared unstable poles.
    '''
    G: TransferExpr
    declared: RhpPoleInfo = field(default_factory=RhpPoleInfo)
    tail_max: float | None = None
    cutoff: float | None = None

    def loop(self, K: TransferExpr) -> tuple[TransferExpr, TransferExpr]:
        return self.G, K

    def info(self, structure: ControllerStructure) -> RhpPoleInfo:
        return self.declared + structure.unstable_poles()

@dataclass
class Prestabilized(Gate):
    '''
    Certifies the loop through the stable plant G0 = G (I + K0 G)^{-1} and the increment K - K0.
    Without K0 the structure itself is the increment.
    '''
    G0: TransferExpr
    K0: TransferExpr | None = None
    tail_max: float | None = None
    cutoff: float | None = None

    def loop(self, K: TransferExpr) -> tuple[TransferExpr, TransferExpr]:
        return self.G0, (K if self.K0 is None else K - self.K0)

    def info(self, structure: ControllerStructure) -> RhpPoleInfo:
        return structure.unstable_poles()

@dataclass
class Surrogate(Direct):
    '''
    A direct gate on a finite-dimensional plant, which also exposes the closed-loop poles.
    '''

    def poles(self, structure: ControllerStructure) -> np.ndarray:
        return closed_loop_poles(self.G, structure.expr())

def closed_loop_poles(G: TransferExpr, K: TransferExpr) -> np.ndarray:
    '''
    Eigenvalues of the state matrix of the negative feedback loop of two finite-dimensional
    systems.

    Raises:
        NotFiniteDimensional: When G or K has no state space realization.
    '''
    plant, controller = realize(G), realize(K)
    system = ct.ss(plant.A, plant.B, plant.C, plant.D)
    if controller.states:
        loop = ct.feedback(system, ct.ss(controller.A, controller.B, controller.C, controller.D))
    else:
        loop = ct.feedback(system, controller.D)
    return np.asarray(loop.poles())

def pole_region_penalty(poles: Sequence[complex], decay: float, damping: float, maxfreq: float) -> float:
    '''
    The largest hinge distance of the poles to the region Re(p) <= -decay, damping ratio >= damping
    and |p| <= maxfreq. A pole at the origin counts as fully damped.
    '''
    poles = np.asarray(poles, dtype=complex)
    if not poles.size:
        return 0.0
    magnitude = np.abs(poles)
    ratio = np.where(magnitude > 0, -poles.real / np.where(magnitude > 0, magnitude, 1.0), 1.0)
    distances = np.stack([
        np.maximum(0.0, poles.real + decay),
        np.maximum(0.0, damping - ratio),
        np.maximum(0.0, magnitude - maxfreq)
    ])
    return float(np.max(distances))

def cone_constraint(f: TransferExpr, alpha: float, r: float, nodes: np.ndarray) -> np.ndarray:
    '''
    Per node residuals max(0, alpha (r - Re f) - (Im f)^2) of the requirement that the Nyquist
    curve stays out of the parabolic region Im(z)^2 < alpha (r - Re(z)) around the origin.
    '''
    values = f.eval(1j * np.asarray(nodes, dtype=float))[..., 0, 0]
    return np.maximum(0.0, alpha * (r - values.real) - values.imag**2)

def fit_cone(values: np.ndarray, alpha: float = 1.0, shrink: float = 0.5) -> tuple[float, float]:
    '''
    Choose the vertex r of a parabolic region with opening alpha that the sampled curve clears,
    a fraction of the largest admissible vertex.

    Raises:
        ValueError: When the curve reaches into the left of the origin's parabola for every r > 0.
    '''
    values = np.asarray(values, dtype=complex)
    largest = float(np.min(values.real + values.imag**2 / alpha))
    if largest <= 0:
        raise ValueError('The curve leaves no parabolic region around the origin')
    return alpha, shrink * largest

def small_gain_margin(G0: TransferExpr, K1: TransferExpr, theta: float | None = None, settings: Settings | None = None) -> dict:
    '''
    Certified check of ||K1||_inf ||G0||_inf < 1, which makes the loop of G0 and K1 stable.
    '''
    plant = hinf_norm(G0, theta, settings=settings)
    controller = hinf_norm(K1, theta, settings=settings)
    upper = (plant.gamma + plant.theta) * (controller.gamma + controller.theta)
    return {
        'plant': plant.gamma,
        'controller': controller.gamma,
        'product': upper,
        'margin': 1.0 - upper,
        'holds': upper < 1.0
    }

@dataclass
class Context:
    '''
    What a constraint needs at the current point.
    '''
    structure: ControllerStructure
    gate: Gate
    certificate: NyquistCertificate
    theta: float
    settings: Settings

class Constraint(ABC):
    name: str

    @abstractmethod
    def residual(self, context: Context) -> tuple[float, np.ndarray]:
        '''
        The residual, nonpositive when satisfied, and a subgradient of it.
        '''

@dataclass
class MaxNorm(Constraint):
    '''
    ||channel(K)||_inf <= bound.
    '''
    channel: ChannelBuilder
    bound: float
    name: str = 'max-norm'

    def residual(self, context: Context) -> tuple[float, np.ndarray]:
        T = self.channel(context.structure.parametric())
        estimate = hinf_norm(T, context.theta, context.gate.cutoff, context.settings)
        return estimate.gamma - self.bound, hinf_subgradient(T, estimate, [context.structure.x])

@dataclass
class DiskMargin(Constraint):
    '''
    ||(I + K G)^{-1}||_inf <= 1 / alpha on the gated loop.
    '''
    alpha: float
    name: str = 'disk-margin'

    def residual(self, context: Context) -> tuple[float, np.ndarray]:
        T = context.gate.sensitivity(context.structure.parametric())
        estimate = hinf_norm(T, context.theta, context.gate.cutoff, context.settings)
        return estimate.gamma - 1 / self.alpha, hinf_subgradient(T, estimate, [context.structure.x])

@dataclass
class ConeRegion(Constraint):
    '''
    Keeps the return difference of the gated loop out of the parabolic region of opening alpha
    and vertex r on the nodes of the current stability certificate.
    '''
    alpha: float
    r: float
    name: str = 'cone-region'

    def residual(self, context: Context) -> tuple[float, np.ndarray]:
        G, K = context.gate.loop(context.structure.parametric())
        f = return_difference(G, K)
        nodes = context.certificate.plan.nodes
        residuals = cone_constraint(f, self.alpha, self.r, nodes)
        worst = int(np.argmax(residuals))
        x = context.structure.x
        value = f.tensor(torch.tensor([1j * nodes[worst]], dtype=torch.complex128))[0, 0, 0]
        hinge = self.alpha * (self.r - value.real) - value.imag**2
        gradient = torch.autograd.grad(hinge, [x], allow_unused=True)[0]
        gradient = np.zeros(x.numel()) if gradient is None else gradient.detach().numpy()
        return float(residuals[worst]) if residuals[worst] > 0 else float(hinge.item()), gradient

@dataclass
class SoftPoleRegion(Constraint):
    '''
    Closed-loop poles with decay, damping ratio and frequency bounds, only on finite-dimensional
    loops. The subgradient is taken by central differences.
    '''
    decay: float
    damping: float
    maxfreq: float
    step: float = 1e-6
    name: str = 'pole-region'

    def penalty(self, gate: Surrogate, structure: ControllerStructure) -> float:
        return pole_region_penalty(gate.poles(structure), self.decay, self.damping, self.maxfreq)

    def residual(self, context: Context) -> tuple[float, np.ndarray]:
        if not isinstance(context.gate, Surrogate):
            raise NotFiniteDimensional('Pole regions need a finite-dimensional surrogate gate')
        structure = context.structure
        x = structure.vector()
        value = self.penalty(context.gate, structure)
        gradient = np.zeros_like(x)
        try:
            for index in range(len(x)):
                h = self.step * max(1.0, abs(x[index]))
                shifted = x.copy()
                shifted[index] += h
                structure.assign(shifted)
                upper = self.penalty(context.gate, structure)
                shifted[index] -= 2 * h
                structure.assign(shifted)
                lower = self.penalty(context.gate, structure)
                gradient[index] = (upper - lower) / (2 * h)
        finally:
            structure.assign(x)
        return value, gradient

@dataclass
class SynthesisProblem:
    '''
    Minimize the norm of a closed-loop channel over the parameters of a structure, subject to the
    stability gate and to penalized constraints.

    Parameters:
        objective (Callable): Builds the channel from the live controller expression.
        structure (ControllerStructure): The tuned controller.
        gate (Gate): The stability gate.
        constraints (Sequence[Constraint]): Hinge constraints added to the objective by exact penalty.
        norm (str): 'hinf' or 'h2'.
        theta (float): The tolerance of the certified values, the configured one by default.
        cutoff (float): Optional end of the certified band of the objective.
        tail (float): Optional tail bound of the H2 integral.
    '''
    objective: ChannelBuilder
    structure: ControllerStructure
    gate: Gate
    constraints: Sequence[Constraint] = ()
    norm: Literal['hinf', 'h2'] = 'hinf'
    theta: float | None = None
    cutoff: float | None = None
    tail: float | None = None

    def channel(self) -> TransferExpr:
        return self.objective(self.structure.parametric())

def h2_objective(problem: SynthesisProblem, settings: Settings | None = None) -> H2Estimate:
    '''
    The certified H2 integral of the problem's channel at the current parameters.
    '''
    return h2_integral(problem.channel(), problem.theta, problem.cutoff, problem.tail, settings)

@dataclass
class IterateRecord:
    iteration: int
    x: list[float]
    value: float
    objective: float
    step: float
    verdict: str
    winding: int | None
    backtracks: int
    barriers: int
    residuals: dict[str, float]
    radius: float
    certificate: str

    def to_dict(self) -> dict:
        return asdict(self)

@dataclass
class Evaluation:
    x: np.ndarray
    value: float
    objective: float
    gradient: np.ndarray
    residuals: dict[str, float]
    certificate: NyquistCertificate

@dataclass
class Plane:
    point: np.ndarray
    value: float
    gradient: np.ndarray
    repelling: bool = False

    def error(self, x: np.ndarray, value: float) -> float:
        return max(0.0, value - self.value - float(self.gradient @ (x - self.point)))

@dataclass
class Result:
    x: np.ndarray
    value: float
    history: list[IterateRecord]
    reason: str

class Optimizer:
    '''
    Bundle trust-region descent on the certified objective. Each iteration minimizes the
    downshifted cutting plane model within a box, gates the trial point by the Nyquist test and
    accepts it on a sufficient ratio of actual to predicted decrease. A trial point that fails
    the gate is pulled back along the step by halving until the gate passes, and a repelling
    plane built from the sensitivity barrier enters the bundle.
    '''

    def __init__(self, problem: SynthesisProblem, settings: Settings | None = None, callback: Callback | None = None):
        self.problem = problem
        self.settings = settings or Settings()
        self.callback = callback
        self.theta = self.settings.norms.theta if problem.theta is None else problem.theta
        self.planes: list[Plane] = []
        self.history: list[IterateRecord] = []

    @property
    def structure(self) -> ControllerStructure:
        return self.problem.structure

    def gate(self, x: np.ndarray) -> NyquistCertificate | None:
        self.structure.assign(x)
        try:
            certificate = self.problem.gate.certify(self.structure, self.settings)
        except HinfSystemError as error:
            logger.warning(f'Stability gate failed to decide: {error}')
            return None
        if certificate.verdict != Verdict.STABLE:
            logger.warning(f'Stability gate rejected the point: {certificate.verdict.value}, winding {certificate.winding}')
            return None
        return certificate

    def evaluate(self, x: np.ndarray, certificate: NyquistCertificate) -> Evaluation:
        self.structure.assign(x)
        channel = self.problem.channel()
        parameters = [self.structure.x]
        if self.problem.norm == 'h2':
            estimate = h2_integral(channel, self.theta, self.problem.cutoff, self.problem.tail, self.settings)
            value, gradient = estimate.norm, h2_gradient(channel, estimate, parameters, self.settings)
        else:
            estimate = hinf_norm(channel, self.theta, self.problem.cutoff, self.settings)
            value, gradient = estimate.gamma, hinf_subgradient(channel, estimate, parameters)
        context = Context(self.structure, self.problem.gate, certificate, self.theta, self.settings)
        residuals, worst, slope = {}, 0.0, np.zeros_like(gradient)
        for constraint in self.problem.constraints:
            residual, subgradient = constraint.residual(context)
            residuals[constraint.name] = residual
            if residual > worst:
                worst, slope = residual, subgradient
        objective = value + self.settings.synthesis.penalty * worst
        gradient = gradient + self.settings.synthesis.penalty * slope
        return Evaluation(x.copy(), value, objective, gradient, residuals, certificate)

    def repelling_plane(self, current: Evaluation) -> Plane:
        '''
        The linearization of log S at the current point, scaled to the objective.
        '''
        self.structure.assign(current.x)
        T = self.problem.gate.sensitivity(self.structure.parametric())
        estimate = hinf_norm(T, self.theta, self.problem.gate.cutoff, self.settings)
        gradient = hinf_subgradient(T, estimate, [self.structure.x]) / max(estimate.gamma, 1e-12)
        logger.info(f'Repelling plane from the sensitivity barrier {estimate.gamma:.6g} (log {log(max(estimate.gamma, 1e-300)):.4g})')
        return Plane(current.x.copy(), current.objective, max(abs(current.objective), 1.0) * gradient, True)

    def add(self, plane: Plane):
        self.planes.append(plane)
        while len(self.planes) > self.settings.synthesis.bundle_capacity:
            self.planes.pop(0)

    def model_step(self, current: Evaluation, radius: float, scale: np.ndarray) -> tuple[np.ndarray, float]:
        '''
        Solve min t subject to g_j d - e_j <= t and |d_i| <= radius scale_i. Returns the step and the
        predicted decrease -t.
        '''
        n = len(current.x)
        gradients = np.stack([plane.gradient for plane in self.planes])
        errors = np.array([plane.error(current.x, current.objective) for plane in self.planes])
        c = np.zeros(n + 1)
        c[-1] = 1.0
        A = np.hstack([gradients, -np.ones((len(self.planes), 1))])
        bounds = [(-radius * width, radius * width) for width in scale] + [(None, None)]
        result = linprog(c, A_ub=A, b_ub=errors, bounds=bounds, method='highs')
        if not result.success:
            logger.warning(f'Trust region subproblem failed: {result.message}')
            return np.zeros(n), 0.0
        return result.x[:n], -float(result.x[-1])

    def record(self, current: Evaluation, step: float, backtracks: int, barriers: int, radius: float) -> IterateRecord:
        record = IterateRecord(
            iteration=self.structure.iteration,
            x=[float(value) for value in current.x],
            value=current.value,
            objective=current.objective,
            step=step,
            verdict=current.certificate.verdict.value,
            winding=current.certificate.winding,
            backtracks=backtracks,
            barriers=barriers,
            residuals=dict(current.residuals),
            radius=radius,
            certificate=current.certificate.hash
        )
        self.history.append(record)
        if self.callback is not None:
            self.callback(self.structure.id, record)
        self.structure.root.publish(event=events.Stepped(id=self.structure.id, iteration=record.iteration, record=record))
        logger.info(f'Iterate {record.iteration}: value {record.value:.6g}, objective {record.objective:.6g}, step {step:.3g}, radius {radius:.3g}')
        return record

    def run(self, x0: Sequence[float] | None = None) -> Result:
        '''
        Raises:
            InitialPointUnstable: When the gate does not certify the initial point.
            StalledAtStabilityBoundary: When backtracking finds no stabilizing point and the trust
                region has collapsed.
        '''
        options = self.settings.synthesis
        start = datetime.now(timezone.utc)
        x = self.structure.vector() if x0 is None else np.asarray(x0, dtype=float)
        certificate = self.gate(x)
        if certificate is None:
            raise InitialPointUnstable('The stability gate does not certify the initial controller')
        winding = certificate.winding
        current = self.evaluate(x, certificate)
        self.planes = [Plane(current.x, current.objective, current.gradient)]
        scale = np.maximum(np.abs(x), 1.0)
        radius = options.radius
        self.record(current, 0.0, 0, 0, radius)
        reason = 'iterations'
        barriers = 0
        for _ in range(options.max_iterations):
            d, predicted = self.model_step(current, radius, scale)
            step = float(np.max(np.abs(d) / scale)) if d.size else 0.0
            if step < options.step_tolerance:
                reason = 'step'
                break
            if predicted < self.theta / 10:
                reason = 'model'
                break
            alpha, backtracks = 1.0, 0
            trial = self.gate(current.x + d)
            while trial is None or (winding is not None and trial.winding != winding):
                if backtracks == options.max_backtracks:
                    break
                backtracks += 1
                alpha /= 2
                trial = self.gate(current.x + alpha * d)
            if backtracks:
                barriers += 1
                self.add(self.repelling_plane(current))
            if trial is None or (winding is not None and trial.winding != winding):
                self.structure.assign(current.x)
                radius *= options.shrink
                if radius < options.step_tolerance:
                    raise StalledAtStabilityBoundary('Backtracking found no stabilizing point along the step')
                continue
            candidate = self.evaluate(current.x + alpha * d, trial)
            ratio = (current.objective - candidate.objective) / max(alpha * predicted, 1e-300)
            self.add(Plane(candidate.x, candidate.objective, candidate.gradient))
            if ratio < options.ratio_low:
                self.structure.assign(current.x)
                radius *= options.shrink
                logger.info(f'Null step: ratio {ratio:.3g}, radius {radius:.3g}')
                continue
            if ratio > options.ratio_high and alpha == 1.0 and step >= 0.99 * radius:
                radius *= options.expand
            current = candidate
            self.structure.iteration += 1
            self.record(current, alpha * step, backtracks, barriers, radius)
        self.structure.assign(current.x)
        end = datetime.now(timezone.utc)
        if self.callback is not None:
            self.callback.flush()
        self.structure.root.publish(event=events.Synthesized(
            id=self.structure.id,
            start=start,
            end=end,
            value=current.value,
            iterations=self.structure.iteration,
            reason=reason
        ))
        logger.info(f'Synthesis finished after {self.structure.iteration} iterates ({reason}): value {current.value:.6g}')
        return Result(current.x, current.value, self.history, reason)

def optimize(problem: SynthesisProblem, x0: Sequence[float] | None = None, settings: Settings | None = None, callback: Callback | None = None) -> Result:
    '''
    Run the bundle trust-region method on a synthesis problem from x0, the current parameters of
    the structure by default.

    Returns:
        Result: The final parameters, the certified value and the history of accepted iterates.

    Raises:
        InitialPointUnstable: When the gate does not certify the initial point.
        StalledAtStabilityBoundary: When no stabilizing descent can be found.
    '''
    return Optimizer(problem, settings, callback).run(x0)
