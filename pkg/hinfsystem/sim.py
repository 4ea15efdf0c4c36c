'''
Time-domain simulation of the delayed reaction-diffusion loop and of the anti-damped wave loop.
Controllers are compiled from transfer expressions into discrete blocks: finite-dimensional parts
by the bilinear transform, delays by interpolating ring buffers and algebraic loops solved exactly
at every step.
'''
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field, replace
from logging import getLogger
from pathlib import Path
from typing import Callable, Self
import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, Field
from scipy import sparse
from scipy.sparse.linalg import splu
from scipy.signal import cont2discrete
from scipy.integrate import cumulative_trapezoid
from hinfsystem.settings import Settings, SimulationSettings
from hinfsystem.plants import ParabolicPlant, WavePlant
from hinfsystem.xfer import (
    TransferExpr,
    StateSpace,
    Rational,
    Constant,
    Delay,
    QuasiRational,
    Closure,
    Sum,
    Product,
    Scale,
    Inverse,
    Feedback,
    Block,
    Select,
    Parametric,
    identity,
    realize
)
from hinfsystem.exceptions import NotFiniteDimensional, NonRealizableController, CflViolation

logger = getLogger(__name__)

type Signal = Callable[[float], float]
type Profile = Callable[[np.ndarray], np.ndarray]

class Discrete(ABC):
    '''
    A linear discrete-time block whose output at the current step splits into a part fixed by
    the past and a direct feedthrough: y = free() + gain u. Composite blocks solve their algebraic
    loops from these two parts.
    '''
    gain: np.ndarray

    @abstractmethod
    def free(self) -> np.ndarray:...

    @abstractmethod
    def commit(self, u: np.ndarray):
        '''
        Advance the block one step with the input u of the current step.
        '''

    def step(self, u: ArrayLike) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        y = self.free() + self.gain @ u
        self.commit(u)
        return y

class Recursion(Discrete):
    '''
    x[k+1] = A x[k] + B u[k], y[k] = C x[k] + D u[k], from the bilinear transform of a
    continuous state space block.
    '''

    def __init__(self, system: StateSpace, dt: float):
        if system.states:
            A, B, C, D, _ = cont2discrete((system.A, system.B, system.C, system.D), dt, method='bilinear')
        else:
            A, B, C, D = system.A, system.B, system.C, system.D
        self.A, self.B, self.C = np.asarray(A), np.asarray(B), np.asarray(C)
        self.gain = np.asarray(D, dtype=float)
        self.x = np.zeros(self.A.shape[0])

    def free(self) -> np.ndarray:
        return self.C @ self.x

    def commit(self, u: np.ndarray):
        if self.x.size:
            self.x = self.A @ self.x + self.B @ u

class Buffer(Discrete):
    '''
    A scalar delay by theta, linearly interpolated between stored samples.
    '''

    def __init__(self, theta: float, dt: float):
        ratio = theta / dt
        if abs(ratio - round(ratio)) < 1e-9:
            ratio = float(round(ratio))
        self.whole = int(np.floor(ratio))
        self.fraction = ratio - self.whole
        self.past: deque[float] = deque([0.0] * (self.whole + 1), maxlen=self.whole + 1)
        self.gain = np.array([[1.0 - self.fraction if self.whole == 0 else 0.0]])

    def free(self) -> np.ndarray:
        if self.whole == 0:
            return np.array([self.fraction * self.past[0]])
        return np.array([(1 - self.fraction) * self.past[self.whole - 1] + self.fraction * self.past[self.whole]])

    def commit(self, u: np.ndarray):
        self.past.appendleft(float(u[0]))

class Parallel(Discrete):
    def __init__(self, left: Discrete, right: Discrete):
        self.left, self.right = left, right
        self.gain = left.gain + right.gain

    def free(self) -> np.ndarray:
        return self.left.free() + self.right.free()

    def commit(self, u: np.ndarray):
        self.left.commit(u)
        self.right.commit(u)

class Series(Discrete):
    '''
    The product left @ right: the input enters right, whose output enters left.
    '''

    def __init__(self, left: Discrete, right: Discrete):
        self.left, self.right = left, right
        self.gain = left.gain @ right.gain

    def free(self) -> np.ndarray:
        return self.left.free() + self.left.gain @ self.right.free()

    def commit(self, u: np.ndarray):
        v = self.right.free() + self.right.gain @ u
        self.right.commit(u)
        self.left.commit(v)

class Scaled(Discrete):
    def __init__(self, inner: Discrete, factor: float):
        self.inner, self.factor = inner, factor
        self.gain = factor * inner.gain

    def free(self) -> np.ndarray:
        return self.factor * self.inner.free()

    def commit(self, u: np.ndarray):
        self.inner.commit(u)

class Inverted(Discrete):
    '''
    y = M^{-1} u for a square block M, so that M y = u.
    '''

    def __init__(self, inner: Discrete):
        try:
            self.inverse = np.linalg.inv(inner.gain)
        except np.linalg.LinAlgError:
            raise NonRealizableController('The inverted block has a singular feedthrough') from None
        self.inner = inner
        self.gain = self.inverse

    def free(self) -> np.ndarray:
        return -self.inverse @ self.inner.free()

    def commit(self, u: np.ndarray):
        self.inner.commit(self.free() + self.gain @ u)

class Loop(Discrete):
    '''
    y = plant e with e = r + sign controller y.
    '''

    def __init__(self, plant: Discrete, controller: Discrete, sign: int):
        try:
            self.N = np.linalg.inv(np.eye(plant.gain.shape[0]) - sign * plant.gain @ controller.gain)
        except np.linalg.LinAlgError:
            raise NonRealizableController('The feedback loop has no unique solution') from None
        self.plant, self.controller, self.sign = plant, controller, sign
        self.gain = self.N @ plant.gain

    def free(self) -> np.ndarray:
        return self.N @ (self.plant.free() + self.sign * self.plant.gain @ self.controller.free())

    def commit(self, u: np.ndarray):
        y = self.free() + self.gain @ u
        e = u + self.sign * (self.controller.free() + self.controller.gain @ y)
        self.plant.commit(e)
        self.controller.commit(y)

class Grid(Discrete):
    '''
    A block matrix of discrete blocks.
    '''

    def __init__(self, rows: list[list[Discrete]], heights: list[int], widths: list[int]):
        self.rows, self.heights, self.widths = rows, heights, widths
        self.offsets = np.concatenate([[0], np.cumsum(widths)]).astype(int)
        self.gain = np.block([[entry.gain for entry in row] for row in rows])

    def free(self) -> np.ndarray:
        return np.concatenate([sum(entry.free() for entry in row) for row in self.rows])

    def commit(self, u: np.ndarray):
        for row in self.rows:
            for index, entry in enumerate(row):
                entry.commit(u[self.offsets[index]:self.offsets[index + 1]])

class Selection(Discrete):
    def __init__(self, inner: Discrete, rows: tuple[int, ...], cols: tuple[int, ...], inputs: int):
        self.inner, self.rows, self.cols, self.inputs = inner, list(rows), list(cols), inputs
        self.gain = inner.gain[np.ix_(self.rows, self.cols)]

    def free(self) -> np.ndarray:
        return self.inner.free()[self.rows]

    def commit(self, u: np.ndarray):
        full = np.zeros(self.inputs)
        full[self.cols] = u
        self.inner.commit(full)

def _real(value: complex) -> float:
    value = complex(value)
    if value.imag != 0:
        raise NonRealizableController('Complex gains have no time-domain realization')
    return value.real

def _quasi_rational(expr: QuasiRational) -> TransferExpr:
    '''
    num/den as (1 + R)^{-1} W, with W and R the delayed terms of num and den divided by the
    delay-free part of den.
    '''
    principal = expr.den.principal
    if principal.is_zero:
        raise NonRealizableController('A quasi-rational block needs a delay-free denominator term')

    def delayed(polynomial, theta: float) -> TransferExpr:
        return Rational(polynomial, principal) @ Delay(theta)

    W = sum((delayed(p, theta) for p, theta in expr.num.terms), start=Constant(np.zeros((1, 1))))
    R = sum((delayed(p, theta) for p, theta in expr.den.terms if theta > 0), start=Constant(np.zeros((1, 1))))
    return Inverse(identity(1) + R) @ W

def discretize(expr: TransferExpr, dt: float) -> Discrete:
    '''
    Compile a transfer expression into a discrete block with time step dt.

    Raises:
        NonRealizableController: When the expression holds an irrational closure without a causal
            realization, an improper block or an ill-posed loop.
    '''
    try:
        return Recursion(realize(expr), dt)
    except NotFiniteDimensional:
        pass
    match expr:
        case Delay():
            return Buffer(expr.theta, dt)
        case QuasiRational():
            return discretize(_quasi_rational(expr), dt)
        case Closure():
            if expr.realization is None:
                raise NonRealizableController(f'The {expr.tag} closure has no time-domain realization')
            return discretize(expr.realization, dt)
        case Sum():
            return Parallel(discretize(expr.left, dt), discretize(expr.right, dt))
        case Product():
            return Series(discretize(expr.left, dt), discretize(expr.right, dt))
        case Scale():
            return Scaled(discretize(expr.expr, dt), _real(expr.factor))
        case Inverse():
            return Inverted(discretize(expr.expr, dt))
        case Feedback():
            return Loop(discretize(expr.plant, dt), discretize(expr.controller, dt), expr.sign)
        case Block():
            rows = [[discretize(entry, dt) for entry in row] for row in expr.rows]
            return Grid(rows, [row[0].shape[0] for row in expr.rows], [entry.shape[1] for entry in expr.rows[0]])
        case Select():
            return Selection(discretize(expr.expr, dt), expr.rows, expr.cols, expr.expr.shape[1])
        case Parametric():
            return discretize(expr.structure.expr(), dt)
        case Rational() | StateSpace() | Constant():
            raise NonRealizableController(f'{type(expr).__name__} block is improper or complex')
        case _:
            raise NonRealizableController(f'{type(expr).__name__} blocks cannot be simulated')

class SimConfig(BaseModel):
    '''
    Grid and horizon of a simulation run.

    Parameters:
        nodes (int): Number of spatial intervals.
        step (float | None): Time step; the wave scheme defaults to the CFL limit.
        horizon (float): Final time.
        record_every (int): Stride of the recorded state surface.
    '''
    nodes: int = Field(default=200, gt=1)
    step: float | None = Field(default=None, gt=0)
    horizon: float = Field(default=10.0, gt=0)
    record_every: int = Field(default=10, ge=1)

    @classmethod
    def parabolic(cls, settings: SimulationSettings | None = None, **overrides) -> Self:
        settings = settings or Settings().simulation
        values = {'nodes': settings.parabolic_nodes, 'step': settings.parabolic_step, 'horizon': settings.horizon}
        return cls(**(values | overrides))

    @classmethod
    def wave(cls, settings: SimulationSettings | None = None, **overrides) -> Self:
        settings = settings or Settings().simulation
        values = {'nodes': settings.wave_nodes, 'horizon': settings.horizon}
        return cls(**(values | overrides))

@dataclass
class Trajectory:
    '''
    A simulated run: the state surface on the recorded times, and the outputs, control and
    energy at every step.
    '''
    times: np.ndarray
    space: np.ndarray
    outputs: np.ndarray
    controls: np.ndarray
    energy: np.ndarray
    surface_times: np.ndarray = field(repr=False)
    surface: np.ndarray = field(repr=False)

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.energy)) and np.all(np.isfinite(self.outputs)))

    def at(self, t: float) -> float:
        '''
        The energy at the step closest to t.
        '''
        return float(self.energy[int(np.argmin(np.abs(self.times - t)))])

    def settle_time(self, fraction: float = 1e-2) -> float:
        '''
        The first time after which the energy stays below the fraction of its initial value.
        '''
        above = np.flatnonzero(self.energy >= fraction * self.energy[0])
        if not above.size:
            return float(self.times[0])
        if above[-1] == len(self.times) - 1:
            return float('inf')
        return float(self.times[above[-1] + 1])

    def to_csv(self, path: str | Path):
        columns = [self.times, self.controls] + [self.outputs[:, index] for index in range(self.outputs.shape[1])] + [self.energy]
        header = ','.join(['t', 'u'] + [f'y{index + 1}' for index in range(self.outputs.shape[1])] + ['E'])
        np.savetxt(path, np.column_stack(columns), delimiter=',', header=header, comments='', encoding='utf-8')

    def surface_csv(self, path: str | Path):
        header = ','.join(['t'] + [f'{xi:.6g}' for xi in self.space])
        np.savetxt(path, np.column_stack([self.surface_times, self.surface]), delimiter=',', header=header, comments='', encoding='utf-8')

def _controller(K: TransferExpr | None, measurements: int, dt: float) -> Discrete | None:
    if K is None:
        return None
    if K.shape != (1, measurements):
        raise ValueError(f'The controller must map {measurements} measurements to one input, got {K.shape}')
    return discretize(K, dt)

def simulate_parabolic(
    plant: ParabolicPlant,
    K: TransferExpr | None,
    config: SimConfig | None = None,
    initial: Profile | None = None,
    reference: Signal | None = None
) -> Trajectory:
    '''
    Simulate x_t = x_xixi + c x on (0, L) with x(0, t) = 0 and x(L, t) = u(t - D), measured at the
    sensors, under u = -K y + r. Crank-Nicolson in time, central differences in space.

    Parameters:
        plant (ParabolicPlant): The plant.
        K (TransferExpr | None): The controller, open loop when None.
        config (SimConfig): Grid, step and horizon.
        initial (Callable): Initial profile, xi (L - xi) by default.
        reference (Callable): Signal added to the control input.

    Raises:
        NonRealizableController: When the input delay is shorter than one time step.
    '''
    config = config or SimConfig.parabolic()
    dt = config.step or Settings().simulation.parabolic_step
    if plant.D < dt:
        raise NonRealizableController(f'The input delay {plant.D} is shorter than the time step {dt}')
    space = np.linspace(0.0, plant.L, config.nodes + 1)
    h = plant.L / config.nodes
    interior = config.nodes - 1
    A = sparse.diags([np.ones(interior - 1), -2 * np.ones(interior), np.ones(interior - 1)], [-1, 0, 1]) / h**2
    A = (A + plant.c * sparse.identity(interior)).tocsc()
    implicit = splu((sparse.identity(interior, format='csc') - dt / 2 * A).tocsc())
    explicit = (sparse.identity(interior) + dt / 2 * A).tocsr()
    boundary = np.zeros(interior)
    boundary[-1] = 1 / h**2

    profile = initial or (lambda xi: xi * (plant.L - xi))
    x = np.asarray(profile(space), dtype=float)[1:-1].copy()
    controller = _controller(K, len(plant.sensors), dt)
    actuator = Buffer(plant.D, dt)
    edge = 0.0
    steps = int(round(config.horizon / dt))
    times, outputs, controls, energy, surface_times, surface = [], [], [], [], [], []
    for k in range(steps + 1):
        t = k * dt
        state = np.concatenate([[0.0], x, [edge]])
        y = np.interp(plant.sensors, space, state)
        u = (-controller.step(y)[0] if controller is not None else 0.0) + (reference(t) if reference else 0.0)
        times.append(t)
        outputs.append(y)
        controls.append(u)
        energy.append(float(np.trapezoid(state**2, space)))
        if k % config.record_every == 0:
            surface_times.append(t)
            surface.append(state)
        actuator.commit(np.array([u]))
        following = float(actuator.free()[0])
        x = implicit.solve(explicit @ x + dt / 2 * boundary * (edge + following))
        edge = following
    logger.info(f'Parabolic run over {config.horizon:g} s on {config.nodes} intervals: energy {energy[0]:.4g} -> {energy[-1]:.4g}')
    return Trajectory(
        np.asarray(times), space, np.asarray(outputs), np.asarray(controls), np.asarray(energy),
        np.asarray(surface_times), np.asarray(surface)
    )

def _cosine(xi: np.ndarray) -> np.ndarray:
    return np.cos(np.pi * xi)

def simulate_wave(
    plant: WavePlant,
    K: TransferExpr | None,
    config: SimConfig | None = None,
    initial: Profile | None = None,
    velocity: Profile | None = None,
    reference: Signal | None = None
) -> Trajectory:
    '''
    Simulate x_tt = x_xixi on (0, 1) with x_xi(0, t) = -q x_t(0, t) and x_xi(1, t) = u(t), measuring
    y = (x(0, t), x(1, t), x_t(1, t)) under u = -K y + r.

    The Riemann invariants a = x_t + x_xi and b = x_t - x_xi are transported by upwinding, exactly
    at the CFL limit. The boundary at 0 reflects b = Q a with Q = (1 + q)/(1 - q); the boundary at 1
    injects a = b + 2u, with u solved together with the controller's feedthrough.

    Raises:
        CflViolation: When the time step exceeds the spatial step.
    '''
    config = config or SimConfig.wave()
    dxi = 1.0 / config.nodes
    dt = config.step or dxi
    courant = dt / dxi
    if courant > 1 + 1e-12:
        raise CflViolation(f'Courant number {courant:.4g} exceeds one')
    courant = min(courant, 1.0)
    space = np.linspace(0.0, 1.0, config.nodes + 1)
    x = np.asarray((initial or _cosine)(space), dtype=float)
    v = np.asarray(velocity(space), dtype=float) if velocity else np.zeros_like(space)
    w = np.gradient(x, dxi, edge_order=2)
    a, b = v + w, v - w
    position = float(x[0])
    Q = plant.Q
    b[0] = Q * a[0]
    controller = _controller(K, 3, dt)
    feedthrough = np.array([0.0, dxi / 2, 1.0])
    steps = int(round(config.horizon / dt))
    times, outputs, controls, energy, surface_times, surface = [], [], [], [], [], []
    for k in range(steps + 1):
        t = k * dt
        w = (a - b) / 2
        free = np.array([position, position + dxi * (w[0] / 2 + np.sum(w[1:-1])), b[-1]])
        r = reference(t) if reference else 0.0
        if controller is None:
            u = r
        else:
            coupling = 1.0 + float(controller.gain[0] @ feedthrough)
            u = (r - float(controller.free()[0]) - float(controller.gain[0] @ free)) / coupling
        y = free + feedthrough * u
        if controller is not None:
            controller.commit(y)
        a[-1] = b[-1] + 2 * u
        times.append(t)
        outputs.append(y)
        controls.append(u)
        energy.append(float(np.trapezoid(a**2 + b**2, space)) / 4)
        if k % config.record_every == 0:
            w = (a - b) / 2
            surface_times.append(t)
            surface.append(position + cumulative_trapezoid(w, space, initial=0.0))
        edge_velocity = (a[0] + b[0]) / 2
        a[:-1] = (1 - courant) * a[:-1] + courant * a[1:]
        b[1:] = (1 - courant) * b[1:] + courant * b[:-1]
        b[0] = Q * a[0]
        a[-1] = b[-1]
        position += dt / 2 * (edge_velocity + (a[0] + b[0]) / 2)
    logger.info(f'Wave run with q={plant.q:g} over {config.horizon:g} s: energy {energy[0]:.4g} -> {energy[-1]:.4g}')
    return Trajectory(
        np.asarray(times), space, np.asarray(outputs), np.asarray(controls), np.asarray(energy),
        np.asarray(surface_times), np.asarray(surface)
    )

def sine_dwell(plant: ParabolicPlant, omega: float, xi: float, config: SimConfig | None = None, periods: int = 3) -> complex:
    '''
    Estimate the frequency response G(j omega, xi) of a stable parabolic plant from the steady
    state of the open loop driven by sin(omega t), fitted over the last periods of the run.
    '''
    config = config or SimConfig.parabolic()
    trajectory = simulate_parabolic(replace(plant, sensors=(xi,)), None, config, initial=np.zeros_like, reference=lambda t: np.sin(omega * t))
    window = trajectory.times >= trajectory.times[-1] - periods * 2 * np.pi / omega
    t = trajectory.times[window]
    basis = np.column_stack([np.sin(omega * t), np.cos(omega * t), np.ones_like(t)])
    coefficients, *_ = np.linalg.lstsq(basis, trajectory.outputs[window, 0], rcond=None)
    return complex(coefficients[0], coefficients[1])
