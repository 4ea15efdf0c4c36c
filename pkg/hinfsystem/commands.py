from typing import Any, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from logging import getLogger
from pybondi import Command
from pybondi.aggregate import Root
from pybondi.callbacks import Callback
from hinfsystem import events
from hinfsystem.settings import Settings
from hinfsystem.callbacks import Default
from hinfsystem.xfer import TransferExpr, RhpPoleInfo
from hinfsystem.polynomials import QuasiPolynomial
from hinfsystem.nyquist import NyquistCertificate, check_stability, check_stability_prestabilized
from hinfsystem.normest import NormEstimate, hinf_norm
from hinfsystem.quasipoly import rhp_zero_count
from hinfsystem.synth import SynthesisProblem, Result, optimize
from hinfsystem.plants import ParabolicPlant, WavePlant
from hinfsystem.sim import SimConfig, Trajectory, simulate_parabolic, simulate_wave
from hinfsystem.cases import CASES, CaseReport

logger = getLogger(__name__)

@dataclass
class Analyze(Command):
    '''
    The Analyze command certifies the stability of a closed loop and, when it is stable, the
    H-infinity norms of the given channels. With a prestabilizer the loop is certified as the
    perturbation of a loop known to be stable.
    '''
    plant: TransferExpr
    controller: TransferExpr
    info: RhpPoleInfo = field(default_factory=RhpPoleInfo)
    channels: dict[str, TransferExpr] = field(default_factory=dict)
    prestabilizer: TransferExpr | None = None
    characteristic: QuasiPolynomial | None = None
    tail_max: float | None = None
    theta: float | None = None
    cutoff: float | None = None
    id: Any = 'analysis'
    settings: Settings = field(default_factory=Settings)

    def execute(self):
        self.root = Root(id=self.id)
        if self.prestabilizer is None:
            self.certificate: NyquistCertificate = check_stability(self.plant, self.controller, self.info, self.settings.nyquist, self.tail_max)
        else:
            self.certificate = check_stability_prestabilized(self.plant, self.controller, self.prestabilizer, self.info, self.settings.nyquist, self.tail_max)
        self.estimates: dict[str, NormEstimate] = {}
        if self.certificate.stable:
            for name, channel in self.channels.items():
                self.estimates[name] = hinf_norm(channel, self.theta, self.cutoff, self.settings)
        else:
            logger.warning(f'Norms skipped, the closed loop is {self.certificate.verdict.value}')
        self.zeros = None if self.characteristic is None else rhp_zero_count(self.characteristic, self.settings.nyquist)
        self.report = {
            'certificate': self.certificate.to_dict(),
            'norms': {name: estimate.to_dict() for name, estimate in self.estimates.items()},
            'rhp_zeros': self.zeros
        }
        self.root.publish(event=events.Analyzed(
            id=self.id,
            verdict=self.certificate.verdict.value,
            hash=self.certificate.hash
        ))

@dataclass
class Synthesize(Command):
    '''
    The Synthesize command runs the bundle trust-region method over the structure of a problem
    and leaves the structure at the final parameters.
    '''
    problem: SynthesisProblem
    x0: Sequence[float] | None = None
    callback: Callback = field(default_factory=Default)
    settings: Settings = field(default_factory=Settings)

    def execute(self):
        self.result: Result = optimize(self.problem, self.x0, self.settings, self.callback)

@dataclass
class Simulate(Command):
    '''
    The Simulate command integrates the closed loop of a PDE plant and a controller in time.
    '''
    plant: ParabolicPlant | WavePlant
    controller: TransferExpr
    config: SimConfig | None = None
    settings: Settings = field(default_factory=Settings)

    def execute(self):
        match self.plant:
            case ParabolicPlant():
                config = self.config or SimConfig.parabolic(self.settings.simulation)
                self.trajectory: Trajectory = simulate_parabolic(self.plant, self.controller, config)
            case WavePlant():
                config = self.config or SimConfig.wave(self.settings.simulation)
                self.trajectory = simulate_wave(self.plant, self.controller, config)
            case _:
                raise TypeError(f'No simulator for {type(self.plant).__name__}')

@dataclass
class Reproduce(Command):
    '''
    The Reproduce command runs a named case study end to end and checks its criteria.
    '''
    case: str
    callback: Callback | None = None
    settings: Settings = field(default_factory=Settings)

    def execute(self):
        if self.case not in CASES:
            raise KeyError(f'Unknown case {self.case}, expected one of {", ".join(CASES)}')
        start = datetime.now(timezone.utc)
        self.report: CaseReport = CASES[self.case](self.settings, self.callback)
        elapsed = (datetime.now(timezone.utc) - start).total_seconds()
        logger.info(f'Case {self.case} {"passed" if self.report.passed else "failed"} in {elapsed:.1f}s')
