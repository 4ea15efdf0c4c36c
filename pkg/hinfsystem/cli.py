'''
Command-line front end: analyze a closed loop, synthesize a structured controller, simulate a
closed loop or reproduce a case study, writing JSON reports and CSV data to an output directory.

Exit codes: 0 pass, 1 configuration error, 2 inconclusive certificate, 3 synthesis failure,
4 failed acceptance criterion.
'''
import sys
import json
import argparse
from enum import IntEnum
from pathlib import Path
from typing import Any, Literal
from logging import getLogger, basicConfig, INFO
import numpy as np
from pydantic import BaseModel, Field, ValidationError
from hinfsystem import codec
from hinfsystem.settings import Settings
from hinfsystem.callbacks import Callbacks, Default, History
from hinfsystem.commands import Analyze, Synthesize, Simulate, Reproduce
from hinfsystem.cases import CASES, WAVE_CUTOFF, parabolic_problem, wave_problem
from hinfsystem.exceptions import (
    HinfSystemError, InitialPointUnstable, StalledAtStabilityBoundary, NotFiniteDimensional, ZeroOnContour
)
from hinfsystem.nyquist import Verdict
from hinfsystem.quasipoly import ad_hoc_quasipolynomial, controller_poles
from hinfsystem.storage import Plants, Structures, register_defaults, resolve
from hinfsystem.xfer import TransferExpr, RhpPoleInfo, zeros
from hinfsystem.plants import (
    ParabolicPlant,
    WavePlant,
    fixture_controllers,
    reduced_parabolic,
    model_matching_channel,
    parabolic_structure,
    quasi_polynomial_controller,
    quasi_polynomial_row,
    wave_objective_plant,
    wave_objective_channel
)

logger = getLogger(__name__)

SCHEMA = 1

class Exit(IntEnum):
    PASS = 0
    CONFIG = 1
    INCONCLUSIVE = 2
    SYNTHESIS = 3
    ACCEPTANCE = 4

class RunSpec(BaseModel):
    '''
    A fully resolved request. Values from a config file take precedence over the flags.

    Parameters:
        command (str): analyze, synthesize, simulate or reproduce.
        plant (str): A registered plant, parabolic or wave.
        params (dict): Keyword arguments of the plant, such as L, D and c of the parabolic plant.
        q (float): The anti-damping of the wave plant, unless params gives one.
        controller (str): A published controller name, zero, or the path of a controller JSON file.
        structure (str): The published controller a parabolic synthesis starts from.
        objective (str): The parabolic synthesis objective.
        theta (float): The tolerance of certified norms.
        out (str): The output directory.
        seed (int): The seed of the winding number rays.
        case (str): The case study to reproduce.
        horizon (float): The final time of simulations.
        controller_poles (int): The unstable poles of the controller, or of its increment over the
            delay margin controller on the wave plant, when they cannot be derived from its blocks.
    '''
    command: Literal['analyze', 'synthesize', 'simulate', 'reproduce']
    plant: str = 'parabolic'
    params: dict[str, Any] = Field(default_factory=dict)
    q: float = Field(default=3.0, gt=0)
    controller: str = 'initial'
    structure: str = 'initial'
    objective: Literal['model-matching', 'mixed-sensitivity'] = 'model-matching'
    theta: float = Field(default=1e-2, gt=0)
    out: str = 'out'
    seed: int = 0
    case: str | None = None
    horizon: float | None = Field(default=None, gt=0)
    controller_poles: int | None = Field(default=None, ge=0)

    def settings(self) -> Settings:
        settings = Settings()
        settings.norms.theta = self.theta
        settings.nyquist.seed = self.seed
        settings.output.directory = self.out
        settings.output.weights = str(Path(self.out) / 'weights')
        if self.horizon is not None:
            settings.simulation.horizon = self.horizon
        return settings

def _json(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f'{type(value).__name__} is not JSON serializable')

def write_report(directory: Path, spec: RunSpec, body: dict):
    report = {'schema': SCHEMA, 'command': spec.command, 'theta': spec.theta, 'seed': spec.seed} | body
    with (directory / 'report.json').open('w', encoding='utf-8') as stream:
        json.dump(report, stream, indent=2, sort_keys=True, default=_json)

def write_rows(path: Path, header: str, rows: list[tuple]):
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(header.split(',')))
    np.savetxt(path, data, delimiter=',', header=header, comments='', encoding='utf-8')

def build_plant(spec: RunSpec) -> ParabolicPlant | WavePlant:
    '''
    Build the requested plant from the plant registry.

    Raises:
        KeyError: When no plant is registered under the requested name.
        ValueError: When the plant rejects the given parameters.
    '''
    register_defaults()
    name = resolve(spec.plant)
    params = dict(spec.params)
    if name == WavePlant.__name__:
        params.setdefault('q', spec.q)
    try:
        plant = Plants().get(name, **params)
    except TypeError as error:
        raise ValueError(f'Invalid parameters {params} for plant {name}: {error}') from error
    if plant is None:
        raise KeyError(f'Unknown plant {spec.plant}, expected one of {", ".join(Plants.registry.keys())}')
    return plant

def resolve_controller(spec: RunSpec, plant: ParabolicPlant | WavePlant) -> TransferExpr:
    '''
    Raises:
        FileNotFoundError: When the controller is neither a published name nor an existing file.
    '''
    if spec.controller == 'zero':
        return zeros(1, len(plant.sensors) if isinstance(plant, ParabolicPlant) else 3)
    fixtures = fixture_controllers(plant.q if isinstance(plant, WavePlant) else 3.0)
    if spec.controller in fixtures:
        return fixtures[spec.controller]
    path = Path(spec.controller)
    if not path.is_file():
        raise FileNotFoundError(f'No published controller or file named {spec.controller}')
    return codec.load(path)

def resolve_poles(spec: RunSpec, K: TransferExpr, settings: Settings) -> RhpPoleInfo:
    '''
    The unstable poles of a controller, as given by the request or derived from its blocks.

    Raises:
        ValueError: When the request gives no count and none can be derived.
    '''
    if spec.controller_poles is not None:
        return RhpPoleInfo(spec.controller_poles)
    try:
        return controller_poles(K, settings.nyquist)
    except (NotFiniteDimensional, ZeroOnContour) as error:
        raise ValueError(f'Cannot count the unstable poles of controller {spec.controller}, give them with --controller-poles: {error}') from error

def _row(q: float) -> tuple:
    (n1, _, n3), d = quasi_polynomial_row(q)
    return d, n3, n1

def analyze(spec: RunSpec, settings: Settings, directory: Path) -> Exit:
    plant = build_plant(spec)
    K = resolve_controller(spec, plant)
    if isinstance(plant, ParabolicPlant):
        G = plant.tf()
        reduced = reduced_parabolic(plant)
        K0 = parabolic_structure('initial').expr()
        info = plant.unstable_poles() + resolve_poles(spec, K, settings)
        command = Analyze(G, K, info, {'model-matching': model_matching_channel(G, reduced.G, K0, K)}, settings=settings)
    else:
        G0 = wave_objective_plant(plant.q)
        K0 = quasi_polynomial_controller(plant.q)
        characteristic = ad_hoc_quasipolynomial(*_row(plant.q), plant.q) if spec.controller == 'quasi-polynomial' else None
        command = Analyze(
            G0, K, resolve_poles(spec, K - K0, settings),
            prestabilizer=K0,
            channels={'objective': wave_objective_channel(G0, K - K0)},
            characteristic=characteristic,
            tail_max=WAVE_CUTOFF,
            cutoff=WAVE_CUTOFF,
            settings=settings
        )
    command.execute()
    directory.mkdir(parents=True, exist_ok=True)
    write_rows(directory / 'nyquist.csv', 'omega,re,im', command.certificate.plan.rows())
    bode = [(index, w, phi) for index, estimate in enumerate(command.estimates.values()) for w, phi in estimate.rows()]
    write_rows(directory / 'bode.csv', 'channel,omega,sigma', bode)
    write_report(directory, spec, {'plant': spec.plant, 'controller': spec.controller, 'channels': list(command.estimates)} | command.report)
    logger.info(f'Closed loop {command.certificate.verdict.value} with winding {command.certificate.winding}')
    return Exit.INCONCLUSIVE if command.certificate.verdict == Verdict.INCONCLUSIVE else Exit.PASS

def synthesize(spec: RunSpec, settings: Settings, directory: Path) -> Exit:
    plant = build_plant(spec)
    if isinstance(plant, ParabolicPlant):
        problem = parabolic_problem(spec.objective, spec.structure, plant)
    else:
        problem = wave_problem(plant.q)
    directory.mkdir(parents=True, exist_ok=True)
    history = directory / 'history.jsonl'
    history.unlink(missing_ok=True)
    command = Synthesize(problem, callback=Callbacks([Default(), History(history)]), settings=settings)
    command.execute()
    Structures(settings=settings).store(problem.structure)
    codec.save(problem.structure.expr(), directory / 'controller.json')
    write_report(directory, spec, {
        'plant': spec.plant,
        'structure': problem.structure.__class__.__name__,
        'final': {'x': [float(value) for value in command.result.x], 'value': command.result.value, 'reason': command.result.reason},
        'iterates': len(command.result.history),
        'certificates': [record.certificate for record in command.result.history]
    })
    return Exit.PASS

def simulate(spec: RunSpec, settings: Settings, directory: Path) -> Exit:
    plant = build_plant(spec)
    K = resolve_controller(spec, plant)
    command = Simulate(plant, K, settings=settings)
    command.execute()
    directory.mkdir(parents=True, exist_ok=True)
    command.trajectory.to_csv(directory / 'trajectory.csv')
    command.trajectory.surface_csv(directory / 'surface.csv')
    write_report(directory, spec, {
        'plant': spec.plant,
        'controller': spec.controller,
        'finite': command.trajectory.finite,
        'energy': {'initial': float(command.trajectory.energy[0]), 'final': float(command.trajectory.energy[-1])},
        'settle_time': command.trajectory.settle_time(),
        'steps': len(command.trajectory.times)
    })
    return Exit.PASS

def reproduce(spec: RunSpec, settings: Settings, directory: Path) -> Exit:
    if spec.case not in CASES:
        raise KeyError(f'Unknown case {spec.case}, expected one of {", ".join(CASES)}')
    directory.mkdir(parents=True, exist_ok=True)
    history = directory / 'history.jsonl'
    history.unlink(missing_ok=True)
    command = Reproduce(spec.case, Callbacks([Default(), History(history)]), settings)
    command.execute()
    write_report(directory, spec, command.report.to_dict())
    for criterion in command.report.criteria:
        logger.info(f'{"PASS" if criterion.passed else "FAIL"} {criterion.name}: {criterion.value:.6g}')
    return Exit.PASS if command.report.passed else Exit.ACCEPTANCE

COMMANDS = {
    'analyze': analyze,
    'synthesize': synthesize,
    'simulate': simulate,
    'reproduce': reproduce
}

def parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='hinfsystem', description='Certified frequency-domain analysis and structured synthesis of infinite-dimensional loops.')
    parser.add_argument('command', choices=list(COMMANDS))
    parser.add_argument('--plant', default=argparse.SUPPRESS, help='A registered plant, parabolic or wave (default: parabolic).')
    parser.add_argument('--params', type=json.loads, default=argparse.SUPPRESS, help='Plant keyword arguments as a JSON object.')
    parser.add_argument('--q', type=float, default=argparse.SUPPRESS, help='Anti-damping of the wave plant (default: 3).')
    parser.add_argument('--controller', default=argparse.SUPPRESS, help='A published controller name or a controller JSON file.')
    parser.add_argument('--structure', default=argparse.SUPPRESS, help='The published controller a parabolic synthesis starts from.')
    parser.add_argument('--objective', choices=['model-matching', 'mixed-sensitivity'], default=argparse.SUPPRESS)
    parser.add_argument('--theta', type=float, default=argparse.SUPPRESS, help='Tolerance of certified norms (default: 1e-2).')
    parser.add_argument('--horizon', type=float, default=argparse.SUPPRESS, help='Final time of simulations.')
    parser.add_argument('--out', default=argparse.SUPPRESS, help='Output directory (default: out).')
    parser.add_argument('--seed', type=int, default=argparse.SUPPRESS, help='Seed of the winding number rays.')
    parser.add_argument('--case', choices=list(CASES), default=argparse.SUPPRESS)
    parser.add_argument('--controller-poles', type=int, default=argparse.SUPPRESS, help='Unstable poles of a controller whose blocks hide them.')
    parser.add_argument('--config', type=Path, help='A JSON run spec whose values override the flags.')
    return parser

def load_spec(argv: list[str] | None = None) -> RunSpec:
    arguments = vars(parser().parse_args(argv))
    config = arguments.pop('config')
    if config is not None:
        arguments |= json.loads(config.read_text(encoding='utf-8'))
    return RunSpec.model_validate(arguments)

def main(argv: list[str] | None = None) -> int:
    basicConfig(level=INFO, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        spec = load_spec(argv)
    except SystemExit as exit:
        return Exit.PASS if not exit.code else Exit.CONFIG
    except (ValidationError, OSError, json.JSONDecodeError) as error:
        logger.error(f'Invalid configuration: {error}')
        return Exit.CONFIG
    try:
        return COMMANDS[spec.command](spec, spec.settings(), Path(spec.out))
    except (KeyError, ValueError, FileNotFoundError) as error:
        logger.error(f'Invalid configuration: {error}')
        return Exit.CONFIG
    except (InitialPointUnstable, StalledAtStabilityBoundary) as error:
        logger.error(f'Synthesis failed: {error}')
        return Exit.SYNTHESIS
    except HinfSystemError as error:
        logger.error(f'Certification failed: {error}')
        return Exit.INCONCLUSIVE

if __name__ == '__main__':
    sys.exit(main())
