from pytest import approx, raises
from hinfsystem.settings import Settings
from hinfsystem.xfer import tf, Constant, RhpPoleInfo, vstack
from hinfsystem.structures import Static
from hinfsystem.synth import SynthesisProblem, Direct
from hinfsystem.plants import WavePlant
from hinfsystem.sim import SimConfig
from hinfsystem.commands import Analyze, Synthesize, Simulate, Reproduce
from hinfsystem.nyquist import Verdict


def test_analyze_stable_loop():
    G = tf([1.0], [1.0, -1.0])
    K = Constant([[2.0]])
    command = Analyze(G, K, RhpPoleInfo(1, locations=(1.0,)), {'lag': tf([1.0], [1.0, 2.0])})
    command.execute()
    assert command.certificate.verdict == Verdict.STABLE
    assert command.report['norms']['lag']['gamma'] == approx(0.5, abs=1e-2)
    assert command.report['rhp_zeros'] is None


def test_analyze_skips_norms_of_unstable_loops():
    G = tf([1.0], [1.0, -1.0])
    command = Analyze(G, Constant([[0.5]]), RhpPoleInfo(1, locations=(1.0,)), {'sensitivity': tf([1.0], [1.0, 1.0])})
    command.execute()
    assert command.certificate.verdict == Verdict.UNSTABLE
    assert command.report['norms'] == {}


def test_synthesize_leaves_the_structure_at_the_result():
    structure = Static(1)
    problem = SynthesisProblem(lambda K: vstack(K, Constant([[1.0]])), structure, Direct(tf([1.0], [1.0, 1.0])))
    command = Synthesize(problem, x0=[0.8])
    command.execute()
    assert command.result.value <= 1.02
    assert structure.vector() == approx(command.result.x)


def test_simulate_open_loop_wave():
    command = Simulate(WavePlant(3.0), None, SimConfig.wave(nodes=20, horizon=1.0))
    command.execute()
    assert command.trajectory.finite
    with raises(TypeError):
        Simulate('string', None, settings=Settings()).execute()


def test_reproduce_unknown_case():
    with raises(KeyError):
        Reproduce('unknown').execute()
