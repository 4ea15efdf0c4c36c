import numpy as np
from pytest import approx, raises, mark
from hinfsystem.settings import Settings
from hinfsystem.xfer import tf, Constant, RhpPoleInfo, vstack, return_difference
from hinfsystem.structures import Static, SharedDenominator
from hinfsystem.plants import wave_objective_plant, small_gain_initializer
from hinfsystem.synth import (
    SynthesisProblem,
    Direct,
    Surrogate,
    Prestabilized,
    SoftPoleRegion,
    MaxNorm,
    DiskMargin,
    ConeRegion,
    Context,
    h2_objective,
    optimize,
    barrier_value,
    closed_loop_poles,
    pole_region_penalty,
    cone_constraint,
    fit_cone,
    small_gain_margin
)
from hinfsystem.callbacks import Callbacks, Default, History
from hinfsystem.exceptions import InitialPointUnstable


def test_pole_region_penalty():
    assert pole_region_penalty([-2.0, -1.0 + 0.5j, -1.0 - 0.5j], 0.5, 0.5, 10.0) == 0.0
    assert pole_region_penalty([-0.2], 0.5, 0.5, 10.0) == approx(0.3)
    assert pole_region_penalty([-1.0 + 10j], 0.5, 0.5, 100.0) == approx(0.5 - 1 / np.sqrt(101))
    assert pole_region_penalty([-20.0], 0.5, 0.5, 10.0) == approx(10.0)
    assert pole_region_penalty([0.0], 0.0, 0.5, 10.0) == 0.0
    assert pole_region_penalty([], 0.5, 0.5, 10.0) == 0.0


def test_cone_constraint_and_fit():
    f = Constant([[1.0]]) + tf([1.0], [1.0, 1.0])
    nodes = np.linspace(0.0, 10.0, 11)
    assert np.all(cone_constraint(f, 1.0, 0.5, nodes) == 0.0)
    assert np.any(cone_constraint(f, 1.0, 3.0, nodes) > 0.0)
    values = f.eval(1j * nodes)[:, 0, 0]
    alpha, r = fit_cone(values, 1.0, 0.5)
    assert alpha == 1.0
    assert 0 < r < 1.0
    assert np.all(cone_constraint(f, alpha, r, nodes) == 0.0)
    with raises(ValueError):
        fit_cone(np.array([-1.0, 1.0]))


def test_barrier_is_one_without_control():
    G = tf([1.0], [1.0, 1.0])
    assert barrier_value(G, Constant([[0.0]]), 1e-3) == approx(1.0, abs=1e-3)
    assert barrier_value(G, Constant([[-0.9]]), 1e-3) == approx(10.0, abs=1e-2)


def test_closed_loop_poles():
    poles = closed_loop_poles(tf([1.0], [1.0, -1.0]), tf([3.0], [1.0, 2.0]))
    assert sorted(poles.real) == approx([-0.5, -0.5])
    assert sorted(np.abs(poles.imag)) == approx([np.sqrt(3) / 2, np.sqrt(3) / 2])


def test_static_gain_descends_to_the_optimum(tmp_path):
    G = tf([1.0], [1.0, 1.0])
    structure = Static(1, x=[1.0])
    problem = SynthesisProblem(lambda K: vstack(K, Constant([[1.0]])), structure, Direct(G))
    history = tmp_path / 'history.jsonl'
    result = optimize(problem, settings=Settings(), callback=Callbacks([Default(), History(history)]))
    assert result.value <= 1.02
    assert abs(result.x[0]) < 0.2
    values = [record.value for record in result.history]
    assert all(b <= a + 1e-2 for a, b in zip(values, values[1:]))
    assert all(record.verdict == 'Stable' for record in result.history)
    assert len(history.read_text().splitlines()) == len(result.history)
    assert structure.vector() == approx(result.x)


def test_unstable_initial_point():
    G = tf([1.0], [1.0, -1.0])
    structure = Static(1, x=[0.5])
    problem = SynthesisProblem(lambda K: K, structure, Direct(G, RhpPoleInfo(1, locations=(1.0,))))
    with raises(InitialPointUnstable):
        optimize(problem)


def test_soft_pole_region_on_a_surrogate():
    G = tf([1.0], [1.0, -1.0])
    structure = Static(1, x=[3.0])
    gate = Surrogate(G, RhpPoleInfo(1, locations=(1.0,)))
    constraint = SoftPoleRegion(decay=3.0, damping=0.5, maxfreq=10.0)
    assert constraint.penalty(gate, structure) == approx(1.0)
    assert gate.certify(structure).stable


def test_return_difference_of_the_gated_loop():
    structure = SharedDenominator(channels=3, order=2)
    gate = Prestabilized(vstack(*[tf([1.0], [1.0, 1.0])] * 3))
    G, K = gate.loop(structure.expr())
    assert return_difference(G, K).eval(1j)[0, 0] == approx(1.0)


def test_constraint_residuals():
    G = tf([1.0], [1.0, 1.0])
    structure = Static(1, x=[0.5])
    gate = Direct(G)
    context = Context(structure, gate, gate.certify(structure), 1e-3, Settings())
    value, gradient = MaxNorm(lambda K: K @ G, 1.0).residual(context)
    assert value == approx(-0.5, abs=2e-3)
    assert gradient == approx([1.0], abs=1e-2)
    value, _ = DiskMargin(0.5).residual(context)
    assert value == approx(-1.0, abs=1e-2)
    value, gradient = ConeRegion(1.0, 0.5).residual(context)
    assert value < 0.0
    assert gradient.shape == (1,)


def test_h2_objective_of_the_current_point():
    G = tf([1.0], [1.0, 1.0])
    problem = SynthesisProblem(lambda K: K @ G, Static(1, x=[1.0]), Direct(G), norm='h2')
    assert h2_objective(problem).norm == approx(1 / np.sqrt(2), rel=1e-2)


@mark.slow
def test_small_gain_initializer_on_the_wave():
    margin = small_gain_margin(wave_objective_plant(3.0), small_gain_initializer().expr(), 1e-2)
    assert margin['holds']
    assert margin['product'] < 1.0
