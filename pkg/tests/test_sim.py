from math import exp, pi
import numpy as np
from pytest import approx, raises, mark
from hinfsystem.xfer import tf, realize, Delay, QuasiRational
from hinfsystem.polynomials import QuasiPolynomial
from hinfsystem.plants import ParabolicPlant, WavePlant, fixture_controllers, parabolic_structure
from hinfsystem.sim import SimConfig, Buffer, Recursion, discretize, simulate_parabolic, simulate_wave
from hinfsystem.cases import destabilized_controller, refined, grid_change
from hinfsystem.exceptions import NonRealizableController, CflViolation


def test_buffer_delays_by_whole_steps():
    buffer = Buffer(0.3, 0.1)
    outputs = [float(buffer.step([value])[0]) for value in range(5)]
    assert outputs == approx([0.0, 0.0, 0.0, 0.0, 1.0])


def test_buffer_interpolates_fractions():
    buffer = Buffer(0.05, 0.1)
    outputs = [float(buffer.step([value])[0]) for value in (2.0, 4.0, 6.0)]
    assert outputs == approx([1.0, 3.0, 5.0])


def test_recursion_step_response():
    dt = 1e-2
    block = Recursion(realize(tf([1.0], [1.0, 1.0])), dt)
    outputs = np.array([float(block.step([1.0])[0]) for _ in range(300)])
    times = dt * np.arange(300)
    assert outputs[-1] == approx(1 - exp(-times[-1]), abs=1e-3)


def test_quasi_rational_steady_state():
    dt = 1e-2
    K = QuasiRational(QuasiPolynomial([(1.0, 0.0)]), QuasiPolynomial([(1.0, 0.0), (0.5, 1.0)]))
    block = discretize(K, dt)
    outputs = [float(block.step([1.0])[0]) for _ in range(3000)]
    assert outputs[-1] == approx(2 / 3, abs=1e-3)
    assert outputs[0] == approx(1.0)


def test_delay_compiles_to_a_buffer():
    assert isinstance(discretize(Delay(0.3), 0.1), Buffer)


def test_heat_decay():
    plant = ParabolicPlant(c=0.0)
    config = SimConfig.parabolic(horizon=2.0)
    trajectory = simulate_parabolic(plant, None, config, initial=lambda xi: np.sin(pi * xi / plant.L))
    assert trajectory.finite
    assert trajectory.at(2.0) / trajectory.energy[0] == approx(exp(-1.0), rel=2e-2)


def test_parabolic_plant_closure_cannot_be_simulated():
    plant = ParabolicPlant()
    with raises(NonRealizableController):
        discretize(plant.at(plant.sensors[0]), 0.01)


def test_input_delay_shorter_than_a_step():
    with raises(NonRealizableController):
        simulate_parabolic(ParabolicPlant(D=0.005), None, SimConfig.parabolic(step=0.01, horizon=1.0))


def test_wave_energy_is_conserved_without_anti_damping():
    trajectory = simulate_wave(WavePlant(0.0), None, SimConfig.wave(horizon=4.0))
    assert trajectory.energy[-1] / trajectory.energy[0] == approx(1.0, rel=5e-3)


def test_anti_damped_wave_grows():
    trajectory = simulate_wave(WavePlant(3.0), None, SimConfig.wave(horizon=4.0))
    assert trajectory.at(4.0) / trajectory.at(2.0) == approx(4.0, rel=5e-2)


def test_cfl_condition():
    with raises(CflViolation):
        simulate_wave(WavePlant(3.0), None, SimConfig.wave(nodes=100, step=0.02, horizon=1.0))


def test_output_files(tmp_path):
    trajectory = simulate_wave(WavePlant(3.0), None, SimConfig.wave(nodes=20, horizon=1.0))
    trajectory.to_csv(tmp_path / 'trajectory.csv')
    trajectory.surface_csv(tmp_path / 'surface.csv')
    header = (tmp_path / 'trajectory.csv').read_text().splitlines()[0]
    assert header == 't,u,y1,y2,y3,E'
    rows = np.loadtxt(tmp_path / 'trajectory.csv', delimiter=',', skiprows=1)
    assert rows.shape == (len(trajectory.times), 6)


@mark.slow
def test_delay_margin_controller_stabilizes_the_wave():
    controller = fixture_controllers(3.0)['quasi-polynomial']
    trajectory = simulate_wave(WavePlant(3.0), controller, SimConfig.wave(horizon=20.0))
    assert trajectory.finite
    assert trajectory.energy[-1] < trajectory.energy[0]


def test_tenfold_gain_makes_the_wave_grow():
    config = SimConfig.wave(horizon=10.0)
    stable = simulate_wave(WavePlant(3.0), fixture_controllers(3.0)['quasi-polynomial'], config)
    unstable = simulate_wave(WavePlant(3.0), destabilized_controller(3.0), config)
    assert stable.finite
    assert unstable.energy[-1] > unstable.energy[0]
    assert unstable.energy[-1] > stable.energy[-1]


@mark.slow
def test_sensor_design_settles_without_boundary_overshoot():
    plant = ParabolicPlant()
    K = parabolic_structure('mixed-sensitivity-sensor').expr()
    config = SimConfig.parabolic(horizon=10.0)
    trajectory = simulate_parabolic(plant, K, config)
    assert trajectory.energy[-1] < 1e-2 * trajectory.energy[0]
    assert np.max(np.abs(trajectory.controls)) <= 1.5 * np.max(np.abs(trajectory.surface[0]))
    assert grid_change(trajectory, simulate_parabolic(plant, K, refined(config))) < 0.05


@mark.slow
def test_scheduled_wave_converges_under_grid_refinement():
    K = fixture_controllers(3.0)['scheduled']
    config = SimConfig.wave(horizon=10.0)
    coarse = simulate_wave(WavePlant(3.0), K, config)
    assert coarse.energy[-1] < coarse.energy[0]
    assert grid_change(coarse, simulate_wave(WavePlant(3.0), K, refined(config))) < 0.05
