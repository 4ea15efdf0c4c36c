from math import log, pi
import numpy as np
from pytest import approx, raises, mark, fixture
from hinfsystem.sim import SimConfig, sine_dwell
from hinfsystem.plants import (
    ParabolicPlant,
    WavePlant,
    wave_decompose,
    parabolic_tf,
    wave_tf,
    reduced_parabolic,
    parabolic_structure,
    fixture_controllers,
    wave_objective_plant,
    wave_characteristic,
    recover_controller,
    prestabilizer,
    quasi_polynomial_row,
    finite_dimensional_controller,
    lqg_channel,
    weight_filters
)
from hinfsystem.quasipoly import ad_hoc_quasipolynomial
from hinfsystem.xfer import Feedback, zeros

POINTS = np.array([1j, 2 + 1j, 0.3 + 5j])

@fixture(scope='session')
def reduced():
    return reduced_parabolic(ParabolicPlant())


def test_parabolic_transfer():
    plant = ParabolicPlant()
    assert plant.sensors == approx([index * 2 * pi / 6 for index in range(1, 6)])
    assert plant.tf().shape == (5, 1)
    assert plant.at(plant.L).eval(POINTS)[:, 0, 0] == approx(np.exp(-POINTS))
    assert plant.at(0.0).eval(POINTS)[:, 0, 0] == approx(np.zeros(3))
    assert parabolic_tf(plant, plant.L).eval(POINTS) == approx(plant.at(plant.L).eval(POINTS))
    xi, s = plant.sensors[2], 1.0 + 1.0j
    root = np.sqrt(s - plant.c)
    assert plant.at(xi).eval(s)[0, 0] == approx(np.exp(-s) * np.sinh(root * xi) / np.sinh(root * plant.L))
    with raises(ValueError):
        plant.at(7.0)


def test_parabolic_unstable_pole():
    info = ParabolicPlant().unstable_poles()
    assert info.count == 1
    assert info.locations[0] == approx(0.25)
    assert ParabolicPlant(c=0.0).unstable_poles().count == 0


def test_reduced_model_matches_at_low_frequency(reduced):
    plant = ParabolicPlant()
    assert reduced.G.shape == (5, 1)
    assert reduced.G.eval(0.1j) == approx(plant.tf().eval(0.1j), rel=1e-2, abs=1e-3)
    assert reduced.P.shape[0] == reduced.performance + len(plant.sensors)


def test_wave_transfer():
    plant = WavePlant(3.0)
    assert plant.Q == -2.0
    assert wave_tf(3.0) == plant
    assert plant.chain() == approx(log(2) / 2)
    G = plant.tf()
    assert G.shape == (3, 1)
    values = G.eval(POINTS)
    assert values[:, 2, 0] == approx(POINTS * values[:, 1, 0])
    with raises(ValueError):
        WavePlant(1.0)


def test_wave_decomposition():
    plant = WavePlant(3.0)
    decomposition = wave_decompose(plant)
    G = plant.tf().eval(POINTS)
    closed = G / (1 + G[:, 2:3, :])
    assert decomposition.prestabilized.eval(POINTS) == approx(closed)


def test_published_controllers():
    fixtures = fixture_controllers(3.0)
    for name in ('initial', 'model-matching', 'mixed-sensitivity', 'mixed-sensitivity-sensor'):
        assert fixtures[name].shape == (1, 5)
    for name in ('quasi-polynomial', 'backstepping', 'finite-dimensional', 'small-gain', 'scheduled'):
        assert fixtures[name].shape == (1, 3)
    structure = parabolic_structure('initial')
    assert structure.size == 17
    d, numerators = structure.split()
    assert d.to_descending() == approx([1.0, 4.315, 18.3])
    assert len(numerators) == 5


def test_wave_objective_plant_is_stable_on_the_axis():
    G0 = wave_objective_plant(3.0)
    assert G0.shape == (3, 1)
    assert np.all(np.isfinite(G0.eval(1j * np.linspace(0.0, 50.0, 101))))
    assert set(weight_filters()) >= {'parabolic-error', 'parabolic-control', 'wave-error', 'wave-control'}


@mark.slow
def test_sine_dwell_matches_the_frequency_response():
    plant = ParabolicPlant(c=0.0)
    xi, omega = plant.sensors[2], 1.0
    measured = sine_dwell(plant, omega, xi, SimConfig.parabolic(nodes=100, horizon=40.0))
    assert measured == approx(plant.at(xi).eval(1j * omega)[0, 0], abs=2e-2)


def test_wave_characteristic_of_the_delay_margin_row():
    plant = WavePlant(3.0)
    numerators, d = quasi_polynomial_row(3.0)
    characteristic = wave_characteristic(plant, numerators, d)
    ad_hoc = ad_hoc_quasipolynomial(d, d, numerators[0], 3.0)
    assert ad_hoc(POINTS) == approx((1 - 3.0) * characteristic(POINTS))


def test_recovered_controller_undoes_the_loop_transformation():
    Phi = wave_decompose(3.0).Phi
    K, K0 = finite_dimensional_controller(), prestabilizer()
    K_tilde = Feedback(K - K0, Phi)
    assert recover_controller(K_tilde, Phi, K0).eval(POINTS) == approx(K.eval(POINTS))


def test_backstepping_controller_is_finite_at_the_origin():
    K = fixture_controllers(3.0, c0=1.0)['backstepping']
    assert K.eval(0.0)[0, 0] == approx(-1.0)
    s = 2.0j
    assert K.eval(s)[0, 0] == approx(-2.0 * s / (s + 1 - np.exp(-s)))
    assert K.eval(s)[0, 2] == approx(1.0)


def test_lqg_channel_without_control(reduced):
    T = lqg_channel(reduced, zeros(1, 5))
    assert T.shape == (reduced.performance, reduced.disturbances)
    s = 0.5j
    expected = reduced.P.eval(s)[:reduced.performance, :reduced.disturbances]
    assert T.eval(s) == approx(expected)


def test_parabolic_transfer_solves_the_transformed_equation():
    plant, h = ParabolicPlant(), 1e-3
    for s in (0.5j, 1.0 + 1.0j, 2.0j):
        assert plant.at(0.0).eval(s)[0, 0] == approx(0.0, abs=1e-12)
        assert plant.at(plant.L).eval(s)[0, 0] == approx(np.exp(-s * plant.D))
        for xi in plant.sensors:
            x = lambda point: parabolic_tf(plant, point).eval(s)[0, 0]
            residual = (x(xi + h) - 2 * x(xi) + x(xi - h)) / h**2 - (s - plant.c) * x(xi)
            assert abs(residual) < 1e-6
