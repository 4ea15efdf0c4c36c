from math import atan, inf, log, pi
import numpy as np
from pytest import approx, raises, mark
from hinfsystem.settings import Settings
from hinfsystem.polynomials import Polynomial, QuasiPolynomial
from hinfsystem.quasipoly import (
    DelayMarginProblem,
    omega_sigma,
    h_sigma0,
    delay_margin,
    count_zeros,
    locate_zero,
    rhp_zero_count,
    check_ad_hoc_stabilizer,
    bisect_delay,
    controller_poles
)
from hinfsystem.xfer import Constant, Delay, QuasiRational, tf, hstack
from hinfsystem.plants import (
    PARABOLIC_FIXTURES,
    WavePlant,
    quasi_polynomial_row,
    backstepping_controller,
    quasi_polynomial_controller,
    parabolic_structure,
    small_gain_initializer
)
from hinfsystem.exceptions import NoPositiveRoot, ZeroOnContour, NotFiniteDimensional


def test_omega_sigma_closed_form():
    assert omega_sigma(1.0) == approx(4.0**(-1 / 3), rel=1e-12)
    assert omega_sigma(0.0) > 0
    with raises(NoPositiveRoot):
        omega_sigma(-1.0)


def test_recipe_margin_exceeds_unit_delay():
    problem = DelayMarginProblem(1.0, 1.0, 4.0**-3)
    assert h_sigma0(problem.x1, problem.x2, problem.x3) > 1.0
    assert h_sigma0(1.0, 0.0, 0.0) == inf


def test_exact_delay_margin():
    problem = DelayMarginProblem(1.0, 1.0, 4.0**-3)
    assert delay_margin(problem.A, problem.B) == approx(16 * atan(8.0), rel=1e-9)
    assert delay_margin(problem.A, Polynomial(())) == inf


def test_zero_count_of_a_polynomial():
    P = Polynomial.descending([1.0, 0.0, 1.0])
    assert count_zeros(P, ((-1.0, 1.0), (0.5, 1.5))).count == 1
    assert count_zeros(P, ((-1.0, 1.0), (-2.0, 2.0))).count == 2
    assert count_zeros(P, ((0.5, 1.0), (-2.0, 2.0))).count == 0
    with raises(ZeroOnContour):
        count_zeros(P, ((0.0, 1.0), (-2.0, 2.0)))


def test_wave_output_zeros():
    plant = WavePlant(3.0)
    zeros = QuasiPolynomial([(1.0, 0.0), (plant.Q, 2.0)])
    for k in range(3):
        rectangle = ((0.0, 1.0), (-0.5 + k * pi, 0.5 + k * pi))
        assert count_zeros(zeros, rectangle).count == 1
        zero = locate_zero(zeros, rectangle)
        assert zero.real == approx(log(2) / 2, abs=1e-9)
        assert zero.imag == approx(k * pi, abs=1e-9)


def test_stable_at_unit_delay():
    problem = DelayMarginProblem(1.0, 1.0, 4.0**-3)
    assert rhp_zero_count(problem.quasipolynomial(1.0)) == 0


@mark.slow
def test_unstable_beyond_the_margin():
    problem = DelayMarginProblem(1.0, 1.0, 4.0**-3)
    assert rhp_zero_count(problem.quasipolynomial(30.0)) > 0


@mark.slow
def test_bisection_brackets_the_exact_margin():
    problem = DelayMarginProblem(1.0, 1.0, 4.0**-3)
    low, high = bisect_delay(problem, 1.0, 30.0, resolution=2.0)
    assert low <= delay_margin(problem.A, problem.B) <= high
    assert high - low <= 2.0
    with raises(ValueError):
        bisect_delay(problem, 1.0, 2.0)


def test_delay_margin_controller_stabilizes_the_wave():
    (n1, _, n3), d = quasi_polynomial_row(3.0)
    assert check_ad_hoc_stabilizer(d, n3, n1, 3.0)
    with raises(ValueError):
        check_ad_hoc_stabilizer(d, Polynomial.descending([1.0, 0.0, 0.0]), n1, 3.0)


def test_controller_poles_of_rational_rows():
    unstable = tf([1.0], [1.0, -2.0])
    info = controller_poles(hstack(unstable, tf([3.0], [1.0, -2.0]), Constant([[1.0]])))
    assert info.count == 1
    assert info.locations[0] == approx(2.0)
    assert controller_poles(hstack(unstable, Constant([[1.0]])) - hstack(unstable, Constant([[1.0]]))).N_p == 0
    assert controller_poles(hstack(tf([1.0, 1.0], [1.0, 1.0]) * unstable, Constant([[0.0]]))).count == 1
    integrator = controller_poles(hstack(tf([1.0], [1.0, 0.0]), Constant([[0.0]])))
    assert integrator.count == 0
    assert integrator.axis_poles == ((0.0, 1),)
    assert controller_poles(quasi_polynomial_controller(3.0) - quasi_polynomial_controller(3.0)).N_p == 0


def test_controller_poles_through_delays():
    assert controller_poles(hstack(Delay(1.0) * tf([1.0], [1.0, -2.0]), Constant([[0.0]]))).count == 1
    ratio = QuasiRational(QuasiPolynomial([(1.0, 1.0)]), QuasiPolynomial([((-1.0, 1.0), 0.0)]))
    assert controller_poles(hstack(ratio, Constant([[0.0]]))).count == 1
    assert controller_poles(hstack(ratio, ratio)).count == 1


def test_controller_poles_out_of_reach():
    with raises(NotFiniteDimensional):
        controller_poles(backstepping_controller(3.0))
    with raises(NotFiniteDimensional):
        controller_poles(Constant([[1.0, 0.0], [0.0, 1.0]]))


@mark.slow
def test_zero_count_switches_at_the_crossing_delay():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 50:
        x1, x2, x3 = rng.uniform(-0.9, 3.0), rng.uniform(0.1, 3.0), rng.uniform(0.01, 2.0)
        if x1 + x2 <= 0.1:
            continue
        problem = DelayMarginProblem(x1, x2, x3)
        margin = delay_margin(problem.A, problem.B)
        assert 0 < margin < inf
        assert h_sigma0(x1, x2, x3) > 0
        low, high = bisect_delay(problem, 0.95 * margin, 1.05 * margin, resolution=0.02 * margin)
        assert low <= margin <= high
        checked += 1


def test_zero_counts_add_over_disjoint_rectangles():
    zeros = QuasiPolynomial([(1.0, 0.0), (WavePlant(3.0).Q, 2.0)])
    band = (-0.5, 3 * pi + 0.5)
    whole = count_zeros(zeros, ((0.0, 1.0), band)).count
    assert whole == 4
    assert count_zeros(zeros, ((0.0, 1.0), (-0.5, 1.5))).count + count_zeros(zeros, ((0.0, 1.0), (1.5, band[1]))).count == whole
    assert count_zeros(zeros, ((0.0, 0.3), band)).count + count_zeros(zeros, ((0.3, 1.0), band)).count == whole
    settings = Settings().nyquist
    settings.seed_nodes = 4 * settings.seed_nodes
    assert count_zeros(zeros, ((0.0, 1.0), band), settings).count == whole
    P = Polynomial.descending([1.0, 0.0, -1.0, 0.0])
    assert count_zeros(P, ((-2.0, 0.5), (-1.0, 1.0))).count + count_zeros(P, ((0.5, 2.0), (-1.0, 1.0))).count == 3


def test_declared_controller_poles_match_their_denominators():
    structures = [parabolic_structure(name) for name in PARABOLIC_FIXTURES] + [small_gain_initializer()]
    for structure in structures:
        d, _ = structure.split()
        bound = 1 + float(np.max(np.abs(d.coeffs[:-1])))
        count = count_zeros(d, ((0.0, bound), (-bound, bound))).count
        assert structure.unstable_poles().count == count
        assert controller_poles(structure.expr()).count == count
    _, d = quasi_polynomial_row(3.0)
    assert count_zeros(d, ((0.0, 2.0), (-2.0, 2.0))).count == controller_poles(quasi_polynomial_controller(3.0)).count == 0
