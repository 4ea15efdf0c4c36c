from math import pi, sqrt
import numpy as np
from pytest import approx, raises
from hinfsystem.xfer import tf, Constant, Delay, vstack, feedback
from hinfsystem.structures import Static
from hinfsystem.normest import hinf_norm, h2_integral, sigma_max, hinf_subgradient, h2_gradient
from hinfsystem.exceptions import TailBoundMissing, UnboundedOnAxis


def test_first_order_peak_at_zero():
    estimate = hinf_norm(tf([1.0], [1.0, 1.0]), 1e-2)
    assert estimate.gamma <= 1.0 + 1e-12
    assert estimate.gamma >= 1.0 - 1e-2
    assert estimate.tail == 'analytic'


def test_resonant_peak_within_tolerance():
    theta = 1e-2
    estimate = hinf_norm(tf([1.0], [1.0, 0.2, 1.0]), theta)
    peak = 1 / (0.2 * sqrt(0.99))
    assert peak - theta - 1e-9 <= estimate.gamma <= peak + 1e-9
    assert estimate.active
    assert estimate.active[0].omega == approx(sqrt(0.98), abs=5e-2)


def test_matrix_norm_uses_the_largest_singular_value():
    T = vstack(tf([1.0], [1.0, 1.0]), tf([1.0], [1.0, 1.0]))
    estimate = hinf_norm(T, 1e-3)
    assert estimate.gamma == approx(sqrt(2), abs=1e-3)
    assert sigma_max(T, np.array([0.0]))[0] == approx(sqrt(2))


def test_explicit_cutoff_without_envelope():
    T = tf([1.0], [1.0, 1.0]) @ Delay(1.0)
    estimate = hinf_norm(T, 1e-2, cutoff=100.0)
    assert estimate.gamma == approx(1.0, abs=1e-2)
    assert estimate.cutoff == 100.0


def test_h2_of_first_order_lag():
    estimate = h2_integral(tf([1.0], [1.0, 1.0]), 1e-2)
    assert estimate.value == approx(pi / 2, abs=1e-2)
    assert estimate.norm == approx(1 / sqrt(2), abs=1e-2)
    assert estimate.tail <= 5e-3


def test_h2_needs_a_tail_bound():
    with raises(TailBoundMissing):
        h2_integral(Constant([[1.0]]), 1e-2)


def test_undeclared_axis_pole_is_reported():
    with raises(UnboundedOnAxis):
        hinf_norm(tf([1.0], [1.0, 0.0, 1.69]), 1e-2)
    with raises(UnboundedOnAxis):
        hinf_norm(tf([1.0], [1.0, 1.0, 0.0]), 1e-2)


def test_certified_peak_brackets_the_exact_norm():
    cases = [(tf([1.0], [1.0, 0.2, 1.0]), 1 / (0.2 * sqrt(0.99))), (Delay(1.0) * tf([2.0], [1.0, 1.0]), 2.0)]
    for T, exact in cases:
        previous = 0.0
        for theta in (1e-1, 1e-2, 1e-3):
            gamma = hinf_norm(T, theta).gamma
            assert gamma - 1e-9 <= exact <= gamma + theta + 1e-9
            assert gamma >= previous - 1e-8
            previous = gamma


def test_subgradient_matches_finite_differences():
    structure = Static(1, x=[0.3])
    T = feedback(tf([1.0], [1.0, 0.4, 1.0]), structure.parametric())
    gradient = hinf_subgradient(T, hinf_norm(T, 1e-3), [structure.x])
    step = 1e-3
    structure.assign([0.3 + step])
    upper = hinf_norm(T, 1e-3).gamma
    structure.assign([0.3 - step])
    lower = hinf_norm(T, 1e-3).gamma
    assert gradient.shape == (1,)
    assert gradient[0] < 0
    assert gradient[0] == approx((upper - lower) / (2 * step), rel=1e-2)


def test_h2_gradient_of_a_static_gain():
    structure = Static(1, x=[2.0])
    T = structure.parametric() @ tf([1.0], [1.0, 1.0])
    estimate = h2_integral(T, 1e-3)
    assert estimate.norm == approx(2 / sqrt(2), rel=1e-2)
    assert h2_gradient(T, estimate, [structure.x])[0] == approx(1 / sqrt(2), rel=5e-2)
