import numpy as np
from pytest import approx, raises
from hinfsystem.xfer import (
    tf, Delay, Constant, QuasiRational, Feedback, StateSpace, RhpPoleInfo,
    identity, hstack, vstack, diag, realize, return_difference, closed_loop, regularize, regularizer, sensitivity
)
from hinfsystem.plants import ParabolicPlant, WavePlant, parabolic_structure, quasi_polynomial_controller, fixture_controllers
from hinfsystem.polynomials import Polynomial, QuasiPolynomial
from hinfsystem.exceptions import SingularAt, DimensionMismatch, NotFiniteDimensional

POINTS = np.array([0.3j, 1 + 2j, 5j, 0.5 - 0.1j])


def test_rational_evaluation():
    G = tf([1.0], [1.0, 1.0])
    assert G.shape == (1, 1)
    values = G.eval(POINTS)
    assert values.shape == (4, 1, 1)
    assert values[:, 0, 0] == approx(1 / (POINTS + 1))
    with raises(SingularAt):
        G.eval(-1.0)


def test_derivatives_match_finite_differences():
    G = vstack(
        tf([2.0, 1.0], [1.0, 3.0, 2.0]) @ Delay(0.7),
        QuasiRational(QuasiPolynomial([(1.0, 0.0), (0.5, 1.0)]), QuasiPolynomial([(Polynomial((2.0, 1.0)), 0.0)]))
    )
    h = 1e-6
    for s in POINTS:
        numeric = (G.eval(s + h) - G.eval(s - h)) / (2 * h)
        assert G.eval_deriv(s) == approx(numeric, rel=1e-5, abs=1e-7)


def test_feedback_closes_the_loop():
    G = tf([1.0], [1.0, 1.0])
    K = Constant([[2.0]])
    for s in POINTS:
        value = Feedback(G, K).eval(s)[0, 0]
        g = 1 / (s + 1)
        assert value == approx(g / (1 + 2 * g))
    assert Feedback(G, K, sign=1).eval(1j)[0, 0] == approx((1 / (1j + 1)) / (1 - 2 / (1j + 1)))


def test_arithmetic_and_blocks():
    G = tf([1.0], [1.0, 2.0])
    H = tf([1.0, 0.0], [1.0, 5.0])
    s = 0.4 + 1.5j
    assert (G + H).eval(s)[0, 0] == approx(1 / (s + 2) + s / (s + 5))
    assert (G - 1).eval(s)[0, 0] == approx(1 / (s + 2) - 1)
    assert (3 * G).eval(s)[0, 0] == approx(3 / (s + 2))
    block = diag(G, H)
    assert block.shape == (2, 2)
    assert block.eval(s)[0, 1] == approx(0)
    row = hstack(G, H, Constant([[1.0]]))
    assert row.shape == (1, 3)
    assert row[0, 1:].eval(s)[0] == approx([s / (s + 5), 1.0])
    with raises(DimensionMismatch):
        hstack(G, Constant(np.ones((2, 1))))


def test_return_difference_on_either_side():
    G = vstack(tf([1.0], [1.0, 1.0]), tf([2.0], [1.0, 3.0]))
    K = hstack(Constant([[0.5]]), tf([1.0], [1.0, 4.0]))
    f = return_difference(G, K)
    s = 0.2 + 0.7j
    expected = np.linalg.det(np.eye(2) + G.eval(s) @ K.eval(s))
    assert f.eval(s)[0, 0] == approx(expected)
    loop = closed_loop(G, K)
    assert loop.T.shape == (3, 3)


def test_realization_agrees_with_evaluation():
    G = vstack(tf([1.0, 2.0], [1.0, 3.0, 2.0]), tf([4.0], [1.0, 0.5]))
    K = hstack(tf([1.0], [1.0, 10.0]), Constant([[0.2]]))
    for expr in (G, K, G @ K, Feedback(G, K)):
        system = realize(expr)
        assert isinstance(system, StateSpace)
        assert system.eval(POINTS) == approx(expr.eval(POINTS))
    with raises(NotFiniteDimensional):
        realize(Delay(1.0))


def test_pole_info_merges_axis_poles():
    info = RhpPoleInfo(1, ((0.0, 1), (2.0, 1), (-2.0, 1)), (0.25,))
    assert info.axis_poles == ((0.0, 1), (2.0, 2))
    assert info.axis_count == 5
    assert info.N_p == 6
    total = info + RhpPoleInfo(2, locations=(1.0, 3.0))
    assert total.count == 3
    assert max(total.frequencies()) == 3.0
    with raises(ValueError):
        RhpPoleInfo(-1)


def test_regularization_removes_an_integrator():
    f = identity(1) + tf([1.0], [1.0, 0.0])
    regularized = regularize(f, ((0.0, 1),))
    assert regularized.eval(0.0)[0, 0] == approx(1.0)
    assert regularized.eval(2j)[0, 0] == approx(1.0)


def test_sensitivity_identity():
    loops = [
        (ParabolicPlant().tf(), parabolic_structure('initial').expr()),
        (WavePlant(3.0).tf(), quasi_polynomial_controller(3.0)),
        (vstack(tf([1.0], [1.0, -1.0]), Delay(0.5) * tf([2.0], [1.0, 3.0])), hstack(Constant([[2.0]]), tf([1.0], [1.0, 1.0])))
    ]
    for G, K in loops:
        S = sensitivity(G, K).eval(POINTS)
        loop = (G @ K).eval(POINTS)
        assert S + loop @ S == approx(np.broadcast_to(np.eye(G.shape[0]), S.shape), abs=1e-9)


def test_conjugate_symmetry():
    fixtures = fixture_controllers(3.0)
    expressions = [
        ParabolicPlant().tf(),
        WavePlant(3.0).tf(),
        fixtures['backstepping'],
        fixtures['scheduled'],
        Delay(1.5) * tf([1.0, 2.0], [1.0, 0.5, 4.0]),
        QuasiRational(QuasiPolynomial([((1.0, 1.0), 0.0)]), QuasiPolynomial([((2.0, 0.0, 1.0), 0.0), ((1.0,), 1.0)]))
    ]
    for expr in expressions:
        assert expr.eval(np.conj(POINTS)) == approx(np.conj(expr.eval(POINTS)))


def test_regularizer_tends_to_one():
    h = regularizer([(0.0, 1), (2.0, 1)], 1.0)
    distances = [abs(h.eval(1j * omega)[0, 0] - 1) for omega in (1e2, 1e3, 1e4)]
    assert distances[0] > distances[1] > distances[2]
    assert distances[2] < 1e-3
    assert h.eval(2j)[0, 0] == approx(0.0, abs=1e-12)
