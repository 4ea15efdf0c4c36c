import numpy as np
from pytest import approx, raises, mark
from hinfsystem.settings import Settings
from hinfsystem.xfer import tf, Constant, Delay, RhpPoleInfo, return_difference, feedback
from hinfsystem.plants import ParabolicPlant, parabolic_structure
from hinfsystem.quasipoly import controller_poles
from hinfsystem.nyquist import Verdict, winding_number, check_stability, check_stability_prestabilized, verify_tail, first_order_bound
from hinfsystem.exceptions import OriginOnPolygon


def test_winding_number_of_circles():
    circle = np.exp(1j * np.linspace(0, 2 * np.pi, 200, endpoint=False))
    assert winding_number(circle) == 1
    assert winding_number(circle[::-1]) == -1
    assert winding_number(np.concatenate([circle, circle])) == 2
    assert winding_number(circle + 3) == 0
    with raises(OriginOnPolygon):
        winding_number(np.array([1.0, -1.0, 1j]))


def test_first_order_bound():
    assert first_order_bound(Constant([[2.0]]), 0.0, 5.0) == 0.0
    assert first_order_bound(tf([1.0, 0.0], [1.0]), 0.0, 1.0) == approx(2.0)
    f = Constant([[1.0]]) + tf([1.0], [1.0, 1.0])
    omega = np.linspace(0.0, 2.0, 10001)
    assert first_order_bound(f, 0.0, 2.0) >= np.max(1 / np.abs(1j * omega + 1) ** 2)


def test_unstable_plant_stabilized_by_high_gain():
    G = tf([1.0], [1.0, -1.0])
    info = RhpPoleInfo(1, locations=(1.0,))
    certificate = check_stability(G, Constant([[2.0]]), info)
    assert certificate.winding == 1
    assert certificate.verdict == Verdict.STABLE
    assert certificate.plan.check()
    assert certificate.tail


def test_unstable_plant_with_low_gain():
    G = tf([1.0], [1.0, -1.0])
    info = RhpPoleInfo(1, locations=(1.0,))
    certificate = check_stability(G, Constant([[0.5]]), info)
    assert certificate.winding == 0
    assert certificate.verdict == Verdict.UNSTABLE


def test_stable_loop_with_integrator():
    G = tf([1.0], [1.0, 1.0, 0.0])
    info = RhpPoleInfo(axis_poles=((0.0, 1),))
    certificate = check_stability(G, Constant([[1.0]]), info)
    assert certificate.verdict == Verdict.STABLE
    assert certificate.winding == 0


def test_certificate_is_reproducible():
    G = tf([1.0], [1.0, -1.0])
    info = RhpPoleInfo(1, locations=(1.0,))
    first = check_stability(G, Constant([[2.0]]), info)
    second = check_stability(G, Constant([[2.0]]), info, Settings().nyquist)
    assert first.hash == second.hash
    report = first.to_dict()
    assert report['verdict'] == 'Stable'
    assert report['nodes'] == len(first.plan.nodes)


def test_prestabilized_loop():
    K0 = Constant([[2.0]])
    G0 = tf([1.0], [1.0, 1.0])
    certificate = check_stability_prestabilized(G0, Constant([[2.5]]), K0)
    assert certificate.verdict == Verdict.STABLE
    assert certificate.expected == 0


def test_tail_certification():
    f = Constant([[1.0]]) + tf([1.0], [1.0, 1.0])
    assert verify_tail(f, 10.0)
    g = Constant([[1.0]]) - tf([2.0, 0.0], [1.0, 1.0])
    assert not verify_tail(g, 10.0, upper=100.0)


def random_loop(rng: np.random.Generator):
    a = rng.uniform(0.2, 2.0)
    k = rng.uniform(0.2, 3.0) * a
    unstable = bool(rng.random() < 0.5)
    G = Delay(rng.uniform(0.0, 1.0)) * tf([k], [1.0, -a if unstable else a])
    info = RhpPoleInfo(1, locations=(a,)) if unstable else RhpPoleInfo()
    return G, info, k < a and not unstable


@mark.slow
def test_winding_agrees_with_a_finer_polygon():
    rng = np.random.default_rng(0)
    K = Constant([[1.0]])
    for _ in range(20):
        G, info, small_gain = random_loop(rng)
        certificate = check_stability(G, K, info)
        assert certificate.plan.check()
        assert certificate.winding is not None
        nodes = certificate.plan.nodes
        fine = np.concatenate([np.linspace(low, high, 100, endpoint=False) for low, high in zip(nodes[:-1], nodes[1:])] + [nodes[-1:]])
        values = return_difference(G, K).eval(1j * fine)[:, 0, 0]
        assert winding_number(np.concatenate([values, np.conj(values[::-1])[1:]])) == certificate.winding
        if small_gain:
            assert certificate.verdict == Verdict.STABLE


def test_winding_is_independent_of_the_ray():
    G = Delay(0.5) * tf([3.0], [1.0, -1.0])
    certificate = check_stability(G, Constant([[1.0]]), RhpPoleInfo(1, locations=(1.0,)))
    assert certificate.plan.check()
    polygon = certificate.plan.polygon()
    windings = {winding_number(polygon, rng=np.random.default_rng(seed)) for seed in range(50)}
    assert windings == {certificate.winding}


@mark.slow
def test_prestabilized_test_agrees_on_the_parabolic_loops():
    plant = ParabolicPlant()
    G = plant.tf()
    K0 = parabolic_structure('initial').expr()
    G0 = feedback(G, K0)
    for name in ('initial', 'model-matching', 'mixed-sensitivity'):
        K = parabolic_structure(name).expr()
        direct = check_stability(G, K, plant.unstable_poles() + controller_poles(K))
        prestabilized = check_stability_prestabilized(G0, K, K0, controller_poles(K - K0))
        assert direct.verdict == prestabilized.verdict == Verdict.STABLE
