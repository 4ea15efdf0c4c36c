import json
import numpy as np
from pytest import approx, raises
from hinfsystem import codec
from hinfsystem.xfer import Feedback, Constant, tf
from hinfsystem.plants import ParabolicPlant, WavePlant, fixture_controllers, wave_decompose
from hinfsystem.structures import SharedDenominator

POINTS = np.array([0.5j, 1 + 1j, 3j])


def test_closures_are_rebuilt_from_their_tags():
    G = ParabolicPlant().tf()
    decoded = codec.loads(codec.dumps(G))
    assert decoded.eval(POINTS) == approx(G.eval(POINTS))
    document = json.loads(codec.dumps(G))
    assert document['schema'] == codec.SCHEMA
    assert document['expr']['kind'] == 'block'


def test_wave_plant_and_controllers(tmp_path):
    expressions = [WavePlant(3.0).tf(), wave_decompose(3.0).Phi, fixture_controllers(3.0)['scheduled']]
    for index, expr in enumerate(expressions):
        path = tmp_path / f'expr-{index}.json'
        codec.save(expr, path)
        assert codec.load(path).eval(POINTS) == approx(expr.eval(POINTS))


def test_structures_are_stored_as_snapshots():
    structure = SharedDenominator(channels=2, order=1, x=[2.0, 1.0, 0.5, 0.0, 3.0])
    loop = Feedback(Constant([[1.0], [0.0]]) @ tf([1.0], [1.0, 1.0]), structure.parametric())
    encoded = codec.encode(loop)
    structure.assign([5.0, 0.0, 0.0, 0.0, 0.0])
    decoded = codec.decode(encoded)
    s = 2j
    K = np.array([[(1 + 0.5 * s) / (s + 2), 3 * s / (s + 2)]])
    G = np.array([[1 / (s + 1)], [0.0]])
    assert decoded.eval(s) == approx(G @ np.linalg.inv(np.eye(1) + K @ G))


def test_unknown_nodes():
    with raises(KeyError):
        codec.decode({'kind': 'spline'})
    with raises(KeyError):
        codec.decode({'kind': 'closure', 'tag': 'unregistered', 'parameters': {}})
