import json
from pytest import mark, raises
from hinfsystem import codec
from hinfsystem.cli import main, load_spec, build_plant, Exit
from hinfsystem.xfer import tf, hstack, zeros


def test_analyze_zero_controller(tmp_path):
    assert main(['analyze', '--controller', 'zero', '--out', str(tmp_path)]) == Exit.PASS
    report = json.loads((tmp_path / 'report.json').read_text(encoding='utf-8'))
    assert report['certificate']['verdict'] == 'Unstable'
    assert report['certificate']['expected'] == 1
    assert report['norms'] == {}
    assert (tmp_path / 'nyquist.csv').read_text(encoding='utf-8').startswith('omega,re,im')
    assert (tmp_path / 'bode.csv').read_text(encoding='utf-8').strip() == 'channel,omega,sigma'


def test_missing_controller_file(tmp_path):
    out = tmp_path / 'out'
    assert main(['analyze', '--controller', str(tmp_path / 'missing.json'), '--out', str(out)]) == Exit.CONFIG
    assert not out.exists()


def test_config_overrides_flags(tmp_path):
    config = tmp_path / 'run.json'
    config.write_text(json.dumps({'controller': 'zero', 'theta': 0.05, 'out': str(tmp_path / 'configured')}), encoding='utf-8')
    spec = load_spec(['analyze', '--controller', 'initial', '--theta', '0.2', '--config', str(config)])
    assert spec.controller == 'zero'
    assert spec.theta == 0.05
    assert spec.settings().norms.theta == 0.05
    assert spec.settings().output.weights.endswith('weights')


def test_invalid_requests(tmp_path):
    assert main(['optimize']) == Exit.CONFIG
    assert main(['reproduce', '--case', 'unknown']) == Exit.CONFIG
    assert main(['analyze', '--theta', '-1']) == Exit.CONFIG
    config = tmp_path / 'run.json'
    config.write_text('{"plant": "beam"}', encoding='utf-8')
    assert main(['analyze', '--config', str(config)]) == Exit.CONFIG
    assert main(['reproduce', '--out', str(tmp_path)]) == Exit.CONFIG


def test_unstable_controller_poles_are_counted(tmp_path):
    controller = tmp_path / 'unstable.json'
    codec.save(hstack(tf([1.0], [1.0, -2.0]), zeros(1, 4)), controller)
    out = tmp_path / 'out'
    assert main(['analyze', '--controller', str(controller), '--out', str(out)]) in (Exit.PASS, Exit.INCONCLUSIVE)
    report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert report['certificate']['expected'] == 2
    assert report['certificate']['verdict'] != 'Stable'


def test_controller_poles_that_cannot_be_derived(tmp_path):
    out = tmp_path / 'out'
    assert main(['analyze', '--plant', 'wave', '--controller', 'backstepping', '--out', str(out)]) == Exit.CONFIG
    assert not out.exists()
    spec = load_spec(['analyze', '--plant', 'wave', '--controller', 'backstepping', '--controller-poles', '0'])
    assert spec.controller_poles == 0


def test_plants_from_the_registry():
    spec = load_spec(['analyze', '--params', '{"D": 0.5, "c": 1.0}'])
    plant = build_plant(spec)
    assert (plant.D, plant.c) == (0.5, 1.0)
    assert build_plant(load_spec(['simulate', '--plant', 'WavePlant', '--q', '2'])).q == 2.0
    assert build_plant(load_spec(['simulate', '--plant', 'wave', '--params', '{"q": 4.0}'])).q == 4.0
    with raises(ValueError):
        build_plant(load_spec(['analyze', '--params', '{"mass": 1.0}']))
    with raises(KeyError):
        build_plant(load_spec(['analyze', '--plant', 'beam']))


@mark.slow
def test_reproduce_quasi_polynomial_case(tmp_path):
    assert main(['reproduce', '--case', 'wave-quasi', '--out', str(tmp_path)]) == Exit.PASS
    report = json.loads((tmp_path / 'report.json').read_text(encoding='utf-8'))
    assert report['passed']
    assert report['case'] == 'wave-quasi'
