from math import pi, atan
from pytest import approx, mark
from hinfsystem.settings import Settings
from hinfsystem.sim import SimConfig
from hinfsystem.cases import Criterion, CaseReport, CASES, wave_quasi_polynomial, wave_scheduled, refined


def test_criteria():
    assert Criterion('bounded', 0.8, None, 1.0).passed
    assert not Criterion('bounded', 1.2, None, 1.0).passed
    assert Criterion('interval', 1.7, 1.63, 1.99).passed
    assert not Criterion('not a number', float('nan')).passed
    assert not Criterion('unbounded', float('inf'), 1.0).passed
    assert Criterion('recorded', 42.0).passed
    assert Criterion('bounded', 0.8, None, 1.0).to_dict()['passed']


def test_case_report():
    report = CaseReport('example', [Criterion('first', 1.0, 1.0, 1.0), Criterion('second', 0.0, 1.0, 1.0)])
    assert not report.passed
    document = report.to_dict()
    assert document['final'] is None
    assert document['artifacts'] == {}
    assert [criterion['passed'] for criterion in document['criteria']] == [True, False]
    assert set(CASES) == {'parabolic-mm', 'parabolic-ms', 'wave-fd', 'wave-sched', 'wave-quasi'}


def test_refined_configurations():
    parabolic = refined(SimConfig.parabolic(step=0.01, nodes=200))
    assert (parabolic.nodes, parabolic.step) == (400, 0.005)
    wave = refined(SimConfig.wave(nodes=100))
    assert (wave.nodes, wave.step) == (200, None)


@mark.slow
def test_quasi_polynomial_case():
    report = wave_quasi_polynomial(Settings())
    assert report.passed
    assert report.artifacts['delay_margin'] == approx(16 * atan(8))
    assert report.artifacts['printed_delay'] == approx(16 * pi)
    assert report.artifacts['h_sigma0'] > 1.0
    assert report.artifacts['destabilized_energy_ratio'] > 1.0
    assert report.artifacts['grid_change'] < 0.05


@mark.slow
def test_scheduled_wave_case():
    report = wave_scheduled(Settings(), operating=(3.0,))
    assert report.passed
    assert report.artifacts['q=3']['energy_ratio'] < 1.0
    assert report.artifacts['q=3']['grid_change'] < 0.05
