import json
from pytest import fixture
from hinfsystem.synth import IterateRecord
from hinfsystem.callbacks import Callbacks, Default, History

@fixture
def records() -> list[IterateRecord]:
    return [
        IterateRecord(
            iteration=index,
            x=[1.0 - index / 10],
            value=2.0 - index / 10,
            objective=2.0 - index / 10,
            step=0.1,
            verdict='Stable',
            winding=1,
            backtracks=0,
            barriers=0,
            residuals={},
            radius=0.5,
            certificate=f'hash-{index}'
        ) for index in range(3)
    ]


def test_history_writes_json_lines(tmp_path, records):
    file = tmp_path / 'runs' / 'history.jsonl'
    history = History(file)
    for record in records:
        history('K2', record)
    history.flush()
    lines = [json.loads(line) for line in file.read_text(encoding='utf-8').splitlines()]
    assert [line['iteration'] for line in lines] == [0, 1, 2]
    assert all(line['structure'] == 'K2' for line in lines)
    assert lines[-1]['certificate'] == 'hash-2'
    assert history.records == []


def test_default_keeps_the_best_value(records):
    default = Default()
    callbacks = Callbacks([default, History()])
    for record in reversed(records):
        callbacks('K2', record)
    assert default.best == records[-1].value
    callbacks.flush()
    default.reset()
    assert default.best is None
