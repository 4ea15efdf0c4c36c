import json
from typing import Any
from pathlib import Path
from pybondi.callbacks import Callback
from pybondi.publisher import Message

class History(Callback):
    '''
    Buffers the accepted iterates of a synthesis run. On flush it writes them as JSON lines when
    a file is given and publishes them on the topic.

    Args:
        file (str | Path | None): The JSON lines file, appended to.
        topic (str): The publisher topic of the flushed records.
    '''
    def __init__(self, file: str | Path | None = None, topic: str = 'history'):
        super().__init__()
        self.file = Path(file) if file else None
        self.topic = topic
        self.records: list[tuple[Any, dict]] = []

    def __call__(self, id: Any, record: Any, *args, **kwargs):
        self.records.append((id, record.to_dict()))

    def flush(self):
        if self.file is not None:
            self.file.parent.mkdir(parents=True, exist_ok=True)
            with self.file.open('a', encoding='utf-8') as stream:
                for id, record in self.records:
                    stream.write(json.dumps({'structure': str(id)} | record, sort_keys=True) + '\n')
        for id, record in self.records:
            self.publisher.publish(self.topic, Message(str(id), record))
        self.records = []

    def reset(self):
        self.records = []
