from pybondi import Callbacks as Callbacks
from hinfsystem.callbacks.default import Default as Default
from hinfsystem.callbacks.history import History as History
