from pybondi import Publisher as Publisher
from pybondi import Message as Message
from mlregistry import get_hash as get_hash
from hinfsystem.settings import Settings as Settings
from hinfsystem.xfer import TransferExpr as TransferExpr
from hinfsystem.xfer import RhpPoleInfo as RhpPoleInfo
from hinfsystem.xfer import tf as tf
from hinfsystem.polynomials import Polynomial as Polynomial
from hinfsystem.polynomials import QuasiPolynomial as QuasiPolynomial
from hinfsystem.aggregate import ControllerStructure as ControllerStructure
from hinfsystem.nyquist import check_stability as check_stability
from hinfsystem.nyquist import check_stability_prestabilized as check_stability_prestabilized
from hinfsystem.normest import hinf_norm as hinf_norm
from hinfsystem.normest import h2_integral as h2_integral
from hinfsystem.quasipoly import count_zeros as count_zeros
from hinfsystem.synth import SynthesisProblem as SynthesisProblem
from hinfsystem.synth import optimize as optimize
from hinfsystem.commands import Analyze as Analyze
from hinfsystem.commands import Synthesize as Synthesize
from hinfsystem.commands import Simulate as Simulate
from hinfsystem.commands import Reproduce as Reproduce
