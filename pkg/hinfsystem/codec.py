'''
JSON encoding of transfer expressions as node-tagged trees. Polynomial coefficients are stored in
ascending degree and delays in seconds. Analytic closures are stored by tag and parameters and
rebuilt through the closure registry.
'''
import json
from typing import Any
from pathlib import Path
import numpy as np
from hinfsystem.polynomials import Polynomial, QuasiPolynomial
from hinfsystem.xfer import (
    TransferExpr, Rational, Delay, QuasiRational, Closure, Constant, StateSpace, Sum, Product,
    Scale, Inverse, Feedback, Block, Select, Det, LowerLFT, Parametric, Regularized, CLOSURES
)
import hinfsystem.plants # noqa: F401, registers the plant closures

SCHEMA = 1

def _complex(value: complex) -> list[float]:
    value = complex(value)
    return [value.real, value.imag]

def _matrix(matrix: np.ndarray) -> dict[str, Any]:
    matrix = np.asarray(matrix, dtype=complex)
    encoded = {'real': matrix.real.tolist()}
    if np.any(matrix.imag != 0):
        encoded['imag'] = matrix.imag.tolist()
    return encoded

def _unmatrix(data: dict[str, Any]) -> np.ndarray:
    matrix = np.asarray(data['real'], dtype=complex)
    if 'imag' in data:
        matrix = matrix + 1j * np.asarray(data['imag'], dtype=float)
    return matrix

def _quasi(polynomial: QuasiPolynomial) -> list[dict[str, Any]]:
    return [{'poly': list(p.coeffs), 'delay': delay} for p, delay in polynomial.terms]

def _unquasi(terms: list[dict[str, Any]]) -> QuasiPolynomial:
    return QuasiPolynomial((Polynomial(term['poly']), term['delay']) for term in terms)

def encode(expr: TransferExpr) -> dict[str, Any]:
    '''
    Encode an expression as a JSON compatible tree. Live controller structures are encoded by a
    snapshot of their current transfer matrix.
    '''
    match expr:
        case Rational():
            return {'kind': 'rational', 'num': list(expr.num.coeffs), 'den': list(expr.den.coeffs)}
        case Delay():
            return {'kind': 'delay', 'theta': expr.theta}
        case QuasiRational():
            return {'kind': 'quasi', 'num': _quasi(expr.num), 'den': _quasi(expr.den)}
        case Closure():
            return {'kind': 'closure', 'tag': expr.tag, 'parameters': dict(expr.parameters)}
        case Constant():
            return {'kind': 'constant', 'matrix': _matrix(expr.matrix)}
        case StateSpace():
            return {'kind': 'statespace', **{name: getattr(expr, name).tolist() for name in 'ABCD'}}
        case Sum():
            return {'kind': 'sum', 'left': encode(expr.left), 'right': encode(expr.right)}
        case Product():
            return {'kind': 'product', 'left': encode(expr.left), 'right': encode(expr.right)}
        case Scale():
            return {'kind': 'scale', 'expr': encode(expr.expr), 'factor': _complex(expr.factor)}
        case Inverse():
            return {'kind': 'inverse', 'expr': encode(expr.expr)}
        case Feedback():
            return {'kind': 'feedback', 'plant': encode(expr.plant), 'controller': encode(expr.controller), 'sign': expr.sign}
        case Block():
            return {'kind': 'block', 'rows': [[encode(entry) for entry in row] for row in expr.rows]}
        case Select():
            return {'kind': 'select', 'expr': encode(expr.expr), 'rows': list(expr.rows), 'cols': list(expr.cols)}
        case Det():
            return {'kind': 'det', 'expr': encode(expr.expr)}
        case LowerLFT():
            return {
                'kind': 'lft', 'plant': encode(expr.plant), 'controller': encode(expr.controller),
                'performance': expr.performance, 'disturbances': expr.disturbances
            }
        case Regularized():
            return {'kind': 'regularized', 'f': encode(expr.f), 'h': encode(expr.h), 'poles': list(expr.poles)}
        case Parametric():
            return encode(expr.structure.expr())
        case _:
            raise TypeError(f'Cannot encode {type(expr).__name__}')

def decode(data: dict[str, Any]) -> TransferExpr:
    '''
    Rebuild an expression from its JSON tree.

    Raises:
        KeyError: When a node kind or a closure tag is unknown.
    '''
    match data['kind']:
        case 'rational':
            return Rational(Polynomial(data['num']), Polynomial(data['den']))
        case 'delay':
            return Delay(data['theta'])
        case 'quasi':
            return QuasiRational(_unquasi(data['num']), _unquasi(data['den']))
        case 'closure':
            return CLOSURES[data['tag']](**data['parameters'])
        case 'constant':
            return Constant(_unmatrix(data['matrix']))
        case 'statespace':
            return StateSpace(data['A'], data['B'], data['C'], data['D'])
        case 'sum':
            return Sum(decode(data['left']), decode(data['right']))
        case 'product':
            return Product(decode(data['left']), decode(data['right']))
        case 'scale':
            real, imag = data['factor']
            return Scale(decode(data['expr']), real if imag == 0 else complex(real, imag))
        case 'inverse':
            return Inverse(decode(data['expr']))
        case 'feedback':
            return Feedback(decode(data['plant']), decode(data['controller']), data['sign'])
        case 'block':
            return Block(tuple(tuple(decode(entry) for entry in row) for row in data['rows']))
        case 'select':
            return Select(decode(data['expr']), tuple(data['rows']), tuple(data['cols']))
        case 'det':
            return Det(decode(data['expr']))
        case 'lft':
            return LowerLFT(decode(data['plant']), decode(data['controller']), data['performance'], data['disturbances'])
        case 'regularized':
            return Regularized(decode(data['f']), decode(data['h']), tuple(data['poles']))
        case kind:
            raise KeyError(f'Unknown node kind {kind}')

def dumps(expr: TransferExpr) -> str:
    return json.dumps({'schema': SCHEMA, 'expr': encode(expr)}, sort_keys=True)

def loads(text: str) -> TransferExpr:
    document = json.loads(text)
    return decode(document['expr'] if 'expr' in document else document)

def save(expr: TransferExpr, path: str | Path):
    Path(path).write_text(dumps(expr), encoding='utf-8')

def load(path: str | Path) -> TransferExpr:
    return loads(Path(path).read_text(encoding='utf-8'))
