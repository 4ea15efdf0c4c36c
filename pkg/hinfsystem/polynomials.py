from __future__ import annotations
from typing import Iterable
from typing import Sequence
from dataclasses import dataclass
import numpy as np
from numpy.polynomial import polynomial as P

def _trim(coeffs: Iterable[float]) -> tuple[float, ...]:
    values = [float(c) for c in coeffs]
    while values and values[-1] == 0.0:
        values.pop()
    return tuple(values)

@dataclass(frozen=True)
class Polynomial:
    '''
    A real polynomial with coefficients stored in ascending degree. Trailing zero coefficients
    are trimmed exactly, so the zero polynomial has an empty coefficient tuple.

    Parameters:
        coeffs (Sequence[float]): The coefficients c0, c1, ... of c0 + c1 s + ...
    '''
    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Sequence[float] | float = ()):
        if np.isscalar(coeffs):
            coeffs = (coeffs,)
        object.__setattr__(self, 'coeffs', _trim(coeffs))

    @classmethod
    def descending(cls, coeffs: Sequence[float]) -> Polynomial:
        '''
        Build a polynomial from coefficients in descending degree, as printed in the literature
        and as used by scipy and python-control.
        '''
        return cls(list(coeffs)[::-1])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def leading(self) -> float:
        return self.coeffs[-1] if self.coeffs else 0.0

    def to_descending(self) -> list[float]:
        return list(self.coeffs[::-1]) if self.coeffs else [0.0]

    def __call__(self, s):
        if self.is_zero:
            return np.zeros_like(np.asarray(s, dtype=complex))
        return P.polyval(s, self.coeffs)

    def deriv(self) -> Polynomial:
        return Polynomial(P.polyder(self.coeffs)) if self.degree > 0 else Polynomial()

    def roots(self) -> np.ndarray:
        if self.degree < 1:
            return np.array([], dtype=complex)
        return P.polyroots(self.coeffs).astype(complex)

    def __add__(self, other) -> Polynomial:
        other = as_polynomial(other)
        if other is NotImplemented:
            return NotImplemented
        return Polynomial(P.polyadd(self.coeffs or (0.0,), other.coeffs or (0.0,)))

    __radd__ = __add__

    def __neg__(self) -> Polynomial:
        return Polynomial([-c for c in self.coeffs])

    def __sub__(self, other) -> Polynomial:
        return self + (-as_polynomial(other))

    def __rsub__(self, other) -> Polynomial:
        return as_polynomial(other) + (-self)

    def __mul__(self, other) -> Polynomial:
        other = as_polynomial(other)
        if other is NotImplemented:
            return NotImplemented
        if self.is_zero or other.is_zero:
            return Polynomial()
        return Polynomial(P.polymul(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f'Polynomial({list(self.coeffs)})'

def as_polynomial(value) -> Polynomial:
    if isinstance(value, Polynomial):
        return value
    if np.isscalar(value):
        return Polynomial((float(value),))
    if isinstance(value, (list, tuple, np.ndarray)):
        return Polynomial(value)
    return NotImplemented

S = Polynomial((0.0, 1.0))

@dataclass(frozen=True)
class QuasiPolynomial:
    '''
    A finite sum of polynomials times exponentials, sum_k p_k(s) exp(-theta_k s). Terms are kept
    sorted by strictly increasing delay, equal delays merged and zero polynomials dropped.

    Parameters:
        terms (Sequence[tuple[Polynomial, float]]): Pairs of polynomial and delay in seconds.
    '''
    terms: tuple[tuple[Polynomial, float], ...]

    def __init__(self, terms: Iterable[tuple[Polynomial | Sequence[float] | float, float]] = ()):
        merged: dict[float, Polynomial] = {}
        for polynomial, delay in terms:
            delay = float(delay)
            if delay < 0:
                raise ValueError(f'Delays must be nonnegative, got {delay}')
            merged[delay] = merged.get(delay, Polynomial()) + as_polynomial(polynomial)
        object.__setattr__(self, 'terms', tuple(
            (merged[delay], delay) for delay in sorted(merged) if not merged[delay].is_zero
        ))

    @classmethod
    def constant(cls, polynomial: Polynomial | Sequence[float] | float) -> QuasiPolynomial:
        return cls([(as_polynomial(polynomial), 0.0)])

    @property
    def delays(self) -> tuple[float, ...]:
        return tuple(delay for _, delay in self.terms)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((polynomial.degree for polynomial, _ in self.terms), default=-1)

    @property
    def principal(self) -> Polynomial:
        '''
        The delay-free polynomial part.
        '''
        for polynomial, delay in self.terms:
            if delay == 0.0:
                return polynomial
        return Polynomial()

    def is_retarded(self) -> bool:
        '''
        True when the delay-free part has strictly the highest degree, so that right half plane
        zeros are confined to a bounded region.
        '''
        degree = self.principal.degree
        return degree >= 0 and all(
            polynomial.degree < degree for polynomial, delay in self.terms if delay > 0
        )

    def root_bound(self) -> float:
        '''
        A radius containing every zero with nonnegative real part of a retarded quasi-polynomial,
        from |e^{-theta s}| <= 1 on the closed right half plane (Cauchy-type bound).
        '''
        principal = self.principal
        lead = abs(principal.leading)
        total = 0.0
        for polynomial, delay in self.terms:
            for index, coefficient in enumerate(polynomial.coeffs):
                if delay == 0.0 and index == principal.degree:
                    continue
                total += abs(coefficient)
        return 1.0 + total / lead

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        value = np.zeros_like(s)
        for polynomial, delay in self.terms:
            value = value + polynomial(s) * (np.exp(-delay * s) if delay else 1.0)
        return value

    def derivative(self) -> QuasiPolynomial:
        '''
        The s-derivative, using d/ds [p(s) exp(-theta s)] = (p'(s) - theta p(s)) exp(-theta s).
        '''
        return QuasiPolynomial(
            (polynomial.deriv() - delay * polynomial, delay) for polynomial, delay in self.terms
        )

    def deflate_origin(self) -> QuasiPolynomial:
        '''
        Divide by s when every term vanishes at the origin.
        '''
        if self.is_zero or any(polynomial.coeffs[0] != 0.0 for polynomial, _ in self.terms):
            return self
        return QuasiPolynomial((Polynomial(polynomial.coeffs[1:]), delay) for polynomial, delay in self.terms)

    def __add__(self, other) -> QuasiPolynomial:
        other = as_quasi(other)
        return QuasiPolynomial(list(self.terms) + list(other.terms))

    __radd__ = __add__

    def __neg__(self) -> QuasiPolynomial:
        return QuasiPolynomial((-polynomial, delay) for polynomial, delay in self.terms)

    def __sub__(self, other) -> QuasiPolynomial:
        return self + (-as_quasi(other))

    def __rsub__(self, other) -> QuasiPolynomial:
        return as_quasi(other) + (-self)

    def __mul__(self, other) -> QuasiPolynomial:
        other = as_quasi(other)
        return QuasiPolynomial(
            (first * second, delay + shift)
            for first, delay in self.terms
            for second, shift in other.terms
        )

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return 'QuasiPolynomial(' + ' + '.join(f'{list(p.coeffs)}e^(-{d}s)' for p, d in self.terms) + ')'

def as_quasi(value) -> QuasiPolynomial:
    if isinstance(value, QuasiPolynomial):
        return value
    return QuasiPolynomial.constant(as_polynomial(value))

def delayed(polynomial: Polynomial | Sequence[float] | float, delay: float) -> QuasiPolynomial:
    return QuasiPolynomial([(as_polynomial(polynomial), delay)])
