"""Truncated multivariate Taylor arithmetic (forward-mode AD of any order).

A :class:`Jet` holds the Taylor coefficients ``f_alpha = d^alpha f / alpha!`` of a
function of ``nvars`` seeded variables, truncated at total degree ``order``.
Order 2 carries value, gradient and Hessian; higher orders are used where
derivatives of derivatives are needed (the connection coefficients are third
derivatives of the metric, their theta-derivatives fourth).
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np


@functools.lru_cache(maxsize=None)
def _basis(nvars: int, order: int) -> "_Basis":
    return _Basis(nvars, order)


class _Basis:
    """Monomial ordering and product/derivative tables for one (nvars, order)."""

    def __init__(self, nvars, order):
        self.nvars = nvars
        self.order = order
        monomials = []
        for d in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(nvars), d):
                alpha = [0] * nvars
                for i in combo:
                    alpha[i] += 1
                monomials.append(tuple(alpha))
        self.monomials = monomials
        self.size = len(monomials)
        self.index = {alpha: k for k, alpha in enumerate(monomials)}
        self.degree = np.array([sum(a) for a in monomials])
        self.unit = [self.index[tuple(int(j == i) for j in range(nvars))] for i in range(nvars)] if order >= 1 else []

        ii, jj, kk = [], [], []
        for i, a in enumerate(monomials):
            for j, b in enumerate(monomials):
                if sum(a) + sum(b) <= order:
                    ii.append(i)
                    jj.append(j)
                    kk.append(self.index[tuple(x + y for x, y in zip(a, b))])
        self.prod = (np.array(ii), np.array(jj), np.array(kk))

        self.partials = []
        if order >= 1:
            lower = [a for a in monomials if sum(a) <= order - 1]
            lower_index = {a: k for k, a in enumerate(lower)}
            for v in range(nvars):
                src, dst, fac = [], [], []
                for k, a in enumerate(monomials):
                    if a[v] >= 1:
                        b = list(a)
                        b[v] -= 1
                        src.append(k)
                        dst.append(lower_index[tuple(b)])
                        fac.append(float(a[v]))
                self.partials.append((np.array(src, dtype=int), np.array(dst, dtype=int), np.array(fac)))


def _taylor_sin(a0, order, shift):
    # derivative k of sin at a0 is sin(a0 + k*pi/2); shift=1 gives cos
    cycle = (math.sin(a0), math.cos(a0), -math.sin(a0), -math.cos(a0))
    return [cycle[(k + shift) % 4] / math.factorial(k) for k in range(order + 1)]


def _taylor_hyp(a0, order, shift):
    s, c = math.sinh(a0), math.cosh(a0)
    cycle = (s, c) if shift == 0 else (c, s)
    return [cycle[k % 2] / math.factorial(k) for k in range(order + 1)]


def _taylor_pow(a0, p, order):
    coeffs = []
    with np.errstate(all="ignore"):
        for k in range(order + 1):
            if float(p).is_integer() and p >= 0 and k > p:
                coeffs.append(0.0)
                continue
            binom = 1.0
            for j in range(k):
                binom *= (p - j) / (j + 1)
            coeffs.append(float(binom * np.power(np.float64(a0), p - k)))
    return coeffs


class Jet:
    """Truncated Taylor expansion in ``nvars`` variables up to total degree ``order``."""

    __slots__ = ("coef", "basis")
    __array_ufunc__ = None  # keep numpy scalars from swallowing Jet operands

    def __init__(self, coef, basis):
        self.coef = coef
        self.basis = basis

    @classmethod
    def constant(cls, value, nvars, order):
        b = _basis(nvars, order)
        coef = np.zeros(b.size)
        coef[0] = value
        return cls(coef, b)

    @classmethod
    def variable(cls, value, index, nvars, order):
        jet = cls.constant(value, nvars, order)
        if order >= 1:
            jet.coef[jet.basis.unit[index]] = 1.0
        return jet

    @property
    def nvars(self):
        return self.basis.nvars

    @property
    def order(self):
        return self.basis.order

    @property
    def value(self) -> float:
        return float(self.coef[0])

    def grad(self) -> np.ndarray:
        return self.coef[self.basis.unit].copy()

    def hess(self) -> np.ndarray:
        m = self.nvars
        h = np.zeros((m, m))
        if self.order < 2:
            return h
        idx = self.basis.index
        for i in range(m):
            for j in range(i, m):
                alpha = [0] * m
                alpha[i] += 1
                alpha[j] += 1
                v = self.coef[idx[tuple(alpha)]]
                if i == j:
                    h[i, i] = 2.0 * v
                else:
                    h[i, j] = h[j, i] = v
        return h

    def partial(self, i: int) -> "Jet":
        """Jet of d/dx_i, one order lower."""
        src, dst, fac = self.basis.partials[i]
        lower = _basis(self.nvars, self.order - 1)
        coef = np.zeros(lower.size)
        coef[dst] = self.coef[src] * fac
        return Jet(coef, lower)

    def truncate(self, order: int) -> "Jet":
        lower = _basis(self.nvars, order)
        return Jet(self.coef[: lower.size].copy(), lower)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coef)))

    # arithmetic ---------------------------------------------------------

    def _lift(self, other):
        if isinstance(other, Jet):
            if other.basis is not self.basis:
                raise ValueError("jets over different variable sets cannot be combined")
            return other
        return None

    def __neg__(self):
        return Jet(-self.coef, self.basis)

    def __pos__(self):
        return self

    def __add__(self, other):
        o = self._lift(other)
        if o is not None:
            return Jet(self.coef + o.coef, self.basis)
        coef = self.coef.copy()
        coef[0] += other
        return Jet(coef, self.basis)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        if o is not None:
            return Jet(self.coef - o.coef, self.basis)
        coef = self.coef.copy()
        coef[0] -= other
        return Jet(coef, self.basis)

    def __rsub__(self, other):
        coef = -self.coef
        coef[0] += other
        return Jet(coef, self.basis)

    def __mul__(self, other):
        o = self._lift(other)
        if o is None:
            return Jet(self.coef * other, self.basis)
        i, j, k = self.basis.prod
        with np.errstate(all="ignore"):
            w = self.coef[i] * o.coef[j]
        return Jet(np.bincount(k, weights=w, minlength=self.basis.size), self.basis)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        if o is None:
            with np.errstate(all="ignore"):
                return Jet(self.coef / np.float64(other), self.basis)
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def _compose(self, taylor):
        """f(self) given taylor[k] = f^(k)(a0)/k!."""
        h = self.coef.copy()
        h[0] = 0.0
        h = Jet(h, self.basis)
        out = Jet.constant(taylor[-1], self.nvars, self.order)
        for t in reversed(taylor[:-1]):
            out = out * h + t
        return out

    def powc(self, p: float) -> "Jet":
        return self._compose(_taylor_pow(self.value, p, self.order))

    def reciprocal(self):
        return self.powc(-1.0)

    def sqrt(self):
        return self.powc(0.5)

    def exp(self):
        e = math.exp(self.value) if self.value < 709.0 else math.inf
        return self._compose([e / math.factorial(k) for k in range(self.order + 1)])

    def log(self):
        a0 = self.value
        if not a0 > 0.0:
            return Jet(np.full(self.basis.size, math.nan), self.basis)
        taylor = [math.log(a0)] + [(-1.0) ** (k + 1) / (k * a0**k) for k in range(1, self.order + 1)]
        return self._compose(taylor)

    def sin(self):
        return self._compose(_taylor_sin(self.value, self.order, 0))

    def cos(self):
        return self._compose(_taylor_sin(self.value, self.order, 1))

    def tan(self):
        return self.sin() / self.cos()

    def sinh(self):
        return self._compose(_taylor_hyp(self.value, self.order, 0))

    def cosh(self):
        return self._compose(_taylor_hyp(self.value, self.order, 1))

    def tanh(self):
        return self.sinh() / self.cosh()

    def abs(self):
        # one-sided at the kink: sign(0) := +1
        return self if self.value >= 0.0 else -self

    def __pow__(self, other):
        if isinstance(other, Jet):
            return (other * self.log()).exp()
        return self.powc(float(other))

    def __rpow__(self, other):
        other = float(other)
        if other <= 0.0:
            return Jet(np.full(self.basis.size, math.nan), self.basis)
        return (self * math.log(other)).exp()

    def __repr__(self):
        return f"Jet(value={self.value!r}, nvars={self.nvars}, order={self.order})"


@dataclass(frozen=True)
class Jet2:
    """Value, gradient and (exactly symmetric) Hessian of a scalar function."""

    value: float
    grad: np.ndarray
    hess: np.ndarray

    @classmethod
    def from_jet(cls, jet, nvars):
        if isinstance(jet, Jet):
            if jet.order < 2:
                raise ValueError("Jet2 needs an order >= 2 jet")
            return cls(jet.value, jet.grad(), jet.hess())
        return cls(float(jet), np.zeros(nvars), np.zeros((nvars, nvars)))
