"""
Truncated tangential Taylor polynomials and polylog jets.

A :class:`TangentialPoly` is a truncated multivariate Taylor polynomial in
the tangential variables ``y'`` about a fixed base point::

    a(y') = sum_{|e| <= p} a_e (y' - y'_0)^e

A :class:`PolylogJet` is a truncated series in ``t`` and ``log t`` whose
coefficients are tangential polynomials::

    a(y', t) = sum_{i <= K, j <= J} a_{i,j}(y') t^i (log t)^j

Every jet entry carries its own *valid degree*: the tangential degree up to
which the entry is known exactly. Tangential differentiation lowers it by
one; differentiation in ``t`` marks the top ``t`` row as unknown (valid
degree -1). Products propagate validity exactly, so a coefficient extracted
from a long computation reports how much of its Taylor polynomial can be
trusted. Terms with log power above ``J`` are dropped by products.

Division, square roots and real powers are evaluated by composing the scalar
Taylor series of the function with the nilpotent part ``a - a_{0,0}(y'_0)``.
That part has positive total order (``t`` power plus tangential degree), so
the composition terminates after ``K + p`` terms.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import (
    DivisionByZeroLeadingTerm,
    IndexOutOfRange,
    NegativeSqrtLeadingTerm,
    ShapeMismatch,
    UnboundedLogTerm,
)

__all__ = [
    "TangentialPoly",
    "PolylogJet",
    "sqrt",
    "jet_arithmetic",
    "jet_differentiate",
    "jet_coefficient",
]


@dataclass(frozen=True)
class _Table:
    exponents: tuple
    index: dict
    degrees: np.ndarray
    product: np.ndarray  # (N*N, N), truncated monomial product
    derivative: tuple  # per variable, (N, N)


def _graded_exponents(nvars, degree):
    out = []
    for total in range(degree + 1):
        block = [e for e in itertools.product(range(total + 1), repeat=nvars) if sum(e) == total]
        out.extend(sorted(block, reverse=True))
    return tuple(out)


@functools.lru_cache(maxsize=None)
def _table(nvars, degree):
    exps = _graded_exponents(nvars, degree)
    index = {e: k for k, e in enumerate(exps)}
    size = len(exps)
    product = np.zeros((size * size, size))
    for a, ea in enumerate(exps):
        for b, eb in enumerate(exps):
            s = tuple(x + y for x, y in zip(ea, eb))
            if sum(s) <= degree:
                product[a * size + b, index[s]] = 1.0
    derivative = []
    for v in range(nvars):
        d = np.zeros((size, size))
        for beta, eb in enumerate(exps):
            up = list(eb)
            up[v] += 1
            up = tuple(up)
            if up in index:
                d[beta, index[up]] = eb[v] + 1
        derivative.append(d)
    degrees = np.array([sum(e) for e in exps], dtype=int)
    return _Table(exps, index, degrees, product, tuple(derivative))


def n_monomials(nvars, degree):
    if degree < 0:
        return 0
    return math.comb(nvars + degree, degree)


def _binomial_series(exponent, b0, nterms):
    """Coefficients of (b0 + d)^exponent in powers of d, up to d^nterms."""
    if b0 == 0.0:
        raise DivisionByZeroLeadingTerm("leading coefficient vanishes")
    if b0 < 0 and exponent != int(exponent):
        raise NegativeSqrtLeadingTerm(f"leading coefficient {b0!r} is negative")
    coefs = [b0**exponent]
    for m in range(1, nterms + 1):
        coefs.append(coefs[-1] * (exponent - (m - 1)) / (m * b0))
    return coefs


class _NilpotentAlgebra:
    """Division, roots and powers shared by polys and jets."""

    def _leading(self):
        raise NotImplementedError

    def _nilpotency(self):
        raise NotImplementedError

    def _compose_power(self, exponent):
        b0 = self._leading()
        if exponent == 0.5 and not b0 > 0:
            raise NegativeSqrtLeadingTerm(f"leading coefficient {b0!r} is not positive")
        nterms = self._nilpotency()
        coefs = _binomial_series(exponent, b0, nterms)
        delta = self - b0
        acc = coefs[-1]
        for c in reversed(coefs[:-1]):
            acc = delta * acc + c
        if not isinstance(acc, type(self)):
            acc = self._like_constant(acc)
        return acc

    def reciprocal(self):
        return self._compose_power(-1.0)

    def sqrt(self):
        return self._compose_power(0.5)

    def __pow__(self, exponent):
        if isinstance(exponent, (int, np.integer)):
            exponent = int(exponent)
            if exponent < 0:
                return self.reciprocal() ** (-exponent)
            result = self._like_constant(1.0)
            base = self
            while exponent:
                if exponent & 1:
                    result = result * base
                base = base * base
                exponent >>= 1
            return result
        return self._compose_power(float(exponent))

    def __truediv__(self, other):
        if isinstance(other, _NilpotentAlgebra):
            return self * other.reciprocal()
        if other == 0:
            raise DivisionByZeroLeadingTerm("division by zero scalar")
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other


class TangentialPoly(_NilpotentAlgebra):
    """Truncated Taylor polynomial in the tangential variables.

    Parameters
    ----------
    base_point : sequence of float
        Expansion point ``y'_0``; its length fixes the number of variables.
    degree : int
        Truncation degree ``p``.
    coeffs : mapping or array_like, optional
        Either ``{multi_index: value}`` or a dense array in graded order.
    """

    __array_ufunc__ = None
    __slots__ = ("base_point", "degree", "coeffs")

    def __init__(self, base_point, degree, coeffs=None):
        self.base_point = tuple(float(b) for b in np.atleast_1d(base_point))
        self.degree = int(degree)
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        tab = _table(self.nvars, self.degree)
        size = len(tab.exponents)
        if coeffs is None:
            arr = np.zeros(size)
        elif isinstance(coeffs, Mapping):
            arr = np.zeros(size)
            for e, val in coeffs.items():
                e = tuple(int(x) for x in np.atleast_1d(e))
                if len(e) != self.nvars:
                    raise ShapeMismatch(f"multi-index {e} has wrong length")
                if sum(e) <= self.degree:
                    arr[tab.index[e]] += float(val)
        else:
            arr = np.array(coeffs, dtype=float)
            if arr.shape != (size,):
                raise ShapeMismatch(f"expected {size} coefficients, got {arr.shape}")
        self.coeffs = arr

    # construction
    @classmethod
    def constant(cls, base_point, degree, value):
        out = cls(base_point, degree)
        out.coeffs[0] = float(value)
        return out

    @classmethod
    def variable(cls, base_point, degree, axis):
        """The coordinate function ``y_axis`` expanded about ``base_point``."""
        out = cls.constant(base_point, degree, np.atleast_1d(base_point)[axis])
        if degree >= 1:
            e = [0] * out.nvars
            e[axis] = 1
            out.coeffs[_table(out.nvars, degree).index[tuple(e)]] = 1.0
        return out

    @classmethod
    def variables(cls, base_point, degree):
        n = len(np.atleast_1d(base_point))
        return [cls.variable(base_point, degree, k) for k in range(n)]

    @property
    def nvars(self):
        return len(self.base_point)

    @property
    def exponents(self):
        return _table(self.nvars, self.degree).exponents

    def coefficient(self, multi_index):
        e = tuple(int(x) for x in np.atleast_1d(multi_index))
        if sum(e) > self.degree:
            raise IndexOutOfRange(f"{e} exceeds degree {self.degree}")
        return float(self.coeffs[_table(self.nvars, self.degree).index[e]])

    def items(self):
        return [(e, float(c)) for e, c in zip(self.exponents, self.coeffs)]

    def truncate(self, degree):
        degree = int(degree)
        if degree > self.degree:
            raise IndexOutOfRange(f"cannot raise degree {self.degree} to {degree}")
        return TangentialPoly(self.base_point, degree, self.coeffs[: n_monomials(self.nvars, degree)])

    def padded(self, degree):
        """Same coefficients stored at a larger degree (new entries zero)."""
        arr = np.zeros(n_monomials(self.nvars, degree))
        arr[: self.coeffs.size] = self.coeffs
        return TangentialPoly(self.base_point, degree, arr)

    def _leading(self):
        return float(self.coeffs[0])

    def _nilpotency(self):
        return self.degree

    def _like_constant(self, value):
        return TangentialPoly.constant(self.base_point, self.degree, value)

    def __call__(self, y):
        return self.evaluate(y)

    def evaluate(self, y):
        """Value at ``y``: scalars, arrays (broadcast) or other Taylor objects (composition)."""
        y = list(y) if isinstance(y, (list, tuple, np.ndarray)) else [y]
        y = [v if isinstance(v, _NilpotentAlgebra) else np.asarray(v, dtype=float) for v in y]
        if len(y) != self.nvars:
            raise ShapeMismatch("point has wrong dimension")
        dy = [v - b for v, b in zip(y, self.base_point)]
        total = 0.0
        for e, c in zip(self.exponents, self.coeffs):
            if c == 0.0:
                continue
            term = c
            for d, k in zip(dy, e):
                if k:
                    term = term * d**k
            total = total + term
        return total

    def diff(self, axis):
        """Partial derivative along ``axis``; the degree drops by one."""
        if not 0 <= axis < self.nvars:
            raise IndexOutOfRange(f"axis {axis} out of range")
        tab = _table(self.nvars, self.degree)
        if self.degree == 0:
            raise IndexOutOfRange("derivative of a degree-0 polynomial is unknown")
        d = tab.derivative[axis] @ self.coeffs
        return TangentialPoly(self.base_point, self.degree - 1, d[: n_monomials(self.nvars, self.degree - 1)])

    def gradient(self):
        return [self.diff(k) for k in range(self.nvars)]

    # arithmetic
    def _coerce(self, other):
        if isinstance(other, TangentialPoly):
            if other.base_point != self.base_point:
                raise ShapeMismatch("base points differ")
            return other
        return None

    def __add__(self, other):
        if isinstance(other, PolylogJet):
            return NotImplemented
        o = self._coerce(other)
        if o is None:
            out = TangentialPoly(self.base_point, self.degree, self.coeffs.copy())
            out.coeffs[0] += float(other)
            return out
        deg = min(self.degree, o.degree)
        size = n_monomials(self.nvars, deg)
        return TangentialPoly(self.base_point, deg, self.coeffs[:size] + o.coeffs[:size])

    __radd__ = __add__

    def __neg__(self):
        return TangentialPoly(self.base_point, self.degree, -self.coeffs)

    def __sub__(self, other):
        if isinstance(other, PolylogJet):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PolylogJet):
            return NotImplemented
        o = self._coerce(other)
        if o is None:
            return TangentialPoly(self.base_point, self.degree, self.coeffs * float(other))
        deg = min(self.degree, o.degree)
        size = n_monomials(self.nvars, deg)
        a, b = self.coeffs[:size], o.coeffs[:size]
        prod = np.outer(a, b).reshape(-1) @ _table(self.nvars, deg).product
        return TangentialPoly(self.base_point, deg, prod)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, TangentialPoly):
            return NotImplemented
        return (
            self.base_point == other.base_point
            and self.degree == other.degree
            and np.array_equal(self.coeffs, other.coeffs)
        )

    __hash__ = None

    def __repr__(self):
        terms = ", ".join(f"{e}: {c:.6g}" for e, c in self.items() if c != 0.0)
        return f"TangentialPoly(base={self.base_point}, degree={self.degree}, {{{terms}}})"

    def to_dict(self):
        return {
            "base_point": list(self.base_point),
            "degree": self.degree,
            "coeffs": [{"multi_index": list(e), "value": c} for e, c in self.items() if c != 0.0],
        }

    @classmethod
    def from_dict(cls, data):
        coeffs = {tuple(d["multi_index"]): d["value"] for d in data["coeffs"]}
        return cls(data["base_point"], data["degree"], coeffs)


class PolylogJet(_NilpotentAlgebra):
    """Truncated series ``sum a_{i,j}(y') t^i (log t)^j``.

    Storage is a dense ``(K+1, J+1, N)`` array of monomial coefficients in
    graded order plus a ``(K+1, J+1)`` array of valid degrees. ``-1`` marks
    an entry as unknown.
    """

    __array_ufunc__ = None
    __slots__ = ("base_point", "degree", "coeffs", "valid")

    def __init__(self, base_point, degree, t_order, log_order, coeffs=None, valid=None):
        self.base_point = tuple(float(b) for b in np.atleast_1d(base_point))
        self.degree = int(degree)
        K, J = int(t_order), int(log_order)
        if K < 0 or J < 0 or self.degree < 0:
            raise ValueError("truncation orders must be nonnegative")
        size = n_monomials(len(self.base_point), self.degree)
        self.coeffs = np.zeros((K + 1, J + 1, size)) if coeffs is None else np.asarray(coeffs, float)
        if self.coeffs.shape != (K + 1, J + 1, size):
            raise ShapeMismatch(f"coefficient array has shape {self.coeffs.shape}")
        if valid is None:
            valid = np.full((K + 1, J + 1), self.degree, dtype=int)
        self.valid = np.minimum(np.asarray(valid, dtype=int), self.degree)
        self._mask()

    # construction
    @classmethod
    def zeros(cls, base_point, degree, t_order, log_order):
        return cls(base_point, degree, t_order, log_order)

    @classmethod
    def from_terms(cls, terms, base_point, degree, t_order, log_order):
        """Build from ``{(i, j): TangentialPoly | float}``; missing entries are exact zeros."""
        out = cls(base_point, degree, t_order, log_order)
        for (i, j), val in terms.items():
            if not (0 <= i <= out.t_max and 0 <= j <= out.log_order):
                raise IndexOutOfRange(f"term ({i}, {j}) outside truncation")
            out._set(i, j, val)
        out._check_bounded()
        return out

    @classmethod
    def t_variable(cls, base_point, degree, t_order, log_order):
        return cls.from_terms({(1, 0): 1.0} if t_order >= 1 else {}, base_point, degree, t_order, log_order)

    def like(self, terms=None):
        """A jet with the same truncation, optionally filled from ``terms``."""
        return PolylogJet.from_terms(terms or {}, self.base_point, self.degree, self.t_max, self.log_order)

    def _set(self, i, j, val):
        if isinstance(val, TangentialPoly):
            if val.base_point != self.base_point:
                raise ShapeMismatch("base points differ")
            deg = min(val.degree, self.degree)
            size = n_monomials(self.nvars, deg)
            self.coeffs[i, j] = 0.0
            self.coeffs[i, j, :size] = val.coeffs[:size]
            self.valid[i, j] = deg
        else:
            self.coeffs[i, j] = 0.0
            self.coeffs[i, j, 0] = float(val)
            self.valid[i, j] = self.degree

    # shape
    @property
    def nvars(self):
        return len(self.base_point)

    @property
    def t_max(self):
        """Storage truncation order ``K``."""
        return self.coeffs.shape[0] - 1

    @property
    def log_order(self):
        return self.coeffs.shape[1] - 1

    @property
    def t_order(self):
        """Highest ``t`` power up to which every entry is known."""
        known = (self.valid >= 0).all(axis=1)
        bad = np.flatnonzero(~known)
        return int(bad[0]) - 1 if bad.size else self.t_max

    @property
    def shape(self):
        return (self.t_max, self.log_order, self.degree, self.base_point)

    def _mask(self):
        degs = _table(self.nvars, self.degree).degrees
        self.coeffs[degs[None, None, :] > self.valid[:, :, None]] = 0.0

    def _orders(self):
        """Lowest tangential degree of a nonzero coefficient, else valid + 1."""
        degs = _table(self.nvars, self.degree).degrees
        big = self.degree + 2
        nz = np.where(self.coeffs != 0.0, degs[None, None, :], big).min(axis=2)
        return np.where(nz == big, self.valid + 1, nz)

    def _check_bounded(self):
        if self.log_order and np.any(self.coeffs[0, 1:] != 0.0):
            raise UnboundedLogTerm("entries t^0 (log t)^j with j >= 1 must vanish")

    def _leading(self):
        if self.valid[0, 0] < 0:
            raise DivisionByZeroLeadingTerm("leading coefficient is unknown")
        return float(self.coeffs[0, 0, 0])

    def _nilpotency(self):
        return self.t_max + self.degree

    def _like_constant(self, value):
        return self.like({(0, 0): value})

    def copy(self):
        return PolylogJet(self.base_point, self.degree, self.t_max, self.log_order, self.coeffs.copy(), self.valid.copy())

    # access
    def coefficient(self, i, j):
        if not (0 <= i <= self.t_max and 0 <= j <= self.log_order):
            raise IndexOutOfRange(f"({i}, {j}) outside truncation ({self.t_max}, {self.log_order})")
        deg = int(self.valid[i, j])
        if deg < 0:
            raise IndexOutOfRange(f"coefficient ({i}, {j}) is beyond the known t-order {self.t_order}")
        return TangentialPoly(self.base_point, deg, self.coeffs[i, j, : n_monomials(self.nvars, deg)])

    def constant_terms(self):
        """Array of ``a_{i,j}(y'_0)`` (NaN where unknown)."""
        return np.where(self.valid >= 0, self.coeffs[:, :, 0], np.nan)

    def evaluate(self, y, t):
        """Sum of the known entries at ``(y', t)``."""
        t = np.asarray(t, dtype=float)
        has_log = self.log_order and np.any(self.coeffs[:, 1:] != 0.0)
        if has_log and np.any(t <= 0):
            raise ValueError("log terms need t > 0")
        logt = np.log(np.where(t > 0, t, 1.0)) if has_log else None
        total = 0.0
        for i in range(self.t_max + 1):
            for j in range(self.log_order + 1):
                if self.valid[i, j] < 0 or not self.coeffs[i, j].any():
                    continue
                term = self.coefficient(i, j).evaluate(y) * t**i
                if j:
                    term = term * logt**j
                total = total + term
        return total

    # arithmetic
    def _promote(self, other):
        if isinstance(other, PolylogJet):
            if other.coeffs.shape != self.coeffs.shape or other.base_point != self.base_point:
                raise ShapeMismatch(f"jet shapes differ: {self.shape} vs {other.shape}")
            return other
        if isinstance(other, TangentialPoly):
            return self.like({(0, 0): other})
        return None

    def __add__(self, other):
        o = self._promote(other)
        if o is None:
            out = self.copy()
            out.coeffs[0, 0, 0] += float(other)
            return out
        return PolylogJet(
            self.base_point, self.degree, self.t_max, self.log_order,
            self.coeffs + o.coeffs, np.minimum(self.valid, o.valid),
        )

    __radd__ = __add__

    def __neg__(self):
        return PolylogJet(self.base_point, self.degree, self.t_max, self.log_order, -self.coeffs, self.valid.copy())

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._promote(other)
        if o is None:
            return PolylogJet(
                self.base_point, self.degree, self.t_max, self.log_order,
                self.coeffs * float(other), self.valid.copy(),
            )
        K, J = self.t_max, self.log_order
        size = self.coeffs.shape[2]
        prod_table = _table(self.nvars, self.degree).product
        A, B = self.coeffs, o.coeffs
        va, vb = self.valid, o.valid
        oa, ob = self._orders(), o._orders()
        out = np.zeros_like(A)
        vout = np.full((K + 1, J + 1), self.degree, dtype=int)
        for i1 in range(K + 1):
            for j1 in range(J + 1):
                bsub = B[: K + 1 - i1, : J + 1 - j1]
                v = np.minimum(va[i1, j1] + ob[: K + 1 - i1, : J + 1 - j1], vb[: K + 1 - i1, : J + 1 - j1] + oa[i1, j1])
                np.minimum(vout[i1:, j1:], v, out=vout[i1:, j1:])
                a = A[i1, j1]
                if a.any():
                    outer = a[:, None] * bsub[..., None, :]
                    out[i1:, j1:] += outer.reshape(bsub.shape[:2] + (size * size,)) @ prod_table
        return PolylogJet(self.base_point, self.degree, K, J, out, vout)

    __rmul__ = __mul__

    def diff_t(self):
        """``d/dt`` using d(t^i L^j) = i t^(i-1) L^j + j t^(i-1) L^(j-1)."""
        K, J = self.t_max, self.log_order
        out = np.zeros_like(self.coeffs)
        valid = np.full_like(self.valid, -1)
        for i in range(1, K + 1):
            for j in range(J + 1):
                c = i * self.coeffs[i, j]
                v = self.valid[i, j]
                if j < J:
                    c = c + (j + 1) * self.coeffs[i, j + 1]
                    v = min(v, self.valid[i, j + 1])
                out[i - 1, j] = c
                valid[i - 1, j] = v
        res = PolylogJet(self.base_point, self.degree, K, J, out, valid)
        res._check_bounded()
        return res

    def diff_y(self, axis):
        if not 0 <= axis < self.nvars:
            raise IndexOutOfRange(f"tangential axis {axis} out of range")
        d = _table(self.nvars, self.degree).derivative[axis]
        out = self.coeffs @ d.T
        valid = np.where(self.valid >= 0, self.valid - 1, -1)
        return PolylogJet(self.base_point, self.degree, self.t_max, self.log_order, out, valid)

    def diff(self, axis):
        """Derivative along ``'t'`` or a tangential axis index."""
        return self.diff_t() if axis == "t" else self.diff_y(int(axis))

    def max_abs(self, t_below=None):
        """Largest known coefficient magnitude, optionally over rows ``i < t_below``."""
        rows = slice(None) if t_below is None else slice(0, t_below)
        known = self.valid[rows] >= 0
        vals = np.abs(self.coeffs[rows]).max(axis=2)
        return float(vals[known].max()) if known.any() else 0.0

    def __repr__(self):
        return (
            f"PolylogJet(K={self.t_max}, J={self.log_order}, p={self.degree}, "
            f"base={self.base_point}, t_order={self.t_order})"
        )

    def to_dict(self):
        entries = []
        for i in range(self.t_max + 1):
            for j in range(self.log_order + 1):
                for e, c in zip(_table(self.nvars, self.degree).exponents, self.coeffs[i, j]):
                    if c != 0.0:
                        entries.append({"i": i, "j": j, "multi_index": list(e), "value": float(c)})
        return {
            "base_point": list(self.base_point),
            "degree": self.degree,
            "t_order": self.t_max,
            "log_order": self.log_order,
            "valid_degree": self.valid.tolist(),
            "coeffs": entries,
        }

    @classmethod
    def from_dict(cls, data):
        out = cls(data["base_point"], data["degree"], data["t_order"], data["log_order"], valid=data.get("valid_degree"))
        index = _table(out.nvars, out.degree).index
        for d in data["coeffs"]:
            out.coeffs[d["i"], d["j"], index[tuple(d["multi_index"])]] = d["value"]
        return out


def sqrt(x):
    """Square root for floats, arrays, polynomials and jets."""
    if isinstance(x, _NilpotentAlgebra):
        return x.sqrt()
    return np.sqrt(x)


def jet_arithmetic(a, b=None, op="add", m=None):
    """Apply ``op`` in {add, sub, mul, div, sqrt, int_pow} to jets."""
    if op in ("add", "sub", "mul", "div"):
        if b is None:
            raise ValueError(f"{op} needs two operands")
        if isinstance(a, PolylogJet) and isinstance(b, PolylogJet):
            a._promote(b)
        return {"add": a.__add__, "sub": a.__sub__, "mul": a.__mul__, "div": a.__truediv__}[op](b)
    if op == "sqrt":
        return a.sqrt()
    if op == "int_pow":
        if m is None or int(m) != m:
            raise ValueError("int_pow needs an integer exponent m")
        return a ** int(m)
    raise ValueError(f"unknown op {op!r}")


def jet_differentiate(a, axis):
    return a.diff(axis)


def jet_coefficient(a, i, j):
    return a.coefficient(i, j)
