"""Second-order forward-mode jets.

A :class:`Jet` carries a value together with its gradient and Hessian with
respect to a fixed list of seed variables (truncated Taylor arithmetic).
Problem callables are written once against numpy and evaluated either on
floats or on object arrays of jets.  Coefficients may themselves be jets,
which gives third and higher derivatives by nesting when a callable
differentiates another callable internally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DomainError


def _outer(a, b):
    if isinstance(a, np.ndarray):
        return a[:, None] * b[None, :]
    return a * b  # single-variable jets carry plain scalars


def _transpose(m):
    return m.T if isinstance(m, np.ndarray) else m


def _call(name: str, x):
    """Apply an elementary function to a float or (nested) jet."""
    if isinstance(x, Jet):
        return getattr(x, name)()
    return getattr(math, name)(x)


class Jet:
    """Scalar with gradient and (optionally) Hessian w.r.t. the seed variables.

    With a single seed variable the gradient and Hessian are stored as plain
    scalars, which keeps one-dimensional Newton loops cheap.
    """

    __slots__ = ("val", "grad", "hess")

    def __init__(self, val, grad: np.ndarray, hess: np.ndarray | None = None):
        self.val = val
        self.grad = grad
        self.hess = hess

    def __repr__(self) -> str:
        return f"Jet({self.val!r}, grad={self.grad!r})"

    # -- helpers -------------------------------------------------------------
    def _unary(self, f0, f1, f2):
        g = self.grad
        hess = None
        if self.hess is not None:
            hess = self.hess * f1 + _outer(g, g) * f2
        return Jet(f0, g * f1, hess)

    # -- arithmetic ----------------------------------------------------------
    def __neg__(self):
        return Jet(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet):
            hess = None if self.hess is None else self.hess + other.hess
            return Jet(self.val + other.val, self.grad + other.grad, hess)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return Jet(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            hess = None if self.hess is None else self.hess - other.hess
            return Jet(self.val - other.val, self.grad - other.grad, hess)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return Jet(self.val - other, self.grad, self.hess)

    def __rsub__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self, other
            hess = None
            if a.hess is not None:
                cross = _outer(a.grad, b.grad)
                hess = a.hess * b.val + b.hess * a.val + cross + _transpose(cross)
            return Jet(a.val * b.val, a.grad * b.val + b.grad * a.val, hess)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return Jet(self.val * other, self.grad * other,
                   None if self.hess is None else self.hess * other)

    __rmul__ = __mul__

    def reciprocal(self):
        inv = 1.0 / self.val
        inv2 = inv * inv
        return self._unary(inv, -inv2, 2.0 * inv2 * inv)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        if isinstance(other, np.ndarray):
            return NotImplemented
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return (self.log() * p).exp()
        if isinstance(p, np.ndarray):
            return NotImplemented
        if p == 0:
            return Jet(self.val ** 0, self.grad * 0.0, None if self.hess is None else self.hess * 0.0)
        if p == 1:
            return self
        if p == 2:
            return self * self
        x = self.val
        return self._unary(x ** p, p * x ** (p - 1), p * (p - 1) * x ** (p - 2))

    def __rpow__(self, base):
        return (self * math.log(base)).exp()

    # -- comparisons act on the value ---------------------------------------
    def __lt__(self, other):
        return value_of(self) < value_of(other)

    def __le__(self, other):
        return value_of(self) <= value_of(other)

    def __gt__(self, other):
        return value_of(self) > value_of(other)

    def __ge__(self, other):
        return value_of(self) >= value_of(other)

    def __abs__(self):
        return -self if value_of(self) < 0 else self

    # -- elementary functions (numpy object-array ufuncs dispatch here) ------
    def sin(self):
        s, c = _call("sin", self.val), _call("cos", self.val)
        return self._unary(s, c, -s)

    def cos(self):
        s, c = _call("sin", self.val), _call("cos", self.val)
        return self._unary(c, -s, -c)

    def tan(self):
        t = _call("tan", self.val)
        d = 1 + t * t
        return self._unary(t, d, 2 * t * d)

    def exp(self):
        e = _call("exp", self.val)
        return self._unary(e, e, e)

    def log(self):
        inv = 1.0 / self.val
        return self._unary(_call("log", self.val), inv, -inv * inv)

    def sqrt(self):
        r = _call("sqrt", self.val)
        d1 = 0.5 / r
        return self._unary(r, d1, -0.5 * d1 / self.val)

    def arctan(self):
        inv = 1.0 / (1 + self.val * self.val)
        return self._unary(_call("atan", self.val), inv, -2 * self.val * inv * inv)

    def tanh(self):
        t = _call("tanh", self.val)
        d = 1 - t * t
        return self._unary(t, d, -2 * t * d)

    def square(self):
        return self * self

    def absolute(self):
        return abs(self)

    def conjugate(self):
        return self


def value_of(x):
    """Strip all jet layers and return the plain float value."""
    while isinstance(x, Jet):
        x = x.val
    return x


def values_of(x) -> np.ndarray:
    """Vectorised :func:`value_of` returning a float array."""
    arr = np.asarray(x, dtype=object)
    return np.array([value_of(e) for e in arr.ravel()], dtype=float).reshape(arr.shape)


@dataclass(frozen=True)
class BlockTag:
    name: str
    size: int

    def __post_init__(self):
        if self.size <= 0:
            raise DimensionError(f"block {self.name!r} must have positive size")


@dataclass(frozen=True)
class Jet2:
    """Value and derivatives of a function, addressable by input block.

    ``value`` has shape ``(m,)`` (``()`` for scalar functions), ``grad``
    shape ``(m, n)`` and ``hess`` shape ``(m, n, n)`` with the leading axis
    dropped for scalar functions.
    """

    value: np.ndarray
    grad: np.ndarray | None
    hess: np.ndarray | None
    blocks: tuple[BlockTag, ...]

    def _slice(self, name: str) -> slice:
        start = 0
        for b in self.blocks:
            if b.name == name:
                return slice(start, start + b.size)
            start += b.size
        raise KeyError(name)

    def d(self, name: str) -> np.ndarray:
        """First partials w.r.t. one block."""
        if self.grad is None:
            raise ValueError("jet evaluated at order 0")
        return self.grad[..., self._slice(name)]

    def dd(self, a: str, b: str) -> np.ndarray:
        """Second partials; ``dd(a, b)[..., i, j] = d^2 f / d a_i d b_j``."""
        if self.hess is None:
            raise ValueError("jet evaluated below order 2")
        return self.hess[..., self._slice(a), self._slice(b)]


def seed(x: Sequence, order: int, scalar: bool = False) -> np.ndarray:
    """Object array of independent jets seeded at ``x``.

    ``scalar=True`` (one variable only) stores derivatives as plain scalars.
    """
    x = list(x)
    n = len(x)
    out = np.empty(n, dtype=object)
    if scalar:
        if n != 1:
            raise DimensionError("scalar seeding needs exactly one variable")
        out[0] = Jet(x[0], 1.0, 0.0 if order >= 2 else None)
        return out
    eye = np.eye(n)
    for i, xi in enumerate(x):
        out[i] = Jet(xi, eye[i].copy(), np.zeros((n, n)) if order >= 2 else None)
    return out


def _unpack(y, n: int, order: int):
    """Turn a jet-valued output (scalar or array) into numeric arrays."""
    arr = np.asarray(y, dtype=object)
    flat = arr.ravel()
    m = flat.size
    val = np.empty(m)
    grad = np.zeros((m, n))
    hess = np.zeros((m, n, n)) if order >= 2 else None
    for k, e in enumerate(flat):
        if isinstance(e, Jet):
            val[k] = value_of(e.val)
            grad[k] = e.grad
            if hess is not None:
                hess[k] = e.hess
        else:
            val[k] = e
    return arr.shape, val, grad, hess


def jet_eval(f: Callable, blocks: Sequence[BlockTag], x, order: int = 2) -> Jet2:
    """Evaluate ``f`` at ``x`` with derivatives up to ``order`` (0, 1 or 2)."""
    blocks = tuple(blocks)
    x = np.asarray(x, dtype=float).ravel()
    n = sum(b.size for b in blocks)
    if x.size != n:
        raise DimensionError(f"point has length {x.size}, blocks declare {n}")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if order == 0:
        val = np.asarray(f(x), dtype=float)
        if not np.all(np.isfinite(val)):
            raise DomainError("non-finite function value")
        return Jet2(val, None, None, blocks)
    shape, val, grad, hess = _unpack(f(seed(x, order, scalar=(n == 1))), n, order)
    total = val.sum() + grad.sum() + (0.0 if hess is None else hess.sum())
    if not math.isfinite(total) and not (np.all(np.isfinite(val)) and np.all(np.isfinite(grad))
                                         and (hess is None or np.all(np.isfinite(hess)))):
        raise DomainError("non-finite jet output (ill-posed evaluation point)")
    if shape == ():
        return Jet2(val.reshape(()), grad[0], None if hess is None else hess[0], blocks)
    return Jet2(val.reshape(shape), grad.reshape(shape + (n,)),
                None if hess is None else hess.reshape(shape + (n, n)), blocks)


def scalar_derivatives(f: Callable, x: float) -> tuple[float, float, float]:
    """Value, first and second derivative of a function of one variable.

    ``f`` receives a length-1 array (matching the block calling convention).
    """
    y = f(np.array([Jet(float(x), 1.0, 0.0)], dtype=object))
    if not isinstance(y, Jet):
        return float(y), 0.0, 0.0
    out = (float(value_of(y.val)), float(y.grad), float(y.hess))
    if not math.isfinite(sum(out)):
        raise DomainError("non-finite jet output (ill-posed evaluation point)")
    return out


def jet_eval_nested(f: Callable, x, order: int = 2):
    """Jet evaluation of ``f`` at a point whose entries may already be jets.

    Returns ``(value, grad, hess)`` with object entries, so the result stays
    differentiable with respect to the outer seeds.
    """
    x = list(np.asarray(x, dtype=object).ravel())
    n = len(x)
    y = np.asarray(f(seed(x, order)), dtype=object)
    flat = y.ravel()
    val = np.empty(flat.size, dtype=object)
    grad = np.empty((flat.size, n), dtype=object)
    hess = np.empty((flat.size, n, n), dtype=object) if order >= 2 else None
    for k, e in enumerate(flat):
        if isinstance(e, Jet) and e.grad.shape == (n,):
            val[k] = e.val
            grad[k] = e.grad
            if hess is not None:
                hess[k] = e.hess
        else:
            val[k] = e
            grad[k] = 0.0
            if hess is not None:
                hess[k] = 0.0
    if y.shape == ():
        return val[0], grad[0], None if hess is None else hess[0]
    return (val.reshape(y.shape), grad.reshape(y.shape + (n,)),
            None if hess is None else hess.reshape(y.shape + (n, n)))


def fd_check(f: Callable, x, step: float = 1e-5, order: int = 1, step2: float = 1e-4) -> float:
    """Max relative deviation between jet derivatives and central differences.

    Entries are compared as ``|jet - fd| / max(1, |jet|)``.  ``order=2`` also
    checks second derivatives with the four-point stencil at ``step2``.
    """
    if step <= 0 or step2 <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    jet = jet_eval(f, [BlockTag("x", n)], x, order=max(order, 1))

    def fv(z):
        return np.asarray(f(z), dtype=float).ravel()

    grad = np.asarray(jet.grad).reshape(-1, n)
    dev = 0.0
    eye = np.eye(n)
    for i in range(n):
        fd = (fv(x + step * eye[i]) - fv(x - step * eye[i])) / (2 * step)
        dev = max(dev, float(np.max(np.abs(grad[:, i] - fd) / np.maximum(1.0, np.abs(grad[:, i])))))
    if order >= 2:
        hess = np.asarray(jet.hess).reshape(-1, n, n)
        h = step2
        for i in range(n):
            for j in range(i, n):
                ei, ej = h * eye[i], h * eye[j]
                fd = (fv(x + ei + ej) - fv(x + ei - ej) - fv(x - ei + ej) + fv(x - ei - ej)) / (4 * h * h)
                ref = hess[:, i, j]
                dev = max(dev, float(np.max(np.abs(ref - fd) / np.maximum(1.0, np.abs(ref)))))
    return dev
