"""Forward-mode automatic differentiation on batched dual numbers.

Model callbacks (costs, dynamics, constraints) are plain array functions.
Evaluating them on :class:`Dual` inputs yields exact first derivatives along
a batch of seed directions; :class:`Dual2` carries two direction batches plus
the mixed block, which yields exact second derivatives (hyper-dual
arithmetic). Central finite differences are provided as an independent
cross-check.

Supported operations inside differentiated functions: ``+ - * / **``,
``@`` against plain matrices, indexing/slicing, and the module functions
``sqrt``, ``exp``, ``log``, ``sin``, ``cos``, ``sum``, ``dot``,
``concatenate``. Comparisons act on values only.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Dual",
    "Dual2",
    "jacobian",
    "gradient",
    "hessian",
    "mixed_second",
    "weighted_hessian",
    "weighted_mixed",
    "fd_jacobian",
    "fd_gradient",
    "fd_hessian",
    "sqrt",
    "exp",
    "log",
    "sin",
    "cos",
    "sum",
    "dot",
    "concatenate",
]

_builtin_sum = sum


def _val(x):
    return x.val if isinstance(x, (Dual, Dual2)) else np.asarray(x, dtype=float)


def _expand(v):
    # values broadcast against derivative blocks through one trailing axis
    return np.asarray(v, dtype=float)[..., None]


class Dual:
    """Value plus first derivatives along ``m`` seed directions."""

    __slots__ = ("val", "dot")
    __array_ufunc__ = None  # force numpy to defer to our reflected operators

    def __init__(self, val, dot):
        self.val = np.asarray(val, dtype=float)
        self.dot = np.asarray(dot, dtype=float)

    @property
    def ndirs(self):
        return self.dot.shape[-1]

    @property
    def shape(self):
        return self.val.shape

    def __repr__(self):
        return f"Dual(val={self.val!r})"

    def __len__(self):
        return len(self.val)

    def __getitem__(self, idx):
        return Dual(self.val[idx], self.dot[idx])

    def __neg__(self):
        return Dual(-self.val, -self.dot)

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.dot + other.dot)
        return Dual(self.val + _val(other), _match(self.dot, self.val, _val(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other if isinstance(other, Dual) else -_val(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                self.dot * _expand(other.val) + other.dot * _expand(self.val),
            )
        ov = _val(other)
        return Dual(self.val * ov, self.dot * _expand(ov))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            return Dual(
                self.val * inv,
                (self.dot - other.dot * _expand(self.val * inv)) * _expand(inv),
            )
        ov = _val(other)
        return Dual(self.val / ov, self.dot / _expand(ov))

    def __rtruediv__(self, other):
        ov = _val(other)
        inv = 1.0 / self.val
        return Dual(ov * inv, -self.dot * _expand(ov * inv * inv))

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("Dual ** exponent must be a plain number")
        return Dual(self.val**p, self.dot * _expand(p * self.val ** (p - 1)))

    def __matmul__(self, other):
        if isinstance(other, Dual):
            if self.val.ndim != 1 or other.val.ndim != 1:
                raise TypeError("Dual @ Dual supports 1-D inner products only")
            return dot(self, other)
        ov = _val(other)
        if self.val.ndim == 1 and ov.ndim in (1, 2):
            val = self.val @ ov
            dotpart = np.einsum("qm,q...->...m", self.dot, ov)
            return Dual(val, dotpart)
        raise TypeError("unsupported Dual matmul operand shapes")

    def __rmatmul__(self, other):
        ov = _val(other)
        if ov.ndim == 2 and self.val.ndim == 1:
            return Dual(ov @ self.val, ov @ self.dot)
        raise TypeError("unsupported matmul operand shapes for Dual")

    def __lt__(self, other):
        return self.val < _val(other)

    def __le__(self, other):
        return self.val <= _val(other)

    def __gt__(self, other):
        return self.val > _val(other)

    def __ge__(self, other):
        return self.val >= _val(other)


def _match(dot, val, other_val):
    # addition with a constant: derivative block unchanged, but the value
    # broadcast may enlarge the leading shape
    out_shape = np.broadcast_shapes(np.shape(val), np.shape(other_val))
    if out_shape == np.shape(val):
        return dot
    return np.broadcast_to(dot, out_shape + (dot.shape[-1],)).copy()


class Dual2:
    """Value, two first-derivative batches, and the mixed second block.

    ``d1`` has trailing axis ``m1``, ``d2`` trailing axis ``m2`` and ``d12``
    trailing axes ``(m1, m2)``. Seeding ``d1 = d2 = I`` on the same variable
    yields the full Hessian in ``d12``; seeding different variables yields
    mixed partials.
    """

    __slots__ = ("val", "d1", "d2", "d12")
    __array_ufunc__ = None

    def __init__(self, val, d1, d2, d12):
        self.val = np.asarray(val, dtype=float)
        self.d1 = np.asarray(d1, dtype=float)
        self.d2 = np.asarray(d2, dtype=float)
        self.d12 = np.asarray(d12, dtype=float)

    @property
    def shape(self):
        return self.val.shape

    def __repr__(self):
        return f"Dual2(val={self.val!r})"

    def __len__(self):
        return len(self.val)

    def __getitem__(self, idx):
        return Dual2(self.val[idx], self.d1[idx], self.d2[idx], self.d12[idx])

    def __neg__(self):
        return Dual2(-self.val, -self.d1, -self.d2, -self.d12)

    def _promote(self, other):
        ov = _val(other)
        m1, m2 = self.d1.shape[-1], self.d2.shape[-1]
        z1 = np.zeros(ov.shape + (m1,))
        z2 = np.zeros(ov.shape + (m2,))
        z12 = np.zeros(ov.shape + (m1, m2))
        return Dual2(ov, z1, z2, z12)

    def __add__(self, other):
        if not isinstance(other, Dual2):
            other = self._promote(other)
        return Dual2(self.val + other.val, self.d1 + other.d1, self.d2 + other.d2, self.d12 + other.d12)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other if isinstance(other, Dual2) else -_val(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Dual2):
            ov = _val(other)
            return Dual2(
                self.val * ov,
                self.d1 * _expand(ov),
                self.d2 * _expand(ov),
                self.d12 * _expand(ov)[..., None],
            )
        a, b = self, other
        cross = a.d1[..., :, None] * b.d2[..., None, :] + b.d1[..., :, None] * a.d2[..., None, :]
        return Dual2(
            a.val * b.val,
            a.d1 * _expand(b.val) + b.d1 * _expand(a.val),
            a.d2 * _expand(b.val) + b.d2 * _expand(a.val),
            a.d12 * _expand(b.val)[..., None] + b.d12 * _expand(a.val)[..., None] + cross,
        )

    __rmul__ = __mul__

    def _chain(self, g, dg, d2g):
        gp = _expand(dg)
        gpp = _expand(d2g)[..., None]
        cross = self.d1[..., :, None] * self.d2[..., None, :]
        return Dual2(g, gp * self.d1, gp * self.d2, gp[..., None] * self.d12 + gpp * cross)

    def __truediv__(self, other):
        if isinstance(other, Dual2):
            v = other.val
            return self * other._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)
        return self * (1.0 / _val(other))

    def __rtruediv__(self, other):
        v = self.val
        return _val(other) * self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("Dual2 ** exponent must be a plain number")
        v = self.val
        return self._chain(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def __rmatmul__(self, other):
        ov = _val(other)
        if ov.ndim == 2 and self.val.ndim == 1:
            return Dual2(ov @ self.val, ov @ self.d1, ov @ self.d2, np.einsum("pq,qab->pab", ov, self.d12))
        raise TypeError("unsupported matmul operand shapes for Dual2")

    def __matmul__(self, other):
        if isinstance(other, Dual2):
            if self.val.ndim != 1 or other.val.ndim != 1:
                raise TypeError("Dual2 @ Dual2 supports 1-D inner products only")
            return dot(self, other)
        raise TypeError("unsupported Dual2 matmul operand shapes")

    def __lt__(self, other):
        return self.val < _val(other)

    def __le__(self, other):
        return self.val <= _val(other)

    def __gt__(self, other):
        return self.val > _val(other)

    def __ge__(self, other):
        return self.val >= _val(other)


def _unary(x, g, dg, d2g):
    if isinstance(x, Dual):
        return Dual(g(x.val), x.dot * _expand(dg(x.val)))
    if isinstance(x, Dual2):
        v = x.val
        return x._chain(g(v), dg(v), d2g(v))
    return g(np.asarray(x, dtype=float))


def sqrt(x):
    return _unary(x, np.sqrt, lambda v: 0.5 / np.sqrt(v), lambda v: -0.25 / np.sqrt(v) ** 3)


def exp(x):
    return _unary(x, np.exp, np.exp, np.exp)


def log(x):
    return _unary(x, np.log, lambda v: 1.0 / v, lambda v: -1.0 / v**2)


def sin(x):
    return _unary(x, np.sin, np.cos, lambda v: -np.sin(v))


def cos(x):
    return _unary(x, np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v))


def sum(x, axis=None):
    if isinstance(x, Dual):
        if axis is None:
            m = x.ndirs
            return Dual(x.val.sum(), x.dot.reshape(-1, m).sum(axis=0))
        return Dual(x.val.sum(axis=axis), x.dot.sum(axis=axis))
    if isinstance(x, Dual2):
        if axis is None:
            m1, m2 = x.d1.shape[-1], x.d2.shape[-1]
            return Dual2(
                x.val.sum(),
                x.d1.reshape(-1, m1).sum(axis=0),
                x.d2.reshape(-1, m2).sum(axis=0),
                x.d12.reshape(-1, m1, m2).sum(axis=0),
            )
        return Dual2(x.val.sum(axis=axis), x.d1.sum(axis=axis), x.d2.sum(axis=axis), x.d12.sum(axis=axis))
    return np.sum(x, axis=axis)


def dot(a, b):
    """Inner product of 1-D operands, any mix of plain and dual."""
    return sum(a * b)


def concatenate(parts, axis=0):
    parts = list(parts)
    if any(isinstance(p, Dual2) for p in parts):
        ref = next(p for p in parts if isinstance(p, Dual2))
        proms = [p if isinstance(p, Dual2) else ref._promote(p) for p in parts]
        return Dual2(
            np.concatenate([p.val for p in proms], axis=axis),
            np.concatenate([p.d1 for p in proms], axis=axis),
            np.concatenate([p.d2 for p in proms], axis=axis),
            np.concatenate([p.d12 for p in proms], axis=axis),
        )
    if any(isinstance(p, Dual) for p in parts):
        ref = next(p for p in parts if isinstance(p, Dual))
        m = ref.ndirs
        vals, dots = [], []
        for p in parts:
            if isinstance(p, Dual):
                vals.append(p.val)
                dots.append(p.dot)
            else:
                pv = np.asarray(p, dtype=float)
                vals.append(pv)
                dots.append(np.zeros(pv.shape + (m,)))
        return Dual(np.concatenate(vals, axis=axis), np.concatenate(dots, axis=axis))
    return np.concatenate([np.asarray(p, dtype=float) for p in parts], axis=axis)


# -- derivative drivers -----------------------------------------------------


def _seed1(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return Dual(x, np.eye(x.size))


def jacobian(f, x):
    """Jacobian of ``f`` with respect to its 1-D argument ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = f(_seed1(x))
    if isinstance(y, Dual):
        return np.reshape(y.dot, (-1, x.size))
    return np.zeros((np.size(y), x.size))


def gradient(f, x):
    """Gradient of scalar-valued ``f`` at ``x``."""
    return jacobian(f, x)[0]


def hessian(f, x):
    """Hessian of scalar-valued ``f`` at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    eye = np.eye(n)
    y = f(Dual2(x, eye, eye, np.zeros((n, n, n))))
    if isinstance(y, Dual2):
        return np.reshape(y.d12, (n, n))
    return np.zeros((n, n))


def mixed_second(f, x, y):
    """Mixed second derivatives d^2 f / dx dy of scalar-valued ``f``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    nx, ny = x.size, y.size
    xh = Dual2(x, np.eye(nx), np.zeros((nx, ny)), np.zeros((nx, nx, ny)))
    yh = Dual2(y, np.zeros((ny, nx)), np.eye(ny), np.zeros((ny, nx, ny)))
    out = f(xh, yh)
    if isinstance(out, Dual2):
        return np.reshape(out.d12, (nx, ny))
    return np.zeros((nx, ny))


def weighted_hessian(f, x, w):
    """Hessian of w . f(x) for vector-valued ``f``."""
    w = np.asarray(w, dtype=float)
    return hessian(lambda z: dot(w, f(z)), x)


def weighted_mixed(f, x, y, w):
    """Mixed second derivatives of w . f(x, y)."""
    w = np.asarray(w, dtype=float)
    return mixed_second(lambda a, b: dot(w, f(a, b)), x, y)


# -- finite-difference cross-checks ----------------------------------------


def fd_jacobian(f, x, h=1e-6):
    """Central-difference Jacobian, the independent check on dual sweeps."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e), dtype=float) - np.asarray(f(x - e), dtype=float)) / (2 * h))
    return np.stack(cols, axis=-1).reshape(-1, x.size)


def fd_gradient(f, x, h=1e-6):
    return fd_jacobian(f, x, h)[0]


def fd_hessian(f, x, h=1e-4):
    return fd_jacobian(lambda z: fd_gradient(f, z, h), x, h)
