"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every operation builds a node in an implicit acyclic graph; ``backward``
walks the graph in reverse topological order and accumulates gradients
into ``Tensor.grad``. Only the ops needed by the encoder/decoder stack
are provided: affine maps, tanh, softmax/log-softmax, elementwise
exp/log/sqrt/mul/div, reductions, and a few sparse-input helpers so that
one-hot and bag-of-words inputs never have to be materialized densely.

All values are float64. Shapes are fixed at construction; broadcasting
is supported for elementwise ops (gradients are summed back over the
broadcast axes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Tensor:
    """A numpy array plus a gradient accumulator and a backward rule."""

    __slots__ = ("data", "grad", "_parents", "_backward", "name")

    def __init__(self, data, parents=(), name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # Operator sugar; plain numbers are wrapped as constants.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Sum a gradient back down to ``shape`` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    out = Tensor(a.data + b.data, (a, b))

    def back():
        a._accumulate(_unbroadcast(out.grad, a.data.shape))
        b._accumulate(_unbroadcast(out.grad, b.data.shape))

    out._backward = back
    return out


def sub(a, b):
    out = Tensor(a.data - b.data, (a, b))

    def back():
        a._accumulate(_unbroadcast(out.grad, a.data.shape))
        b._accumulate(_unbroadcast(-out.grad, b.data.shape))

    out._backward = back
    return out


def neg(a):
    out = Tensor(-a.data, (a,))

    def back():
        a._accumulate(-out.grad)

    out._backward = back
    return out


def mul(a, b):
    out = Tensor(a.data * b.data, (a, b))

    def back():
        a._accumulate(_unbroadcast(out.grad * b.data, a.data.shape))
        b._accumulate(_unbroadcast(out.grad * a.data, b.data.shape))

    out._backward = back
    return out


def div(a, b):
    out = Tensor(a.data / b.data, (a, b))

    def back():
        a._accumulate(_unbroadcast(out.grad / b.data, a.data.shape))
        b._accumulate(_unbroadcast(-out.grad * a.data / (b.data * b.data), b.data.shape))

    out._backward = back
    return out


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, (a, b))

    def back():
        a._accumulate(out.grad @ b.data.T)
        b._accumulate(a.data.T @ out.grad)

    out._backward = back
    return out


def affine(x, w, b):
    """x @ w + b with a broadcast bias; the workhorse of every layer."""
    return add(matmul(x, w), b)


def tanh(a):
    out = Tensor(np.tanh(a.data), (a,))

    def back():
        a._accumulate(out.grad * (1.0 - out.data * out.data))

    out._backward = back
    return out


def exp(a):
    out = Tensor(np.exp(a.data), (a,))

    def back():
        a._accumulate(out.grad * out.data)

    out._backward = back
    return out


def log(a):
    out = Tensor(np.log(a.data), (a,))

    def back():
        a._accumulate(out.grad / a.data)

    out._backward = back
    return out


def sqrt(a):
    out = Tensor(np.sqrt(a.data), (a,))

    def back():
        a._accumulate(out.grad * 0.5 / out.data)

    out._backward = back
    return out


def clamp_min(a, floor):
    """Elementwise max(a, floor); gradient is gated off where clamped."""
    mask = a.data >= floor
    out = Tensor(np.where(mask, a.data, floor), (a,))

    def back():
        a._accumulate(out.grad * mask)

    out._backward = back
    return out


def softmax(a, axis=-1):
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s, (a,))

    def back():
        g = out.grad
        dot = (g * s).sum(axis=axis, keepdims=True)
        a._accumulate(s * (g - dot))

    out._backward = back
    return out


def log_softmax(a, axis=-1):
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    out = Tensor(y, (a,))

    def back():
        g = out.grad
        a._accumulate(g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    out._backward = back
    return out


def tsum(a, axis=None, keepdims=False):
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), (a,))

    def back():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    out._backward = back
    return out


def tmean(a):
    n = a.data.size
    out = Tensor(a.data.mean(), (a,))

    def back():
        a._accumulate(np.full(a.data.shape, out.grad / n))

    out._backward = back
    return out


def _scatter_rows(index, values, n_rows):
    """Row-indexed scatter-add of a 2-D value block (bincount is much
    faster than np.add.at for repeated indices)."""
    n_cols = values.shape[1]
    flat = index[:, None] * n_cols + np.arange(n_cols)
    acc = np.bincount(flat.ravel(), weights=values.ravel(), minlength=n_rows * n_cols)
    return acc.reshape(n_rows, n_cols)


def gather_rows(w, ids):
    """Select rows ``w[ids]``; the sparse form of one-hot @ w."""
    ids = np.asarray(ids, dtype=np.intp)
    out = Tensor(w.data[ids], (w,))

    def back():
        w._accumulate(_scatter_rows(ids, out.grad, w.data.shape[0]))

    out._backward = back
    return out


def rows_weighted_sum(w, cols, weights, row_idx, n_rows):
    """Batched sparse-vector x matrix product.

    Produces ``out[b] = sum_j weights[j] * w[cols[j]]`` over the entries j
    with ``row_idx[j] == b``. This is BOW @ w without a dense BOW matrix.
    """
    cols = np.asarray(cols, dtype=np.intp)
    row_idx = np.asarray(row_idx, dtype=np.intp)
    weights = np.asarray(weights, dtype=np.float64)
    out = Tensor(_scatter_rows(row_idx, weights[:, None] * w.data[cols], n_rows), (w,))

    def back():
        w._accumulate(
            _scatter_rows(cols, weights[:, None] * out.grad[row_idx], w.data.shape[0])
        )

    out._backward = back
    return out


def take_per_row(x, ids):
    """out[b] = x[b, ids[b]] for a 2-D tensor; picks one logit per row."""
    ids = np.asarray(ids, dtype=np.intp)
    rows = np.arange(x.data.shape[0])
    out = Tensor(x.data[rows, ids], (x,))

    def back():
        g = np.zeros_like(x.data)
        g[rows, ids] = out.grad
        x._accumulate(g)

    out._backward = back
    return out


def sparse_weighted_rowsum(x, cols, weights, row_idx, n_rows):
    """out[b] = sum_j weights[j] * x[b, cols[j]] over entries with row_idx[j] == b.

    The inner product of each row of ``x`` with a sparse count vector.
    """
    cols = np.asarray(cols, dtype=np.intp)
    row_idx = np.asarray(row_idx, dtype=np.intp)
    weights = np.asarray(weights, dtype=np.float64)
    val = np.bincount(row_idx, weights=weights * x.data[row_idx, cols], minlength=n_rows)
    out = Tensor(val, (x,))

    def back():
        n_cols = x.data.shape[1]
        acc = np.bincount(
            row_idx * n_cols + cols,
            weights=weights * out.grad[row_idx],
            minlength=x.data.size,
        )
        x._accumulate(acc.reshape(x.data.shape))

    out._backward = back
    return out


def segment_sum(x, row_idx, n_rows):
    """out[b] = sum of x[k] over entries with row_idx[k] == b (1-D x)."""
    row_idx = np.asarray(row_idx, dtype=np.intp)
    out = Tensor(np.bincount(row_idx, weights=x.data, minlength=n_rows), (x,))

    def back():
        x._accumulate(out.grad[row_idx])

    out._backward = back
    return out


def backward(loss):
    """Populate ``grad`` for every tensor reachable from a scalar loss.

    Gradient accumulators of the whole graph are cleared first, so each
    call computes gradients of exactly this loss.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not np.isfinite(loss.data):
        raise FloatingPointError("loss is not finite")

    order = _topo_order(loss)
    for node in order:
        node.grad = None

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward()


def _topo_order(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


@dataclass
class GradCheckReport:
    """Per-parameter comparison of analytic and central-difference gradients."""

    step: float
    tol: float
    max_rel_error: dict = field(default_factory=dict)

    @property
    def worst(self):
        return max(self.max_rel_error.values()) if self.max_rel_error else 0.0

    @property
    def passed(self):
        return self.worst < self.tol

    def __str__(self):
        lines = [f"grad check (step={self.step:g}, tol={self.tol:g})"]
        for name, err in sorted(self.max_rel_error.items(), key=lambda kv: -kv[1]):
            lines.append(f"  {name:24s} max rel err {err:.3e}")
        lines.append(f"  => {'PASS' if self.passed else 'FAIL'} (worst {self.worst:.3e})")
        return "\n".join(lines)


def grad_check(f, params, step=1e-5, tol=1e-4, floor=1e-6):
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` must be a deterministic zero-argument callable returning a scalar
    loss Tensor built from ``params`` (a name -> Tensor mapping). Relative
    error per element is |a - n| / max(|a|, |n|, floor); elements where both
    gradients are exactly zero contribute zero error.
    """
    loss = f()
    backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    report = GradCheckReport(step=step, tol=tol)
    for name, p in params.items():
        numeric = np.zeros_like(p.data)
        flat = p.data.ravel()
        num_flat = numeric.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(f().data)
            flat[i] = orig - step
            f_minus = float(f().data)
            flat[i] = orig
            num_flat[i] = (f_plus - f_minus) / (2.0 * step)
        a = analytic[name]
        diff = np.abs(a - numeric)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        rel = np.where((a == 0.0) & (numeric == 0.0), 0.0, diff / denom)
        report.max_rel_error[name] = float(rel.max()) if rel.size else 0.0
    return report
