"""Dense log-domain tensors with axes named by integer ids.

Broadcasting always aligns axes by id, never by position.  All reductions
subtract the slice maximum before exponentiating; a slice whose maximum is
-inf reduces to -inf.
"""
from __future__ import annotations

import math
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import AxisError, ContractionError, ShapeError


class LogTensor:
    __slots__ = ("axes", "data")

    def __init__(self, axes: Sequence[int], data, *, check: bool = True):
        axes = tuple(int(a) for a in axes)
        data = np.asarray(data, dtype=np.float64)
        if len(set(axes)) != len(axes):
            raise ShapeError(f"repeated axis id in {axes}")
        if data.ndim != len(axes):
            raise ShapeError(f"data has {data.ndim} dims for axes {axes}")
        if check and data.size and (np.isnan(data).any() or np.isposinf(data).any()):
            raise ShapeError("log-tensor entries must be finite or -inf")
        self.axes = axes
        self.data = data

    @classmethod
    def scalar(cls, value: float) -> "LogTensor":
        return cls((), np.float64(value))

    @property
    def shape(self):
        return self.data.shape

    @property
    def cards(self) -> dict:
        return dict(zip(self.axes, self.data.shape))

    @property
    def ndim(self):
        return len(self.axes)

    def item(self) -> float:
        if self.axes:
            raise ShapeError(f"not a scalar: axes {self.axes}")
        return float(self.data)

    def transpose(self, axes: Sequence[int]) -> "LogTensor":
        axes = tuple(axes)
        if set(axes) != set(self.axes) or len(axes) != len(self.axes):
            raise AxisError(f"{axes} is not a permutation of {self.axes}")
        perm = [self.axes.index(a) for a in axes]
        return LogTensor(axes, self.data.transpose(perm), check=False)

    def __repr__(self):
        return f"LogTensor(axes={self.axes}, shape={self.data.shape})"


def union_axes(*axis_lists: Iterable[int]) -> tuple:
    out = []
    for axes in axis_lists:
        for a in axes:
            if a not in out:
                out.append(a)
    return tuple(out)


def expand(data: np.ndarray, axes: Sequence[int], out_axes: Sequence[int]) -> np.ndarray:
    """View ``data`` (laid out along ``axes``) broadcastable against ``out_axes``."""
    axes = tuple(axes)
    present = [a for a in out_axes if a in axes]
    if len(present) != len(axes):
        raise AxisError(f"axes {axes} not contained in {tuple(out_axes)}")
    data = np.asarray(data)
    if axes:
        data = data.transpose([axes.index(a) for a in present])
    shape = [data.shape[present.index(a)] if a in axes else 1 for a in out_axes]
    return data.reshape(shape)


def reduce_to(grad: np.ndarray, out_axes: Sequence[int], axes: Sequence[int]) -> np.ndarray:
    """Adjoint of :func:`expand`: sum a gradient over ``out_axes`` back onto ``axes``."""
    out_axes, axes = tuple(out_axes), tuple(axes)
    drop = tuple(i for i, a in enumerate(out_axes) if a not in axes)
    if drop:
        grad = grad.sum(axis=drop)
    kept = [a for a in out_axes if a in axes]
    if len(kept) > 1:
        grad = grad.transpose([kept.index(a) for a in axes])
    return grad


def _check_cards(*tensors: LogTensor):
    seen = {}
    for t in tensors:
        for a, n in zip(t.axes, t.shape):
            if seen.setdefault(a, n) != n:
                raise ShapeError(f"axis {a} has cardinality {seen[a]} and {n}")
    return seen


def log_mul(a: LogTensor, b: LogTensor) -> LogTensor:
    """Log-domain product: entrywise sum of id-aligned, broadcast entries."""
    _check_cards(a, b)
    out = union_axes(a.axes, b.axes)
    data = expand(a.data, a.axes, out) + expand(b.data, b.axes, out)
    return LogTensor(out, np.broadcast_to(data, [_card(a, b, x) for x in out]), check=False)


def _card(a, b, axis):
    return a.cards[axis] if axis in a.axes else b.cards[axis]


def _lse(data: np.ndarray, dim: int) -> np.ndarray:
    m = np.max(data, axis=dim, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        s = np.log(np.sum(np.exp(data - m), axis=dim, keepdims=True))
    return np.squeeze(s + m, axis=dim)


def logsumexp_reduce(t: LogTensor, axis: int, normalize: bool = False) -> LogTensor:
    if axis not in t.axes:
        raise AxisError(f"axis {axis} not in {t.axes}")
    dim = t.axes.index(axis)
    out = _lse(t.data, dim)
    if normalize:
        out = out - math.log(t.shape[dim])
    return LogTensor(t.axes[:dim] + t.axes[dim + 1:], out, check=False)


def logmmexp(x: LogTensor, y: LogTensor) -> LogTensor:
    """Stable log-domain matrix product over the single axis shared by x and y.

    Z[i,k] = log sum_j exp(X[i,j] + Y[j,k]), computed as
    log(exp(X - xmax) @ exp(Y - ymax)) + xmax + ymax with row/column maxima
    taken over the shared index.
    """
    if x.ndim != 2 or y.ndim != 2:
        raise ShapeError("logmmexp takes two matrices")
    shared = [a for a in x.axes if a in y.axes]
    if len(shared) != 1:
        raise ShapeError(f"logmmexp needs exactly one shared axis, got {shared}")
    _check_cards(x, y)
    (j,) = shared
    X = x.transpose([a for a in x.axes if a != j] + [j]).data
    Y = y.transpose([j] + [a for a in y.axes if a != j]).data
    Z = _logmmexp_arrays(X, Y)
    i_axis = next(a for a in x.axes if a != j)
    k_axis = next(a for a in y.axes if a != j)
    return LogTensor((i_axis, k_axis), Z, check=False)


def _logmmexp_arrays(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    xm = X.max(axis=1, keepdims=True)
    ym = Y.max(axis=0, keepdims=True)
    xm = np.where(np.isfinite(xm), xm, 0.0)
    ym = np.where(np.isfinite(ym), ym, 0.0)
    with np.errstate(divide="ignore"):
        Z = np.log(np.exp(X - xm) @ np.exp(Y - ym)) + xm + ym
    lost = np.isneginf(Z)
    if lost.any():
        # the per-factor offsets can underflow a slice whose joint maximum is
        # finite; recompute those entries from the unfused product
        ref = _lse(X[:, :, None] + Y[None, :, :], 1)
        Z = np.where(lost, ref, Z)
    return Z


def contract(factors: Sequence[LogTensor], axis: int, cardinal_norm: bool = True) -> LogTensor:
    """Sum ``axis`` out of the log-product of ``factors``.

    With ``cardinal_norm`` the sum becomes a mean over the axis.  Two factors
    of at most two axes each go through :func:`logmmexp`; anything else is
    multiplied out and reduced.
    """
    if not factors:
        raise ContractionError("nothing to contract")
    for f in factors:
        if axis not in f.axes:
            raise ContractionError(f"factor over {f.axes} does not contain axis {axis}")
    cards = _check_cards(*factors)
    if len(factors) == 2 and all(f.ndim <= 2 for f in factors):
        a, b = factors
        others_a = [x for x in a.axes if x != axis]
        others_b = [x for x in b.axes if x != axis]
        if not set(others_a) & set(others_b):
            out = _matrix_contract(a, b, axis, others_a, others_b)
            if cardinal_norm:
                out = LogTensor(out.axes, out.data - math.log(cards[axis]), check=False)
            return out
    prod = reduce(log_mul, factors)
    return logsumexp_reduce(prod, axis, normalize=cardinal_norm)


def _matrix_contract(a, b, axis, others_a, others_b):
    X = a.transpose(others_a + [axis]).data.reshape(-1, a.cards[axis])
    Y = b.transpose([axis] + others_b).data.reshape(b.cards[axis], -1)
    Z = _logmmexp_arrays(X, Y)
    shape = [a.cards[x] for x in others_a] + [b.cards[x] for x in others_b]
    return LogTensor(tuple(others_a + others_b), Z.reshape(shape), check=False)
