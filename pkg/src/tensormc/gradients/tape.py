"""A small reverse-mode tape over axis-labelled arrays.

Covers exactly what the estimators need: reparameterised samples, Gaussian
log-densities, log-domain products and reductions, logmmexp and
stop-gradient, plus a few scalar helpers for surrogate objectives.  Values
carry integer axis ids like :class:`~tensormc.logtensor.LogTensor` and
broadcast by id.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import NumericError, PreconditionError, ShapeError
from ..logtensor import _lse, _logmmexp_arrays, expand, reduce_to, union_axes

LOG_2PI = math.log(2.0 * math.pi)


class Node:
    __slots__ = ("id", "op", "inputs", "value", "axes", "saved")

    def __init__(self, id, op, inputs, value, axes, saved):
        self.id = id
        self.op = op
        self.inputs = inputs
        self.value = value
        self.axes = axes
        self.saved = saved


class Var:
    __slots__ = ("tape", "id")

    def __init__(self, tape, id):
        self.tape = tape
        self.id = id

    @property
    def node(self) -> Node:
        return self.tape.nodes[self.id]

    @property
    def value(self):
        return self.node.value

    @property
    def axes(self):
        return self.node.axes

    def item(self):
        return float(self.value)

    def __repr__(self):
        return f"Var(id={self.id}, op={self.node.op}, axes={self.axes})"


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, int] = {}

    def push(self, op, inputs, value, axes=(), saved=None) -> Var:
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != len(axes):
            raise ShapeError(f"{op}: value has {value.ndim} dims for axes {axes}")
        for i in inputs:
            if i >= len(self.nodes):
                raise ShapeError("inputs must be recorded first")
        node = Node(len(self.nodes), op, tuple(inputs), value, tuple(axes), saved)
        self.nodes.append(node)
        return Var(self, node.id)

    def param(self, name: str, value: float) -> Var:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        v = self.push("param", (), value)
        self.params[name] = v.id
        return v

    def const(self, value, axes=()) -> Var:
        return self.push("const", (), value, axes)

    def backward(self, out: Var) -> dict:
        """Gradients of scalar ``out`` with respect to every named parameter."""
        grads = self.gradients(out)
        return {name: float(np.sum(grads.get(i, 0.0))) for name, i in self.params.items()}

    def gradients(self, out: Var) -> dict:
        """Gradient arrays of scalar ``out`` for every leaf node it depends on, by node id."""
        if out.axes:
            raise ShapeError("backward needs a scalar output")
        grads = {out.id: np.float64(1.0)}
        leaves = {}
        for node in reversed(self.nodes[: out.id + 1]):
            g = grads.pop(node.id, None)
            if g is None:
                continue
            if not node.inputs:
                leaves[node.id] = g
                continue
            for i, gi in zip(node.inputs, _RULES[node.op](node, g, self.nodes)):
                if gi is None:
                    continue
                if not np.all(np.isfinite(gi)):
                    raise NumericError(f"non-finite gradient from node {node.id} ({node.op})", node.id)
                grads[i] = grads[i] + gi if i in grads else gi
        return leaves


def _binary(op, a: Var, b: Var, fn):
    out = union_axes(a.axes, b.axes)
    av, bv = expand(a.value, a.axes, out), expand(b.value, b.axes, out)
    value = np.broadcast_to(fn(av, bv), np.broadcast_shapes(av.shape, bv.shape))
    return a.tape.push(op, (a.id, b.id), value, out)


def add(a: Var, b: Var) -> Var:
    return _binary("add", a, b, np.add)


# multiplying log-domain tensors is adding their entries
log_mul = add


def sub(a: Var, b: Var) -> Var:
    return _binary("sub", a, b, np.subtract)


def mul(a: Var, b: Var) -> Var:
    return _binary("mul", a, b, np.multiply)


def scale(a: Var, c: float) -> Var:
    return a.tape.push("scale", (a.id,), a.value * c, a.axes, c)


def shift(a: Var, c: float) -> Var:
    return a.tape.push("shift", (a.id,), a.value + c, a.axes)


def exp(a: Var) -> Var:
    return a.tape.push("exp", (a.id,), np.exp(a.value), a.axes)


def stop_gradient(a: Var) -> Var:
    """Same value; contributes nothing on the backward pass."""
    if a.node.op == "stop":
        return a
    return a.tape.push("stop", (a.id,), a.value, a.axes)


def record_reparam_sample(tape: Tape, mu: Var, sigma: Var, epsilon, axes=None) -> Var:
    """z = mu + sigma * epsilon with constant noise ``epsilon``."""
    eps = np.asarray(epsilon, dtype=np.float64)
    if axes is None:
        axes = tuple(range(eps.ndim))
    if np.any(np.asarray(sigma.value) <= 0):
        raise PreconditionError("sigma must be positive")
    if mu.axes or sigma.axes:
        raise ShapeError("mu and sigma must be scalars")
    return tape.push("affine", (mu.id, sigma.id), mu.value + sigma.value * eps, axes, eps)


def gaussian_logpdf(x: Var, mean: Var, std: Var) -> Var:
    out = union_axes(x.axes, mean.axes, std.axes)
    xv, mv, sv = (expand(v.value, v.axes, out) for v in (x, mean, std))
    r = (xv - mv) / sv
    value = -0.5 * LOG_2PI - np.log(sv) - 0.5 * r * r
    value = np.broadcast_to(value, np.broadcast_shapes(xv.shape, mv.shape, sv.shape))
    return x.tape.push("gauss", (x.id, mean.id, std.id), value, out, (r, sv))


def logsumexp(a: Var, axis: int, normalize: bool = False) -> Var:
    dim = a.axes.index(axis)
    value = _lse(a.value, dim)
    if normalize:
        value = value - math.log(a.value.shape[dim])
    return a.tape.push("lse", (a.id,), value, a.axes[:dim] + a.axes[dim + 1:], (dim, normalize))


def logmmexp(x: Var, y: Var, axis: int) -> Var:
    """log sum_j exp(x + y) over the shared ``axis``; each input has at most
    one other axis and those are distinct."""
    xo = [a for a in x.axes if a != axis]
    yo = [a for a in y.axes if a != axis]
    n = x.value.shape[x.axes.index(axis)]
    X = _ordered(x.value, x.axes, xo + [axis]).reshape(-1, n)
    Y = _ordered(y.value, y.axes, [axis] + yo).reshape(n, -1)
    Z = _logmmexp_arrays(X, Y)
    shape = [x.value.shape[x.axes.index(a)] for a in xo] + [y.value.shape[y.axes.index(a)] for a in yo]
    return x.tape.push("logmmexp", (x.id, y.id), Z.reshape(shape), tuple(xo + yo), (X, Y, Z, xo, yo))


def _ordered(value, axes, order):
    return value.transpose([axes.index(a) for a in order])


def sum_scalars(vs) -> Var:
    total = vs[0]
    for v in vs[1:]:
        total = add(total, v)
    return total


# ---------------------------------------------------------------- backward


def _bin_grads(node, g, nodes, da, db):
    a, b = nodes[node.inputs[0]], nodes[node.inputs[1]]
    g = np.broadcast_to(g, node.value.shape)
    ga = reduce_to(g if da is None else g * da, node.axes, a.axes)
    gb = reduce_to(g if db is None else g * db, node.axes, b.axes)
    return ga, gb


def _add_rule(node, g, nodes):
    return _bin_grads(node, g, nodes, None, None)


def _sub_rule(node, g, nodes):
    ga, gb = _bin_grads(node, g, nodes, None, None)
    return ga, -gb


def _mul_rule(node, g, nodes):
    a, b = nodes[node.inputs[0]], nodes[node.inputs[1]]
    av, bv = expand(a.value, a.axes, node.axes), expand(b.value, b.axes, node.axes)
    return _bin_grads(node, g, nodes, bv, av)


def _gauss_rule(node, g, nodes):
    r, s = node.saved
    g = np.broadcast_to(g, node.value.shape)
    x, m, sd = (nodes[i] for i in node.inputs)
    return (reduce_to(g * (-r / s), node.axes, x.axes),
            reduce_to(g * (r / s), node.axes, m.axes),
            reduce_to(g * ((r * r - 1.0) / s), node.axes, sd.axes))


def _lse_rule(node, g, nodes):
    dim, normalize = node.saved
    a = nodes[node.inputs[0]]
    out = np.expand_dims(node.value, dim)
    if normalize:
        out = out + math.log(a.value.shape[dim])
    finite = np.isfinite(out)
    with np.errstate(invalid="ignore"):
        w = np.where(finite, np.exp(a.value - np.where(finite, out, 0.0)), 0.0)
    return (np.expand_dims(np.broadcast_to(g, node.value.shape), dim) * w,)


def _logmmexp_rule(node, g, nodes):
    X, Y, Z, xo, yo = node.saved
    x, y = nodes[node.inputs[0]], nodes[node.inputs[1]]
    G = np.broadcast_to(g, node.value.shape).reshape(Z.shape)
    finite = np.isfinite(Z)
    with np.errstate(invalid="ignore"):
        P = np.exp(X[:, :, None] + Y[None, :, :] - np.where(finite, Z, 0.0)[:, None, :])
    P = np.where(finite[:, None, :], P, 0.0) * G[:, None, :]
    gX = P.sum(axis=2)
    gY = P.sum(axis=0)
    j = next(a for a in x.axes if a not in xo)
    gx = _unmatrix(gX, x, xo + [j])
    gy = _unmatrix(gY, y, [j] + yo)
    return gx, gy


def _unmatrix(G, node, order):
    shape = [node.value.shape[node.axes.index(a)] for a in order]
    G = G.reshape(shape)
    return G.transpose([order.index(a) for a in node.axes])


def _affine_rule(node, g, nodes):
    eps = node.saved
    g = np.broadcast_to(g, node.value.shape)
    return np.sum(g), np.sum(g * eps)


_RULES = {
    "add": _add_rule,
    "sub": _sub_rule,
    "mul": _mul_rule,
    "scale": lambda node, g, nodes: (g * node.saved,),
    "shift": lambda node, g, nodes: (g,),
    "exp": lambda node, g, nodes: (g * node.value,),
    "stop": lambda node, g, nodes: (None,),
    "gauss": _gauss_rule,
    "lse": _lse_rule,
    "logmmexp": _logmmexp_rule,
    "affine": _affine_rule,
}
