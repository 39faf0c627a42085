"""Static computation graphs with reverse-mode differentiation.

A :class:`Graph` is an ordered list of primitive nodes. Nodes can only refer to
names that already exist, so insertion order is a valid topological order and
the graph is acyclic by construction. Values are float64 numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np


class GraphError(ValueError):
    """Malformed graph or bad evaluation request."""


class ShapeError(GraphError):
    """Operand shapes do not fit the node they are fed to."""

    def __init__(self, node: str, op: str, detail: str):
        self.node = node
        self.op = op
        self.detail = detail
        super().__init__(f"node {node!r} ({op}): {detail}")


@dataclass(frozen=True)
class Node:
    name: str
    op: str
    inputs: tuple[str, ...]
    attrs: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# primitive kernels
#
# forward(attrs, *xs) -> (out, ctx)
# backward(attrs, ctx, g, out, *xs) -> tuple of input grads (None = no grad)
# ---------------------------------------------------------------------------


def _check(cond: bool, detail: str) -> None:
    if not cond:
        raise _KernelShapeError(detail)


class _KernelShapeError(Exception):
    pass


def _dense_fwd(attrs, x, w, b):
    _check(x.ndim == 2 and w.ndim == 2 and b.ndim == 1,
           f"expected x[B,in], w[in,out], b[out]; got {x.shape}, {w.shape}, {b.shape}")
    _check(x.shape[1] == w.shape[0] and w.shape[1] == b.shape[0],
           f"dimension mismatch x{x.shape} w{w.shape} b{b.shape}")
    return x @ w + b, None


def _dense_bwd(attrs, ctx, g, out, x, w, b):
    return g @ w.T, x.T @ g, g.sum(axis=0)


def _pad_amounts(k: int) -> tuple[int, int]:
    lo = (k - 1) // 2
    return lo, k - 1 - lo


def _conv2d_fwd(attrs, x, w, b):
    _check(x.ndim == 4 and w.ndim == 4 and b.ndim == 1,
           f"expected x[B,C,H,W], w[O,C,kh,kw], b[O]; got {x.shape}, {w.shape}, {b.shape}")
    _check(x.shape[1] == w.shape[1] and w.shape[0] == b.shape[0],
           f"channel mismatch x{x.shape} w{w.shape} b{b.shape}")
    kh, kw = w.shape[2], w.shape[3]
    if attrs["padding"] == "same":
        ph, pw = _pad_amounts(kh), _pad_amounts(kw)
        if any(ph + pw):
            x = np.pad(x, ((0, 0), (0, 0), ph, pw))
    h_out, w_out = x.shape[2] - kh + 1, x.shape[3] - kw + 1
    _check(h_out > 0 and w_out > 0, f"kernel {kh}x{kw} larger than input {x.shape[2:]}")
    cols = _im2col(x, kh, kw, h_out, w_out)  # [B, H, W, C*kh*kw]
    out = cols @ w.reshape(w.shape[0], -1).T + b
    return out.transpose(0, 3, 1, 2), (x, cols)


def _im2col(x, kh, kw, h_out, w_out):
    if kh == kw == 1:
        return x.transpose(0, 2, 3, 1)
    patches = [x[:, :, i:i + h_out, j:j + w_out] for i in range(kh) for j in range(kw)]
    # channel-major then kernel offset, matching w.reshape(O, C*kh*kw)
    return np.stack(patches, axis=-1).transpose(0, 2, 3, 1, 4).reshape(
        x.shape[0], h_out, w_out, -1)


def _conv2d_bwd(attrs, ctx, g, out, x, w, b):
    xp, cols = ctx
    o, c, kh, kw = w.shape
    h_out, w_out = g.shape[2], g.shape[3]
    g_last = g.transpose(0, 2, 3, 1).reshape(-1, o)  # [B*H*W, O]
    dw = (g_last.T @ cols.reshape(-1, cols.shape[-1])).reshape(w.shape)
    dcols = (g_last @ w.reshape(o, -1)).reshape(g.shape[0], h_out, w_out, c, kh, kw)
    if kh == kw == 1:
        dxp = dcols[..., 0, 0].transpose(0, 3, 1, 2)
    else:
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + h_out, j:j + w_out] += dcols[..., i, j].transpose(0, 3, 1, 2)
    if attrs["padding"] == "same":
        (t, _), (l, _) = _pad_amounts(kh), _pad_amounts(kw)
        dx = dxp[:, :, t:t + x.shape[2], l:l + x.shape[3]]
    else:
        dx = dxp
    return dx, dw, g.sum(axis=(0, 2, 3))


def _permute_fwd(attrs, x):
    axes = attrs["axes"]
    _check(len(axes) == x.ndim, f"axes {axes} do not match rank {x.ndim}")
    return np.ascontiguousarray(x.transpose(axes)), None


def _permute_bwd(attrs, ctx, g, out, x):
    return (g.transpose(np.argsort(attrs["axes"])),)


def _concat_fwd(attrs, *xs):
    axis = attrs["axis"]
    ref = xs[0].shape
    for x in xs[1:]:
        _check(x.ndim == len(ref) and all(
            a == c for k, (a, c) in enumerate(zip(x.shape, ref)) if k != axis % len(ref)),
            f"cannot concatenate shapes {[y.shape for y in xs]} on axis {axis}")
    return np.concatenate(xs, axis=axis), None


def _concat_bwd(attrs, ctx, g, out, *xs):
    sizes = np.cumsum([x.shape[attrs["axis"]] for x in xs])[:-1]
    return tuple(np.split(g, sizes, axis=attrs["axis"]))


def _reshape_fwd(attrs, x):
    shape = tuple(x.shape[0] if s == "batch" else s for s in attrs["shape"])
    try:
        return x.reshape(shape), None
    except ValueError:
        raise _KernelShapeError(f"cannot reshape {x.shape} to {shape}") from None


def _reshape_bwd(attrs, ctx, g, out, x):
    return (g.reshape(x.shape),)


def _relu_fwd(attrs, x):
    return np.maximum(x, 0.0), None


def _relu_bwd(attrs, ctx, g, out, x):
    return (g * (x > 0),)


def _leaky_fwd(attrs, x):
    mask = x > 0
    return np.where(mask, x, attrs["slope"] * x), mask


def _leaky_bwd(attrs, ctx, g, out, x):
    grad = g * attrs["slope"]
    np.copyto(grad, g, where=ctx)
    return (grad,)


def _tanh_fwd(attrs, x):
    return np.tanh(x), None


def _tanh_bwd(attrs, ctx, g, out, x):
    return (g * (1.0 - out * out),)


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def _sigmoid_fwd(attrs, x):
    return _sigmoid(x), None


def _sigmoid_bwd(attrs, ctx, g, out, x):
    return (g * out * (1.0 - out),)


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_fwd(attrs, x):
    return _softmax(x), None


def _softmax_bwd(attrs, ctx, g, out, x):
    return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)


def _labels(labels, n, k):
    lab = np.asarray(labels).reshape(-1).astype(np.int64)
    _check(lab.shape[0] == n, f"{lab.shape[0]} labels for {n} rows")
    _check(bool(np.all((lab >= 0) & (lab < k))), f"label outside [0, {k - 1}]")
    return lab


def _xent_fwd(attrs, logits, labels):
    _check(logits.ndim == 2, f"expected logits[B,K], got {logits.shape}")
    n, k = logits.shape
    lab = _labels(labels, n, k)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    losses = -logp[np.arange(n), lab]
    total = losses.sum() if attrs["reduction"] == "sum" else losses.mean()
    return np.asarray(total), (np.exp(logp), lab)


def _xent_bwd(attrs, ctx, g, out, logits, labels):
    p, lab = ctx
    d = p.copy()
    d[np.arange(len(lab)), lab] -= 1.0
    if attrs["reduction"] == "mean":
        d /= len(lab)
    return d * g, None


def _bce_fwd(attrs, logits, targets):
    _check(logits.shape == np.shape(targets),
           f"logits {logits.shape} vs targets {np.shape(targets)}")
    t = np.asarray(targets, dtype=float)
    # log(1 + e^-x) for t=1, log(1 + e^x) for t=0, stable form
    losses = np.logaddexp(0.0, logits) - t * logits
    return np.asarray(losses.mean()), t


def _bce_bwd(attrs, t, g, out, logits, targets):
    return g * (_sigmoid(logits) - t) / logits.size, None


def _pick_fwd(attrs, probs, labels):
    _check(probs.ndim == 2, f"expected probs[B,K], got {probs.shape}")
    lab = _labels(labels, *probs.shape)
    return probs[np.arange(len(lab)), lab], lab


def _pick_bwd(attrs, lab, g, out, probs, labels):
    d = np.zeros_like(probs)
    d[np.arange(len(lab)), lab] = g
    return d, None


def _same_shape(a, b):
    _check(a.shape == b.shape, f"operand shapes differ: {a.shape} vs {b.shape}")


def _add_fwd(attrs, a, b):
    _same_shape(a, b)
    return a + b, None


def _add_bwd(attrs, ctx, g, out, a, b):
    return g, g


def _sub_fwd(attrs, a, b):
    _same_shape(a, b)
    return a - b, None


def _sub_bwd(attrs, ctx, g, out, a, b):
    return g, -g


def _mul_fwd(attrs, a, b):
    _same_shape(a, b)
    return a * b, None


def _mul_bwd(attrs, ctx, g, out, a, b):
    return g * b, g * a


def _scale_fwd(attrs, x):
    return attrs["factor"] * x, None


def _scale_bwd(attrs, ctx, g, out, x):
    return (attrs["factor"] * g,)


def _sign_fwd(attrs, x):
    return np.sign(x), None


def _sign_bwd(attrs, ctx, g, out, x):
    return (np.zeros_like(x),)


def _mean_fwd(attrs, x):
    return np.asarray(x.mean()), None


def _mean_bwd(attrs, ctx, g, out, x):
    return (np.full(x.shape, g / x.size),)


def _sum_fwd(attrs, x):
    return np.asarray(x.sum()), None


def _sum_bwd(attrs, ctx, g, out, x):
    return (np.full(x.shape, float(g)),)


def _mse_fwd(attrs, a, b):
    _same_shape(a, b)
    d = a - b
    return np.asarray(np.mean(d * d)), d


def _mse_bwd(attrs, d, g, out, a, b):
    ga = g * 2.0 * d / d.size
    return ga, -ga


def _time_diff_fwd(attrs, x):
    _check(x.ndim == 4 and x.shape[2] >= 2, f"expected x[B,C,T>=2,J], got {x.shape}")
    out = np.zeros_like(x)
    out[:, :, :-1] = x[:, :, 1:] - x[:, :, :-1]
    return out, None


def _time_diff_bwd(attrs, ctx, g, out, x):
    d = np.zeros_like(g)
    d[:, :, 1:] += g[:, :, :-1]
    d[:, :, :-1] -= g[:, :, :-1]
    return (d,)


@dataclass(frozen=True)
class Primitive:
    forward: Callable
    backward: Callable
    arity: int | None  # None = variadic
    differentiable: bool = True


PRIMITIVES: dict[str, Primitive] = {
    "dense": Primitive(_dense_fwd, _dense_bwd, 3),
    "conv2d": Primitive(_conv2d_fwd, _conv2d_bwd, 3),
    "permute": Primitive(_permute_fwd, _permute_bwd, 1),
    "concat": Primitive(_concat_fwd, _concat_bwd, None),
    "reshape": Primitive(_reshape_fwd, _reshape_bwd, 1),
    "relu": Primitive(_relu_fwd, _relu_bwd, 1),
    "leaky_relu": Primitive(_leaky_fwd, _leaky_bwd, 1),
    "tanh": Primitive(_tanh_fwd, _tanh_bwd, 1),
    "sigmoid": Primitive(_sigmoid_fwd, _sigmoid_bwd, 1),
    "softmax": Primitive(_softmax_fwd, _softmax_bwd, 1),
    "softmax_xent": Primitive(_xent_fwd, _xent_bwd, 2),
    "bce_logits": Primitive(_bce_fwd, _bce_bwd, 2),
    "pick": Primitive(_pick_fwd, _pick_bwd, 2),
    "add": Primitive(_add_fwd, _add_bwd, 2),
    "sub": Primitive(_sub_fwd, _sub_bwd, 2),
    "mul": Primitive(_mul_fwd, _mul_bwd, 2),
    "scale": Primitive(_scale_fwd, _scale_bwd, 1),
    "sign": Primitive(_sign_fwd, _sign_bwd, 1, differentiable=False),
    "mean": Primitive(_mean_fwd, _mean_bwd, 1),
    "sum": Primitive(_sum_fwd, _sum_bwd, 1),
    "mse": Primitive(_mse_fwd, _mse_bwd, 2),
    "time_diff": Primitive(_time_diff_fwd, _time_diff_bwd, 1),
}


# ---------------------------------------------------------------------------
# graph
# ---------------------------------------------------------------------------


class Graph:
    """An append-only computation graph.

    Builder methods return the name of the node they add, so networks are
    written as straight-line code over names::

        g = Graph()
        x = g.input("x", (None, 3))
        w = g.parameter("w", np.eye(3))
        b = g.parameter("b", np.zeros(3))
        y = g.relu(g.dense(x, w, b))
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.params: dict[str, np.ndarray] = {}
        self.inputs: dict[str, tuple | None] = {}
        self._names: set[str] = set()
        self._counter = 0

    # -- leaves ------------------------------------------------------------

    def _claim(self, name: str) -> str:
        if name in self._names:
            raise GraphError(f"duplicate name {name!r}")
        self._names.add(name)
        return name

    def input(self, name: str, shape: Sequence[int | None] | None = None) -> str:
        """Declare a fed value. ``None`` entries in ``shape`` match any size."""
        self.inputs[self._claim(name)] = None if shape is None else tuple(shape)
        return name

    def parameter(self, name: str, value: np.ndarray) -> str:
        """Register a parameter. The array is stored by reference."""
        self._claim(name)
        if not isinstance(value, np.ndarray) or value.dtype != np.float64:
            raise GraphError(f"parameter {name!r} must be a float64 ndarray")
        self.params[name] = value
        return name

    def has(self, name: str) -> bool:
        return name in self._names

    # -- generic node ------------------------------------------------------

    def node(self, op: str, inputs: Sequence[str], name: str | None = None, **attrs) -> str:
        if op not in PRIMITIVES:
            raise GraphError(f"unknown primitive {op!r}")
        prim = PRIMITIVES[op]
        if prim.arity is not None and len(inputs) != prim.arity:
            raise GraphError(f"{op} takes {prim.arity} inputs, got {len(inputs)}")
        for i in inputs:
            if i not in self._names:
                raise GraphError(f"{op} refers to undefined name {i!r}")
        if name is None:
            self._counter += 1
            name = f"{op}_{self._counter}"
        self.nodes.append(Node(self._claim(name), op, tuple(inputs), attrs))
        return name

    # -- builders ----------------------------------------------------------

    def dense(self, x, w, b, name=None):
        return self.node("dense", [x, w, b], name)

    def conv2d(self, x, w, b, padding: str = "valid", name=None):
        if padding not in ("valid", "same"):
            raise GraphError(f"padding must be 'valid' or 'same', got {padding!r}")
        return self.node("conv2d", [x, w, b], name, padding=padding)

    def permute(self, x, axes: Sequence[int], name=None):
        return self.node("permute", [x], name, axes=tuple(axes))

    def concat(self, xs: Sequence[str], axis: int, name=None):
        return self.node("concat", list(xs), name, axis=axis)

    def reshape(self, x, shape: Sequence, name=None):
        """``shape`` may use the string ``"batch"`` for the leading dimension."""
        return self.node("reshape", [x], name, shape=tuple(shape))

    def flatten(self, x, name=None):
        return self.reshape(x, ("batch", -1), name)

    def relu(self, x, name=None):
        return self.node("relu", [x], name)

    def leaky_relu(self, x, slope: float = 0.2, name=None):
        return self.node("leaky_relu", [x], name, slope=slope)

    def tanh(self, x, name=None):
        return self.node("tanh", [x], name)

    def sigmoid(self, x, name=None):
        return self.node("sigmoid", [x], name)

    def softmax(self, x, name=None):
        return self.node("softmax", [x], name)

    def softmax_xent(self, logits, labels, reduction: str = "mean", name=None):
        if reduction not in ("mean", "sum"):
            raise GraphError(f"reduction must be 'mean' or 'sum', got {reduction!r}")
        return self.node("softmax_xent", [logits, labels], name, reduction=reduction)

    def bce_logits(self, logits, targets, name=None):
        return self.node("bce_logits", [logits, targets], name)

    def pick(self, probs, labels, name=None):
        return self.node("pick", [probs, labels], name)

    def add(self, a, b, name=None):
        return self.node("add", [a, b], name)

    def sub(self, a, b, name=None):
        return self.node("sub", [a, b], name)

    def mul(self, a, b, name=None):
        return self.node("mul", [a, b], name)

    def scale(self, x, factor: float, name=None):
        return self.node("scale", [x], name, factor=float(factor))

    def sign(self, x, name=None):
        return self.node("sign", [x], name)

    def mean(self, x, name=None):
        return self.node("mean", [x], name)

    def total(self, x, name=None):
        return self.node("sum", [x], name)

    def mse(self, a, b, name=None):
        return self.node("mse", [a, b], name)

    def time_diff(self, x, name=None):
        return self.node("time_diff", [x], name)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _check_inputs(graph: Graph, inputs: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    missing = set(graph.inputs) - set(inputs)
    if missing:
        raise GraphError(f"missing inputs: {sorted(missing)}")
    fed = {}
    for name, spec in graph.inputs.items():
        value = np.asarray(inputs[name])
        if spec is not None:
            ok = value.ndim == len(spec) and all(
                s is None or s == d for s, d in zip(spec, value.shape))
            if not ok:
                raise ShapeError(name, "input", f"expected shape {spec}, got {value.shape}")
        if value.dtype.kind == "f":
            value = value.astype(np.float64, copy=False)
        fed[name] = value
    return fed


def _forward(graph: Graph, inputs, params, stop: set[str] | None = None):
    values: dict[str, np.ndarray] = dict(params)
    values.update(_check_inputs(graph, inputs))
    ctxs: dict[str, object] = {}
    needed = _ancestors(graph, stop) if stop is not None else None
    for node in graph.nodes:
        if needed is not None and node.name not in needed:
            continue
        args = [values[i] for i in node.inputs]
        try:
            out, ctx = PRIMITIVES[node.op].forward(node.attrs, *args)
        except _KernelShapeError as exc:
            raise ShapeError(node.name, node.op, str(exc)) from None
        values[node.name] = out
        ctxs[node.name] = ctx
    return values, ctxs


def _ancestors(graph: Graph, targets: Iterable[str]) -> set[str]:
    by_name = {n.name: n for n in graph.nodes}
    seen: set[str] = set()
    stack = list(targets)
    while stack:
        name = stack.pop()
        if name in seen:
            continue
        seen.add(name)
        node = by_name.get(name)
        if node is not None:
            stack.extend(node.inputs)
    return seen


def _params(graph: Graph, overrides: Mapping[str, np.ndarray] | None):
    if not overrides:
        return graph.params
    unknown = set(overrides) - set(graph.params)
    if unknown:
        raise GraphError(f"unknown parameters: {sorted(unknown)}")
    merged = dict(graph.params)
    merged.update(overrides)
    return merged


def evaluate(graph: Graph, inputs: Mapping[str, np.ndarray],
             outputs: Sequence[str] | None = None,
             params: Mapping[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    """Run the graph forward and return the requested node values.

    With ``outputs=None`` every node value is returned. Only the ancestors of
    the requested outputs are computed.
    """
    p = _params(graph, params)
    if outputs is not None:
        for o in outputs:
            if not graph.has(o):
                raise GraphError(f"unknown output {o!r}")
    values, _ = _forward(graph, inputs, p, None if outputs is None else set(outputs))
    names = [n.name for n in graph.nodes] if outputs is None else list(outputs)
    return {n: values[n] for n in names}


def value_and_gradient(graph: Graph, inputs: Mapping[str, np.ndarray], loss: str,
                       wrt: str | Sequence[str] = "params",
                       params: Mapping[str, np.ndarray] | None = None,
                       outputs: Sequence[str] = ()):
    """Forward pass plus exact reverse-mode gradient of a scalar node.

    ``wrt`` is ``"params"`` (every parameter), a single name, or a list of
    parameter and/or input names. Returns ``(values, grads)`` where ``values``
    holds ``loss`` and any extra ``outputs``.
    """
    p = _params(graph, params)
    if wrt == "params":
        targets = list(graph.params)
    elif isinstance(wrt, str):
        targets = [wrt]
    else:
        targets = list(wrt)
    for t in targets:
        if t not in graph.params and t not in graph.inputs:
            raise GraphError(f"cannot differentiate with respect to {t!r}")
    if not any(n.name == loss for n in graph.nodes):
        raise GraphError(f"unknown loss node {loss!r}")

    values, ctxs = _forward(graph, inputs, p, {loss, *outputs})
    if np.ndim(values[loss]) != 0:
        raise GraphError(f"loss node {loss!r} is not scalar (shape {np.shape(values[loss])})")

    # only nodes on a path from a target to the loss need a backward pass
    live = set(targets)
    for node in graph.nodes:
        if node.name in values and any(i in live for i in node.inputs):
            live.add(node.name)
    if loss not in live:
        return ({k: values[k] for k in (loss, *outputs)},
                {t: np.zeros_like(values[t], dtype=float) for t in targets})
    useful = _ancestors(graph, [loss]) & live

    grads: dict[str, np.ndarray] = {loss: np.ones(())}
    for node in reversed(graph.nodes):
        if node.name not in useful or node.name not in grads:
            continue
        g = grads.pop(node.name)
        args = [values[i] for i in node.inputs]
        dins = PRIMITIVES[node.op].backward(node.attrs, ctxs[node.name], g, values[node.name], *args)
        for name, d in zip(node.inputs, dins):
            if d is None or name not in useful:
                continue
            if name in grads:
                grads[name] = grads[name] + d
            else:
                grads[name] = d
    out = {}
    for t in targets:
        out[t] = grads.get(t, np.zeros(np.shape(values[t])))
    return {k: values[k] for k in (loss, *outputs)}, out


def gradient(graph: Graph, inputs: Mapping[str, np.ndarray], loss: str,
             wrt: str | Sequence[str] = "params",
             params: Mapping[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    return value_and_gradient(graph, inputs, loss, wrt, params)[1]
