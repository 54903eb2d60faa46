"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Differentiable
computations are expressed with :class:`Var` nodes; every op checks its
output for NaN/Inf and raises :class:`NonFiniteError` instead of
propagating it.

A :class:`Graph` packages a function of named leaves so it can be evaluated
(:func:`forward`) and differentiated (:func:`grad`) repeatedly.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AttackGenError, NonFiniteError, ShapeError


def as_tensor(x):
    """Convert to a float64 array and reject non-finite entries."""
    a = np.asarray(x, dtype=np.float64)
    if not np.isfinite(a).all():
        raise NonFiniteError("tensor contains NaN or Inf")
    return a


def sign(x):
    # np.sign gives sign(0) = 0, the subgradient convention used for FGSM steps
    return np.sign(np.asarray(x, dtype=np.float64))


class Var:
    """A node in a differentiation tape."""

    __slots__ = ("value", "parents", "backward_fn", "op", "requires_grad")

    def __init__(self, value, parents=(), backward_fn=None, op="leaf", requires_grad=False):
        self.value = value
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(op={self.op}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def backward(self):
        """Return {id(node): gradient} for every node requiring a gradient."""
        if self.value.size != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {self.value.shape}")
        order = _topo(self)
        grads = {id(self): np.ones_like(self.value)}
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node.backward_fn is None:
                continue
            needs = tuple(p.requires_grad for p in node.parents)
            parent_grads = node.backward_fn(g, needs)
            for p, pg, need in zip(node.parents, parent_grads, needs):
                if not need or pg is None:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg
        return grads


def _topo(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def leaf(value, requires_grad=True):
    return Var(as_tensor(value), requires_grad=requires_grad)


def const(value):
    return Var(as_tensor(value), requires_grad=False)


def _lift(x):
    return x if isinstance(x, Var) else const(x)


def _make(op, value, parents, backward_fn):
    if not np.isfinite(value).all():
        raise NonFiniteError(f"non-finite output in op '{op}'")
    rg = any(p.requires_grad for p in parents)
    return Var(value, parents, backward_fn if rg else None, op, rg)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast("add", a, b)

    def back(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(g, b.shape) if needs[1] else None)

    return _make("add", a.value + b.value, (a, b), back)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast("sub", a, b)

    def back(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(-g, b.shape) if needs[1] else None)

    return _make("sub", a.value - b.value, (a, b), back)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast("mul", a, b)

    def back(g, needs):
        return (_unbroadcast(g * b.value, a.shape) if needs[0] else None,
                _unbroadcast(g * a.value, b.shape) if needs[1] else None)

    return _make("mul", a.value * b.value, (a, b), back)


def square(a):
    a = _lift(a)
    return _make("square", a.value * a.value, (a,), lambda g, n: (2.0 * a.value * g,))


def relu(a):
    a = _lift(a)
    mask = a.value > 0
    return _make("relu", np.where(mask, a.value, 0.0), (a,), lambda g, n: (g * mask,))


def exp(a):
    a = _lift(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    return _make("exp", out, (a,), lambda g, n: (g * out,))


def log(a):
    a = _lift(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.value)
    return _make("log", out, (a,), lambda g, n: (g / a.value,))


def clip(a, lo, hi):
    """Clamp to [lo, hi]; gradient passes where lo <= a <= hi."""
    a = _lift(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return _make("clip", np.clip(a.value, lo, hi), (a,), lambda g, n: (g * inside,))


# ---------------------------------------------------------------------------
# reductions and indexing


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    a = _lift(a)
    out = np.sum(a.value, axis=axis, keepdims=keepdims)

    def back(g, needs):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make("sum", np.asarray(out), (a,), back)


def mean(a, axis=None, keepdims=False):
    a = _lift(a)
    count = a.value.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    s = sum(a, axis=axis, keepdims=keepdims)
    out = mul(s, 1.0 / count)
    out.op = "mean"
    return out


def reshape(a, shape):
    a = _lift(a)
    return _make("reshape", a.value.reshape(shape), (a,), lambda g, n: (g.reshape(a.shape),))


def getitem(a, idx):
    a = _lift(a)

    def back(g, needs):
        full = np.zeros_like(a.value)
        np.add.at(full, idx, g)
        return (full,)

    return _make("getitem", np.array(a.value[idx]), (a,), back)


def gather(a, index, axis=-1):
    """Pick ``a[..., index[...]]`` along ``axis`` (index has a.ndim-1 dims)."""
    a = _lift(a)
    idx = np.expand_dims(np.asarray(index, dtype=np.int64), axis)
    out = np.take_along_axis(a.value, idx, axis=axis).squeeze(axis)

    def back(g, needs):
        full = np.zeros_like(a.value)
        np.put_along_axis(full, idx, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _make("gather", out, (a,), back)


def norm(a, p):
    """Lp norm of the flattened tensor, p in {1, 2, inf}, subgradient 0 at 0."""
    a = _lift(a)
    v = a.value.ravel()
    if p == 1:
        out = np.abs(v).sum()
        back = lambda g, n: (g * np.sign(a.value),)  # noqa: E731
    elif p == 2:
        out = np.sqrt(v @ v)

        def back(g, needs):
            if out == 0.0:
                return (np.zeros_like(a.value),)
            return (g * a.value / out,)
    elif p == np.inf or p == "inf":
        if v.size == 0:
            out = 0.0
        else:
            k = int(np.argmax(np.abs(v)))
            out = abs(v[k])

        def back(g, needs):
            full = np.zeros(v.size)
            if v.size:
                full[k] = np.sign(v[k])
            return (g * full.reshape(a.shape),)
    else:
        raise ValueError(f"unsupported norm order {p!r}")
    return _make(f"norm{p}", np.asarray(out, dtype=np.float64), (a,), back)


# ---------------------------------------------------------------------------
# linear algebra and network layers


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not align")

    def back(g, needs):
        return (g @ b.value.T if needs[0] else None, a.value.T @ g if needs[1] else None)

    with np.errstate(over="ignore", invalid="ignore"):
        out = a.value @ b.value
    return _make("matmul", out, (a, b), back)


def conv2d(x, w, b):
    """Stride-1 same-padded convolution: x [N,H,W,Cin], w [k,k,Cin,Cout], b [Cout]."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    if x.value.ndim != 4 or w.value.ndim != 4 or x.shape[3] != w.shape[2]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
    if w.shape[0] % 2 == 0 or w.shape[1] % 2 == 0:
        raise ShapeError("conv2d: kernel sizes must be odd")
    if b.shape != (w.shape[3],):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({w.shape[3]},)")
    out = kernels.conv2d_forward(x.value, w.value, b.value)

    def back(g, needs):
        dx = kernels.conv2d_backward_input(g, w.value) if needs[0] else None
        dw = kernels.conv2d_backward_weight(x.value, g, w.shape[0], w.shape[1]) if needs[1] else None
        db = g.sum(axis=(0, 1, 2)) if needs[2] else None
        return dx, dw, db

    return _make("conv2d", out, (x, w, b), back)


def avg_pool2(x):
    """2x2 average pooling with stride 2 on [N,H,W,C]; H and W must be even."""
    x = _lift(x)
    N, H, W, C = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"avg_pool2 needs even spatial dims, got {x.shape}")
    out = x.value.reshape(N, H // 2, 2, W // 2, 2, C).mean(axis=(2, 4))

    def back(g, needs):
        up = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2)
        return (up * 0.25,)

    return _make("avg_pool2", out, (x,), back)


def softmax(a, axis=-1):
    a = _lift(a)
    z = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g, needs):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make("softmax", out, (a,), back)


def log_softmax(a, axis=-1):
    a = _lift(a)
    z = a.value - a.value.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def back(g, needs):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make("log_softmax", out, (a,), back)


def bilinear_sample(img, coords):
    """Sample img [N,H,W,C] at coords [N,Ho,Wo,2] (row, col), edge-clamped; a batch of 1 broadcasts."""
    img, coords = _lift(img), _lift(coords)
    if img.value.ndim != 4 or coords.value.ndim != 4 or coords.shape[3] != 2:
        raise ShapeError(f"bilinear_sample: bad shapes {img.shape}, {coords.shape}")
    N = max(img.shape[0], coords.shape[0])
    if img.shape[0] not in (1, N) or coords.shape[0] not in (1, N):
        raise ShapeError(f"bilinear_sample: batch {img.shape[0]} vs {coords.shape[0]}")
    iv = np.broadcast_to(img.value, (N,) + img.shape[1:])
    cv = np.broadcast_to(coords.value, (N,) + coords.shape[1:])
    out = kernels.bilinear_forward(iv, cv)

    def back(g, needs):
        dimg, dc = kernels.bilinear_backward(iv, cv, g)
        return (_unbroadcast(dimg, img.shape) if needs[0] else None,
                _unbroadcast(dc, coords.shape) if needs[1] else None)

    return _make("bilinear_sample", out, (img, coords), back)


# ---------------------------------------------------------------------------
# graphs


@dataclass(frozen=True)
class Leaf:
    shape: tuple
    differentiable: bool = True


class Graph:
    """A function of named leaves, evaluated by tracing ``fn(**leaf_vars)``.

    ``fn`` returns a Var or a dict of Vars. Leaf shapes are checked before
    every evaluation; op shapes are checked as the trace is built.
    """

    def __init__(self, fn, leaves):
        self.fn = fn
        self.leaves = {k: Leaf(tuple(v.shape), v.differentiable) if isinstance(v, Leaf) else Leaf(tuple(v))
                       for k, v in leaves.items()}

    def _trace(self, inputs):
        missing = set(self.leaves) - set(inputs)
        extra = set(inputs) - set(self.leaves)
        if missing or extra:
            raise ShapeError(f"input names mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        vars_ = {}
        for name, spec in self.leaves.items():
            value = as_tensor(inputs[name])
            if value.shape != spec.shape:
                raise ShapeError(f"leaf '{name}': expected shape {spec.shape}, got {value.shape}")
            vars_[name] = Var(value, requires_grad=spec.differentiable)
        out = self.fn(**vars_)
        outputs = out if isinstance(out, dict) else {"out": out}
        return outputs, vars_

    def nodes(self, inputs):
        """Op names of the traced graph in topological order."""
        outputs, _ = self._trace(inputs)
        seen, order = set(), []
        for out in outputs.values():
            stack = [(out, False)]
            while stack:
                node, done = stack.pop()
                if done:
                    order.append(node.op)
                    continue
                if id(node) in seen:
                    continue
                seen.add(id(node))
                stack.append((node, True))
                stack.extend((p, False) for p in reversed(node.parents))
        return order


def forward(graph, inputs):
    outputs, _ = graph._trace(inputs)
    return {k: v.value.copy() for k, v in outputs.items()}


def grad(graph, inputs, wrt):
    if wrt not in graph.leaves:
        raise AttackGenError(f"unknown leaf '{wrt}'")
    if not graph.leaves[wrt].differentiable:
        raise AttackGenError(f"leaf '{wrt}' is not differentiable")
    outputs, vars_ = graph._trace(inputs)
    if len(outputs) != 1:
        raise ShapeError("grad needs a single scalar output")
    out = next(iter(outputs.values()))
    if out.value.size != 1:
        raise ShapeError(f"grad needs a scalar output, got shape {out.shape}")
    target = vars_[wrt]
    g = out.backward().get(id(target))
    return np.zeros_like(target.value) if g is None else g


def value_and_grad(fn, x):
    """Evaluate scalar ``fn(Var)`` at x; return (value, gradient w.r.t. x)."""
    v = leaf(x)
    out = fn(v)
    if out.value.size != 1:
        raise ShapeError(f"value_and_grad needs a scalar output, got {out.shape}")
    g = out.backward().get(id(v))
    if g is None:
        g = np.zeros_like(v.value)
    return float(out.value), g


def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if not h > 0:
        raise ValueError("step h must be positive")
    x = as_tensor(x).copy()
    flat = x.reshape(-1)
    out = np.empty(flat.size)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = float(f(x))
        flat[i] = old - h
        fm = float(f(x))
        flat[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"f is not finite near coordinate {i}")
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(x.shape)


def relative_error(a, b, floor=1e-12):
    """‖a - b‖ / max(‖a‖, ‖b‖, floor), the comparison used by gradient checks."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)
