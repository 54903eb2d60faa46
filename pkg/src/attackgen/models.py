"""Victim model zoo, access-level handles, a minimal trainer and weight files."""

import enum
import logging
import threading
from dataclasses import dataclass, field

import numpy as np

from . import fileio
from . import tensor as T
from .errors import (AccessDenied, BudgetExhausted, CorruptFile, NonFiniteError,
                     ShapeError, TrainingDiverged)

log = logging.getLogger(__name__)

ARCHS = ("linear", "mlp", "cnn-classifier", "conv-segmenter")
ARCH_IDS = {name: i for i, name in enumerate(ARCHS)}
MLP_HIDDEN = 64
CNN_CHANNELS = (4, 8)
SEG_CHANNELS = 16
# image models see x - 0.5 so [0,1] pixels are centred for plain SGD
INPUT_CENTER = 0.5


@dataclass
class VictimModel:
    arch: str
    params: dict
    input_shape: tuple
    n_classes: int
    metrics: dict = field(default_factory=dict)

    @property
    def is_segmenter(self):
        return self.arch == "conv-segmenter"

    @property
    def output_shape(self):
        if self.is_segmenter:
            return self.input_shape[:2] + (self.n_classes,)
        return (self.n_classes,)

    def logits(self, x, params=None):
        """Logits Var for a batched input Var ``x`` of shape [N, *input_shape]."""
        p = params if params is not None else {k: T.const(v) for k, v in self.params.items()}
        x = T._lift(x)
        if tuple(x.shape[1:]) != tuple(self.input_shape):
            raise ShapeError(f"{self.arch}: expected input [N, {self.input_shape}], got {x.shape}")
        if self.arch == "linear":
            return x @ p["W"] + p["b"]
        if self.arch == "mlp":
            h = T.relu(x @ p["W1"] + p["b1"])
            return h @ p["W2"] + p["b2"]
        if self.arch == "cnn-classifier":
            h = T.relu(T.conv2d(x - INPUT_CENTER, p["k1"], p["c1"]))
            h = T.relu(T.conv2d(h, p["k2"], p["c2"]))
            h = T.avg_pool2(h)
            h = T.reshape(h, (h.shape[0], -1))
            return h @ p["W"] + p["b"]
        if self.arch == "conv-segmenter":
            h = T.relu(T.conv2d(x - INPUT_CENTER, p["k1"], p["c1"]))
            h = T.relu(T.conv2d(h, p["k2"], p["c2"]))
            return T.conv2d(h, p["k3"], p["c3"])
        raise ValueError(f"unknown architecture {self.arch!r}")

    def predict_proba(self, x):
        x, single = _batched(self, x)
        p = T.softmax(self.logits(T.const(x))).value
        return p[0] if single else p

    def predict_labels(self, x):
        return np.argmax(self.predict_proba(x), axis=-1)


def _batched(model, x):
    x = T.as_tensor(x)
    shape = tuple(model.input_shape)
    if x.shape == shape:
        return x[None], True
    if x.shape[1:] == shape:
        return x, False
    raise ShapeError(f"{model.arch}: input shape {x.shape} does not match {shape}")


def param_shapes(arch, input_shape, n_classes):
    if arch == "linear":
        (d,) = input_shape
        return {"W": (d, n_classes), "b": (n_classes,)}
    if arch == "mlp":
        (d,) = input_shape
        return {"W1": (d, MLP_HIDDEN), "b1": (MLP_HIDDEN,),
                "W2": (MLP_HIDDEN, n_classes), "b2": (n_classes,)}
    if arch == "cnn-classifier":
        H, W, ch = input_shape
        c1, c2 = CNN_CHANNELS
        return {"k1": (3, 3, ch, c1), "c1": (c1,), "k2": (3, 3, c1, c2), "c2": (c2,),
                "W": ((H // 2) * (W // 2) * c2, n_classes), "b": (n_classes,)}
    if arch == "conv-segmenter":
        H, W, ch = input_shape
        c = SEG_CHANNELS
        return {"k1": (3, 3, ch, c), "c1": (c,), "k2": (3, 3, c, c), "c2": (c,),
                "k3": (3, 3, c, n_classes), "c3": (n_classes,)}
    raise ValueError(f"unknown architecture {arch!r}")


def init_model(arch, input_shape, n_classes, seed=0):
    """He-initialised weights, zero biases; deterministic per seed."""
    input_shape = tuple(int(s) for s in input_shape)
    if arch in ("cnn-classifier", "conv-segmenter") and len(input_shape) != 3:
        raise ShapeError(f"{arch} needs input shape [H, W, C]")
    if arch in ("linear", "mlp") and len(input_shape) != 1:
        raise ShapeError(f"{arch} needs input shape [d]")
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(arch, input_shape, n_classes).items():
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return VictimModel(arch, params, input_shape, int(n_classes))


# ---------------------------------------------------------------------------
# access levels


class Access(str, enum.Enum):
    WHITE_BOX = "WhiteBox"
    OUTPUT_TRANSPARENT = "OutputTransparent"
    QUERY_LIMITED = "QueryLimited"
    LABEL_ONLY = "LabelOnly"


class ModelHandle:
    """A victim model seen through one access level.

    ``predict`` returns probabilities, except for label-only handles which
    only ever return argmax labels. Each input item costs one query; a
    query-limited handle raises :class:`BudgetExhausted` once its budget
    would be exceeded.
    """

    def __init__(self, model, access=Access.WHITE_BOX, max_queries=None):
        self._model = model
        self.access = Access(access)
        if self.access is Access.QUERY_LIMITED and (max_queries is None or max_queries < 0):
            raise ValueError("QueryLimited access needs a non-negative max_queries")
        self.max_queries = max_queries
        self._queries = 0
        self._lock = threading.Lock()

    def __repr__(self):
        budget = f", max_queries={self.max_queries}" if self.max_queries is not None else ""
        return f"ModelHandle({self._model.arch}, {self.access.value}{budget})"

    @property
    def query_count(self):
        return self._queries

    @property
    def input_shape(self):
        return self._model.input_shape

    @property
    def n_classes(self):
        return self._model.n_classes

    @property
    def is_segmenter(self):
        return self._model.is_segmenter

    @property
    def arch(self):
        return self._model.arch

    def _charge(self, n):
        with self._lock:
            if self.max_queries is not None and self._queries + n > self.max_queries:
                raise BudgetExhausted(
                    f"query budget {self.max_queries} exhausted ({self._queries} used, {n} requested)")
            self._queries += n

    def predict(self, x):
        x, single = _batched(self._model, x)
        self._charge(len(x))
        probs = self._model.predict_proba(x)
        out = np.argmax(probs, axis=-1) if self.access is Access.LABEL_ONLY else probs
        return out[0] if single else out

    def logits(self, x):
        if self.access is Access.LABEL_ONLY:
            raise AccessDenied("label-only handle does not expose logits")
        xb, single = _batched(self._model, x)
        self._charge(len(xb))
        z = self._model.logits(T.const(xb)).value
        return z[0] if single else z

    def white_box(self):
        """The underlying model, for white-box handles only."""
        if self.access is not Access.WHITE_BOX:
            raise AccessDenied(f"{self.access.value} handle does not expose model internals")
        return self._model


def predict(h, x):
    return h.predict(x)


def input_gradient(h, loss, x):
    """Gradient of ``loss(logits Var)`` w.r.t. the input x (white-box only)."""
    model = h.white_box()
    xb, single = _batched(model, x)
    value, g = T.value_and_grad(lambda v: loss(model.logits(v)), xb)
    return g[0] if single else g


# ---------------------------------------------------------------------------
# training

DEFAULT_LR = {"linear": 0.5, "mlp": 0.2, "cnn-classifier": 0.2, "conv-segmenter": 0.3}
DEFAULT_BATCH = 16


def cross_entropy(logits, labels):
    """Mean cross-entropy over all items (and pixels for segmenters)."""
    logp = T.log_softmax(logits)
    return -T.mean(T.gather(logp, labels))


def train(arch, dataset, epochs, seed=0, lr=None, batch_size=DEFAULT_BATCH):
    """Plain mini-batch gradient descent with seeded shuffling."""
    x_shape = dataset.xs.shape[1:]
    model = init_model(arch, x_shape, dataset.n_classes, seed)
    if (arch == "conv-segmenter") != (dataset.kind == "segmentation"):
        raise ShapeError(f"{arch} cannot be trained on {dataset.kind} data")
    lr = DEFAULT_LR[arch] if lr is None else lr
    rng = np.random.default_rng(seed + 1)
    params = dict(model.params)
    n = len(dataset)
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            leaves = {k: T.leaf(v) for k, v in params.items()}
            try:
                loss = cross_entropy(model.logits(T.const(dataset.xs[idx]), leaves), dataset.ys[idx])
                grads = loss.backward()
            except NonFiniteError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}") from exc
            total += float(loss.value) * len(idx)
            params = {k: params[k] - lr * grads[id(leaves[k])] for k in params}
            if not all(np.isfinite(v).all() for v in params.values()):
                raise TrainingDiverged(f"epoch {epoch}: parameters became non-finite")
        losses.append(total / max(n, 1))
        log.debug("epoch %d loss %.5f", epoch, losses[-1])
    trained = VictimModel(arch, params, model.input_shape, model.n_classes)
    key = "pixel_accuracy" if trained.is_segmenter else "accuracy"
    trained.metrics = {key: accuracy(trained, dataset), "epochs": epochs, "seed": seed,
                       "lr": lr, "loss_history": losses}
    return trained


def accuracy(model, dataset):
    """Classification accuracy, or pixel accuracy for segmenters."""
    if len(dataset) == 0:
        return float("nan")
    pred = model.predict_labels(dataset.xs)
    return float(np.mean(pred == dataset.ys))


# ---------------------------------------------------------------------------
# weight files


def save_weights(model, path):
    tensors = [model.params[k] for k in param_shapes(model.arch, model.input_shape, model.n_classes)]
    tensors.append(np.asarray(model.input_shape, dtype=np.float64))
    fileio.write_agt(path, ARCH_IDS[model.arch], tensors)


def load_weights(path):
    arch_id, tensors = fileio.read_agt(path)
    if arch_id >= len(ARCHS):
        raise CorruptFile(f"{path}: unknown architecture id {arch_id}")
    arch = ARCHS[arch_id]
    if not tensors or tensors[-1].ndim != 1:
        raise CorruptFile(f"{path}: missing input-shape record")
    input_shape = tuple(int(v) for v in tensors[-1])
    n_classes = tensors[-2].shape[-1] if len(tensors) >= 2 else 0
    try:
        expected = param_shapes(arch, input_shape, n_classes)
    except (ValueError, TypeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    body = tensors[:-1]
    if len(body) != len(expected):
        raise CorruptFile(f"{path}: expected {len(expected)} tensors for {arch}, found {len(body)}")
    params = {}
    for (name, shape), t in zip(expected.items(), body):
        if tuple(t.shape) != tuple(shape):
            raise CorruptFile(f"{path}: dimension mismatch for {name}: {t.shape} != {shape}")
        params[name] = t
    return VictimModel(arch, params, input_shape, int(n_classes))
