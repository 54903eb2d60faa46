"""Adversary's-goal measures and the objective composer.

Three measure families feed an attack objective:

* specificity: how close the model output on one input is to the goal
  (lower is better; untargeted measures carry their own negation),
* imperceptibility: a non-negative size of the perturbation,
* scope: how specificity is aggregated over the situations the perturbation
  has to work in.

:func:`compose_objective` combines them either as a penalty
``scope + gamma * imperceptibility`` or as ``scope`` alone with the
imperceptibility bound moved into the admissible set.
"""

from dataclasses import dataclass

import numpy as np

from . import perturb
from . import tensor as T
from . import targets as tgt
from .errors import AccessDenied, InvalidDistribution, NonFiniteError, RepresentationMismatch, ShapeError
from .models import Access
from .sets import Box, Intersection, LpBall, Mask, Unconstrained, lp_norm

# ---------------------------------------------------------------------------
# specificity


@dataclass(frozen=True)
class Untargeted:
    name = "Untargeted"


@dataclass(frozen=True)
class StaticTarget:
    """Fixed goal: a class index (classifiers) or a label map / class (segmenters)."""

    target: object
    name = "StaticTarget"


@dataclass(frozen=True)
class DynamicTarget:
    target_class: int
    name = "DynamicTarget"


@dataclass(frozen=True)
class ConfusionTarget:
    target_class: int
    factor: float = 1.5
    name = "ConfusionTarget"


def cross_entropy_items(logits, onehot):
    """Per-item cross-entropy [N]; pixels are averaged for segmentation outputs."""
    logp = T.log_softmax(logits)
    ce = -T.sum(T.mul(logp, onehot), axis=-1)
    if ce.value.ndim > 1:
        ce = T.mean(ce, axis=tuple(range(1, ce.value.ndim)))
    return ce


def cross_entropy_items_np(probs, onehot):
    idx = np.argmax(onehot, axis=-1)
    p = np.take_along_axis(probs, idx[..., None], axis=-1)[..., 0]
    with np.errstate(divide="ignore"):
        ce = -np.log(p)
    if not np.isfinite(ce).all():
        raise NonFiniteError("target class has zero probability")
    return ce.reshape(len(ce), -1).mean(axis=1) if ce.ndim > 1 else ce


def segmentation_loss(probs, target):
    """Mean per-pixel cross-entropy between [H,W,C] probabilities and a one-hot target."""
    probs = np.asarray(probs, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if probs.shape != target.shape:
        raise ShapeError(f"probabilities {probs.shape} vs target {target.shape}")
    if (probs < 0).any() or np.abs(probs.sum(-1) - 1.0).max(initial=0.0) > 1e-9:
        raise InvalidDistribution("each pixel must hold a probability vector summing to 1")
    return float(cross_entropy_items_np(probs[None], target[None])[0])


class SpecificityMeasure:
    """Specificity bound to a model handle.

    ``loss(logits Var, onehot) -> Var[N]`` is pluggable; the default is
    cross-entropy, the ML module's own training loss.
    """

    def __init__(self, variant, handle, loss=None):
        self.variant = variant
        self.handle = handle
        self.loss = loss or cross_entropy_items
        self.sign = -1.0 if isinstance(variant, Untargeted) else 1.0
        if isinstance(variant, (DynamicTarget, ConfusionTarget)) and not handle.is_segmenter:
            raise ShapeError(f"{variant.name} needs a segmentation model")

    @property
    def name(self):
        return self.variant.name

    def _clean_labels(self, xs):
        if self.handle.access is Access.WHITE_BOX:
            return self.handle.white_box().predict_labels(xs)
        out = self.handle.predict(xs)
        return out if self.handle.access is Access.LABEL_ONLY else np.argmax(out, axis=-1)

    def target_labels(self, xs, ys=None):
        """Goal labels per item: class indices [N] or label maps [N,H,W]."""
        xs = np.asarray(xs, dtype=np.float64)
        v = self.variant
        n = len(xs)
        if isinstance(v, Untargeted):
            return np.asarray(ys, dtype=np.int64) if ys is not None else self._clean_labels(xs)
        if isinstance(v, StaticTarget):
            t = np.asarray(v.target, dtype=np.int64)
            if self.handle.is_segmenter and t.ndim == 0:
                t = np.full(self.handle.input_shape[:2], int(t))
            return np.broadcast_to(t, (n,) + t.shape).copy()
        pred = self._clean_labels(xs)
        if isinstance(v, DynamicTarget):
            return np.stack([tgt.dynamic_labels(p, v.target_class) for p in pred])
        return np.stack([tgt.confusion_labels(p, v.target_class, v.factor) for p in pred])

    def onehot(self, labels):
        return tgt.one_hot(labels, self.handle.n_classes)

    def items_var(self, logits, onehot):
        v = self.loss(logits, onehot)
        return T.mul(v, self.sign) if self.sign != 1.0 else v

    def items_np(self, probs, onehot):
        return self.sign * cross_entropy_items_np(probs, onehot)

    def success(self, pred_labels, goal_labels):
        """Per-item success rate: fraction of outputs (pixels) meeting the goal."""
        hit = pred_labels != goal_labels if isinstance(self.variant, Untargeted) else pred_labels == goal_labels
        return hit.reshape(len(hit), -1).mean(axis=1)


def _require_probabilities(handle):
    if handle.access is Access.LABEL_ONLY:
        raise AccessDenied("loss-based measures need probabilities; handle is label-only")


def _apply_np(x, pert, box):
    if isinstance(pert, perturb.Flow):
        return perturb.apply_flow(x, pert)
    d = pert.delta if isinstance(pert, perturb.Additive) else pert
    return perturb.apply_additive(x, d, box)


def eval_specificity(m, x, pert, y=None, box=None):
    """Specificity of one input under a perturbation (forward queries only)."""
    _require_probabilities(m.handle)
    xs = np.asarray(x, dtype=np.float64)[None]
    labels = m.target_labels(xs, None if y is None else np.asarray(y)[None])
    probs = m.handle.predict(_apply_np(xs[0], pert, box)[None])
    return float(m.items_np(probs, m.onehot(labels))[0])


# ---------------------------------------------------------------------------
# imperceptibility


@dataclass(frozen=True)
class LpNorm:
    p: object = "inf"
    squared: bool = False
    representation = "additive"

    @property
    def name(self):
        base = f"L{'inf' if self.p in ('inf', np.inf) else int(self.p)}"
        return base + "^2" if self.squared else base

    def var(self, delta):
        n = T.norm(delta, np.inf if self.p in ("inf", np.inf) else int(self.p))
        return T.square(n) if self.squared else n

    def evaluate(self, delta):
        n = lp_norm(delta, self.p)
        return n * n if self.squared else n


@dataclass(frozen=True)
class FlowTV:
    representation = "flow"
    name = "FlowTV"

    def var(self, flow):
        return perturb.flow_tv_var(flow)

    def evaluate(self, flow):
        return perturb.flow_tv(flow)


def _representation_of(pert):
    if isinstance(pert, perturb.Flow):
        return "flow"
    if isinstance(pert, perturb.Additive):
        return "additive"
    raise RepresentationMismatch(f"expected Additive or Flow, got {type(pert).__name__}")


def eval_imperceptibility(m, pert):
    rep = _representation_of(pert)
    if rep != m.representation:
        raise RepresentationMismatch(f"{m.name} needs a {m.representation} perturbation, got {rep}")
    return float(m.evaluate(pert.field if rep == "flow" else pert.delta))


# ---------------------------------------------------------------------------
# scope


class IdentityTransforms:
    name = "identity"

    def draw(self, rng, k, shape):
        return None

    def apply_var(self, adv, params):
        return adv


@dataclass(frozen=True)
class AffineJitter:
    """Random shift (pixels) and rotation (degrees), resampled bilinearly."""

    max_shift: float = 2.0
    max_rotation: float = 5.0
    name = "affine_jitter"

    def draw(self, rng, k, shape):
        H, W = shape[:2]
        shifts = rng.uniform(-self.max_shift, self.max_shift, size=(k, 2))
        angles = rng.uniform(-self.max_rotation, self.max_rotation, size=k)
        return np.stack([perturb.affine_coords(H, W, s, a) for s, a in zip(shifts, angles)])

    def apply_var(self, adv, params):
        return T.bilinear_sample(adv, params)


@dataclass(frozen=True)
class GaussianJitter:
    """Additive Gaussian input noise; the transform family for vector inputs."""

    std: float = 0.05
    name = "gaussian_jitter"

    def draw(self, rng, k, shape):
        return rng.normal(0.0, self.std, size=(k,) + tuple(shape))

    def apply_var(self, adv, params):
        return T.add(adv, T.const(params))


@dataclass
class Individual:
    x: np.ndarray
    y: object = None
    name = "Individual"

    def items(self):
        return np.asarray(self.x, dtype=np.float64)[None], (None if self.y is None else np.asarray(self.y)[None])


@dataclass
class MonteCarlo:
    xs: np.ndarray
    ys: object = None
    name = "MonteCarlo"

    def items(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        if len(xs) == 0:
            raise ValueError("Monte Carlo scope set is empty")
        return xs, (None if self.ys is None else np.asarray(self.ys))


@dataclass
class Contextual:
    x: np.ndarray
    y: object = None
    transforms: object = None
    samples: int = 4
    seed: int = 0
    name = "Contextual"

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("Contextual scope needs at least one sample")
        if self.transforms is None:
            self.transforms = AffineJitter()

    def items(self):
        return np.asarray(self.x, dtype=np.float64)[None], (None if self.y is None else np.asarray(self.y)[None])


def eval_scope(agg, m, pert, box=None):
    """Aggregate specificity over the scope (forward queries only)."""
    _require_probabilities(m.handle)
    xs, ys = agg.items()
    labels = m.target_labels(xs, ys)
    onehot = m.onehot(labels)
    adv = np.stack([_apply_np(x, pert, box) for x in xs])
    if isinstance(agg, Contextual):
        params = agg.transforms.draw(np.random.default_rng(agg.seed), agg.samples, adv.shape[1:])
        if params is None:
            return float(np.mean(m.items_np(m.handle.predict(adv), onehot)))
        batch = agg.transforms.apply_var(T.const(adv), params).value
        probs = m.handle.predict(batch)
        return float(np.mean(m.items_np(probs, np.repeat(onehot, agg.samples, axis=0))))
    probs = m.handle.predict(adv)
    return float(np.mean(m.items_np(probs, onehot)))


# ---------------------------------------------------------------------------
# objective


@dataclass(frozen=True)
class Penalty:
    gamma: float
    name = "Penalty"


@dataclass(frozen=True)
class Constraint:
    epsilon: float
    name = "Constraint"


class Objective:
    """A composed attack objective over one perturbation variable.

    ``value_and_grad(delta, idx=None, rng=None)`` evaluates on the full scope
    set, or on the mini-batch ``idx`` of it; ``rng`` drives fresh transform
    samples for contextual scopes.
    """

    def __init__(self, specificity, imperceptibility, scope, form, representation="additive",
                 box=(0.0, 1.0), mask=None):
        self.specificity = specificity
        self.imperceptibility = imperceptibility
        self.scope = scope
        self.form = form
        self.representation = representation
        self.box = None if box is None else (float(box[0]), float(box[1]))
        self.mask = None if mask is None else np.asarray(mask, dtype=np.float64)
        self.model = specificity.handle.white_box() if specificity.handle.access is Access.WHITE_BOX else None
        self.xs, ys = scope.items()
        self.ys = ys
        self.goal_labels = specificity.target_labels(self.xs, ys)
        self.goal = specificity.onehot(self.goal_labels)
        if isinstance(scope, Contextual) and self.model is not None and self.model.is_segmenter:
            raise ShapeError("contextual scope is only supported for classifiers")

    @property
    def components(self):
        return {
            "specificity": self.specificity.name,
            "scope": self.scope.name,
            "imperceptibility": self.imperceptibility.name,
            "form": self.form.name,
            "representation": self.representation,
        }

    @property
    def delta_shape(self):
        shape = self.xs.shape[1:]
        return shape[:2] + (2,) if self.representation == "flow" else shape

    def zeros(self):
        return np.zeros(self.delta_shape)

    def _white_box(self):
        if self.model is None:
            raise AccessDenied(f"gradients need a white-box handle, got {self.specificity.handle.access.value}")
        return self.model

    def apply_var(self, xs, delta):
        if self.representation == "flow":
            return perturb.warp_var(xs, delta)
        return perturb.apply_additive_var(xs, delta, self.box)

    def scope_var(self, delta, idx=None, rng=None):
        model = self._white_box()
        xs = self.xs if idx is None else self.xs[idx]
        goal = self.goal if idx is None else self.goal[idx]
        adv = self.apply_var(T.const(xs), delta)
        if isinstance(self.scope, Contextual):
            k = self.scope.samples
            rng = rng if rng is not None else np.random.default_rng(self.scope.seed)
            params = self.scope.transforms.draw(rng, k, xs.shape[1:])
            # identity transforms: K identical terms average to the single term
            if params is not None:
                adv = self.scope.transforms.apply_var(adv, params)
                goal = np.repeat(goal, k, axis=0)
        items = self.specificity.items_var(model.logits(adv), goal)
        return T.mean(items)

    def imperceptibility_var(self, delta):
        return self.imperceptibility.var(delta)

    def var(self, delta, idx=None, rng=None):
        sc = self.scope_var(delta, idx, rng)
        if isinstance(self.form, Penalty):
            return T.add(sc, T.mul(self.imperceptibility_var(delta), self.form.gamma))
        return sc

    def value_and_grad(self, delta, idx=None, rng=None):
        return T.value_and_grad(lambda d: self.var(d, idx, rng), delta)

    def value(self, delta, idx=None, rng=None):
        return float(self.var(T.const(delta), idx, rng).value)

    def adversarial(self, delta, xs=None):
        xs = self.xs if xs is None else np.asarray(xs, dtype=np.float64)
        return self.apply_var(T.const(xs), T.const(delta)).value

    def measures(self, delta, rng=None):
        sc = self.scope_var(T.const(delta), rng=rng).value
        im = self.imperceptibility.evaluate(delta)
        first = self.scope_var(T.const(delta), idx=[0], rng=rng).value
        return {"specificity": float(first), "imperceptibility": float(im), "scope": float(sc)}

    def success(self, delta):
        """Per-item success rates of ``delta`` on the scope set (clean transforms)."""
        pred = self._white_box().predict_labels(self.adversarial(delta))
        return self.specificity.success(pred, self.goal_labels)

    def admissible_set(self):
        """Feasible perturbations implied by the form, pixel box and mask."""
        members = []
        if isinstance(self.form, Constraint):
            if self.representation != "additive":
                raise RepresentationMismatch("constraint form needs an Lp measure on an additive perturbation")
            members.append(LpBall(self.imperceptibility.p, self.form.epsilon))
        if self.representation == "additive" and self.box is not None and len(self.xs) == 1:
            members.append(Box(self.box[0], self.box[1], anchor=self.xs[0]))
        s = Intersection(members) if len(members) > 1 else (members[0] if members else Unconstrained())
        if self.mask is not None:
            s = Mask(self.mask, s)
        return s


def compose_objective(sp, im, sc, form, gamma=None, representation=None, box=(0.0, 1.0), mask=None):
    """Build an :class:`Objective`; ``form`` is a Penalty/Constraint or "penalty"/"constraint"."""
    rep = representation or im.representation
    if im.representation != rep:
        raise RepresentationMismatch(f"{im.name} pairs with {im.representation} perturbations, not {rep}")
    if isinstance(form, str):
        if form == "penalty":
            form = Penalty(gamma)
        elif form == "constraint":
            form = Constraint(gamma if gamma is not None else 0.0)
        else:
            raise ValueError(f"unknown form {form!r}")
    if isinstance(form, Penalty) and not (form.gamma is not None and form.gamma > 0):
        raise ValueError("penalty form needs gamma > 0")
    if isinstance(form, Constraint) and rep == "flow":
        raise RepresentationMismatch("flow perturbations are only supported in penalty form")
    return Objective(sp, im, sc, form, rep, box, mask)
