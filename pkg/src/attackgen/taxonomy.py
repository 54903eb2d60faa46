"""Threat-model tags, attack specs, validation and assembly.

An :class:`AttackSpec` is a plain JSON-serializable description of an attack:
taxonomy tags plus one config dict per building block (specificity,
imperceptibility, scope, form, admissible set, optimizer). :func:`validate`
checks it against the compatibility rules and :func:`assemble` turns it into
a :class:`RunnableAttack`.
"""

import enum
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import datasets, models, perturb
from . import measures as ms
from . import optimizers as opt
from . import targets as tgt
from .errors import ShapeError, ValidationError
from .models import Access, ModelHandle
from .sets import Box


class Specificity(str, enum.Enum):
    UNTARGETED = "Untargeted"
    STATIC = "StaticTarget"
    DYNAMIC = "DynamicTarget"
    CONFUSING = "ConfusingTarget"


class Scope(str, enum.Enum):
    INDIVIDUAL = "Individual"
    CONTEXTUAL = "Contextual"
    UNIVERSAL = "Universal"


class Imperceptibility(str, enum.Enum):
    LP = "LpBased"
    ATTENTION = "AttentionBased"
    OUTPUT = "OutputImperceptibility"
    DETECTOR = "DetectorImperceptibility"


class ModelKnowledge(str, enum.Enum):
    WHITE_BOX = "WhiteBox"
    OUTPUT_TRANSPARENT = "OutputTransparent"
    QUERY_LIMITED = "QueryLimited"
    LABEL_ONLY = "LabelOnly"
    FULL_BLACK_BOX = "FullBlackBox"


class DataKnowledge(str, enum.Enum):
    TRAINING = "TrainingData"
    SURROGATE = "SurrogateData"


class InputConstraint(str, enum.Enum):
    DIGITAL = "DigitalFeed"
    SPATIAL = "SpatialConstraint"


class ModelBasis(str, enum.Enum):
    VICTIM = "VictimModel"
    SURROGATE = "SurrogateModel"


class DataBasis(str, enum.Enum):
    TRAINING = "TrainingData"
    SURROGATE = "SurrogateData"


class OptMethod(str, enum.Enum):
    FIRST_ORDER = "FirstOrder"
    SECOND_ORDER = "SecondOrder"
    EVOLUTION = "EvolutionRandomSampling"


TAG_ENUMS = {
    "specificity": Specificity,
    "scope": Scope,
    "imperceptibility": Imperceptibility,
    "model_knowledge": ModelKnowledge,
    "data_knowledge": DataKnowledge,
    "input_constraint": InputConstraint,
    "model_basis": ModelBasis,
    "data_basis": DataBasis,
    "opt_method": OptMethod,
}


@dataclass(frozen=True)
class TaxonomyTags:
    specificity: Specificity
    scope: Scope
    imperceptibility: Imperceptibility
    model_knowledge: ModelKnowledge
    data_knowledge: DataKnowledge
    input_constraint: InputConstraint
    model_basis: ModelBasis
    data_basis: DataBasis
    opt_method: OptMethod

    def to_dict(self):
        return {f.name: getattr(self, f.name).value for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        _reject_unknown(d, TAG_ENUMS, "tags")
        missing = [k for k in TAG_ENUMS if k not in d]
        if missing:
            raise ValidationError([f"tags: missing {', '.join(missing)}"])
        out, bad = {}, []
        for key, enum_cls in TAG_ENUMS.items():
            try:
                out[key] = enum_cls(d[key])
            except ValueError:
                allowed = ", ".join(e.value for e in enum_cls)
                bad.append(f"tags.{key}: {d[key]!r} is not one of {allowed}")
        if bad:
            raise ValidationError(bad)
        return cls(**out)


# allowed keys per block variant; "variant" itself is implicit
BLOCK_KEYS = {
    "specificity": {
        "Untargeted": set(),
        "StaticTarget": {"target", "remove_class", "reference_index"},
        "DynamicTarget": {"target_class"},
        "ConfusionTarget": {"target_class", "factor"},
    },
    "imperceptibility": {
        "Lp": {"p", "squared"},
        "FlowTV": set(),
        "Output": set(),
        "Detector": set(),
    },
    "scope": {
        "Individual": {"index"},
        "MonteCarlo": {"limit"},
        "Contextual": {"index", "samples", "transforms", "max_shift", "max_rotation", "std"},
    },
    "form": {
        "Constraint": {"epsilon"},
        "Penalty": {"gamma"},
        "Decision": set(),
    },
    "optimizer": {
        "FGSM": set(),
        "PGD": {"alpha", "steps", "restarts", "step_rule"},
        "LBFGS": {"memory", "iters", "c1", "shrink", "max_backtracks", "tol"},
        "Boundary": {"iters", "source_step", "orthogonal_step", "init_trials", "init_search_steps"},
        "EOT": {"alpha", "steps", "restarts", "step_rule"},
        "Universal": {"alpha", "steps", "step_rule", "epochs", "batch_size"},
    },
}
ADMISSIBLE_KEYS = {"box", "mask"}
SPEC_KEYS = {"name", "tags", "specificity", "imperceptibility", "scope", "form", "admissible",
             "optimizer", "model", "data", "seed", "max_queries"}

OPT_METHOD_OF = {
    "FGSM": OptMethod.FIRST_ORDER, "PGD": OptMethod.FIRST_ORDER, "EOT": OptMethod.FIRST_ORDER,
    "Universal": OptMethod.FIRST_ORDER, "LBFGS": OptMethod.SECOND_ORDER,
    "Boundary": OptMethod.EVOLUTION,
}
SCOPE_OF = {"Individual": Scope.INDIVIDUAL, "MonteCarlo": Scope.UNIVERSAL, "Contextual": Scope.CONTEXTUAL}
SPECIFICITY_OF = {"Untargeted": Specificity.UNTARGETED, "StaticTarget": Specificity.STATIC,
                  "DynamicTarget": Specificity.DYNAMIC, "ConfusionTarget": Specificity.CONFUSING}


def _reject_unknown(d, allowed, where):
    if not isinstance(d, dict):
        raise ValidationError([f"{where}: expected an object"])
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ValidationError([f"{where}: unknown key(s) {', '.join(extra)}"])


@dataclass(frozen=True)
class AttackSpec:
    name: str
    tags: TaxonomyTags
    specificity: dict
    imperceptibility: dict
    scope: dict
    form: dict
    admissible: dict
    optimizer: dict
    model: str = "model.agt"
    data: str = "patterns"
    seed: int = 0
    max_queries: int = None

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["tags"] = self.tags.to_dict()
        return json.loads(json.dumps(d))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        _reject_unknown(d, SPEC_KEYS, "spec")
        required = SPEC_KEYS - {"model", "data", "seed", "max_queries"}
        missing = sorted(required - set(d))
        if missing:
            raise ValidationError([f"spec: missing {', '.join(missing)}"])
        for block, variants in BLOCK_KEYS.items():
            cfg = d[block]
            if not isinstance(cfg, dict) or "variant" not in cfg:
                raise ValidationError([f"{block}: needs a 'variant'"])
            if cfg["variant"] not in variants:
                raise ValidationError([f"{block}: unknown variant {cfg['variant']!r}"])
            _reject_unknown(cfg, variants[cfg["variant"]] | {"variant"}, block)
        _reject_unknown(d["admissible"], ADMISSIBLE_KEYS, "admissible")
        kw = dict(d)
        kw["tags"] = TaxonomyTags.from_dict(d["tags"])
        return cls(**kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def with_overrides(self, epsilon=None, gamma=None, seed=None, model=None, data=None):
        form = dict(self.form)
        if epsilon is not None:
            if form["variant"] != "Constraint":
                raise ValidationError([f"--epsilon needs a Constraint form, spec has {form['variant']}"])
            form["epsilon"] = float(epsilon)
        if gamma is not None:
            if form["variant"] != "Penalty":
                raise ValidationError([f"--gamma needs a Penalty form, spec has {form['variant']}"])
            form["gamma"] = float(gamma)
        return replace(self, form=form,
                       seed=self.seed if seed is None else int(seed),
                       model=self.model if model is None else str(model),
                       data=self.data if data is None else str(data))

    def decomposition(self):
        """Building-block identifiers recorded for the preset golden test."""
        im = self.imperceptibility
        if im["variant"] == "Lp":
            p = im.get("p", "inf")
            im_name = f"L{p}" + ("^2" if im.get("squared") else "")
        else:
            im_name = im["variant"]
        sc = self.scope["variant"]
        return {
            "specificity": self.specificity["variant"],
            "scope": sc,
            "scope_transforms": self.scope.get("transforms", "affine") if sc == "Contextual" else None,
            "imperceptibility": im_name,
            "form": self.form["variant"],
            "optimizer": self.optimizer["variant"],
            "opt_method": self.tags.opt_method.value,
            "model_knowledge": self.tags.model_knowledge.value,
            "representation": "flow" if im["variant"] == "FlowTV" else "additive",
        }


def load_spec(path):
    return AttackSpec.from_json(Path(path).read_text())


def save_spec(spec, path):
    Path(path).write_text(spec.to_json() + "\n")


# ---------------------------------------------------------------------------
# validation


def _data_size(data_id):
    defaults = {"blobs": 200, "shapes": 200, "patterns": 300}
    kind, _, rest = str(data_id).partition(":")
    opts = dict(item.partition("=")[::2] for item in filter(None, rest.split(",")))
    n = int(opts.get("n", defaults.get(kind, 0)))
    if "part" in opts:
        k = int(round(float(opts.get("fraction", 0.5)) * n))
        n = k if opts["part"] == "training" else n - k
    return n


def validate(spec):
    """List of rule violations; an empty list means the spec may be assembled."""
    t = spec.tags
    v = []
    gradient = t.opt_method in (OptMethod.FIRST_ORDER, OptMethod.SECOND_ORDER)
    on_victim = t.model_basis is ModelBasis.VICTIM
    if gradient and on_victim and t.model_knowledge is not ModelKnowledge.WHITE_BOX:
        v.append(f"{t.opt_method.value} optimization needs gradients: requires WhiteBox access "
                 f"to the model basis, got {t.model_knowledge.value}")
    if (t.model_knowledge is ModelKnowledge.LABEL_ONLY and on_victim
            and t.opt_method is not OptMethod.EVOLUTION):
        v.append("LabelOnly access admits only EvolutionRandomSampling methods")
    if t.model_knowledge is ModelKnowledge.FULL_BLACK_BOX and on_victim:
        v.append("FullBlackBox knowledge requires model_basis = SurrogateModel (victim cannot be queried)")
    if t.imperceptibility in (Imperceptibility.OUTPUT, Imperceptibility.DETECTOR):
        v.append(f"{t.imperceptibility.value}: not implemented")

    im = spec.imperceptibility["variant"]
    if im in ("Output", "Detector") and t.imperceptibility not in (Imperceptibility.OUTPUT,
                                                                   Imperceptibility.DETECTOR):
        v.append(f"imperceptibility variant {im}: not implemented")
    if t.imperceptibility is Imperceptibility.ATTENTION and im != "FlowTV":
        v.append("AttentionBased imperceptibility requires the flow-field representation (FlowTV)")
    if t.imperceptibility is Imperceptibility.LP and im != "Lp":
        v.append(f"LpBased imperceptibility requires an Lp measure, got {im}")

    sp = spec.specificity["variant"]
    if SPECIFICITY_OF[sp] is not t.specificity:
        v.append(f"specificity tag {t.specificity.value} does not match measure {sp}")
    sc = spec.scope["variant"]
    if SCOPE_OF[sc] is not t.scope:
        v.append(f"scope tag {t.scope.value} does not match scope measure {sc}")
    if t.scope is Scope.UNIVERSAL and _data_size(spec.data) < 2:
        v.append("Universal scope requires a multi-item data basis")

    op = spec.optimizer["variant"]
    if OPT_METHOD_OF[op] is not t.opt_method:
        v.append(f"optimizer {op} is {OPT_METHOD_OF[op].value}, tag says {t.opt_method.value}")
    form = spec.form["variant"]
    if op == "Boundary":
        if form != "Decision":
            v.append("Boundary optimizer uses the Decision form")
        if sc != "Individual":
            v.append("Boundary optimizer needs Individual scope")
        if sp not in ("Untargeted", "StaticTarget"):
            v.append("Boundary optimizer supports Untargeted or class-StaticTarget criteria")
        if im != "Lp" or str(spec.imperceptibility.get("p")) != "2":
            v.append("Boundary optimizer minimizes an L2 distance")
    elif form == "Decision":
        v.append("Decision form is only meaningful for the Boundary optimizer")
    if op == "FGSM" and (form != "Constraint" or im != "Lp" or str(spec.imperceptibility.get("p", "inf")) != "inf"):
        v.append("FGSM needs a Constraint form with an Linf measure")
    if op == "LBFGS" and form != "Penalty":
        v.append("LBFGS solves the Penalty form")
    if op == "EOT" and sc != "Contextual":
        v.append("EOT needs a Contextual scope")
    if op == "Universal" and sc != "MonteCarlo":
        v.append("Universal optimizer needs a MonteCarlo scope over the data basis")
    if op in ("Universal", "EOT") and form != "Constraint":
        v.append(f"{op} needs a Constraint form")
    if form == "Constraint":
        eps = spec.form.get("epsilon")
        if eps is None or not float(eps) >= 0:
            v.append("Constraint form needs epsilon >= 0")
        if im == "FlowTV":
            v.append("flow-field perturbations are only supported in Penalty form")
    if form == "Penalty":
        gamma = spec.form.get("gamma")
        if gamma is None or not float(gamma) > 0:
            v.append("Penalty form needs gamma > 0")
    if t.input_constraint is InputConstraint.SPATIAL and not spec.admissible.get("mask"):
        v.append("SpatialConstraint requires a mask in the admissible set")
    if spec.admissible.get("mask") and t.input_constraint is not InputConstraint.SPATIAL:
        v.append("a mask in the admissible set needs input_constraint = SpatialConstraint")
    if t.model_knowledge is ModelKnowledge.QUERY_LIMITED and not spec.max_queries:
        v.append("QueryLimited knowledge needs max_queries")
    return v


# ---------------------------------------------------------------------------
# assembly


ACCESS_OF = {
    ModelKnowledge.WHITE_BOX: Access.WHITE_BOX,
    ModelKnowledge.OUTPUT_TRANSPARENT: Access.OUTPUT_TRANSPARENT,
    ModelKnowledge.QUERY_LIMITED: Access.QUERY_LIMITED,
    ModelKnowledge.LABEL_ONLY: Access.LABEL_ONLY,
}


def _p_of(cfg):
    p = cfg.get("p", "inf")
    return "inf" if str(p) == "inf" else int(p)


def build_specificity(cfg, model, dataset):
    kind = cfg["variant"]
    if kind == "Untargeted":
        return ms.Untargeted()
    if kind == "DynamicTarget":
        return ms.DynamicTarget(int(cfg["target_class"]))
    if kind == "ConfusionTarget":
        return ms.ConfusionTarget(int(cfg["target_class"]), float(cfg.get("factor", 1.5)))
    if "target" in cfg:
        return ms.StaticTarget(cfg["target"] if np.ndim(cfg["target"]) == 0 else np.asarray(cfg["target"]))
    # a fixed map: the clean prediction of one reference scene with a class removed
    ref = dataset.xs[int(cfg.get("reference_index", 0))]
    pred = model.predict_labels(ref)
    return ms.StaticTarget(tgt.dynamic_labels(pred, int(cfg["remove_class"])))


def _transforms(cfg, input_shape):
    kind = cfg.get("transforms", "affine" if len(input_shape) == 3 else "gaussian")
    if kind == "identity":
        return ms.IdentityTransforms()
    if kind == "affine":
        return ms.AffineJitter(float(cfg.get("max_shift", 2.0)), float(cfg.get("max_rotation", 5.0)))
    if kind == "gaussian":
        return ms.GaussianJitter(float(cfg.get("std", 0.05)))
    raise ValueError(f"unknown transform family {kind!r}")


def _mask(cfg, input_shape):
    if not cfg:
        return None
    if "indices" in cfg:
        m = np.zeros(input_shape[0])
        m[np.asarray(cfg["indices"], dtype=np.int64)] = 1.0
        return m
    m = np.zeros(input_shape[:2])
    (r0, r1), (c0, c1) = cfg["rows"], cfg["cols"]
    m[r0:r1, c0:c1] = 1.0
    return m


@dataclass
class RunnableAttack:
    """An assembled attack; ``run()`` produces a tagged AttackResult."""

    spec: AttackSpec
    handle: ModelHandle
    dataset: object
    model: object = None
    objective: object = None
    admissible: object = None
    variant: object = None
    x: np.ndarray = None
    y: object = None

    @property
    def components(self):
        if self.objective is not None:
            return self.objective.components
        return {"specificity": self.variant.name, "scope": "Individual",
                "imperceptibility": "L2^2", "form": "Decision", "representation": "additive"}

    def run(self, monitor=None):
        monitor = monitor or opt._noop
        cfg = dict(self.spec.optimizer)
        kind = cfg.pop("variant")
        seed = self.spec.seed
        obj = self.objective
        if kind == "FGSM":
            res = opt.fgsm(obj, admissible=self.admissible, monitor=monitor)
        elif kind == "PGD":
            res = opt.pgd(obj, self.admissible, self._pgd_config(cfg), seed, monitor)
        elif kind == "EOT":
            res = opt.eot(obj, self.admissible, opt.EOTConfig(self._pgd_config(cfg)), seed, monitor)
        elif kind == "Universal":
            epochs = int(cfg.pop("epochs", 5))
            batch = cfg.pop("batch_size", None)
            cfg.setdefault("steps", 1)
            ucfg = opt.UniversalConfig(self._pgd_config(cfg), epochs, None if batch is None else int(batch))
            res = opt.universal(obj, self.admissible, ucfg, seed, monitor)
        elif kind == "LBFGS":
            res = opt.lbfgs(obj, self.admissible, opt.LBFGSConfig(**cfg), monitor)
        else:
            res = self._run_boundary(cfg, seed, monitor)
        res.tags = self.spec.tags.to_dict()
        res.variant = self.variant
        return res

    def _pgd_config(self, cfg):
        cfg = dict(cfg)
        eps = self.spec.form.get("epsilon")
        steps = int(cfg.pop("steps", 40))
        alpha = cfg.pop("alpha", None)
        if alpha is None:
            alpha = 2.5 * float(eps) / steps if eps else 0.01
        return opt.PGDConfig(alpha=float(alpha), steps=steps, restarts=int(cfg.pop("restarts", 1)),
                             step_rule=cfg.pop("step_rule", "gradient"))

    def _run_boundary(self, cfg, seed, monitor):
        bcfg = opt.BoundaryConfig(box=(self.admissible.lo, self.admissible.hi), **cfg)
        if isinstance(self.variant, ms.Untargeted):
            criterion = opt.Misclassified(int(self.y))
        else:
            target = int(self.variant.target)
            hits = np.flatnonzero(self.dataset.ys == target)
            init = self.dataset.xs[hits[0]] if len(hits) else None
            criterion = opt.TargetLabel(target, init)
        return opt.boundary_attack(self.handle, self.x, criterion, bcfg, seed, monitor)


def _load_model(model):
    if isinstance(model, models.VictimModel):
        return model
    return models.load_weights(model)


def assemble(spec, model=None, dataset=None):
    """Build the runnable attack; raises ValidationError listing every violation."""
    violations = validate(spec)
    if violations:
        raise ValidationError(violations)
    victim = _load_model(model if model is not None else spec.model)
    ds = dataset if dataset is not None else datasets.from_id(spec.data, seed=None)
    if tuple(ds.xs.shape[1:]) != tuple(victim.input_shape):
        raise ShapeError(f"data items {ds.xs.shape[1:]} do not fit model input {victim.input_shape}")
    t = spec.tags
    if t.model_basis is ModelBasis.SURROGATE:
        access = Access.WHITE_BOX
    else:
        access = ACCESS_OF[t.model_knowledge]
    handle = ModelHandle(victim, access, spec.max_queries)
    variant = build_specificity(spec.specificity, victim, ds)

    sc = spec.scope
    index = int(sc.get("index", 0))
    x, y = ds.xs[index], ds.ys[index]
    if spec.optimizer["variant"] == "Boundary":
        box = spec.admissible.get("box")
        if box is None:
            # unbounded inputs: sample starts from the data range widened by half its span
            lo, hi = float(ds.xs.min()), float(ds.xs.max())
            box = (lo - 0.5 * (hi - lo), hi + 0.5 * (hi - lo))
        return RunnableAttack(spec, handle, ds, victim, admissible=Box(box[0], box[1], anchor=x),
                              variant=variant, x=x, y=y)

    if sc["variant"] == "Individual":
        scope = ms.Individual(x, y)
    elif sc["variant"] == "MonteCarlo":
        limit = sc.get("limit")
        sl = slice(None) if limit is None else slice(0, int(limit))
        scope = ms.MonteCarlo(ds.xs[sl], ds.ys[sl])
    else:
        scope = ms.Contextual(x, y, _transforms(sc, victim.input_shape), int(sc.get("samples", 4)),
                              seed=spec.seed)
    imc = spec.imperceptibility
    im = ms.FlowTV() if imc["variant"] == "FlowTV" else ms.LpNorm(_p_of(imc), bool(imc.get("squared", False)))
    form = spec.form
    form_obj = (ms.Constraint(float(form["epsilon"])) if form["variant"] == "Constraint"
                else ms.Penalty(float(form["gamma"])))
    box = spec.admissible.get("box")
    mask = _mask(spec.admissible.get("mask"), victim.input_shape)
    obj = ms.compose_objective(ms.SpecificityMeasure(variant, handle), im, scope, form_obj,
                               box=None if box is None else tuple(box), mask=mask)
    return RunnableAttack(spec, handle, ds, victim, objective=obj, admissible=obj.admissible_set(),
                          variant=variant, x=x, y=y)


# ---------------------------------------------------------------------------
# transfer


def _perturbed(xs, delta, representation, box):
    if representation == "flow":
        return perturb.apply_flow(xs, delta)
    return perturb.apply_additive(xs, delta, box)


def transfer_evaluate(result, victim, eval_set, variant=None, box=(0.0, 1.0), representation=None):
    """Apply a crafted perturbation to ``victim`` on ``eval_set`` and report success.

    Goals are recomputed from the victim's own clean predictions, so targeted
    goals transfer as intended. Success uses the same per-item rule as the
    attack result itself.
    """
    delta = np.asarray(result.perturbation if hasattr(result, "perturbation") else result, dtype=np.float64)
    rep = representation or getattr(result, "representation", "additive")
    variant = variant or getattr(result, "variant", None) or ms.Untargeted()
    handle = victim if isinstance(victim, ModelHandle) else ModelHandle(victim)
    want = tuple(handle.input_shape[:2]) + (2,) if rep == "flow" else tuple(handle.input_shape)
    if delta.shape != want:
        raise ShapeError(f"perturbation {delta.shape} does not fit victim input {handle.input_shape}")
    if tuple(eval_set.xs.shape[1:]) != tuple(handle.input_shape):
        raise ShapeError(f"eval items {eval_set.xs.shape[1:]} do not fit victim input {handle.input_shape}")
    xs, ys = eval_set.xs, eval_set.ys
    m = ms.SpecificityMeasure(variant, handle)
    goal = m.target_labels(xs, ys)
    clean = opt._labels_of(handle, xs)
    adv = opt._labels_of(handle, _perturbed(xs, delta, rep, box))
    per_item = m.success(adv, goal)
    report = {
        "n_items": int(len(xs)),
        "transfer_success_rate": float(per_item.mean()),
        "per_item_success": [float(r) for r in per_item],
        "clean_error_rate": float((clean != ys).mean()),
        "adversarial_error_rate": float((adv != ys).mean()),
        "specificity": variant.name,
    }
    if handle.is_segmenter:
        report["per_pixel_success_rate"] = report["transfer_success_rate"]
        cls = getattr(variant, "target_class", None)
        if cls is not None:
            before = (clean == cls).reshape(len(xs), -1).sum(1)
            after = (adv == cls).reshape(len(xs), -1).sum(1)
            report["target_class"] = int(cls)
            report["target_pixels_before"] = [int(b) for b in before]
            report["target_pixels_after"] = [int(a) for a in after]
    return report


# ---------------------------------------------------------------------------
# presets


SEG_EPSILON = 15.0 / 255.0
PEDESTRIAN = datasets.PEDESTRIAN


def _tags(sp, sc, im="LpBased", mk="WhiteBox", om="FirstOrder", data="TrainingData"):
    return TaxonomyTags.from_dict({
        "specificity": sp, "scope": sc, "imperceptibility": im, "model_knowledge": mk,
        "data_knowledge": data, "input_constraint": "DigitalFeed", "model_basis": "VictimModel",
        "data_basis": data, "opt_method": om,
    })


def _preset_table():
    box = {"box": [0.0, 1.0]}
    return {
        "fgsm": dict(
            tags=_tags("Untargeted", "Individual"),
            specificity={"variant": "Untargeted"},
            imperceptibility={"variant": "Lp", "p": "inf"},
            scope={"variant": "Individual", "index": 0},
            form={"variant": "Constraint", "epsilon": 0.1},
            admissible=box, optimizer={"variant": "FGSM"}, data="patterns"),
        "lbfgs": dict(
            tags=_tags("StaticTarget", "Individual", om="SecondOrder"),
            specificity={"variant": "StaticTarget", "target": 1},
            imperceptibility={"variant": "Lp", "p": 2},
            scope={"variant": "Individual", "index": 0},
            form={"variant": "Penalty", "gamma": 0.1},
            admissible=box, optimizer={"variant": "LBFGS", "memory": 10, "iters": 100}, data="patterns"),
        "pgd": dict(
            tags=_tags("Untargeted", "Individual"),
            specificity={"variant": "Untargeted"},
            imperceptibility={"variant": "Lp", "p": "inf"},
            scope={"variant": "Individual", "index": 0},
            form={"variant": "Constraint", "epsilon": 0.1},
            admissible=box,
            optimizer={"variant": "PGD", "alpha": 0.00625, "steps": 40, "restarts": 1, "step_rule": "sign"},
            data="patterns"),
        "boundary": dict(
            tags=_tags("Untargeted", "Individual", mk="LabelOnly", om="EvolutionRandomSampling"),
            specificity={"variant": "Untargeted"},
            imperceptibility={"variant": "Lp", "p": 2, "squared": True},
            scope={"variant": "Individual", "index": 0},
            form={"variant": "Decision"},
            admissible=box,
            optimizer={"variant": "Boundary", "iters": 1000, "source_step": 0.05, "orthogonal_step": 0.1,
                       "init_trials": 200},
            data="patterns"),
        "eot": dict(
            tags=_tags("StaticTarget", "Contextual"),
            specificity={"variant": "StaticTarget", "target": 1},
            imperceptibility={"variant": "Lp", "p": "inf"},
            scope={"variant": "Contextual", "index": 0, "samples": 4},
            form={"variant": "Constraint", "epsilon": 0.1},
            admissible=box,
            optimizer={"variant": "EOT", "alpha": 0.01, "steps": 40, "restarts": 1, "step_rule": "sign"},
            data="patterns"),
        "metzen-static": dict(
            tags=_tags("StaticTarget", "Universal"),
            specificity={"variant": "StaticTarget", "remove_class": PEDESTRIAN, "reference_index": 0},
            imperceptibility={"variant": "Lp", "p": "inf"},
            scope={"variant": "MonteCarlo"},
            form={"variant": "Constraint", "epsilon": SEG_EPSILON},
            admissible=box,
            optimizer={"variant": "Universal", "alpha": 1.0 / 255, "steps": 1, "step_rule": "sign",
                       "epochs": 40, "batch_size": 50},
            data="shapes:n=50,seed=1"),
        "metzen-dynamic": dict(
            tags=_tags("DynamicTarget", "Universal"),
            specificity={"variant": "DynamicTarget", "target_class": PEDESTRIAN},
            imperceptibility={"variant": "Lp", "p": "inf"},
            scope={"variant": "MonteCarlo"},
            form={"variant": "Constraint", "epsilon": SEG_EPSILON},
            admissible=box,
            optimizer={"variant": "Universal", "alpha": 1.0 / 255, "steps": 1, "step_rule": "sign",
                       "epochs": 40, "batch_size": 50},
            data="shapes:n=50,seed=1"),
        "confusion": dict(
            tags=_tags("ConfusingTarget", "Individual"),
            specificity={"variant": "ConfusionTarget", "target_class": PEDESTRIAN, "factor": 1.5},
            imperceptibility={"variant": "Lp", "p": "inf"},
            scope={"variant": "Individual", "index": 0},
            form={"variant": "Constraint", "epsilon": SEG_EPSILON},
            admissible=box,
            optimizer={"variant": "PGD", "alpha": 1.0 / 255, "steps": 40, "restarts": 1, "step_rule": "sign"},
            data="shapes:n=50,seed=1"),
        "flow-dynamic": dict(
            tags=_tags("DynamicTarget", "Individual", im="AttentionBased", om="SecondOrder"),
            specificity={"variant": "DynamicTarget", "target_class": PEDESTRIAN},
            imperceptibility={"variant": "FlowTV"},
            scope={"variant": "Individual", "index": 0},
            form={"variant": "Penalty", "gamma": 0.001},
            admissible={"box": None},
            optimizer={"variant": "LBFGS", "memory": 10, "iters": 100},
            data="shapes:n=50,seed=1"),
    }


PRESET_NAMES = ("fgsm", "lbfgs", "pgd", "boundary", "eot", "metzen-static", "metzen-dynamic",
                "flow-dynamic", "confusion")


def preset(name, model="model.agt", data=None, seed=0, **blocks):
    """A shipped preset spec; keyword arguments replace whole blocks (e.g. ``admissible``)."""
    table = _preset_table()
    if name not in table:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    kw = table[name]
    if data is not None:
        kw["data"] = data
    kw.update(blocks)
    return AttackSpec(name=name, model=str(model), seed=int(seed), **kw)


__all__ = [
    "Specificity", "Scope", "Imperceptibility", "ModelKnowledge", "DataKnowledge", "InputConstraint",
    "ModelBasis", "DataBasis", "OptMethod", "TaxonomyTags", "AttackSpec", "RunnableAttack",
    "validate", "assemble", "transfer_evaluate", "preset", "PRESET_NAMES", "load_spec", "save_spec",
]
