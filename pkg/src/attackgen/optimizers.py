"""Optimization methods that search an admissible set for objective minimizers.

All methods are deterministic given their seed. Each accepts an optional
``monitor(delta)`` callback that sees every iterate, which is how the test
suite checks feasibility.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import BudgetExhausted, InitFailure, NonFiniteError
from .models import Access
from .sets import Box, Intersection, LpBall, Mask, Unconstrained


@dataclass
class AttackResult:
    perturbation: np.ndarray
    representation: str
    trace: list
    measures: dict
    queries: int
    success: bool
    success_rate: float
    per_item_success: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    tags: dict = field(default_factory=dict)
    components: dict = field(default_factory=dict)
    variant: object = None

    @property
    def iterations(self):
        return len(self.trace)

    def to_dict(self):
        return {
            "representation": self.representation,
            "trace": [float(v) for v in self.trace],
            "iterations": self.iterations,
            "measures": self.measures,
            "queries": self.queries,
            "success": bool(self.success),
            "success_rate": float(self.success_rate),
            "per_item_success": [float(v) for v in self.per_item_success],
            "flags": self.flags,
            "tags": self.tags,
            "components": self.components,
        }


@dataclass(frozen=True)
class FGSMConfig:
    epsilon: float


@dataclass(frozen=True)
class PGDConfig:
    alpha: float
    steps: int = 40
    restarts: int = 1
    step_rule: str = "gradient"  # "gradient" or "sign"

    def __post_init__(self):
        if self.steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.step_rule not in ("gradient", "sign"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")

    @classmethod
    def default(cls, epsilon, steps=40):
        return cls(alpha=2.5 * epsilon / steps, steps=steps)


@dataclass(frozen=True)
class LBFGSConfig:
    memory: int = 10
    iters: int = 100
    c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    tol: float = 1e-10


@dataclass(frozen=True)
class BoundaryConfig:
    iters: int = 1000
    source_step: float = 0.05
    orthogonal_step: float = 0.1
    init_trials: int = 200
    init_search_steps: int = 12
    box: tuple = (0.0, 1.0)
    adapt_every: int = 10


@dataclass(frozen=True)
class EOTConfig:
    pgd: PGDConfig


@dataclass(frozen=True)
class UniversalConfig:
    pgd: PGDConfig
    epochs: int = 5
    batch_size: int = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _noop(delta):
    pass


def _queries(obj):
    return obj.specificity.handle.query_count


def _finish(obj, delta, trace, q0, flags=None):
    rates = obj.success(delta)
    rate = float(np.mean(rates))
    single = len(rates) == 1 and not obj.specificity.handle.is_segmenter
    return AttackResult(
        perturbation=delta,
        representation=obj.representation,
        trace=[float(v) for v in trace],
        measures=obj.measures(delta),
        queries=_queries(obj) - q0,
        success=bool(rates[0] == 1.0) if single else rate > 0.5,
        success_rate=rate,
        per_item_success=[float(r) for r in rates],
        flags=flags or {},
        components=obj.components,
    )


def _radius(admissible):
    """Largest L-inf radius implied by the set, for random restarts."""
    if isinstance(admissible, LpBall):
        return admissible.eps
    if isinstance(admissible, Mask):
        return _radius(admissible.inner)
    if isinstance(admissible, Intersection):
        radii = [_radius(m) for m in admissible.members]
        radii = [r for r in radii if r is not None]
        return min(radii) if radii else None
    return None


# ---------------------------------------------------------------------------
# first-order


def fgsm(obj, epsilon=None, admissible=None, monitor=_noop):
    """One signed gradient step of size epsilon from delta = 0."""
    if epsilon is None:
        epsilon = obj.form.epsilon
    admissible = admissible or obj.admissible_set()
    q0 = _queries(obj)
    _, g = obj.value_and_grad(obj.zeros())
    delta = admissible.project(-epsilon * T.sign(g))
    monitor(delta)
    return _finish(obj, delta, [obj.value(delta)], q0)


def _descend(vg, value_only, delta, admissible, cfg, monitor):
    trace = []
    _, g = vg(delta)
    for t in range(cfg.steps):
        step = T.sign(g) if cfg.step_rule == "sign" else g
        delta = admissible.project(delta - cfg.alpha * step)
        if not np.isfinite(delta).all():
            raise NonFiniteError("non-finite iterate")
        monitor(delta)
        if t + 1 < cfg.steps:
            value, g = vg(delta)
        else:
            value = value_only(delta)
        trace.append(value)
    return delta, trace


def _pgd_core(obj, admissible, cfg, seed, monitor, vg, value_only):
    rng = np.random.default_rng(seed)
    best, best_value, trace = None, np.inf, []
    radius = _radius(admissible)
    for r in range(cfg.restarts):
        start = obj.zeros()
        if r > 0:
            scale = radius if radius is not None else cfg.alpha * cfg.steps
            start = admissible.project(rng.uniform(-scale, scale, size=start.shape))
            monitor(start)
        delta, tr = _descend(vg, value_only, start, admissible, cfg, monitor)
        trace.extend(tr)
        if tr[-1] < best_value:
            best, best_value = delta, tr[-1]
    return best, trace


def pgd(obj, admissible=None, config=None, seed=0, monitor=_noop):
    """Projected gradient descent: delta <- P(delta - alpha * step), best of restarts.

    The first restart starts at zero, later ones at seeded uniform points.
    """
    admissible = admissible or obj.admissible_set()
    if config is None:
        config = PGDConfig.default(obj.form.epsilon)
    obj._white_box()
    q0 = _queries(obj)
    delta, trace = _pgd_core(obj, admissible, config, seed, monitor, obj.value_and_grad, obj.value)
    return _finish(obj, delta, trace, q0)


def eot(obj, admissible=None, config=None, seed=0, monitor=_noop):
    """PGD on a K-sample estimate of the expected objective, resampled every step."""
    admissible = admissible or obj.admissible_set()
    cfg = config.pgd if isinstance(config, EOTConfig) else (config or PGDConfig.default(obj.form.epsilon))
    obj._white_box()
    q0 = _queries(obj)
    sampler = np.random.default_rng([seed, 1])

    def vg(d):
        return obj.value_and_grad(d, rng=sampler)

    def value_only(d):
        return obj.value(d, rng=sampler)

    delta, trace = _pgd_core(obj, admissible, cfg, seed, monitor, vg, value_only)
    return _finish(obj, delta, trace, q0)


def universal(obj, admissible=None, config=None, seed=0, monitor=_noop):
    """One shared perturbation, mini-batch projected descent over the scope set.

    Each epoch visits the set in a seeded random order; every mini-batch
    gets ``config.pgd.steps`` projected steps on its own average loss.
    """
    admissible = admissible or obj.admissible_set()
    obj._white_box()
    n = len(obj.xs)
    cfg = config or UniversalConfig(PGDConfig(alpha=1.0 / 255, steps=1, step_rule="sign"))
    bs = cfg.batch_size or min(8, n)
    rng = np.random.default_rng(seed)
    q0 = _queries(obj)
    delta = obj.zeros()
    trace = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = np.sort(order[start:start + bs])
            delta, tr = _descend(lambda d: obj.value_and_grad(d, idx),
                                 lambda d: obj.value(d, idx),
                                 delta, admissible, cfg.pgd, monitor)
            trace.extend(tr)
    return _finish(obj, delta, trace, q0)


# ---------------------------------------------------------------------------
# second-order


def _two_loop(g, memory):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if memory:
        s, y, _ = memory[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs(obj, admissible=None, config=None, monitor=_noop):
    """Projected L-BFGS with Armijo backtracking along the projected path.

    Only accepted iterates enter the trace, so it is non-increasing. A line
    search that exhausts its backtracks stops the run with
    ``flags["line_search_failed"]``.
    """
    cfg = config or LBFGSConfig()
    admissible = admissible or obj.admissible_set()
    obj._white_box()
    q0 = _queries(obj)
    shape = obj.delta_shape
    delta = admissible.project(obj.zeros())
    f, g = obj.value_and_grad(delta)
    g = g.ravel()
    memory = []
    trace = []
    flags = {"line_search_failed": False, "converged": False}
    for _ in range(cfg.iters):
        x = delta.ravel()
        pg = admissible.project((x - g).reshape(shape)).ravel() - x
        if np.linalg.norm(pg) <= cfg.tol:
            flags["converged"] = True
            break
        d = _two_loop(g, memory)
        if g @ d >= 0:
            memory.clear()
            d = -g
        t = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            cand = admissible.project((x + t * d).reshape(shape))
            step = cand.ravel() - x
            f_new, g_new = obj.value_and_grad(cand)
            if f_new <= f + cfg.c1 * (g @ step) and f_new <= f:
                accepted = True
                break
            t *= cfg.shrink
        if not accepted:
            flags["line_search_failed"] = True
            break
        g_new = g_new.ravel()
        y = g_new - g
        sy = step @ y
        if sy > 1e-12:
            memory.append((step, y, 1.0 / sy))
            if len(memory) > cfg.memory:
                memory.pop(0)
        delta, f, g = cand, f_new, g_new
        monitor(delta)
        trace.append(f)
        if np.linalg.norm(step) <= cfg.tol:
            flags["converged"] = True
            break
    return _finish(obj, delta, trace, q0, flags)


# ---------------------------------------------------------------------------
# decision-based


@dataclass(frozen=True)
class Misclassified:
    """c(x') = 1 when the label differs from ``label``."""

    label: int
    name = "Misclassified"

    def __call__(self, pred):
        return pred != self.label


@dataclass(frozen=True)
class TargetLabel:
    """c(x') = 1 when the label equals ``target``; optional start image."""

    target: int
    init_image: object = None
    name = "TargetLabel"

    def __call__(self, pred):
        return pred == self.target


def _labels_of(handle, xs):
    out = handle.predict(xs)
    return out if handle.access is Access.LABEL_ONLY else np.argmax(out, axis=-1)


def boundary_attack(handle, x, criterion, config=None, seed=0, monitor=_noop):
    """Decision-based random walk along the boundary (label access suffices).

    Starts from a seeded random adversarial point, pulls it toward x by
    bisection, then alternates a step on the sphere around x with a step
    toward x. A candidate is kept only if it is still adversarial and no
    farther from x; step sizes adapt to the acceptance rates.
    """
    if handle.is_segmenter:
        raise ValueError("boundary attack supports classifiers only")
    cfg = config or BoundaryConfig()
    rng = np.random.default_rng(seed)
    x = T.as_tensor(x)
    lo, hi = cfg.box
    box = Box(lo, hi)
    q0 = handle.query_count
    flags = {"budget_exhausted": False}

    def adversarial(z):
        return bool(criterion(_labels_of(handle, z[None])[0]))

    adv = None
    try:
        for _ in range(cfg.init_trials):
            cand = rng.uniform(lo, hi, size=x.shape)
            if adversarial(cand):
                adv = cand
                break
        if adv is None and getattr(criterion, "init_image", None) is not None:
            cand = np.asarray(criterion.init_image, dtype=np.float64)
            if adversarial(cand):
                adv = cand
    except BudgetExhausted:
        raise InitFailure("query budget exhausted before an adversarial start was found") from None
    if adv is None:
        raise InitFailure(f"no adversarial starting point in {cfg.init_trials} trials")

    trace = []
    dist = float(np.linalg.norm(adv - x))
    monitor(adv - x)
    src, orth = cfg.source_step, cfg.orthogonal_step
    orth_hits, src_hits = [], []
    try:
        # bisection toward x before the walk
        a, b = 0.0, 1.0  # fraction of (adv - x) kept; b is adversarial
        for _ in range(cfg.init_search_steps):
            mid = 0.5 * (a + b)
            if adversarial(x + mid * (adv - x)):
                b = mid
            else:
                a = mid
        if b < 1.0:
            adv = x + b * (adv - x)
            dist = float(np.linalg.norm(adv - x))
            monitor(adv - x)
        trace.append(dist)
        for it in range(cfg.iters):
            diff = adv - x
            eta = rng.normal(size=x.shape)
            u = diff / max(dist, 1e-300)
            eta -= (eta.ravel() @ u.ravel()) * u
            eta *= orth * dist / max(np.linalg.norm(eta), 1e-300)
            sphere = diff + eta
            sphere *= dist / max(np.linalg.norm(sphere), 1e-300)
            cand = box.project(x + sphere)
            ok_orth = adversarial(cand)
            orth_hits.append(ok_orth)
            if ok_orth:
                cand2 = box.project(x + (1.0 - src) * (cand - x))
                ok_src = adversarial(cand2)
                src_hits.append(ok_src)
                chosen = cand2 if ok_src else cand
                d_new = float(np.linalg.norm(chosen - x))
                if d_new <= dist:
                    adv, dist = chosen, d_new
                    monitor(adv - x)
            trace.append(dist)
            if (it + 1) % cfg.adapt_every == 0:
                if orth_hits:
                    orth = orth * 1.5 if np.mean(orth_hits) > 0.5 else orth / 1.5
                    orth = min(orth, 1.0)
                if src_hits:
                    src = src * 1.5 if np.mean(src_hits) > 0.25 else src / 1.5
                    src = min(src, 0.5)
                orth_hits, src_hits = [], []
                if dist == 0.0 or (orth < 1e-12 and src < 1e-12):
                    break
    except BudgetExhausted:
        flags["budget_exhausted"] = True

    delta = adv - x
    return AttackResult(
        perturbation=delta,
        representation="additive",
        trace=trace,
        measures={"specificity": 1.0, "imperceptibility": float(delta.ravel() @ delta.ravel()),
                  "scope": 1.0},
        queries=handle.query_count - q0,
        success=True,
        success_rate=1.0,
        per_item_success=[1.0],
        flags=flags,
        components={"specificity": criterion.name, "scope": "Individual",
                    "imperceptibility": "L2^2", "form": "Decision",
                    "representation": "additive"},
    )


__all__ = [
    "AttackResult", "FGSMConfig", "PGDConfig", "LBFGSConfig", "BoundaryConfig", "EOTConfig",
    "UniversalConfig", "fgsm", "pgd", "lbfgs", "boundary_attack", "eot", "universal",
    "Misclassified", "TargetLabel", "Unconstrained",
]
