"""Admissible sets for perturbations and their projections."""

from dataclasses import dataclass

import numpy as np


def project_simplex(v, radius=1.0):
    """Euclidean projection of a non-negative vector onto {w >= 0, sum w = radius} (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    k = np.arange(1, len(u) + 1)
    # index 0 always qualifies in exact arithmetic; rounding can lose it for tiny radii
    hits = np.nonzero(u - css / k > 0)[0]
    rho = hits[-1] if hits.size else 0
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_l1_ball(v, eps):
    flat = v.ravel()
    if eps <= 0:
        return np.zeros_like(v)
    if np.abs(flat).sum() <= eps:
        return v.copy()
    w = project_simplex(np.abs(flat), eps)
    return (np.sign(flat) * w).reshape(v.shape)


def _p(p):
    if p in ("inf", "Inf", np.inf, float("inf")):
        return np.inf
    p = int(p)
    if p not in (1, 2):
        raise ValueError(f"p must be 1, 2 or inf, got {p}")
    return p


def lp_norm(v, p):
    p = _p(p)
    flat = np.asarray(v, dtype=np.float64).ravel()
    if flat.size == 0:
        return 0.0
    if p == np.inf:
        return float(np.abs(flat).max())
    if p == 1:
        return float(np.abs(flat).sum())
    return float(np.sqrt(flat @ flat))


class AdmissibleSet:
    def project(self, v):
        raise NotImplementedError

    def contains(self, v, tol=1e-12):
        raise NotImplementedError

    def __and__(self, other):
        return Intersection((self, other))


@dataclass(frozen=True)
class Unconstrained(AdmissibleSet):
    def project(self, v):
        return np.array(v, dtype=np.float64)

    def contains(self, v, tol=1e-12):
        return bool(np.isfinite(v).all())

    def describe(self):
        return {"variant": "unconstrained"}


class Box(AdmissibleSet):
    """lo <= anchor + v <= hi; without an anchor the bounds apply to v itself."""

    def __init__(self, lo, hi, anchor=None):
        if lo > hi:
            raise ValueError("box needs lo <= hi")
        self.lo, self.hi = float(lo), float(hi)
        self.anchor = None if anchor is None else np.asarray(anchor, dtype=np.float64)

    def project(self, v):
        v = np.asarray(v, dtype=np.float64)
        if self.anchor is None:
            return np.clip(v, self.lo, self.hi)
        return np.clip(self.anchor + v, self.lo, self.hi) - self.anchor

    def contains(self, v, tol=1e-12):
        z = np.asarray(v) if self.anchor is None else self.anchor + v
        return bool(((z >= self.lo - tol) & (z <= self.hi + tol)).all())

    def describe(self):
        return {"variant": "box", "lo": self.lo, "hi": self.hi, "anchored": self.anchor is not None}


class LpBall(AdmissibleSet):
    def __init__(self, p, eps):
        if eps < 0:
            raise ValueError("epsilon must be non-negative")
        self.p = _p(p)
        self.eps = float(eps)

    def project(self, v):
        v = np.asarray(v, dtype=np.float64)
        if self.p == np.inf:
            return np.clip(v, -self.eps, self.eps)
        if self.p == 2:
            n = lp_norm(v, 2)
            if n <= self.eps:
                return v.copy()
            return v * (self.eps / n)
        return project_l1_ball(v, self.eps)

    def contains(self, v, tol=1e-12):
        return lp_norm(v, self.p) <= self.eps + tol

    def describe(self):
        return {"variant": "lp_ball", "p": "inf" if self.p == np.inf else self.p, "epsilon": self.eps}


class Mask(AdmissibleSet):
    """Perturbation is zero outside ``mask`` and lies in ``inner`` inside it."""

    def __init__(self, mask, inner=None):
        self.mask = np.asarray(mask, dtype=np.float64)
        if not np.isin(self.mask, (0.0, 1.0)).all():
            raise ValueError("mask must be binary")
        self.inner = inner if inner is not None else Unconstrained()

    def _mask_for(self, v):
        return np.broadcast_to(self.mask.reshape(self.mask.shape + (1,) * (v.ndim - self.mask.ndim)), v.shape)

    def project(self, v):
        v = np.asarray(v, dtype=np.float64)
        return self.inner.project(v * self._mask_for(v)) * self._mask_for(v)

    def contains(self, v, tol=1e-12):
        v = np.asarray(v)
        outside = v[self._mask_for(v) == 0]
        return bool((outside == 0).all()) and self.inner.contains(v, tol)

    def describe(self):
        return {"variant": "mask", "inner": self.inner.describe()}


class Intersection(AdmissibleSet):
    """Projects through each member in order.

    For the combinations used here (Lp ball then anchored box with the anchor
    inside the box, any set inside a mask) the result lies in every member:
    box clipping only shrinks each coordinate toward zero, which cannot leave
    an Lp ball or break a mask. For L-inf balls the result is the exact
    Euclidean projection.
    """

    def __init__(self, members):
        flat = []
        for m in members:
            flat.extend(m.members if isinstance(m, Intersection) else [m])
        self.members = tuple(flat)

    def project(self, v):
        for m in self.members:
            v = m.project(v)
        return v

    def contains(self, v, tol=1e-12):
        return all(m.contains(v, tol) for m in self.members)

    def describe(self):
        return {"variant": "intersection", "members": [m.describe() for m in self.members]}


def project(admissible, v):
    return admissible.project(v)
