"""Perturbation representations and how they are applied to inputs.

Additive perturbations are image-shaped deltas. Flow fields hold one
(row, col) displacement per pixel with pull semantics: output pixel (i, j)
samples the input at (i + flow[i,j,0], j + flow[i,j,1]) by bilinear
interpolation. Out-of-range sample positions are clamped to the border,
which keeps the warp total and differentiable almost everywhere.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import NonFiniteError, ShapeError


@dataclass(frozen=True)
class Additive:
    delta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delta", T.as_tensor(self.delta))


@dataclass(frozen=True)
class Flow:
    field: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.field, dtype=np.float64)
        if f.ndim != 3 or f.shape[2] != 2:
            raise ShapeError(f"flow field must be [H, W, 2], got {f.shape}")
        if not np.isfinite(f).all():
            raise NonFiniteError("flow field contains NaN or Inf")
        object.__setattr__(self, "field", f)


def identity_grid(H, W):
    rows, cols = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    return np.stack([rows, cols], axis=-1)


def apply_additive_var(x, delta, box=None):
    """x + delta, clamped into ``box = (lo, hi)`` when given (Var version)."""
    out = T.add(x, delta)
    if box is not None:
        out = T.clip(out, box[0], box[1])
    return out


def apply_additive(x, delta, box=None):
    x = T.as_tensor(x)
    d = delta.delta if isinstance(delta, Additive) else T.as_tensor(delta)
    if d.shape != x.shape[-d.ndim:] and d.shape != x.shape:
        raise ShapeError(f"perturbation shape {d.shape} does not match input {x.shape}")
    box = _box_bounds(box)
    return apply_additive_var(T.const(x), T.const(d), box).value


def _box_bounds(box):
    if box is None:
        return None
    if hasattr(box, "lo") and hasattr(box, "hi"):
        return (box.lo, box.hi)
    return tuple(box)


def warp_var(x, flow):
    """Warp batched images x [N,H,W,C] by a flow Var [H,W,2] or [N,H,W,2]."""
    x = T._lift(x)
    flow = T._lift(flow)
    N, H, W, _ = x.shape
    if flow.value.ndim == 3:
        flow = T.reshape(flow, (1,) + flow.shape)
    if flow.shape[1:3] != (H, W):
        raise ShapeError(f"flow {flow.shape} does not match image {x.shape}")
    coords = T.add(flow, identity_grid(H, W)[None])
    return T.bilinear_sample(x, coords)


def apply_flow(x, flow):
    """Warp a single image [H,W,C] (or a batch [N,H,W,C]) by a flow field."""
    f = flow.field if isinstance(flow, Flow) else Flow(flow).field
    x = T.as_tensor(x)
    single = x.ndim == 3
    xb = x[None] if single else x
    if f.shape[:2] != xb.shape[1:3]:
        raise ShapeError(f"flow {f.shape} does not match image {x.shape}")
    out = warp_var(T.const(xb), T.const(f)).value
    return out[0] if single else out


def flow_tv_var(flow):
    """Sum of squared differences to the right and lower neighbour of each pixel."""
    down = flow[1:, :, :] - flow[:-1, :, :]
    right = flow[:, 1:, :] - flow[:, :-1, :]
    return T.sum(T.square(down)) + T.sum(T.square(right))


def flow_tv(flow):
    f = flow.field if isinstance(flow, Flow) else np.asarray(flow, dtype=np.float64)
    return float(((f[1:] - f[:-1]) ** 2).sum() + ((f[:, 1:] - f[:, :-1]) ** 2).sum())


def perturbation_stats(pert):
    """Norms of an additive delta, or TV and max displacement of a flow."""
    if isinstance(pert, Flow):
        f = pert.field
        return {"representation": "flow", "tv": flow_tv(f),
                "max_displacement": float(np.sqrt((f ** 2).sum(-1)).max()) if f.size else 0.0}
    d = pert.delta if isinstance(pert, Additive) else T.as_tensor(pert)
    v = d.ravel()
    return {"representation": "additive", "l1": float(np.abs(v).sum()),
            "l2": float(np.sqrt(v @ v)), "linf": float(np.abs(v).max()) if v.size else 0.0}


def affine_coords(H, W, shift, angle_deg):
    """Pull coordinates for a rotation about the image centre plus a shift."""
    grid = identity_grid(H, W)
    center = np.array([(H - 1) / 2.0, (W - 1) / 2.0])
    a = np.deg2rad(angle_deg)
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return (grid - center) @ rot.T + center + np.asarray(shift, dtype=np.float64)
