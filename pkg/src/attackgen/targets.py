"""Adversarial segmentation targets derived from predicted label maps."""

import math

import numpy as np

from . import kernels
from .errors import AllTargetClass, NoTargetPixels


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return np.eye(n_classes)[labels]


def static_target(y_st, n_classes):
    """One-hot encoding of a fixed target segmentation (same for every image)."""
    return one_hot(y_st, n_classes)


def dynamic_labels(y_pred, target_class):
    """Replace every ``target_class`` pixel by the class of the nearest other pixel.

    Nearest means Euclidean distance on pixel coordinates; ties go to the
    candidate that comes first in row-major order.
    """
    y = np.asarray(y_pred, dtype=np.int64)
    if not (y == target_class).any():
        return y.copy()
    if (y == target_class).all():
        raise AllTargetClass(f"every pixel is class {target_class}")
    return kernels.nearest_fill(y, target_class)


def dynamic_target(y_pred, target_class, n_classes):
    return one_hot(dynamic_labels(y_pred, target_class), n_classes)


def _round_half_up(v):
    return int(math.floor(v + 0.5))


def confusion_labels(y_pred, target_class, factor):
    """Enlarge the target-class region by ``factor`` about its bounding-box centre.

    The class pattern inside the bounding box is resized with nearest-neighbour
    sampling (source index = floor(dst * src/dst)) into the enlarged box,
    clipped to the image. Pixels the resized pattern marks as the target class
    become that class; all others keep their prediction, so the target set
    only grows.
    """
    if not factor > 1.0:
        raise ValueError("enlargement factor must exceed 1")
    y = np.asarray(y_pred, dtype=np.int64)
    hit = np.argwhere(y == target_class)
    if len(hit) == 0:
        raise NoTargetPixels(f"no pixel of class {target_class}")
    H, W = y.shape
    (r0, c0), (r1, c1) = hit.min(axis=0), hit.max(axis=0)
    h, w = r1 - r0 + 1, c1 - c0 + 1
    nh, nw = _round_half_up(h * factor), _round_half_up(w * factor)
    top = _round_half_up((r0 + r1) / 2.0 - (nh - 1) / 2.0)
    left = _round_half_up((c0 + c1) / 2.0 - (nw - 1) / 2.0)
    patch = y[r0:r1 + 1, c0:c1 + 1] == target_class
    src_r = np.minimum((np.arange(nh) * h) // nh, h - 1)
    src_c = np.minimum((np.arange(nw) * w) // nw, w - 1)
    grown = patch[src_r][:, src_c]
    out = y.copy()
    rows = np.arange(nh) + top
    cols = np.arange(nw) + left
    keep_r = (rows >= 0) & (rows < H)
    keep_c = (cols >= 0) & (cols < W)
    sub = grown[keep_r][:, keep_c]
    region = out[rows[keep_r][0]:rows[keep_r][-1] + 1, cols[keep_c][0]:cols[keep_c][-1] + 1]
    region[sub] = target_class
    return out


def confusion_target(y_pred, target_class, factor, n_classes):
    return one_hot(confusion_labels(y_pred, target_class, factor), n_classes)
