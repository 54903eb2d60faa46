"""Deterministic synthetic datasets.

Every generator is a pure function of its arguments. Segmentation scenes are
painted from a list of geometric primitives kept in ``Dataset.meta`` so the
label maps can be re-derived independently.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fileio

BACKGROUND = 0
ROAD = 1
PEDESTRIAN = 2
CIRCLE = 3

# mean colour per class; pedestrian differs from background mostly in red
CLASS_COLORS = np.array([
    [0.50, 0.50, 0.50],
    [0.30, 0.30, 0.36],
    [0.60, 0.50, 0.47],
    [0.35, 0.55, 0.35],
    [0.55, 0.40, 0.60],
    [0.40, 0.60, 0.60],
    [0.65, 0.65, 0.30],
    [0.25, 0.45, 0.55],
])
TEXTURE_STD = 0.03
SHAPE_JITTER = 0.0


@dataclass
class Dataset:
    xs: np.ndarray
    ys: np.ndarray
    kind: str  # "classification" | "segmentation"
    n_classes: int
    seed: int
    provenance: str = "training"
    meta: list = field(default_factory=list)

    def __len__(self):
        return len(self.xs)

    def __getitem__(self, i):
        return self.xs[i], self.ys[i]

    def __iter__(self):
        return iter(zip(self.xs, self.ys))

    @property
    def items(self):
        return list(self)

    def subset(self, idx, provenance=None):
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, xs=self.xs[idx], ys=self.ys[idx],
                       meta=[self.meta[i] for i in idx] if self.meta else [],
                       provenance=provenance or self.provenance)


def gen_blobs(n, d, C, seed, separation=4.0, std=1.0):
    """C isotropic Gaussian blobs in R^d with balanced labels."""
    if n < 0 or d <= 0 or C <= 0:
        raise ValueError("n must be >= 0 and d, C positive")
    rng = np.random.default_rng(seed)
    if C == 2:
        u = rng.normal(size=d)
        u /= np.linalg.norm(u)
        dirs = np.stack([u, -u])
    elif C <= d:
        q, _ = np.linalg.qr(rng.normal(size=(d, C)))
        dirs = q.T
    else:
        dirs = rng.normal(size=(C, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = separation * dirs
    ys = rng.permutation(np.arange(n) % C)
    xs = means[ys] + std * rng.normal(size=(n, d)) if n else np.zeros((0, d))
    return Dataset(xs.astype(np.float64), ys.astype(np.int64), "classification", C, seed)


# ---------------------------------------------------------------------------
# segmentation scenes


def shape_mask(shape, H, W):
    """Pixel membership of one primitive, by direct geometric test."""
    rows, cols = np.mgrid[0:H, 0:W]
    kind = shape["kind"]
    if kind in ("rect", "bar"):
        r0, c0, r1, c1 = shape["box"]
        return (rows >= r0) & (rows <= r1) & (cols >= c0) & (cols <= c1)
    if kind == "circle":
        cr, cc, rad = shape["center"][0], shape["center"][1], shape["radius"]
        return (rows - cr) ** 2 + (cols - cc) ** 2 <= rad ** 2
    raise ValueError(f"unknown primitive {kind!r}")


def _scene_shapes(rng, H, W, C):
    shapes = []
    if rng.random() < 0.8:
        h = int(rng.integers(H // 4, H // 2 + 1))
        r0 = H - h
        c0 = int(rng.integers(0, W // 3))
        c1 = int(rng.integers(2 * W // 3, W))
        shapes.append({"kind": "rect", "box": [r0, c0, H - 1, c1], "cls": ROAD})
    extra = [c for c in range(C) if c not in (BACKGROUND, ROAD, PEDESTRIAN)]
    for cls in extra:
        if rng.random() < 0.6:
            rad = float(rng.uniform(1.5, max(2.0, H / 6)))
            center = [float(rng.uniform(rad, H - 1 - rad)), float(rng.uniform(rad, W - 1 - rad))]
            shapes.append({"kind": "circle", "center": center, "radius": rad, "cls": cls})
    bh = int(rng.integers(max(3, H // 4), max(4, H // 2) + 1))
    bw = int(rng.integers(2, 5))
    r0 = int(rng.integers(0, H - bh + 1))
    c0 = int(rng.integers(1, W - bw))
    shapes.append({"kind": "bar", "box": [r0, c0, r0 + bh - 1, c0 + bw - 1], "cls": PEDESTRIAN})
    return shapes


def render_labels(shapes, H, W):
    labels = np.zeros((H, W), dtype=np.int64)
    for s in shapes:
        labels[shape_mask(s, H, W)] = s["cls"]
    return labels


def gen_shapes_seg(n, H, W, C, seed, channels=3):
    """Scenes of rectangles, circles and one thin vertical "pedestrian" bar.

    Class 0 is textured background, 1 a road-like rectangle, 2 the
    pedestrian bar (always present, painted last), 3.. circles.
    """
    if C < 3:
        raise ValueError("segmentation scenes need at least 3 classes")
    if C > len(CLASS_COLORS):
        raise ValueError(f"at most {len(CLASS_COLORS)} classes supported")
    if n < 0 or H < 6 or W < 6:
        raise ValueError("need n >= 0 and H, W >= 6")
    rng = np.random.default_rng(seed)
    colors = CLASS_COLORS[:, :channels] if channels <= 3 else np.tile(CLASS_COLORS, (1, 2))[:, :channels]
    xs = np.empty((n, H, W, channels))
    ys = np.empty((n, H, W), dtype=np.int64)
    meta = []
    for k in range(n):
        shapes = _scene_shapes(rng, H, W, C)
        labels = render_labels(shapes, H, W)
        jitter = rng.normal(0.0, SHAPE_JITTER, size=(C, channels))
        img = (colors[:C] + jitter)[labels] + rng.normal(0.0, TEXTURE_STD, size=(H, W, channels))
        xs[k] = np.clip(img, 0.0, 1.0)
        ys[k] = labels
        meta.append({"shapes": shapes})
    return Dataset(xs, ys, "segmentation", C, seed, meta=meta)


def gen_patterns(n, H, W, seed, channels=1):
    """Image classification: one primitive per image, label = primitive type.

    0 = rectangle, 1 = circle, 2 = vertical bar. Used for the CNN classifier.
    """
    rng = np.random.default_rng(seed)
    xs = np.empty((n, H, W, channels))
    ys = np.empty(n, dtype=np.int64)
    meta = []
    for k in range(n):
        label = int(rng.integers(0, 3))
        if label == 0:
            h, w = int(rng.integers(3, H // 2 + 1)), int(rng.integers(H // 2, W - 1))
            r0, c0 = int(rng.integers(0, H - h + 1)), int(rng.integers(0, W - w + 1))
            s = {"kind": "rect", "box": [r0, c0, r0 + h - 1, c0 + w - 1]}
        elif label == 1:
            rad = float(rng.uniform(1.8, H / 4))
            s = {"kind": "circle", "radius": rad,
                 "center": [float(rng.uniform(rad, H - 1 - rad)), float(rng.uniform(rad, W - 1 - rad))]}
        else:
            h = int(rng.integers(H // 2, H))
            r0, c0 = int(rng.integers(0, H - h + 1)), int(rng.integers(0, W - 1))
            s = {"kind": "bar", "box": [r0, c0, r0 + h - 1, c0]}
        mask = shape_mask(s, H, W)
        img = 0.2 + 0.6 * mask[..., None] + rng.normal(0.0, 0.05, size=(H, W, channels))
        xs[k] = np.clip(img, 0.0, 1.0)
        ys[k] = label
        meta.append({"shapes": [s]})
    return Dataset(xs, ys, "classification", 3, seed, meta=meta)


def split(dataset, fraction, seed):
    """Disjoint (training, surrogate) partition; first part has round(fraction*n) items."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    order = np.random.default_rng(seed).permutation(len(dataset))
    k = int(round(fraction * len(dataset)))
    return (dataset.subset(np.sort(order[:k]), "training"),
            dataset.subset(np.sort(order[k:]), "surrogate"))


def from_id(data_id, seed=None):
    """Build a dataset from ``kind[:key=value,...]``.

    Kinds: ``blobs`` (n, d, C), ``shapes`` (n, H, W, C), ``patterns`` (n, H, W).
    An optional ``part=training|surrogate`` (with ``fraction``, default 0.5)
    returns one side of :func:`split`.
    """
    kind, _, rest = data_id.partition(":")
    opts = {}
    for item in filter(None, rest.split(",")):
        key, _, value = item.partition("=")
        opts[key.strip()] = value.strip()
    s = int(opts.pop("seed", seed if seed is not None else 0))
    part = opts.pop("part", None)
    fraction = float(opts.pop("fraction", 0.5))
    ints = {k: int(v) for k, v in opts.items()}
    if kind == "blobs":
        ds = gen_blobs(ints.get("n", 200), ints.get("d", 2), ints.get("C", 2), s)
    elif kind == "shapes":
        ds = gen_shapes_seg(ints.get("n", 200), ints.get("H", 16), ints.get("W", 16), ints.get("C", 4), s)
    elif kind == "patterns":
        ds = gen_patterns(ints.get("n", 300), ints.get("H", 8), ints.get("W", 8), s)
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    if part is None:
        return ds
    train_part, surrogate = split(ds, fraction, s)
    if part == "training":
        return train_part
    if part == "surrogate":
        return surrogate
    raise ValueError(f"unknown part {part!r}")


def dump(dataset, out_dir, limit=None):
    """Write images as PPM and labels as PGM (segmentation) for inspection."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (x, y) in enumerate(dataset):
        if limit is not None and i >= limit:
            break
        if x.ndim == 3:
            p = out / f"item{i:04d}.ppm"
            fileio.write_ppm(p, x)
            paths.append(p)
        if dataset.kind == "segmentation":
            p = out / f"item{i:04d}_labels.pgm"
            fileio.write_pgm(p, y, maxval=max(dataset.n_classes - 1, 1))
            paths.append(p)
    return paths
