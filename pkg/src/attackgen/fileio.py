"""On-disk formats: ``.agt`` tensor bundles and plain PPM/PGM images.

``.agt`` layout (all little-endian)::

    b"AGTW" | version u16 | arch id u16 | tensor count u32
    per tensor: rank u8 | dims u32 * rank | payload f64 * prod(dims)
"""

import struct
from pathlib import Path

import numpy as np

from .errors import CorruptFile, TruncatedFile

MAGIC = b"AGTW"
VERSION = 1

# 12-colour label palette (RGB, 0-255)
PALETTE = np.array([
    [0, 0, 0], [128, 64, 128], [220, 20, 60], [0, 0, 142],
    [107, 142, 35], [250, 170, 30], [70, 70, 70], [152, 251, 152],
    [70, 130, 180], [255, 255, 0], [0, 255, 255], [255, 255, 255],
], dtype=np.uint8)


def write_agt(path, arch_id, tensors):
    parts = [MAGIC, struct.pack("<HHI", VERSION, arch_id, len(tensors))]
    for t in tensors:
        a = np.asarray(t, dtype="<f8")
        if a.ndim > 255:
            raise ValueError("rank too large for .agt")
        parts.append(struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(np.ascontiguousarray(a).tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_agt(path):
    """Return (arch_id, [arrays]). Raises CorruptFile / TruncatedFile."""
    buf = Path(path).read_bytes()
    if len(buf) < 4:
        raise TruncatedFile(f"{path}: file shorter than header")
    if buf[:4] != MAGIC:
        raise CorruptFile(f"{path}: bad magic {buf[:4]!r}")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise TruncatedFile(f"{path}: unexpected end of file at byte {pos}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    version, arch_id, count = struct.unpack("<HHI", take(8))
    if version != VERSION:
        raise CorruptFile(f"{path}: unsupported version {version}")
    tensors = []
    for _ in range(count):
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        n = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64)
        tensors.append(data.reshape(dims))
    if pos != len(buf):
        raise CorruptFile(f"{path}: {len(buf) - pos} trailing bytes")
    return arch_id, tensors


def _to_bytes(img):
    return (np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_ppm(path, img):
    """Binary P6 from an [H,W,3] (or [H,W,1]/[H,W]) image in [0,1]."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[..., None]
    if a.shape[2] == 1:
        a = np.repeat(a, 3, axis=2)
    data = _to_bytes(a[..., :3])
    h, w = data.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + data.tobytes())


def write_pgm(path, gray, maxval=255):
    """Binary P5 from an integer [H,W] array with values in [0, maxval]."""
    data = np.asarray(gray).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + data.tobytes())


def read_pnm(path):
    """Read back P5/P6 written by this module; returns a uint8 array."""
    buf = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while buf[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not buf[pos:pos + 1].isspace():
            pos += 1
        fields.append(buf[start:pos])
    pos += 1
    magic, w, h = fields[0], int(fields[1]), int(fields[2])
    ch = 3 if magic == b"P6" else 1
    arr = np.frombuffer(buf[pos:pos + w * h * ch], dtype=np.uint8)
    return arr.reshape(h, w, ch) if ch == 3 else arr.reshape(h, w)


def colorize(labels):
    return PALETTE[np.asarray(labels) % len(PALETTE)].astype(np.float64) / 255.0


def write_label_ppm(path, labels):
    write_ppm(path, colorize(labels))


def write_flow_pgms(path_stem, flow):
    """Two-plane dump of an [H,W,2] flow, each plane mapped to 0..255 about 128."""
    flow = np.asarray(flow, dtype=np.float64)
    scale = max(float(np.abs(flow).max()), 1e-12)
    paths = []
    for k, axis in enumerate(("row", "col")):
        plane = np.clip(128.0 + 127.0 * flow[..., k] / scale, 0, 255) + 0.5
        p = f"{path_stem}_{axis}.pgm"
        write_pgm(p, plane.astype(np.uint8))
        paths.append(p)
    return paths


def triptych(image, pred, adv_pred, gap=1):
    """Side-by-side [input | prediction | adversarial prediction] as RGB."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    img = np.clip(img[..., :3], 0, 1)
    h = img.shape[0]
    sep = np.ones((h, gap, 3))
    return np.concatenate([img, sep, colorize(pred), sep, colorize(adv_pred)], axis=1)


# perturbation bundles share the weight container under a reserved arch id
PERTURBATION_ID = 255
REPRESENTATIONS = ("additive", "flow")


def write_perturbation(path, delta, representation="additive", box=(0.0, 1.0)):
    """Store a perturbation with its representation and pixel box."""
    meta = [float(REPRESENTATIONS.index(representation)), 0.0, 0.0, 0.0]
    if box is not None:
        meta[1:] = [1.0, float(box[0]), float(box[1])]
    write_agt(path, PERTURBATION_ID, [np.asarray(delta, dtype=np.float64), np.asarray(meta)])


def read_perturbation(path):
    """Returns (delta, representation, box or None)."""
    arch_id, tensors = read_agt(path)
    if arch_id != PERTURBATION_ID or len(tensors) != 2 or tensors[1].shape != (4,):
        raise CorruptFile(f"{path}: not a perturbation file")
    meta = tensors[1]
    code = int(meta[0])
    if code not in (0, 1):
        raise CorruptFile(f"{path}: unknown representation code {code}")
    box = (float(meta[2]), float(meta[3])) if meta[1] == 1.0 else None
    return tensors[0], REPRESENTATIONS[code], box
