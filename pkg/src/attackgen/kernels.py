"""Hot numeric kernels.

Every kernel exists twice: an explicit-loop version compiled with numba and
a vectorized numpy version. ``ATTACKGEN_NUMBA=0`` selects the numpy path;
the default is numba when it can be imported. Both paths are importable
at all times through ``NUMBA_KERNELS`` / ``NUMPY_KERNELS`` so they can be
compared (see ``benchmarks/bench_kernels.py``).

Array layouts: images are ``[N, H, W, C]`` row-major float64, conv weights
``[kh, kw, Cin, Cout]``, sample coordinates ``[N, Ho, Wo, 2]`` holding
(row, col) source positions.
"""

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_flag(name, default):
    raw = os.environ.get(name)
    if raw is None:
        return default
    return raw.strip().lower() not in ("0", "false", "no", "off", "")


USE_NUMBA = HAVE_NUMBA and _env_flag("ATTACKGEN_NUMBA", True)


def _apply_thread_cap():
    cap = os.environ.get("ATTACKGEN_THREADS")
    if not (HAVE_NUMBA and cap):
        return
    try:
        n = max(1, int(cap))
    except ValueError:
        return
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


_apply_thread_cap()


def _njit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# conv2d, stride 1, "same" zero padding, odd kernel sizes


def _conv2d_forward_loops(x, w, b):
    N, H, W, Ci = x.shape
    kh, kw, _, Co = w.shape
    ph = kh // 2
    pw = kw // 2
    out = np.empty((N, H, W, Co))
    for n in range(N):
        for i in range(H):
            for j in range(W):
                for o in range(Co):
                    out[n, i, j, o] = b[o]
                for di in range(kh):
                    ii = i + di - ph
                    if ii < 0 or ii >= H:
                        continue
                    for dj in range(kw):
                        jj = j + dj - pw
                        if jj < 0 or jj >= W:
                            continue
                        for c in range(Ci):
                            v = x[n, ii, jj, c]
                            for o in range(Co):
                                out[n, i, j, o] += v * w[di, dj, c, o]
    return out


def _conv2d_backward_input_loops(dy, w):
    N, H, W, Co = dy.shape
    kh, kw, Ci, _ = w.shape
    ph = kh // 2
    pw = kw // 2
    dx = np.zeros((N, H, W, Ci))
    for n in range(N):
        for i in range(H):
            for j in range(W):
                for di in range(kh):
                    ii = i + di - ph
                    if ii < 0 or ii >= H:
                        continue
                    for dj in range(kw):
                        jj = j + dj - pw
                        if jj < 0 or jj >= W:
                            continue
                        for c in range(Ci):
                            acc = 0.0
                            for o in range(Co):
                                acc += dy[n, i, j, o] * w[di, dj, c, o]
                            dx[n, ii, jj, c] += acc
    return dx


def _conv2d_backward_weight_loops(x, dy, kh, kw):
    N, H, W, Ci = x.shape
    Co = dy.shape[3]
    ph = kh // 2
    pw = kw // 2
    dw = np.zeros((kh, kw, Ci, Co))
    for n in range(N):
        for i in range(H):
            for j in range(W):
                for di in range(kh):
                    ii = i + di - ph
                    if ii < 0 or ii >= H:
                        continue
                    for dj in range(kw):
                        jj = j + dj - pw
                        if jj < 0 or jj >= W:
                            continue
                        for c in range(Ci):
                            v = x[n, ii, jj, c]
                            for o in range(Co):
                                dw[di, dj, c, o] += v * dy[n, i, j, o]
    return dw


def _windows(x, kh, kw):
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    return sliding_window_view(xp, (kh, kw), axis=(1, 2))  # [N,H,W,Ci,kh,kw]


def _conv2d_forward_numpy(x, w, b):
    win = _windows(x, w.shape[0], w.shape[1])
    return np.tensordot(win, w, axes=([4, 5, 3], [0, 1, 2])) + b


def _conv2d_backward_input_numpy(dy, w):
    flipped = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
    return _conv2d_forward_numpy(dy, flipped, np.zeros(flipped.shape[3]))


def _conv2d_backward_weight_numpy(x, dy, kh, kw):
    win = _windows(x, kh, kw)
    return np.tensordot(win, dy, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)


# ---------------------------------------------------------------------------
# bilinear sampling with clamp-to-edge


def _bilinear_forward_loops(img, coords):
    N, H, W, C = img.shape
    _, Ho, Wo, _ = coords.shape
    out = np.empty((N, Ho, Wo, C))
    for n in range(N):
        for i in range(Ho):
            for j in range(Wo):
                r = min(max(coords[n, i, j, 0], 0.0), H - 1.0)
                s = min(max(coords[n, i, j, 1], 0.0), W - 1.0)
                r0 = int(np.floor(r))
                s0 = int(np.floor(s))
                if r0 > H - 2:
                    r0 = max(H - 2, 0)
                if s0 > W - 2:
                    s0 = max(W - 2, 0)
                r1 = min(r0 + 1, H - 1)
                s1 = min(s0 + 1, W - 1)
                fr = r - r0
                fs = s - s0
                for c in range(C):
                    top = (1.0 - fs) * img[n, r0, s0, c] + fs * img[n, r0, s1, c]
                    bot = (1.0 - fs) * img[n, r1, s0, c] + fs * img[n, r1, s1, c]
                    out[n, i, j, c] = (1.0 - fr) * top + fr * bot
    return out


def _bilinear_backward_loops(img, coords, dy):
    N, H, W, C = img.shape
    _, Ho, Wo, _ = coords.shape
    dimg = np.zeros((N, H, W, C))
    dcoords = np.zeros((N, Ho, Wo, 2))
    for n in range(N):
        for i in range(Ho):
            for j in range(Wo):
                rr = coords[n, i, j, 0]
                ss = coords[n, i, j, 1]
                r = min(max(rr, 0.0), H - 1.0)
                s = min(max(ss, 0.0), W - 1.0)
                r0 = int(np.floor(r))
                s0 = int(np.floor(s))
                if r0 > H - 2:
                    r0 = max(H - 2, 0)
                if s0 > W - 2:
                    s0 = max(W - 2, 0)
                r1 = min(r0 + 1, H - 1)
                s1 = min(s0 + 1, W - 1)
                fr = r - r0
                fs = s - s0
                live_r = 1.0 if (rr >= 0.0 and rr <= H - 1.0 and H > 1) else 0.0
                live_s = 1.0 if (ss >= 0.0 and ss <= W - 1.0 and W > 1) else 0.0
                gr = 0.0
                gs = 0.0
                for c in range(C):
                    g = dy[n, i, j, c]
                    a = img[n, r0, s0, c]
                    b = img[n, r0, s1, c]
                    cc = img[n, r1, s0, c]
                    d = img[n, r1, s1, c]
                    dimg[n, r0, s0, c] += g * (1.0 - fr) * (1.0 - fs)
                    dimg[n, r0, s1, c] += g * (1.0 - fr) * fs
                    dimg[n, r1, s0, c] += g * fr * (1.0 - fs)
                    dimg[n, r1, s1, c] += g * fr * fs
                    gr += g * ((1.0 - fs) * (cc - a) + fs * (d - b))
                    gs += g * ((1.0 - fr) * (b - a) + fr * (d - cc))
                dcoords[n, i, j, 0] = gr * live_r
                dcoords[n, i, j, 1] = gs * live_s
    return dimg, dcoords


def _bilinear_setup(H, W, coords):
    rr = coords[..., 0]
    ss = coords[..., 1]
    r = np.clip(rr, 0.0, H - 1.0)
    s = np.clip(ss, 0.0, W - 1.0)
    r0 = np.minimum(np.floor(r).astype(np.int64), max(H - 2, 0))
    s0 = np.minimum(np.floor(s).astype(np.int64), max(W - 2, 0))
    r1 = np.minimum(r0 + 1, H - 1)
    s1 = np.minimum(s0 + 1, W - 1)
    fr = (r - r0)[..., None]
    fs = (s - s0)[..., None]
    return rr, ss, r0, s0, r1, s1, fr, fs


def _bilinear_forward_numpy(img, coords):
    N, H, W, C = img.shape
    _, r0, s0, r1, s1, fr, fs = _bilinear_setup(H, W, coords)[1:]
    n = np.arange(N)[:, None, None]
    top = (1.0 - fs) * img[n, r0, s0] + fs * img[n, r0, s1]
    bot = (1.0 - fs) * img[n, r1, s0] + fs * img[n, r1, s1]
    return (1.0 - fr) * top + fr * bot


def _bilinear_backward_numpy(img, coords, dy):
    N, H, W, C = img.shape
    rr, ss, r0, s0, r1, s1, fr, fs = _bilinear_setup(H, W, coords)
    n = np.broadcast_to(np.arange(N)[:, None, None], r0.shape)
    dimg = np.zeros_like(img)
    np.add.at(dimg, (n, r0, s0), dy * (1.0 - fr) * (1.0 - fs))
    np.add.at(dimg, (n, r0, s1), dy * (1.0 - fr) * fs)
    np.add.at(dimg, (n, r1, s0), dy * fr * (1.0 - fs))
    np.add.at(dimg, (n, r1, s1), dy * fr * fs)
    a, b = img[n, r0, s0], img[n, r0, s1]
    c, d = img[n, r1, s0], img[n, r1, s1]
    gr = (dy * ((1.0 - fs) * (c - a) + fs * (d - b))).sum(-1)
    gs = (dy * ((1.0 - fr) * (b - a) + fr * (d - c))).sum(-1)
    live_r = (rr >= 0.0) & (rr <= H - 1.0) & (H > 1)
    live_s = (ss >= 0.0) & (ss <= W - 1.0) & (W > 1)
    dcoords = np.stack([gr * live_r, gs * live_s], axis=-1)
    return dimg, dcoords


# ---------------------------------------------------------------------------
# nearest non-target pixel fill (dynamic targets)


def _nearest_fill_loops(labels, target):
    H, W = labels.shape
    out = labels.copy()
    n_cand = 0
    for i in range(H):
        for j in range(W):
            if labels[i, j] != target:
                n_cand += 1
    cand = np.empty((n_cand, 2), dtype=np.int64)
    k = 0
    for i in range(H):
        for j in range(W):
            if labels[i, j] != target:
                cand[k, 0] = i
                cand[k, 1] = j
                k += 1
    for i in range(H):
        for j in range(W):
            if labels[i, j] != target:
                continue
            best = -1
            best_d = 0
            for q in range(n_cand):
                di = cand[q, 0] - i
                dj = cand[q, 1] - j
                d = di * di + dj * dj
                if best < 0 or d < best_d:
                    best = q
                    best_d = d
            out[i, j] = labels[cand[best, 0], cand[best, 1]]
    return out


def _nearest_fill_numpy(labels, target):
    out = labels.copy()
    hit = np.argwhere(labels == target)
    cand = np.argwhere(labels != target)  # row-major order
    if len(hit) == 0:
        return out
    d = ((hit[:, None, :] - cand[None, :, :]) ** 2).sum(-1)
    src = cand[np.argmin(d, axis=1)]
    out[hit[:, 0], hit[:, 1]] = labels[src[:, 0], src[:, 1]]
    return out


NUMPY_KERNELS = {
    "conv2d_forward": _conv2d_forward_numpy,
    "conv2d_backward_input": _conv2d_backward_input_numpy,
    "conv2d_backward_weight": _conv2d_backward_weight_numpy,
    "bilinear_forward": _bilinear_forward_numpy,
    "bilinear_backward": _bilinear_backward_numpy,
    "nearest_fill": _nearest_fill_numpy,
}

_LOOPS = {
    "conv2d_forward": _conv2d_forward_loops,
    "conv2d_backward_input": _conv2d_backward_input_loops,
    "conv2d_backward_weight": _conv2d_backward_weight_loops,
    "bilinear_forward": _bilinear_forward_loops,
    "bilinear_backward": _bilinear_backward_loops,
    "nearest_fill": _nearest_fill_loops,
}

NUMBA_KERNELS = {k: _njit(f) for k, f in _LOOPS.items()} if HAVE_NUMBA else {}

ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d_forward(x, w, b):
    return ACTIVE["conv2d_forward"](_f64(x), _f64(w), _f64(b))


def conv2d_backward_input(dy, w):
    return ACTIVE["conv2d_backward_input"](_f64(dy), _f64(w))


def conv2d_backward_weight(x, dy, kh, kw):
    return ACTIVE["conv2d_backward_weight"](_f64(x), _f64(dy), int(kh), int(kw))


def bilinear_forward(img, coords):
    return ACTIVE["bilinear_forward"](_f64(img), _f64(coords))


def bilinear_backward(img, coords, dy):
    return ACTIVE["bilinear_backward"](_f64(img), _f64(coords), _f64(dy))


def nearest_fill(labels, target):
    return ACTIVE["nearest_fill"](np.ascontiguousarray(labels, dtype=np.int64), int(target))


def backend():
    return "numba" if ACTIVE is NUMBA_KERNELS else "numpy"
