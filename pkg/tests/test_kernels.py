import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from attackgen import kernels

pytestmark = pytest.mark.skipif(not kernels.NUMBA_KERNELS, reason="numba not installed")


def _both(name, *args):
    return kernels.NUMBA_KERNELS[name](*args), kernels.NUMPY_KERNELS[name](*args)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 2), st.integers(1, 6), st.integers(1, 6), st.integers(1, 3), st.integers(1, 3),
       st.sampled_from([1, 3]), st.integers(0, 10_000))
def test_conv_backends_agree(n, h, w_, cin, cout, k, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, h, w_, cin))
    w = rng.normal(size=(k, k, cin, cout))
    b = rng.normal(size=cout)
    dy = rng.normal(size=(n, h, w_, cout))
    for name, args in (("conv2d_forward", (x, w, b)), ("conv2d_backward_input", (dy, w)),
                       ("conv2d_backward_weight", (x, dy, k, k))):
        fast, ref = _both(name, *args)
        assert np.allclose(fast, ref, atol=1e-10), name


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
def test_bilinear_backends_agree(h, w, seed):
    rng = np.random.default_rng(seed)
    img = rng.normal(size=(2, h, w, 2))
    coords = np.stack([rng.uniform(-2, h + 1, size=(2, h, w)), rng.uniform(-2, w + 1, size=(2, h, w))], -1)
    fast, ref = _both("bilinear_forward", img, coords)
    assert np.allclose(fast, ref, atol=1e-12)
    dy = rng.normal(size=(2, h, w, 2))
    (fi, fc), (ri, rc) = _both("bilinear_backward", img, coords, dy)
    assert np.allclose(fi, ri, atol=1e-12) and np.allclose(fc, rc, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.integers(0, 10_000))
def test_nearest_fill_backends_agree(h, w, seed):
    labels = np.random.default_rng(seed).integers(0, 3, size=(h, w))
    if (labels == 1).all():
        labels[0, 0] = 0
    fast, ref = _both("nearest_fill", labels, 1)
    assert np.array_equal(fast, ref)


def _backend_in_subprocess(env_extra):
    env = dict(os.environ, **env_extra)
    code = "from attackgen import kernels; print(kernels.backend())"
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                           check=True).stdout.strip()


def test_env_flag_selects_numpy_fallback():
    assert _backend_in_subprocess({"ATTACKGEN_NUMBA": "0"}) == "numpy"
    assert _backend_in_subprocess({"ATTACKGEN_NUMBA": "1"}) == "numba"


def test_thread_cap_env_var_is_applied():
    env = dict(os.environ, ATTACKGEN_THREADS="1")
    code = "import numba, attackgen.kernels; print(numba.get_num_threads())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "1"
