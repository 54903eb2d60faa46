import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from attackgen.sets import Box, Intersection, LpBall, Mask, Unconstrained, lp_norm, project_simplex

vecs = hnp.arrays(np.float64, st.integers(1, 12), elements=st.floats(-5, 5, allow_nan=False))


def cvx_projection(v, p, eps):
    x = cp.Variable(v.size)
    cp.Problem(cp.Minimize(cp.sum_squares(x - v)), [cp.norm(x, p) <= eps]).solve(
        solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return x.value


@pytest.mark.parametrize("p", [1, 2, "inf"])
def test_ball_projection_matches_convex_solver(p):
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.normal(size=6) * 2
        eps = float(rng.uniform(0.1, 2.0))
        got = LpBall(p, eps).project(v)
        ref = cvx_projection(v, np.inf if p == "inf" else p, eps)
        assert np.allclose(got, ref, atol=1e-5)


def test_simplex_projection_sums_to_radius():
    w = project_simplex(np.array([0.5, 2.0, 0.1]), 1.0)
    assert w.sum() == pytest.approx(1.0) and (w >= 0).all()
    assert np.allclose(w, [0.0, 1.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(vecs, st.sampled_from([1, 2, "inf"]), st.floats(0.0, 3.0))
def test_ball_projection_properties(v, p, eps):
    ball = LpBall(p, eps)
    w = ball.project(v)
    assert ball.contains(w, tol=1e-9)
    assert np.allclose(ball.project(w), w, atol=1e-12)
    if lp_norm(v, p) <= eps:
        assert np.array_equal(w, v)


@settings(max_examples=60, deadline=None)
@given(vecs, vecs, st.sampled_from([1, 2, "inf"]))
def test_projection_is_nonexpansive(a, b, p):
    n = min(a.size, b.size)
    a, b = a[:n], b[:n]
    ball = LpBall(p, 1.0)
    assert np.linalg.norm(ball.project(a) - ball.project(b)) <= np.linalg.norm(a - b) + 1e-9


def test_anchored_box():
    x = np.array([0.2, 0.9])
    box = Box(0.0, 1.0, anchor=x)
    d = box.project(np.array([-0.5, 0.5]))
    assert np.allclose(d, [-0.2, 0.1]) and box.contains(d)
    assert Box(-1, 1).project(np.array([3.0])) == 1.0
    with pytest.raises(ValueError):
        Box(1, 0)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, 5, elements=st.floats(-3, 3)), hnp.arrays(np.float64, 5, elements=st.floats(0, 1)),
       st.sampled_from([1, 2, "inf"]), st.floats(0.0, 2.0))
def test_ball_then_box_lands_in_both(v, x, p, eps):
    s = Intersection([LpBall(p, eps), Box(0.0, 1.0, anchor=x)])
    w = s.project(v)
    assert s.contains(w, tol=1e-9)


def test_linf_ball_box_intersection_is_exact_projection():
    rng = np.random.default_rng(1)
    for _ in range(10):
        v, x = rng.normal(size=5), rng.uniform(size=5)
        s = LpBall("inf", 0.3) & Box(0, 1, anchor=x)
        d = cp.Variable(5)
        cp.Problem(cp.Minimize(cp.sum_squares(d - v)), [cp.abs(d) <= 0.3, x + d >= 0, x + d <= 1]).solve(
            solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
        assert np.allclose(s.project(v), d.value, atol=1e-6)


def test_mask_zeroes_outside_and_broadcasts_channels():
    mask = np.zeros((3, 3))
    mask[1, 1] = 1
    m = Mask(mask, LpBall("inf", 0.5))
    v = np.ones((3, 3, 2))
    w = m.project(v)
    assert w[1, 1].tolist() == [0.5, 0.5] and w.sum() == 1.0 and m.contains(w)
    assert not m.contains(v)
    with pytest.raises(ValueError):
        Mask(np.full((2, 2), 0.5))


def test_intersection_flattens_and_describes():
    s = (LpBall(2, 1.0) & Box(0, 1)) & Unconstrained()
    assert len(s.members) == 3
    assert s.describe()["members"][0] == {"variant": "lp_ball", "p": 2, "epsilon": 1.0}


def test_invalid_parameters():
    with pytest.raises(ValueError):
        LpBall(3, 1.0)
    with pytest.raises(ValueError):
        LpBall(2, -1.0)
