import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amortize.geometry import (
    ArcParam,
    chamfer,
    index_windows,
    index_windows_adjoint,
    path_length,
    path_window_features,
    resample,
    resample_spacing,
    smooth_reg,
    smooth_reg_grad,
    window_features,
)
from amortize.optim import finite_diff_grad


def wiggly(n, seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 2.5, n)
    return np.column_stack([t + 0.05 * rng.normal(size=n), np.sin(2 * t) + 0.05 * rng.normal(size=n)])


def test_arcparam_reproduces_vertices_and_clamps():
    p = wiggly(30, 0)
    ap = ArcParam(p)
    assert np.allclose(ap(ap.cum), p, atol=1e-12)
    assert np.array_equal(ap(-1.0), p[0])
    assert np.array_equal(ap(ap.length + 5.0), p[-1])
    assert np.all(np.diff(ap.cum) > 0)


def test_resample_examples():
    seg = resample([[0, 0], [1, 0]], 5)
    assert np.allclose(seg[:, 0], [0, 0.25, 0.5, 0.75, 1]) and np.all(seg[:, 1] == 0)
    L = resample([[0, 0], [1, 0], [1, 1]], 3)
    assert np.allclose(L[1], [1, 0])
    even = np.column_stack([np.linspace(0, 3, 13), np.zeros(13)])
    assert np.max(np.abs(resample(even, 13) - even)) < 1e-12
    with pytest.raises(ValueError):
        resample([[0, 0], [0, 0]], 4)
    with pytest.raises(ValueError):
        resample(even, 1)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n_out=st.integers(2, 200))
def test_resample_properties(seed, n_out):
    p = wiggly(25, seed)
    r = resample(p, n_out)
    assert np.array_equal(r[0], p[0]) and np.array_equal(r[-1], p[-1])
    S, Sr = path_length(p), path_length(r)
    assert Sr <= S * (1 + 1e-9)
    # uniform in the source's arc length
    ap = ArcParam(p)
    assert np.allclose(r, ap(S * np.arange(n_out) / (n_out - 1)), atol=1e-12)


def test_resample_spacing_count():
    line = np.array([[0.0, 0.0], [3.0, 0.0]])
    r = resample_spacing(line, 0.03)
    assert len(r) == 101 and np.allclose(np.diff(r[:, 0]), 0.03)


def test_window_features_examples():
    line = np.column_stack([np.linspace(0, 6, 201), np.zeros(201)])
    ap = ArcParam(line)
    f = window_features(ap, 3.0, 30, 0.03)
    assert f.shape == (122,)
    rel = f.reshape(61, 2)
    assert np.allclose(rel[:, 0], np.arange(-30, 31) * 0.03, atol=1e-12) and np.all(rel[:, 1] == 0)
    assert np.array_equal(rel[30], [0.0, 0.0])
    # clamped near the start
    near = window_features(ap, 0.3, 30, 0.03).reshape(61, 2)
    assert np.allclose(near[:20, 0], -0.3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), dx=st.floats(-50, 50), dy=st.floats(-50, 50))
def test_window_features_translation_equivariant(seed, dx, dy):
    p = wiggly(40, seed)
    a = path_window_features(p, 5, 0.05)
    b = path_window_features(p + [dx, dy], 5, 0.05)
    assert np.allclose(a, b, atol=1e-9)
    assert np.all(a.reshape(len(p), 11, 2)[:, 5] == 0)


def test_index_windows_match_arc_windows_on_uniform_path():
    line = np.column_stack([np.linspace(0, 3, 101), np.linspace(0, 1, 101)])
    s0 = path_length(line) / 100
    assert np.allclose(index_windows(line, 7), path_window_features(line, 7, s0), atol=1e-10)


def test_index_windows_adjoint():
    rng = np.random.default_rng(3)
    p = rng.normal(size=(12, 2))
    G = rng.normal(size=(12, 2 * (2 * 4 + 1)))
    fd = finite_diff_grad(lambda q: float(np.sum(index_windows(q, 4) * G)), p)
    assert np.allclose(index_windows_adjoint(G, 4), fd, atol=1e-8)


def test_chamfer_examples():
    p = wiggly(20, 1)
    assert chamfer(p, p) == 0.0
    assert chamfer([[0, 0]], [[3, 4]]) == 5.0
    x = np.linspace(0, 1, 11)
    a = np.column_stack([x, np.zeros(11)])
    b = np.column_stack([x, np.full(11, 0.2)])
    assert chamfer(a, b) == pytest.approx(0.2, abs=1e-15)
    with pytest.raises(ValueError):
        chamfer(np.zeros((0, 2)), p)


def _brute_chamfer(g, u):
    dg = [min(math.dist(a, b) for b in u) for a in g]
    du = [min(math.dist(a, b) for b in g) for a in u]
    return 0.5 * (sum(dg) / len(dg) + sum(du) / len(du))


@settings(max_examples=40, deadline=None)
@given(
    g=st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=15),
    u=st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=15),
)
def test_chamfer_symmetric_and_matches_brute_force(g, u):
    c = chamfer(g, u)
    assert c >= 0
    assert c == pytest.approx(chamfer(u, g), abs=1e-12)
    assert c == pytest.approx(_brute_chamfer(g, u), abs=1e-9)


def test_smooth_reg_examples():
    even = np.column_stack([np.linspace(0, 2, 9), np.linspace(0, 1, 9)])
    assert smooth_reg(even) == pytest.approx(0.0, abs=1e-20)
    assert np.allclose(smooth_reg_grad(even), 0.0, atol=1e-12)
    assert smooth_reg([[0, 0], [1, 0], [1, 1]]) == pytest.approx(2.0)
    p = wiggly(15, 2)
    assert smooth_reg(3.0 * p) == pytest.approx(smooth_reg(p) / 9.0, rel=1e-10)
    assert np.allclose(smooth_reg_grad(p + [4.0, -1.0]), smooth_reg_grad(p), atol=1e-9)
    with pytest.raises(ValueError):
        smooth_reg([[0, 0], [0, 0], [1, 0]])
    with pytest.raises(ValueError):
        smooth_reg([[0, 0], [1, 0]])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_smooth_reg_grad_fd(seed):
    p = wiggly(12, seed)
    fd = finite_diff_grad(smooth_reg, p)
    g = smooth_reg_grad(p)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-6
