"""Arc-length queries, resampling, window features, Chamfer distance and
the curvature regulariser on polylines."""
from __future__ import annotations

import numpy as np

from .core import as_points


class ArcParam:
    """Piecewise-linear arc-length parameterisation of a polyline.

    Queries outside ``[0, S]`` are clamped to the end points.
    """

    def __init__(self, path):
        pts = as_points(path)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise ValueError("need at least two points")
        self.points = pts
        self.seg = np.diff(pts, axis=0)
        self.seg_len = np.hypot(self.seg[:, 0], self.seg[:, 1])
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.cum[-1])

    def locate(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Segment index and fraction along it for flat arc positions ``s``."""
        flat = np.clip(np.asarray(s, dtype=np.float64).reshape(-1), 0.0, self.length)
        idx = np.clip(np.searchsorted(self.cum, flat, side="right") - 1, 0, len(self.seg_len) - 1)
        ln = self.seg_len[idx]
        t = np.divide(flat - self.cum[idx], ln, out=np.zeros_like(flat), where=ln > 0)
        return idx, np.clip(t, 0.0, 1.0)

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        idx, t = self.locate(s)
        out = self.points[idx] + t[:, None] * self.seg[idx]
        return out.reshape(*s.shape, 2)


def path_length(path) -> float:
    pts = as_points(path)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def resample(path, n_out: int) -> np.ndarray:
    """``n_out`` points at equal arc-length fractions; end points kept exactly."""
    if n_out < 2:
        raise ValueError("n_out must be >= 2")
    ap = ArcParam(path)
    if ap.length <= 0:
        raise ValueError("cannot resample a zero-length path")
    out = ap(ap.length * np.arange(n_out) / (n_out - 1))
    out[0] = ap.points[0]
    out[-1] = ap.points[-1]
    return out


def resample_spacing(path, step: float) -> np.ndarray:
    """Uniform resampling with spacing as close to ``step`` as the length allows."""
    S = path_length(path)
    if S <= 0:
        raise ValueError("cannot resample a zero-length path")
    return resample(path, max(2, int(round(S / step)) + 1))


def window_offsets(m: int, s0: float) -> np.ndarray:
    return np.arange(-m, m + 1) * s0


def window_features(param: ArcParam, center_s, m: int = 30, s0: float = 0.03) -> np.ndarray:
    """Relative positions ``f(c + i*s0) - f(c)`` for ``i = -m..m``, flattened.

    ``center_s`` may be a scalar (returns ``4m+2`` values) or a vector of
    centres (returns one row per centre).
    """
    c = np.asarray(center_s, dtype=np.float64)
    q = c[..., None] + window_offsets(m, s0)
    rel = param(q) - param(c)[..., None, :]
    return rel.reshape(*c.shape, 2 * (2 * m + 1))


def path_window_features(path, m: int = 30, s0: float = 0.03) -> np.ndarray:
    """Arc-length window features centred on every vertex of ``path``."""
    ap = ArcParam(path)
    return window_features(ap, ap.cum, m, s0)


def _window_index(n: int, m: int) -> np.ndarray:
    return np.clip(np.arange(n)[:, None] + np.arange(-m, m + 1)[None, :], 0, n - 1)


def index_windows(points: np.ndarray, m: int = 30) -> np.ndarray:
    """Index-based windows ``p[clip(i+k)] - p[i]``, ``k = -m..m``.

    On a uniformly spaced polyline this equals the arc-length features with
    ``s0`` equal to the spacing, and it is differentiable in the points.
    """
    pts = as_points(points)
    idx = _window_index(len(pts), m)
    return (pts[idx] - pts[:, None, :]).reshape(len(pts), -1)


def index_windows_adjoint(grad_windows: np.ndarray, m: int = 30) -> np.ndarray:
    """Pull a gradient on ``index_windows`` output back onto the points."""
    n = grad_windows.shape[0]
    G = grad_windows.reshape(n, 2 * m + 1, 2)
    idx = _window_index(n, m).ravel()
    out = np.empty((n, 2))
    for d in range(2):
        out[:, d] = np.bincount(idx, weights=G[:, :, d].ravel(), minlength=n) - G[:, :, d].sum(axis=1)
    return out


def pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_points(a)
    b = as_points(b)
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(d2, 0.0))


def chamfer(g, u) -> float:
    """Symmetric mean nearest-point distance; each direction averages over
    its own point count."""
    g = as_points(g).reshape(-1, 2)
    u = as_points(u).reshape(-1, 2)
    if len(g) == 0 or len(u) == 0:
        raise ValueError("chamfer needs non-empty point sets")
    diff = g[:, None, :] - u[None, :, :]
    d = np.sqrt((diff * diff).sum(-1))
    return 0.5 * (float(d.min(axis=1).mean()) + float(d.min(axis=0).mean()))


def chamfer_per_point(g, u) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-point distance of every g point to u and vice versa."""
    g = as_points(g)
    u = as_points(u)
    diff = g[:, None, :] - u[None, :, :]
    d = np.sqrt((diff * diff).sum(-1))
    return d.min(axis=1), d.min(axis=0)


def _segments(pts):
    d = np.diff(pts, axis=0)
    ln = np.hypot(d[:, 0], d[:, 1])
    if np.any(ln <= 1e-12):
        raise ValueError("coincident consecutive points")
    return d, ln


def smooth_reg(path) -> float:
    """Sum over interior vertices of the squared turning of the unit tangent
    divided by the mean adjacent segment length."""
    pts = as_points(path)
    if len(pts) < 3:
        raise ValueError("smooth_reg needs at least three points")
    d, ln = _segments(pts)
    t = d / ln[:, None]
    a = t[1:] - t[:-1]
    c = 0.5 * (ln[1:] + ln[:-1])
    return float(np.sum((a * a).sum(1) / (c * c)))


def smooth_reg_grad(path) -> np.ndarray:
    """Exact gradient of :func:`smooth_reg`, shape (n, 2)."""
    pts = as_points(path)
    if len(pts) < 3:
        raise ValueError("smooth_reg needs at least three points")
    d, ln = _segments(pts)
    t = d / ln[:, None]
    a = t[1:] - t[:-1]
    c = 0.5 * (ln[1:] + ln[:-1])
    a2 = (a * a).sum(1)
    gt = np.zeros_like(t)
    gl = np.zeros_like(ln)
    coef = 2.0 / (c * c)
    gt[1:] += coef[:, None] * a
    gt[:-1] -= coef[:, None] * a
    dl = -a2 / (c**3)  # d/dc * dc/dl with dc/dl = 1/2, times 2 from c^-2
    gl[1:] += dl
    gl[:-1] += dl
    # t = d/|d|, l = |d|
    gd = (gt - t * (t * gt).sum(1, keepdims=True)) / ln[:, None] + gl[:, None] * t
    out = np.zeros_like(pts)
    out[1:] += gd
    out[:-1] -= gd
    return out
