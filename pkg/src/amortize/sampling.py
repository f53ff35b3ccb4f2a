"""Random smooth, non-self-intersecting paths around the unit circle.

Each axis is a Gaussian process on the circle parameter with a periodic
kernel, centred on the unit circle. Elliptical slice sampling with a 0/-inf
likelihood keeps every state free of self-intersections.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from .core import as_points, make_rng

COLLINEAR_TOL = 1e-12


def periodic_kernel(x, x2, l: float):
    if not l > 0:
        raise ValueError("length-scale must be positive")
    return np.exp(-np.sin((np.asarray(x) - np.asarray(x2)) / 2.0) ** 2 / (2.0 * l * l))


@dataclass
class GpPrior:
    n_points: int = 200
    length_scale: float = 0.1

    def __post_init__(self):
        self.t = 2.0 * np.pi * np.arange(self.n_points) / self.n_points
        self.gram = periodic_kernel(self.t[:, None], self.t[None, :], self.length_scale)
        self.chol, self.jitter = _jittered_cholesky(self.gram)

    @property
    def mean(self) -> np.ndarray:
        """Unit circle, one row per grid angle."""
        return np.column_stack([np.cos(self.t), np.sin(self.t)])


def _jittered_cholesky(K: np.ndarray, start: float = 1e-10, cap: float = 1e-6):
    jitter = start
    eye = np.eye(K.shape[0])
    while True:
        try:
            return np.linalg.cholesky(K + jitter * eye), jitter
        except np.linalg.LinAlgError:
            if jitter >= cap:
                raise np.linalg.LinAlgError(f"Cholesky failed with jitter up to {cap}") from None
            jitter = min(jitter * 10.0, cap)


def gp_prior_sample(prior: GpPrior, rng: np.random.Generator, z: np.ndarray | None = None) -> np.ndarray:
    """``L @ z`` with ``z`` standard normal (drawn from ``rng`` unless given)."""
    if z is None:
        z = rng.standard_normal(prior.n_points)
    return prior.chol @ z


@njit(cache=True)
def _orient(ax, ay, bx, by, cx, cy):
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if abs(v) <= COLLINEAR_TOL:
        return 0
    return 1 if v > 0 else -1


@njit(cache=True)
def _on_segment(px, py, ax, ay, bx, by):
    return (
        min(ax, bx) - COLLINEAR_TOL <= px <= max(ax, bx) + COLLINEAR_TOL
        and min(ay, by) - COLLINEAR_TOL <= py <= max(ay, by) + COLLINEAR_TOL
    )


@njit(cache=True)
def _segments_meet(ax, ay, bx, by, cx, cy, dx, dy):
    o1 = _orient(ax, ay, bx, by, cx, cy)
    o2 = _orient(ax, ay, bx, by, dx, dy)
    o3 = _orient(cx, cy, dx, dy, ax, ay)
    o4 = _orient(cx, cy, dx, dy, bx, by)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    if o1 == 0 and _on_segment(cx, cy, ax, ay, bx, by):
        return True
    if o2 == 0 and _on_segment(dx, dy, ax, ay, bx, by):
        return True
    if o3 == 0 and _on_segment(ax, ay, cx, cy, dx, dy):
        return True
    if o4 == 0 and _on_segment(bx, by, cx, cy, dx, dy):
        return True
    return False


@njit(cache=True)
def _polyline_self_intersects(p):
    n_seg = p.shape[0] - 1
    for i in range(n_seg - 2):
        ax, ay, bx, by = p[i, 0], p[i, 1], p[i + 1, 0], p[i + 1, 1]
        xlo, xhi = min(ax, bx) - COLLINEAR_TOL, max(ax, bx) + COLLINEAR_TOL
        ylo, yhi = min(ay, by) - COLLINEAR_TOL, max(ay, by) + COLLINEAR_TOL
        for j in range(i + 2, n_seg):
            cx, cy, dx, dy = p[j, 0], p[j, 1], p[j + 1, 0], p[j + 1, 1]
            if max(cx, dx) < xlo or min(cx, dx) > xhi or max(cy, dy) < ylo or min(cy, dy) > yhi:
                continue
            if _segments_meet(ax, ay, bx, by, cx, cy, dx, dy):
                return True
    return False


def self_intersects(path) -> bool:
    """True iff two non-adjacent segments of the open polyline touch or cross."""
    return bool(_polyline_self_intersects(np.ascontiguousarray(as_points(path))))


def ess_step(
    current: np.ndarray,
    prior_sample: np.ndarray,
    log_lik: Callable[[np.ndarray], float],
    rng: np.random.Generator,
    max_shrinks: int = 200,
) -> np.ndarray:
    """One elliptical slice sampling transition (Murray, Adams & MacKay).

    ``current`` and ``prior_sample`` are zero-mean prior-space states of any
    (matching) shape. With ``max_shrinks`` exhausted the current state is
    returned, which is always a valid (if lazy) transition.
    """
    cur_ll = log_lik(current)
    if not cur_ll > -math.inf:
        raise ValueError("current state is infeasible under log_lik")
    threshold = cur_ll + math.log(rng.uniform())
    angle = rng.uniform(0.0, 2.0 * math.pi)
    lo, hi = angle - 2.0 * math.pi, angle
    for _ in range(max_shrinks):
        prop = current * math.cos(angle) + prior_sample * math.sin(angle)
        if log_lik(prop) > threshold:
            return prop
        if angle < 0:
            lo = angle
        else:
            hi = angle
        angle = rng.uniform(lo, hi)
    return current.copy()


def generate_path(prior: GpPrior, iters: int, rng: np.random.Generator) -> np.ndarray:
    """Unit circle perturbed by ``iters`` joint ESS steps on both axes."""
    mean = prior.mean

    def log_lik(dev):
        return -math.inf if self_intersects(mean + dev) else 0.0

    dev = np.zeros_like(mean)
    for _ in range(iters):
        nu = np.column_stack([gp_prior_sample(prior, rng), gp_prior_sample(prior, rng)])
        dev = ess_step(dev, nu, log_lik, rng)
    return mean + dev


def _generate_one(args):
    prior, iters, seed, i = args
    return generate_path(prior, iters, make_rng(seed, i))


def generate_paths(
    count: int,
    n_points: int = 200,
    iters_per_path: int = 200,
    l: float = 0.1,
    seed: int = 0,
    workers: int = 1,
) -> list[np.ndarray]:
    """``count`` non-self-intersecting paths, each from its own RNG stream."""
    if count <= 0:
        raise ValueError("count must be positive")
    prior = GpPrior(n_points, l)
    jobs = [(prior, iters_per_path, seed, i) for i in range(count)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            paths = list(ex.map(_generate_one, jobs, chunksize=4))
    else:
        paths = [_generate_one(j) for j in jobs]
    for p in paths:
        # hard guarantee, not just a property of the sampler
        if self_intersects(p):
            raise RuntimeError("sampler emitted a self-intersecting path")
    return paths
