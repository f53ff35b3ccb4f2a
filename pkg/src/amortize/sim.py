"""Deterministic realization processes and goal extraction.

* ballistic: landing distance of a projectile launched at angle theta.
* fiber: a lag follower. The deposited fibre point trails the nozzle at a
  fixed distance ``L`` and only moves when pulled, which smooths corners and
  makes many nozzle paths produce the same fibre path.
* arm: a planar chain of 20 segments whose left/right sides stretch by the
  design ratios; each segment extends by the mean ratio and bends by the
  left/right difference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RATIO_MAX, RATIO_MIN, ROBOT_N_CTRL, RobotDesign, RobotGoal, RobotRealization, as_points
from .geometry import resample_spacing


@dataclass(frozen=True)
class BallisticConfig:
    v0: float = 10.0
    g_acc: float = 9.8

    def __post_init__(self):
        if not (self.v0 > 0 and self.g_acc > 0):
            raise ValueError("v0 and g_acc must be positive")

    @property
    def max_range(self) -> float:
        return self.v0**2 / self.g_acc


def ballistic_realize(theta, cfg: BallisticConfig = BallisticConfig()):
    th = np.asarray(theta, dtype=np.float64)
    if np.any(th < 0) or np.any(th > math.pi / 2):
        raise ValueError("launch angle must lie in [0, pi/2]")
    out = cfg.v0**2 * np.sin(2.0 * th) / cfg.g_acc
    return float(out) if out.ndim == 0 else out


def ballistic_inverse(distance, cfg: BallisticConfig = BallisticConfig()):
    """Both launch angles reaching ``distance`` (low, high)."""
    low = 0.5 * np.arcsin(np.clip(np.asarray(distance) / cfg.max_range, 0.0, 1.0))
    return low, math.pi / 2 - low


@dataclass(frozen=True)
class FiberConfig:
    lag: float = 0.15
    spacing: float = 0.03

    def __post_init__(self):
        if self.lag < 0 or not self.spacing > 0:
            raise ValueError("lag must be >= 0 and spacing > 0")


def lag_follow(e: np.ndarray, lag: float) -> np.ndarray:
    """The follower recurrence on an already resampled nozzle path."""
    u = np.empty_like(e)
    u[0] = e[0]
    prev = e[0].copy()
    for i in range(1, len(e)):
        dx = prev[0] - e[i, 0]
        dy = prev[1] - e[i, 1]
        dist = math.hypot(dx, dy)
        if dist > lag:
            k = lag / dist
            prev = np.array([e[i, 0] + dx * k, e[i, 1] + dy * k])
        u[i] = prev
    return u


def fiber_realize(extruder, cfg: FiberConfig = FiberConfig()) -> np.ndarray:
    """Fibre path laid by a nozzle following ``extruder``.

    The nozzle path is first resampled to uniform spacing ``cfg.spacing``;
    the output has one point per resampled nozzle point.
    """
    return lag_follow(resample_spacing(as_points(extruder), cfg.spacing), cfg.lag)


def sine_path(amplitude: float, wavelength: float, spacing: float) -> np.ndarray:
    x = np.linspace(0.0, wavelength, max(3, int(round(wavelength / (spacing / 4))) + 1))
    return np.column_stack([x, amplitude * np.sin(2.0 * np.pi * x / wavelength)])


def amplitude_response(amplitudes, cfg: FiberConfig = FiberConfig(), wavelength: float = 8.0):
    """(nozzle amplitude, fibre amplitude) for one sine period per amplitude.

    Amplitude is the peak |y| of the path.
    """
    out = []
    for a in amplitudes:
        if not a > 0:
            raise ValueError("amplitudes must be positive")
        e = sine_path(a, wavelength, cfg.spacing)
        u = fiber_realize(e, cfg)
        out.append((float(np.max(np.abs(resample_spacing(e, cfg.spacing)[:, 1]))), float(np.max(np.abs(u[:, 1])))))
    return out


def many_to_one_pair(cfg: FiberConfig = FiberConfig(), length: float = 3.0, every: int = 3, steps: int = 9,
                     density: int = 30):
    """Two distinct extruder paths with (numerically) the same fibre.

    The first is a straight line along x. The second adds a zigzag of short
    spikes that lean backwards, alternating sides, every ``every`` grid steps.
    Each spike stays inside the lag radius around the trailing fibre point, so
    the follower stalls for its duration, and its arc length is ``steps`` grid
    steps so the resampled grid stays aligned with the straight one.
    """
    s, L = cfg.spacing, cfg.lag
    a = steps * s / (2.0 * np.sqrt(2.0))
    if not 0 < a < L:
        raise ValueError("spike does not fit inside the lag radius")
    n_grid = int(round(length / s))
    start = int(np.ceil(2 * L / s))
    straight = np.column_stack([np.linspace(0.0, n_grid * s, n_grid * density + 1), np.zeros(n_grid * density + 1)])
    pts = [np.zeros(2)]
    side = 1.0
    for k in range(n_grid):
        x0 = k * s
        if k >= start and (k - start) % every == 0:
            tip = np.array([x0 - a, side * a])
            base = np.array([x0, 0.0])
            leg = np.linspace(0.0, 1.0, density * steps // 2 + 1)[1:, None]
            pts.extend(base + leg * (tip - base))
            pts.extend(tip + leg * (base - tip))
            side = -side
        seg = np.linspace(0.0, s, density + 1)[1:]
        pts.extend(np.column_stack([x0 + seg, np.zeros(density)]))
    return straight, np.array(pts)


def total_turning(path) -> float:
    """Sum of absolute turning angles between consecutive non-degenerate segments."""
    pts = as_points(path)
    d = np.diff(pts, axis=0)
    d = d[np.hypot(d[:, 0], d[:, 1]) > 1e-12]
    if len(d) < 2:
        return 0.0
    ang = np.arctan2(d[:, 1], d[:, 0])
    turn = np.diff(ang)
    turn = (turn + np.pi) % (2.0 * np.pi) - np.pi
    return float(np.sum(np.abs(turn)))


@dataclass(frozen=True)
class ArmConfig:
    n_segments: int = 20
    seg_height: float = 0.5
    width: float = 0.5
    obstacle_radius: float = 0.9
    clearance: float = 0.1  # delta r of the barrier
    sector_inner: float = 4.0
    sector_outer: float = 5.0
    sector_center_deg: float = 45.0  # bisector, measured from +y toward +x
    sector_width_deg: float = 60.0

    @property
    def n_vertices(self) -> int:
        return 3 * (self.n_segments + 1)

    @property
    def top_mid_index(self) -> int:
        return 3 * self.n_segments + 1

    def rest_vertices(self) -> np.ndarray:
        return arm_vertices(np.ones(2 * self.n_segments), self)


def arm_vertices(ratios: np.ndarray, cfg: ArmConfig = ArmConfig()) -> np.ndarray:
    """Vertex array for raw ratios, rows ordered level-major (left, centre, right)."""
    r = np.asarray(ratios, dtype=np.float64)
    ns = cfg.n_segments
    a, b = r[:ns], r[ns:]
    h, w = cfg.seg_height, cfg.width
    ext = h * (a + b) / 2.0
    bend = h * (a - b) / w
    psi = np.concatenate([[0.0], np.cumsum(bend)])
    heading = psi[:-1] + bend / 2.0
    steps = ext[:, None] * np.column_stack([np.sin(heading), np.cos(heading)])
    centre = np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])
    normal = np.column_stack([-np.cos(psi), np.sin(psi)])  # leftward
    left = centre + 0.5 * w * normal
    right = centre - 0.5 * w * normal
    return np.stack([left, centre, right], axis=1).reshape(-1, 2)


def arm_realize(design, cfg: ArmConfig = ArmConfig()) -> RobotRealization:
    ratios = design.stretch_ratios if isinstance(design, RobotDesign) else RobotDesign(design).stretch_ratios
    if ratios.shape[0] != 2 * cfg.n_segments:
        raise ValueError("design length does not match the arm")
    return RobotRealization(arm_vertices(ratios, cfg), cfg.top_mid_index)


def arm_goal_of(realization: RobotRealization, obstacle_center, radius: float = 0.9) -> RobotGoal:
    return RobotGoal(np.array(realization.top_mid, dtype=np.float64), obstacle_center, radius)


def sample_obstacle(rng: np.random.Generator, require_clear=None, cfg: ArmConfig = ArmConfig(), max_draws: int = 10_000):
    """Obstacle centre uniform in angle and radius over the sector; returns
    ``(center, radius)``.

    With ``require_clear`` (a realization or vertex array), redraws until
    every vertex is at least ``radius + clearance`` from the centre.
    """
    verts = None
    if require_clear is not None:
        verts = require_clear.vertices if isinstance(require_clear, RobotRealization) else np.asarray(require_clear)
    lo = math.radians(cfg.sector_center_deg - cfg.sector_width_deg / 2)
    hi = math.radians(cfg.sector_center_deg + cfg.sector_width_deg / 2)
    need = cfg.obstacle_radius + cfg.clearance
    for _ in range(max_draws):
        ang = rng.uniform(lo, hi)
        rad = rng.uniform(cfg.sector_inner, cfg.sector_outer)
        c = np.array([rad * math.sin(ang), rad * math.cos(ang)])
        if verts is None or np.min(np.hypot(verts[:, 0] - c[0], verts[:, 1] - c[1])) >= need:
            return c, cfg.obstacle_radius
    raise RuntimeError(f"no clear obstacle position after {max_draws} draws")


def sample_design(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(RATIO_MIN, RATIO_MAX, size=ROBOT_N_CTRL)
