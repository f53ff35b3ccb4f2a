"""Per-task glue: sampling, network shapes, batch losses and solvers' objectives.

A task object knows how to turn stored sample arrays into network inputs and
targets, how to evaluate each training loss with gradients, and how to build
the per-goal objective used by direct optimization. Sample arrays:

=========  ==================  ===================  ======================
task       design              realization          goal
=========  ==================  ===================  ======================
ballistic  (1,) angle          (1,) distance        (1,) distance
fiber      (k, 2) nozzle path  (n, 2) fibre path    (n, 2) = realization
arm        (40,) ratios        (63, 2) vertices     (5,) tx ty ox oy r
=========  ==================  ===================  ======================

The fiber design is the raw sampled path; its resampling at the nozzle
spacing (``FiberTask.nozzle``) is index-aligned with the fibre path. The
path methods work on the goal resampled at the same spacing
(``FiberTask.work_goal``), which removes the repeated points a stalled
follower leaves behind. Every fiber network, the surrogate included, uses
one row per working-goal point: a design there is the nozzle path sampled
where the fibre passes each goal point (``FiberTask.aligned_design``), so
its uneven spacing carries the stalls. Fiber costs are measured in units of
the nozzle spacing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import RATIO_MAX, RATIO_MIN, ROBOT_N_CTRL, Sample, make_rng
from ..geometry import ArcParam, resample_spacing, index_windows, index_windows_adjoint, path_window_features, smooth_reg, smooth_reg_grad
from ..losses import RobotCostConfig, _robot_reg_mask, do_distance, do_reg
from ..nn import Mlp, MlpSpec, backward, forward, mlp_spec
from ..sim import (
    ArmConfig,
    BallisticConfig,
    FiberConfig,
    arm_vertices,
    ballistic_realize,
    sample_design,
    sample_obstacle,
)

HALF_PI = 0.5 * math.pi


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class TaskMismatch(ValueError):
    pass


def check_model(model: Mlp, spec_in: int, spec_out: int, what: str) -> None:
    sizes = model.spec.layer_sizes
    if sizes[0] != spec_in or sizes[-1] != spec_out:
        raise TaskMismatch(f"{what} maps {sizes[0]} -> {sizes[-1]}, task needs {spec_in} -> {spec_out}")


# -- ballistic --------------------------------------------------------------

@dataclass(frozen=True)
class BallisticTask:
    cfg: BallisticConfig = BallisticConfig()
    name: str = "ballistic"
    decoder_hidden: tuple = (128, 128)
    encoder_hidden: tuple = (64, 64)
    # direct optimization starts below pi/4, where the decoder gradient is not ~0
    do_start: float = -1.0

    @property
    def scale(self) -> float:
        return self.cfg.max_range

    def sample(self, rng) -> Sample:
        th = np.array([rng.uniform(0.0, HALF_PI)])
        u = np.atleast_1d(ballistic_realize(th, self.cfg))
        return Sample(th, u, u.copy())

    def realize(self, design) -> np.ndarray:
        return np.atleast_1d(ballistic_realize(np.clip(np.asarray(design, dtype=np.float64), 0.0, HALF_PI), self.cfg))

    def decoder_spec(self, hidden=None) -> MlpSpec:
        return mlp_spec(1, self.decoder_hidden if hidden is None else hidden, 1)

    def encoder_spec(self, hidden=None) -> MlpSpec:
        return mlp_spec(1, self.encoder_hidden if hidden is None else hidden, 1, output_scale=math.pi / 4)

    def _stack(self, batch):
        th = np.array([s.design[0] for s in batch])[:, None]
        u = np.array([s.realization[0] for s in batch])[:, None] / self.scale
        g = np.array([s.goal[0] for s in batch])[:, None] / self.scale
        return th, u, g

    @staticmethod
    def _dec_in(th):
        # angle mapped to [-1, 1]
        return (th - math.pi / 4) / (math.pi / 4)

    def decoder_loss(self, dec, batch, rng=None, need_grad=True):
        th, u, _ = self._stack(batch)
        pred, cache = forward(dec, self._dec_in(th))
        r = pred - u
        loss = float(np.mean(np.sum(r * r, axis=1)))
        if not need_grad:
            return loss, None
        grads, _ = backward(dec, cache, 2.0 * r / len(batch))
        return loss, grads

    def encoder_loss(self, enc, dec, batch, reg_weight=0.0, rng=None, need_grad=True):
        _, _, g = self._stack(batch)
        o, c_enc = forward(enc, g)
        pred, c_dec = forward(dec, self._dec_in(math.pi / 4 + o))
        r = pred - g
        loss = float(np.mean(np.sum(r * r, axis=1)))
        if not need_grad:
            return loss, None
        _, d_in = backward(dec, c_dec, 2.0 * r / len(batch), param_grads=False)
        grads, _ = backward(enc, c_enc, d_in / (math.pi / 4))
        return loss, grads

    def direct_loss(self, enc, batch, reg_weight=0.0, rng=None, need_grad=True):
        th, _, g = self._stack(batch)
        o, cache = forward(enc, g)
        r = math.pi / 4 + o - th
        loss = float(np.mean(np.sum(r * r, axis=1)))
        if not need_grad:
            return loss, None
        grads, _ = backward(enc, cache, 2.0 * r / len(batch))
        return loss, grads

    def encode(self, enc, goal) -> np.ndarray:
        g = np.atleast_1d(np.asarray(goal, dtype=np.float64)) / self.scale
        return math.pi / 4 + enc(g.reshape(-1, 1)).reshape(-1)

    def decode(self, dec, design) -> np.ndarray:
        return dec(self._dec_in(np.asarray(design, dtype=np.float64).reshape(-1, 1))).reshape(-1) * self.scale

    def do_problem(self, goal, dec, reg_weight=0.0):
        target = float(np.atleast_1d(goal)[0]) / self.scale

        def to_design(z):
            return math.pi / 4 + (math.pi / 4) * (2.0 * _sigmoid(z) - 1.0)

        def objective(z):
            pred, cache = forward(dec, self._dec_in(to_design(z)))
            r = pred[0] - target
            _, d_in = backward(dec, cache, np.array([2.0 * r]), param_grads=False)
            s = _sigmoid(z)
            # d input / d z = 2 s (1 - s)
            return r * r, d_in * 2.0 * s * (1.0 - s)

        return np.array([self.do_start]), objective, to_design


# -- fiber ------------------------------------------------------------------

_CHUNK_STREAM = 0xC4C


@dataclass(frozen=True)
class _WindowChunk:
    design: np.ndarray
    offset: np.ndarray
    index: np.ndarray


@dataclass(frozen=True)
class _PathChunk:
    """Points ``a:b`` of a working goal, with the halo ``lo:hi`` their
    decoder windows reach into."""
    goal: np.ndarray
    features: np.ndarray
    target: np.ndarray
    lo: int
    a: int
    b: int
    hi: int


@dataclass(frozen=True)
class FiberTask:
    cfg: FiberConfig = FiberConfig()
    name: str = "fiber"
    m: int = 30
    n_points: int = 200
    iters_per_path: int = 200
    length_scale: float = 0.1
    decoder_hidden: tuple = (500, 200, 100, 50, 25)
    encoder_hidden: tuple = (500, 200, 100, 50, 25)
    n_quad: int = 256
    # window coordinates are divided by in_scale, network outputs multiplied by out_scale
    in_scale: float = 1.0
    out_scale: float = 1.0
    # fibre points per decoder training step; 0 keeps whole paths
    decoder_chunk: int = 128
    # consecutive goal points per encoder / direct-learning step
    path_chunk: int = 0

    @property
    def n_features(self) -> int:
        return 2 * (2 * self.m + 1)

    @property
    def s0(self) -> float:
        return self.cfg.spacing

    def sample_from_path(self, raw_path) -> Sample:
        th = np.asarray(raw_path, dtype=np.float64)
        u = self.realize(th)
        return Sample(th, u, u.copy())

    def nozzle(self, design) -> np.ndarray:
        """The design resampled at the nozzle spacing, one row per fibre point."""
        return resample_spacing(design, self.cfg.spacing)

    def realize(self, design) -> np.ndarray:
        from ..sim import fiber_realize

        return fiber_realize(design, self.cfg)

    def decoder_spec(self, hidden=None) -> MlpSpec:
        return mlp_spec(self.n_features, self.decoder_hidden if hidden is None else hidden, 2)

    def encoder_spec(self, hidden=None) -> MlpSpec:
        return mlp_spec(self.n_features, self.encoder_hidden if hidden is None else hidden, 2)

    def goal_features(self, g) -> np.ndarray:
        return path_window_features(g, self.m, self.s0)

    def work_goal(self, goal) -> np.ndarray:
        return resample_spacing(goal, self.s0)

    def aligned_design(self, design, goal) -> np.ndarray:
        """Nozzle positions matching each point of ``work_goal(goal)``.

        The nozzle path is index-aligned with the fibre, so a point at
        fractional index ``i + t`` of the fibre maps to the same fractional
        index of the nozzle path.
        """
        noz = self.nozzle(design)
        ap = ArcParam(goal)
        n = max(2, int(round(ap.length / self.s0)) + 1)
        idx, t = ap.locate(ap.length * np.arange(n) / (n - 1))
        return noz[idx] + t[:, None] * (noz[idx + 1] - noz[idx])

    def _net(self, model, windows):
        y, cache = forward(model, windows / self.in_scale)
        return self.out_scale * y, cache

    def _net_back(self, model, cache, d_out, param_grads=True):
        grads, d_in = backward(model, cache, self.out_scale * d_out, param_grads)
        return grads, d_in / self.in_scale

    def decoder_pair(self, s: Sample) -> tuple[np.ndarray, np.ndarray]:
        """(design, realization) of a sample in goal-index coordinates.

        Both have one row per point of the working goal: the design is the
        aligned nozzle path and the realization is the working goal itself,
        which is what the fibre passes through at those nozzle positions.
        """
        return self.aligned_design(s.design, s.goal), self.work_goal(s.goal)

    def decoder_units(self, samples, seed: int = 0) -> list:
        """Training units for the surrogate: random disjoint point subsets of
        each path, so one Adam step sees ``decoder_chunk`` windows."""
        if not self.decoder_chunk:
            return list(samples)
        units = []
        for i, s in enumerate(samples):
            th, u = self.decoder_pair(s)
            idx = make_rng(seed, _CHUNK_STREAM, i).permutation(len(th))
            for k in range(0, len(th), self.decoder_chunk):
                units.append(_WindowChunk(th, u - th, np.sort(idx[k : k + self.decoder_chunk])))
        return units

    def path_units(self, samples, seed: int = 0) -> list:
        """Training units for the encoder and direct-learning: runs of
        ``path_chunk`` consecutive goal points, starting at a random phase."""
        if not self.path_chunk:
            return list(samples)
        c, units = self.path_chunk, []
        for i, s in enumerate(samples):
            g = self.work_goal(s.goal)
            n = len(g)
            feats = self.goal_features(g)
            target = self.aligned_design(s.design, s.goal)
            start = int(make_rng(seed, _CHUNK_STREAM, 1, i).integers(c))
            cuts = [0, *range(start, n, c), n]
            cuts = sorted({k for k in cuts if k == 0 or k == n or 3 <= k <= n - 3})
            for a, b in zip(cuts[:-1], cuts[1:]):
                lo, hi = max(0, a - self.m), min(n, b + self.m)
                units.append(_PathChunk(g, feats, target, lo, a, b, hi))
        return units

    def decoder_loss(self, dec, batch, rng=None, need_grad=True):
        total, acc = 0.0, None
        for s in batch:
            if isinstance(s, _WindowChunk):
                w = index_windows(s.design, self.m)[s.index]
                pred, cache = self._net(dec, w)
                r = pred - s.offset[s.index]
                n = len(s.index)
            else:
                th, u = self.decoder_pair(s)
                pred, cache = self._net(dec, index_windows(th, self.m))
                r = pred - (u - th)
                n = len(th)
            total += float(np.sum(r * r)) / n
            if need_grad:
                grads, _ = self._net_back(dec, cache, 2.0 * r / (n * len(batch)))
                acc = grads if acc is None else acc.add_(grads)
        return total / len(batch), acc

    def _add_reg(self, val, grad, th, weight):
        # smoothness in nozzle-spacing units: R(th / s0) = s0^2 R(th)
        w = weight * self.s0**2 / len(th)
        return val + w * smooth_reg(th), grad + w * smooth_reg_grad(th)

    def _through_decoder(self, dec, th, g, a=0, b=None):
        """Surrogate cost of points ``a:b`` of ``th`` against ``g`` (per point)
        and its gradient with respect to all of ``th``."""
        b = len(th) if b is None else b
        n = b - a
        off, cache = self._net(dec, index_windows(th, self.m)[a:b])
        r = th[a:b] + off - g
        k = 1.0 / (n * self.s0**2)
        val = float(np.sum(r * r)) * k
        d_u = 2.0 * k * r
        _, d_w = self._net_back(dec, cache, d_u, param_grads=False)
        if a or b < len(th):
            d_w = np.pad(d_w, ((a, len(th) - b), (0, 0)))
        d_th = index_windows_adjoint(d_w, self.m)
        d_th[a:b] += d_u
        return val, d_th

    def _unit(self, s, need_target=False):
        # (goal features, goal points, target, halo offsets) of a sample or chunk
        if isinstance(s, _PathChunk):
            return (s.features[s.lo : s.hi], s.goal[s.lo : s.hi], s.target[s.lo : s.hi] if need_target else None,
                    s.a - s.lo, s.b - s.lo)
        g = self.work_goal(s.goal)
        return self.goal_features(g), g, self.aligned_design(s.design, s.goal) if need_target else None, 0, len(g)

    def encoder_loss(self, enc, dec, batch, reg_weight=0.0, rng=None, need_grad=True):
        total, acc = 0.0, None
        for s in batch:
            feats, g, _, a, b = self._unit(s)
            o, c_enc = self._net(enc, feats)
            th = g + o
            val, d_th = self._through_decoder(dec, th, g[a:b], a, b)
            if reg_weight:
                val, d_th[a:b] = self._add_reg(val, d_th[a:b], th[a:b], reg_weight)
            total += val
            if need_grad:
                grads, _ = self._net_back(enc, c_enc, d_th / len(batch))
                acc = grads if acc is None else acc.add_(grads)
        return total / len(batch), acc

    def direct_loss(self, enc, batch, reg_weight=0.0, rng=None, need_grad=True):
        total, acc = 0.0, None
        for s in batch:
            feats, g, target, a, b = self._unit(s, need_target=True)
            o, cache = self._net(enc, feats[a:b])
            th = g[a:b] + o
            r = th - target[a:b]
            k = 1.0 / ((b - a) * self.s0**2)
            val = float(np.sum(r * r)) * k
            d_th = 2.0 * k * r
            if reg_weight:
                val, d_th = self._add_reg(val, d_th, th, reg_weight)
            total += val
            if need_grad:
                grads, _ = self._net_back(enc, cache, d_th / len(batch))
                acc = grads if acc is None else acc.add_(grads)
        return total / len(batch), acc

    def encode(self, enc, goal) -> np.ndarray:
        g = self.work_goal(goal)
        return g + self._net(enc, self.goal_features(g))[0]

    def decode(self, dec, design) -> np.ndarray:
        th = np.asarray(design, dtype=np.float64)
        return th + self._net(dec, index_windows(th, self.m))[0]

    def do_problem(self, goal, dec, reg_weight=6e-4):
        g = self.work_goal(goal)
        shape = g.shape
        s2 = self.s0**2  # (d_do + lambda_do * R_do) / s0^2: same minimiser, better scaled

        def objective(x):
            th = x.reshape(shape)
            off, cache = self._net(dec, index_windows(th, self.m))
            u = th + off
            val, d_u = do_distance(g, u, self.n_quad)
            val, d_u = val / s2, d_u / s2
            _, d_w = self._net_back(dec, cache, d_u, param_grads=False)
            d_th = d_u + index_windows_adjoint(d_w, self.m)
            if reg_weight:
                rv, rg = do_reg(th)
                val += reg_weight * rv / s2
                d_th = d_th + (reg_weight / s2) * rg
            return val, d_th.reshape(-1)

        return g.reshape(-1).copy(), objective, lambda x: x.reshape(shape)


# -- arm --------------------------------------------------------------------

def robot_cost_batch(theta, verts, target, center, cfg: RobotCostConfig, tm: int):
    """Vectorised robot cost over a leading batch axis.

    Returns per-sample values (B,), d/d theta (B, n) and d/d vertices (B, m, 2).
    """
    B, n = theta.shape
    m = verts.shape[1]
    miss = verts[:, tm] - target
    val = 0.5 * np.sum(miss * miss, axis=1)
    diff = verts - center[:, None, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    pen = np.maximum(cfg.radius + cfg.clearance - dist, 0.0)
    val = val + cfg.barrier_weight * np.sum(pen * pen, axis=1) / m
    unit = np.divide(diff, dist[..., None], out=np.zeros_like(diff), where=dist[..., None] > 0)
    g_v = (-2.0 * cfg.barrier_weight / m) * pen[..., None] * unit
    g_v[:, tm] += miss
    D = np.zeros_like(theta)
    D[:, 1:-1] = 0.5 * (theta[:, 2:] - 2.0 * theta[:, 1:-1] + theta[:, :-2])
    D[:, ~_robot_reg_mask(n)] = 0.0
    val = val + cfg.reg_weight * np.sum(D * D, axis=1) / (n - 4)
    c = (2.0 * cfg.reg_weight / (n - 4)) * D
    g_t = np.zeros_like(theta)
    g_t[:, 2:] += 0.5 * c[:, 1:-1]
    g_t[:, 1:-1] -= c[:, 1:-1]
    g_t[:, :-2] += 0.5 * c[:, 1:-1]
    return val, g_t, g_v


@dataclass(frozen=True)
class ArmTask:
    cfg: ArmConfig = ArmConfig()
    cost: RobotCostConfig = RobotCostConfig()
    name: str = "arm"
    decoder_hidden: tuple = (128, 256, 128)
    encoder_hidden: tuple = (128, 256, 128)
    goal_scale: float = 10.0
    rest: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.rest is None:
            object.__setattr__(self, "rest", self.cfg.rest_vertices())

    @property
    def half_range(self) -> float:
        return 0.5 * (RATIO_MAX - RATIO_MIN)

    def with_reg(self, reg_weight: float) -> "ArmTask":
        from dataclasses import replace

        return replace(self, cost=replace(self.cost, reg_weight=float(reg_weight)))

    def sample(self, rng) -> Sample:
        th = sample_design(rng)
        v = arm_vertices(th, self.cfg)
        c, r = sample_obstacle(rng, v, self.cfg)
        goal = np.array([*v[self.cfg.top_mid_index], *c, r])
        return Sample(th, v, goal)

    def realize(self, design) -> np.ndarray:
        return arm_vertices(np.clip(np.asarray(design, dtype=np.float64), RATIO_MIN, RATIO_MAX), self.cfg)

    def decoder_spec(self, hidden=None) -> MlpSpec:
        return mlp_spec(ROBOT_N_CTRL, self.decoder_hidden if hidden is None else hidden, 2 * self.cfg.n_vertices)

    def encoder_spec(self, hidden=None) -> MlpSpec:
        return mlp_spec(4, self.encoder_hidden if hidden is None else hidden, ROBOT_N_CTRL, output_scale=self.half_range)

    def _verts(self, dec, th):
        off, cache = forward(dec, th - 1.0)
        return self.rest[None] + off.reshape(len(th), -1, 2), cache

    def decoder_loss(self, dec, batch, rng=None, need_grad=True):
        th = np.stack([s.design for s in batch])
        target = np.stack([(s.realization - self.rest).reshape(-1) for s in batch])
        pred, cache = forward(dec, th - 1.0)
        r = pred - target
        loss = float(np.mean(np.sum(r * r, axis=1)))
        if not need_grad:
            return loss, None
        grads, _ = backward(dec, cache, 2.0 * r / len(batch))
        return loss, grads

    def _obstacles(self, batch, rng, clear_of_sample: bool):
        if rng is None:
            return np.stack([s.goal[2:4] for s in batch])
        return np.stack(
            [sample_obstacle(rng, s.realization if clear_of_sample else None, self.cfg)[0] for s in batch]
        )

    def _enc_input(self, target, center):
        return np.concatenate([target, center], axis=1) / self.goal_scale

    def encoder_loss(self, enc, dec, batch, reg_weight=None, rng=None, need_grad=True):
        cost = self.cost if reg_weight is None else self.with_reg(reg_weight).cost
        target = np.stack([s.goal[:2] for s in batch])
        center = self._obstacles(batch, rng, clear_of_sample=False)
        o, c_enc = forward(enc, self._enc_input(target, center))
        th = 1.0 + o
        v, c_dec = self._verts(dec, th)
        val, g_t, g_v = robot_cost_batch(th, v, target, center, cost, self.cfg.top_mid_index)
        loss = float(np.mean(val))
        if not need_grad:
            return loss, None
        B = len(batch)
        _, d_in = backward(dec, c_dec, g_v.reshape(B, -1) / B, param_grads=False)
        grads, _ = backward(enc, c_enc, g_t / B + d_in)
        return loss, grads

    def direct_loss(self, enc, batch, reg_weight=None, rng=None, need_grad=True):
        cost = self.cost if reg_weight is None else self.with_reg(reg_weight).cost
        th_true = np.stack([s.design for s in batch])
        target = np.stack([s.goal[:2] for s in batch])
        center = self._obstacles(batch, rng, clear_of_sample=True)
        o, cache = forward(enc, self._enc_input(target, center))
        th = 1.0 + o
        r = th - th_true
        D = np.zeros_like(th)
        D[:, 1:-1] = 0.5 * (th[:, 2:] - 2.0 * th[:, 1:-1] + th[:, :-2])
        D[:, ~_robot_reg_mask(th.shape[1])] = 0.0
        n4 = th.shape[1] - 4
        val = np.sum(r * r, axis=1) + cost.reg_weight * np.sum(D * D, axis=1) / n4
        loss = float(np.mean(val))
        if not need_grad:
            return loss, None
        c = (2.0 * cost.reg_weight / n4) * D
        g_t = 2.0 * r
        g_t[:, 2:] += 0.5 * c[:, 1:-1]
        g_t[:, 1:-1] -= c[:, 1:-1]
        g_t[:, :-2] += 0.5 * c[:, 1:-1]
        grads, _ = backward(enc, cache, g_t / len(batch))
        return loss, grads

    def encode(self, enc, goal) -> np.ndarray:
        g = np.asarray(goal, dtype=np.float64)
        return 1.0 + enc(g[:4] / self.goal_scale)

    def decode(self, dec, design) -> np.ndarray:
        th = np.asarray(design, dtype=np.float64)
        return self.rest + dec(th - 1.0).reshape(-1, 2)

    def do_problem(self, goal, dec, reg_weight=None):
        cost = self.cost if reg_weight is None else self.with_reg(reg_weight).cost
        g = np.asarray(goal, dtype=np.float64)
        target, center = g[None, :2], g[None, 2:4]
        if len(g) > 4:
            from dataclasses import replace

            cost = replace(cost, radius=float(g[4]))
        a = self.half_range

        def to_design(z):
            return 1.0 + a * (2.0 * _sigmoid(z) - 1.0)

        def objective(z):
            th = to_design(z)[None]
            v, cache = self._verts(dec, th)
            val, g_t, g_v = robot_cost_batch(th, v, target, center, cost, self.cfg.top_mid_index)
            _, d_in = backward(dec, cache, g_v.reshape(1, -1), param_grads=False)
            s = _sigmoid(z)
            return float(val[0]), (g_t[0] + d_in[0]) * (2.0 * a) * s * (1.0 - s)

        return np.zeros(ROBOT_N_CTRL), objective, to_design


def get_task(name: str, **kw):
    try:
        cls = {"ballistic": BallisticTask, "fiber": FiberTask, "arm": ArmTask}[name]
    except KeyError:
        raise ValueError(f"unknown task {name!r}; expected ballistic, fiber or arm") from None
    return cls(**kw)
