"""Task costs with analytic gradients.

Every function returns the value together with gradients with respect to
its differentiable arguments, as float64 arrays shaped like the inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_points
from .geometry import smooth_reg, smooth_reg_grad

PATH_LAMBDAS = (0.1, 0.3, 0.6, 1.0, 1.5)
DO_LAMBDAS = (1e-4, 3e-4, 6e-4, 1e-3)
ROBOT_LAMBDAS = (0.03, 0.05, 0.07, 0.09)


@dataclass(frozen=True)
class PathCostConfig:
    reg_weight: float = 0.3
    do_reg_weight: float = 6e-4
    n_quad: int = 256

    def __post_init__(self):
        if self.reg_weight < 0 or self.do_reg_weight < 0:
            raise ValueError("weights must be non-negative")


@dataclass(frozen=True)
class RobotCostConfig:
    barrier_weight: float = 0.5
    reg_weight: float = 0.05
    clearance: float = 0.1
    radius: float = 0.9

    def __post_init__(self):
        if min(self.barrier_weight, self.reg_weight, self.clearance, self.radius) < 0:
            raise ValueError("weights must be non-negative")


def path_cost(theta, u, g, reg_weight: float):
    """``|g - u|^2 + reg_weight * smooth_reg(theta)`` and its gradients in
    (theta, u)."""
    th, u, g = as_points(theta), as_points(u), as_points(g)
    if u.shape != g.shape:
        raise ValueError(f"g and u must have equal point counts, got {g.shape} vs {u.shape}")
    r = u - g
    val = float(np.sum(r * r))
    g_theta = np.zeros_like(th)
    if reg_weight:
        val += reg_weight * smooth_reg(th)
        g_theta = reg_weight * smooth_reg_grad(th)
    return val, g_theta, 2.0 * r


def _arc(pts):
    d = np.diff(pts, axis=0)
    ln = np.hypot(d[:, 0], d[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(ln)])
    return d, ln, cum


def do_distance(g, u, n_quad: int = 256):
    """Midpoint-rule value of the integral over x in [0, 1] of
    ``|f_g(x S_g) - f_u(x S_u)|^2`` and its gradient in u.

    The gradient includes the dependence of the arc-length positions on u
    (through the total length and the segment lengths).
    """
    g, u = as_points(g), as_points(u)
    if len(g) < 2 or len(u) < 2:
        raise ValueError("paths need at least two points")
    dg, lg, cg = _arc(g)
    du, lu, cu = _arc(u)
    Sg, Su = cg[-1], cu[-1]
    if Sg <= 0 or Su <= 0:
        raise ValueError("degenerate zero-length path")
    x = (np.arange(n_quad) + 0.5) / n_quad

    def locate(cum, ln, s):
        j = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(ln) - 1)
        return j, s - cum[j]

    jg, sig_g = locate(cg, lg, x * Sg)
    tg = np.divide(dg[jg], lg[jg, None], out=np.zeros_like(dg[jg]), where=lg[jg, None] > 0)
    fg = g[jg] + sig_g[:, None] * tg

    ju, sig = locate(cu, lu, x * Su)
    ok = lu[ju] > 0
    tau = np.divide(du[ju], lu[ju, None], out=np.zeros_like(du[ju]), where=ok[:, None])
    fu = u[ju] + sig[:, None] * tau
    r = fu - fg
    val = float(np.mean(np.sum(r * r, axis=1)))

    # f_u = u_j + sigma * tau_j, sigma = x S_u - cum_j
    G = 2.0 * r / n_quad
    beta = np.sum(G * tau, axis=1)
    grad_u = np.zeros_like(u)
    np.add.at(grad_u, ju, G)
    grad_d = np.zeros_like(du)
    # d tau_j / d d_j = (I - tau tau^T) / l_j
    inv_l = np.divide(1.0, lu[ju], out=np.zeros_like(sig), where=ok)
    proj = G - tau * beta[:, None]
    np.add.at(grad_d, ju, (sig * inv_l)[:, None] * proj)
    # sigma depends on every segment length through S_u and cum_j
    t_all = np.divide(du, lu[:, None], out=np.zeros_like(du), where=lu[:, None] > 0)
    coef = np.full(len(lu), np.sum(beta * x))
    before = np.bincount(ju, weights=beta, minlength=len(lu))
    # cum_j sums the lengths of segments k < j
    coef -= np.cumsum(before[::-1])[::-1] - before
    grad_d += coef[:, None] * t_all
    grad_u[1:] += grad_d
    grad_u[:-1] -= grad_d
    return val, grad_u


def do_reg(theta):
    """Squared half second differences divided by the path length, with gradient."""
    th = as_points(theta)
    if len(th) < 3:
        raise ValueError("do_reg needs at least three points")
    d, ln, cum = _arc(th)
    S = cum[-1]
    if S <= 0:
        raise ValueError("zero-length path")
    D = 0.5 * (d[1:] - d[:-1])
    Q = float(np.sum(D * D))
    val = Q / S
    gQ = np.zeros_like(th)
    gQ[2:] += D
    gQ[1:-1] -= 2.0 * D
    gQ[:-2] += D
    t = np.divide(d, ln[:, None], out=np.zeros_like(d), where=ln[:, None] > 0)
    gS = np.zeros_like(th)
    gS[1:] += t
    gS[:-1] -= t
    return val, gQ / S - (Q / (S * S)) * gS


def barrier(vertices, center, radius: float = 0.9, clearance: float = 0.1):
    """Mean squared penetration into the ``radius + clearance`` disc."""
    v = np.asarray(getattr(vertices, "vertices", vertices), dtype=np.float64)
    m = len(v)
    if m < 1:
        raise ValueError("need at least one vertex")
    diff = v - np.asarray(center, dtype=np.float64)
    dist = np.hypot(diff[:, 0], diff[:, 1])
    pen = np.maximum(radius + clearance - dist, 0.0)
    val = float(np.sum(pen * pen) / m)
    unit = np.divide(diff, dist[:, None], out=np.zeros_like(diff), where=dist[:, None] > 0)
    grad = (-2.0 / m) * pen[:, None] * unit
    return val, grad


def _robot_reg_mask(n: int) -> np.ndarray:
    # interior second differences, minus the two at the left/right seam
    mask = np.zeros(n, dtype=bool)
    mask[1 : n - 1] = True
    mask[n // 2 - 1] = False
    mask[n // 2] = False
    return mask


def robot_reg(theta):
    """Mean squared half second difference of the ratios, skipping the seam."""
    th = np.asarray(getattr(theta, "stretch_ratios", theta), dtype=np.float64)
    n = len(th)
    if n < 6:
        raise ValueError("robot_reg needs at least 6 ratios")
    D = np.zeros(n)
    D[1:-1] = 0.5 * (th[2:] - 2.0 * th[1:-1] + th[:-2])
    D[~_robot_reg_mask(n)] = 0.0
    val = float(np.sum(D * D) / (n - 4))
    g = np.zeros(n)
    c = 2.0 * D / (n - 4)
    g[2:] += 0.5 * c[1:-1]
    g[1:-1] -= c[1:-1]
    g[:-2] += 0.5 * c[1:-1]
    return val, g


def robot_cost(theta, vertices, goal, cfg: RobotCostConfig = RobotCostConfig(), top_mid_index: int = 61):
    """Half squared target miss + weighted barrier + weighted ratio regulariser.

    Returns ``(value, grad_theta, grad_vertices)``.
    """
    v = np.asarray(getattr(vertices, "vertices", vertices), dtype=np.float64)
    tm = getattr(vertices, "top_mid_index", top_mid_index)
    target = np.asarray(goal.target)
    miss = v[tm] - target
    val = 0.5 * float(miss @ miss)
    bval, bgrad = barrier(v, goal.obstacle_center, cfg.radius, cfg.clearance)
    rval, rgrad = robot_reg(theta)
    val += cfg.barrier_weight * bval + cfg.reg_weight * rval
    gv = cfg.barrier_weight * bgrad
    gv[tm] += miss
    return val, cfg.reg_weight * rgrad, gv
