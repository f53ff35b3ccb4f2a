"""Dense BFGS with a strong-Wolfe line search, and a central-difference oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class BfgsConfig:
    gradient_tolerance: float = 1e-7
    max_iterations: int = 1000
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search_steps: int = 25
    # one extra evaluation at the cubic-model minimiser when the Wolfe step
    # is far from it; makes quadratics terminate like exact line search
    refine_step: bool = True

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if not (self.gradient_tolerance > 0 and self.max_iterations > 0 and self.max_line_search_steps > 0):
            raise ValueError("tolerances and limits must be positive")


@dataclass
class BfgsResult:
    x_opt: np.ndarray
    f_opt: float
    grad_norm: float
    iterations: int
    termination: str  # "converged" | "max_iter" | "line_search_failed"
    f_evals: int

    @property
    def converged(self) -> bool:
        return self.termination == "converged"


class _Counted:
    def __init__(self, fun: Objective):
        self.fun = fun
        self.n = 0

    def __call__(self, x):
        self.n += 1
        f, g = self.fun(x)
        return float(f), np.asarray(g, dtype=np.float64)


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic through (a, fa, da), (b, fb, db), or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0 or not math.isfinite(disc):
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    t = b - (b - a) * (db + d2 - d1) / denom
    return t if math.isfinite(t) else None


def _quad_min(a, fa, da, b, fb):
    denom = 2.0 * (fb - fa - da * (b - a))
    if denom <= 0:
        return None
    return a - da * (b - a) ** 2 / denom


def strong_wolfe(fun, x, fx, gx, p, alpha0, cfg: BfgsConfig):
    """Bracketing/zoom line search (Nocedal & Wright, Alg. 3.5-3.6).

    Returns ``(alpha, f, g)`` or ``None`` when no strong-Wolfe point was found
    within ``cfg.max_line_search_steps`` evaluations.
    """
    d0 = float(gx @ p)
    c1, c2 = cfg.c1, cfg.c2
    budget = cfg.max_line_search_steps

    def phi(a):
        nonlocal budget
        budget -= 1
        f, g = fun(x + a * p)
        return f, g, float(g @ p)

    def wolfe(a, f, d):
        return f <= fx + c1 * a * d0 and abs(d) <= -c2 * d0

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while budget > 0:
            lo_, hi_ = min(lo, hi), max(lo, hi)
            width = hi_ - lo_
            a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            if a is None or not (lo_ + 0.1 * width <= a <= hi_ - 0.1 * width):
                a = 0.5 * (lo + hi)
            f, g, d = phi(a)
            if not math.isfinite(f) or f > fx + c1 * a * d0 or f >= f_lo:
                hi, f_hi, d_hi = a, f, d
            else:
                if abs(d) <= -c2 * d0:
                    return a, f, g, d
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, f, d
        return None

    a_prev, f_prev, d_prev = 0.0, fx, d0
    a = alpha0
    found = None
    first = True
    while budget > 0:
        f, g, d = phi(a)
        if not math.isfinite(f) or f > fx + c1 * a * d0 or (not first and f >= f_prev):
            found = zoom(a_prev, f_prev, d_prev, a, f if math.isfinite(f) else np.inf, d if math.isfinite(d) else 0.0)
            break
        if abs(d) <= -c2 * d0:
            found = (a, f, g, d)
            break
        if d >= 0:
            found = zoom(a, f, d, a_prev, f_prev, d_prev)
            break
        a_prev, f_prev, d_prev = a, f, d
        a = 2.0 * a
        first = False
    if found is None:
        return None
    a, f, g, d = found
    if cfg.refine_step and budget > 0:
        ac = _cubic_min(0.0, fx, d0, a, f, d)
        if ac is None:
            ac = _quad_min(0.0, fx, d0, a, f)
        if ac is not None and 0 < ac < 10 * a and abs(ac - a) > 1e-3 * a:
            f2, g2, dd2 = phi(ac)
            if math.isfinite(f2) and f2 < f and wolfe(ac, f2, dd2):
                return ac, f2, g2
    return a, f, g


def bfgs_minimize(objective: Objective, x0, config: BfgsConfig | None = None, callback=None) -> BfgsResult:
    """Minimise ``objective(x) -> (value, gradient)`` from ``x0``.

    Convergence is declared on the infinity norm of the gradient. The
    inverse-Hessian update is skipped, and the approximation reset to the
    identity, when ``s.y <= 1e-10 |s| |y|``.
    """
    cfg = config or BfgsConfig()
    fun = _Counted(objective)
    x = np.array(x0, dtype=np.float64).reshape(-1)
    f, g = fun(x)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise ValueError("objective is not finite at x0")
    n = x.size
    eye = np.eye(n)
    H = eye.copy()
    fresh = True
    k = 0
    termination = "max_iter"
    while True:
        gnorm = float(np.max(np.abs(g))) if n else 0.0
        if gnorm <= cfg.gradient_tolerance:
            termination = "converged"
            break
        if k >= cfg.max_iterations:
            break
        p = -H @ g
        if not g @ p < 0:
            H = eye.copy()
            fresh = True
            p = -g
        alpha0 = min(1.0, 1.0 / max(float(np.max(np.abs(p))), 1e-300)) if fresh else 1.0
        step = strong_wolfe(fun, x, f, g, p, alpha0, cfg)
        if step is None:
            termination = "line_search_failed"
            break
        alpha, f_new, g_new = step
        s = alpha * p
        y = g_new - g
        x = x + s
        f, g = f_new, g_new
        k += 1
        if callback is not None:
            callback(x, f, g)
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            Hy = H @ y
            H += (rho * rho * (sy + float(y @ Hy))) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
            fresh = False
        else:
            H = eye.copy()
            fresh = True
    gnorm = float(np.max(np.abs(g))) if n else 0.0
    return BfgsResult(x, f, gnorm, k, termination, fun.n)


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-6) -> np.ndarray:
    """Coordinate-wise central differences."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = np.empty(flat.size)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = float(f(x))
        flat[i] = old - h
        fm = float(f(x))
        flat[i] = old
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value near coordinate {i}")
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(x.shape)
