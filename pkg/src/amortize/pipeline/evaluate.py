"""Evaluation against the true simulators, aggregation over runs and timing."""
from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..core import Sample, make_rng
from ..geometry import chamfer
from ..sim import ArmConfig, FiberConfig, arm_vertices, fiber_realize, sample_obstacle

_OBSTACLE_STREAM = 0x0B5

Method = Callable[[np.ndarray], np.ndarray]


@dataclass
class EvalReport:
    """Per-goal records of one or more runs.

    Each record has ``method``, ``run``, ``index``, ``wall_time``, ``error``
    and the task's metric columns (``metric_names``).
    """

    task: str
    metric_names: tuple[str, ...]
    records: list[dict] = field(default_factory=list)

    def runs(self) -> list:
        return sorted({r["run"] for r in self.records}, key=str)

    def merge(self, other: "EvalReport") -> "EvalReport":
        if other.task != self.task:
            raise ValueError("cannot merge reports of different tasks")
        return EvalReport(self.task, self.metric_names, self.records + other.records)

    @property
    def columns(self) -> list[str]:
        return ["method", "run", "index", *self.metric_names, "wall_time", "error"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, self.columns, lineterminator="\n")
        w.writeheader()
        for r in self.records:
            w.writerow({k: r.get(k, "") for k in self.columns})
        return buf.getvalue()

    def per_run(self, method: str | None = None) -> dict:
        """Metric summaries for each run: mean of each metric (NaNs skipped),
        plus ``successes`` on the arm task."""
        out = {}
        for run in self.runs():
            rows = [r for r in self.records if r["run"] == run and (method is None or r["method"] == method)]
            if not rows:
                continue
            d = {"n": len(rows), "errors": sum(1 for r in rows if r.get("error"))}
            for m in self.metric_names:
                vals = [r[m] for r in rows if isinstance(r.get(m), (int, float)) and not math.isnan(r[m])]
                d[m] = float(np.mean(vals)) if vals else float("nan")
            if "success" in self.metric_names:
                d["successes"] = int(sum(1 for r in rows if r.get("success") == 1))
                d["success_per_1000"] = 1000.0 * d["successes"] / len(rows)
            out[run] = d
        return out

    def aggregate(self) -> dict:
        """Mean and standard error across runs (not across goals) per method."""
        res = {}
        for method in sorted({r["method"] for r in self.records}):
            pr = self.per_run(method)
            keys = [k for k in next(iter(pr.values())) if k not in ("n", "errors")]
            agg = {"runs": len(pr), "goals_per_run": [v["n"] for v in pr.values()]}
            for k in keys:
                vals = [v[k] for v in pr.values() if not math.isnan(v[k])]
                mean = float(np.mean(vals)) if vals else float("nan")
                se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
                agg[k] = {"mean": mean, "stderr": se, "per_run": [v[k] for v in pr.values()]}
            res[method] = agg
        return res

    def to_json(self) -> str:
        return json.dumps({"task": self.task, "metrics": list(self.metric_names), "aggregate": self.aggregate()}, indent=2)


def _timed(method: Method, goal):
    t0 = time.perf_counter()
    try:
        out = method(goal)
        err = ""
    except Exception as exc:  # recorded per goal, never aborts the batch
        out, err = None, f"{type(exc).__name__}: {exc}"
    return out, time.perf_counter() - t0, err


def evaluate_path_method(
    method: Method,
    test: Sequence[Sample],
    method_id: str = "method",
    run=0,
    cfg: FiberConfig = FiberConfig(),
) -> EvalReport:
    """Chamfer distance between each goal and the simulated fibre of the
    method's nozzle path."""
    rep = EvalReport("fiber", ("chamfer",))
    for i, s in enumerate(test):
        design, dt, err = _timed(method, s.goal)
        val = float("nan")
        if not err:
            try:
                val = chamfer(s.goal, fiber_realize(design, cfg))
            except Exception as exc:
                err = f"{type(exc).__name__}: {exc}"
        rep.records.append({"method": method_id, "run": run, "index": i, "chamfer": val, "wall_time": dt, "error": err})
    return rep


def eval_obstacles(
    test: Sequence[Sample], seed: int = 0, cfg: ArmConfig = ArmConfig(), clear_of_sample: bool = False
) -> list[np.ndarray]:
    """Evaluation obstacles, one per test index, drawn from the sector.

    They may overlap the pose that produced the sample's target, so a
    method that just recalls that pose can fail. ``clear_of_sample``
    redraws until that pose is clear, which guarantees a feasible goal.
    """
    return [
        sample_obstacle(make_rng(seed, _OBSTACLE_STREAM, i), s.realization if clear_of_sample else None, cfg)[0]
        for i, s in enumerate(test)
    ]


def evaluate_robot_method(
    method: Method,
    test: Sequence[Sample],
    seed: int = 0,
    method_id: str = "method",
    run=0,
    cfg: ArmConfig = ArmConfig(),
    obstacles=None,
) -> EvalReport:
    """Obstacle avoidance and target distance on the true arm model.

    Obstacle centres come from :func:`eval_obstacles` unless given. A
    failure gets NaN in the ``distance`` column, so aggregates average the
    distance over successes only.
    """
    rep = EvalReport("arm", ("success", "distance"))
    if obstacles is None:
        obstacles = eval_obstacles(test, seed, cfg)
    tm = cfg.top_mid_index
    for i, (s, c) in enumerate(zip(test, obstacles)):
        target = s.goal[:2]
        goal = np.array([*target, *c, cfg.obstacle_radius])
        design, dt, err = _timed(method, goal)
        ok, dist = 0, float("nan")
        if not err:
            try:
                v = arm_vertices(np.asarray(design, dtype=np.float64), cfg)
                d = np.hypot(v[:, 0] - c[0], v[:, 1] - c[1])
                ok = int(np.all(d > cfg.obstacle_radius))
                miss = float(np.hypot(*(v[tm] - target)))
                dist = miss if ok else float("nan")
            except Exception as exc:
                err = f"{type(exc).__name__}: {exc}"
        rep.records.append(
            {"method": method_id, "run": run, "index": i, "success": ok, "distance": dist, "wall_time": dt, "error": err}
        )
    return rep


def time_inference(method: Method, goals: Sequence, repetitions: int = 5, warmup: bool = True) -> list[float]:
    """Median wall time per goal over ``repetitions`` calls."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    out = []
    for g in goals:
        if warmup:
            method(g)
        ts = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            method(g)
            ts.append(time.perf_counter() - t0)
        out.append(statistics.median(ts))
    return out
