"""Domain types, the dataset container and deterministic splitting.

Every sample is stored as three float64 arrays (design, realization, goal);
the typed views below are built on demand by the task code.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

FORMAT_VERSION = 1
ROBOT_N_CTRL = 40
RATIO_MIN, RATIO_MAX = 0.8, 1.2


def as_points(path) -> np.ndarray:
    """Return the (n, 2) float64 point array behind a Path2D or array-like."""
    pts = path.points if isinstance(path, Path2D) else path
    return np.asarray(pts, dtype=np.float64)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Seeded PCG64 generator; ``stream`` selects an independent sub-stream.

    Sub-streams come from ``SeedSequence(seed, spawn_key=stream)`` so that
    sample ``i`` of a dataset can be generated without generating 0..i-1.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class Path2D:
    """Ordered polyline of n >= 2 finite 2-D points.

    Consecutive points may coincide (a lag-follower realization can stall);
    operations that divide by segment length reject that themselves.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError(f"Path2D needs shape (n>=2, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("Path2D coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    def has_coincident_neighbors(self, tol: float = 1e-12) -> bool:
        return bool(np.any(np.linalg.norm(np.diff(self.points, axis=0), axis=1) <= tol))


@dataclass(frozen=True)
class RobotDesign:
    stretch_ratios: np.ndarray

    def __post_init__(self):
        r = np.array(self.stretch_ratios, dtype=np.float64).reshape(-1)
        if r.shape[0] != ROBOT_N_CTRL:
            raise ValueError(f"RobotDesign needs {ROBOT_N_CTRL} ratios, got {r.shape[0]}")
        if not np.all(np.isfinite(r)) or np.any(r < RATIO_MIN) or np.any(r > RATIO_MAX):
            raise ValueError(f"stretch ratios must lie in [{RATIO_MIN}, {RATIO_MAX}]")
        r.setflags(write=False)
        object.__setattr__(self, "stretch_ratios", r)

    @property
    def left(self) -> np.ndarray:
        return self.stretch_ratios[: ROBOT_N_CTRL // 2]

    @property
    def right(self) -> np.ndarray:
        return self.stretch_ratios[ROBOT_N_CTRL // 2 :]


@dataclass(frozen=True)
class RobotRealization:
    vertices: np.ndarray
    top_mid_index: int

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError(f"vertices must have shape (m, 2), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        if not 0 <= self.top_mid_index < v.shape[0]:
            raise ValueError("top_mid_index out of range")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def top_mid(self) -> np.ndarray:
        return self.vertices[self.top_mid_index]


@dataclass(frozen=True)
class RobotGoal:
    target: np.ndarray
    obstacle_center: np.ndarray
    radius: float = 0.9

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("obstacle radius must be positive")
        object.__setattr__(self, "target", np.asarray(self.target, dtype=np.float64).reshape(2))
        object.__setattr__(self, "obstacle_center", np.asarray(self.obstacle_center, dtype=np.float64).reshape(2))

    def to_array(self) -> np.ndarray:
        return np.array([*self.target, *self.obstacle_center, self.radius])

    @classmethod
    def from_array(cls, a) -> "RobotGoal":
        a = np.asarray(a, dtype=np.float64)
        return cls(a[0:2], a[2:4], float(a[4]))


@dataclass(frozen=True)
class Sample:
    design: np.ndarray
    realization: np.ndarray
    goal: np.ndarray


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


@dataclass(frozen=True)
class Dataset:
    task: str
    samples: tuple[Sample, ...]
    seed: int
    split: Split | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def subset(self, which: str) -> list[Sample]:
        if self.split is None:
            raise ValueError("dataset has no split")
        return [self.samples[i] for i in getattr(self.split, which)]


def split_dataset(dataset: Dataset, fractions: Sequence[float], seed: int) -> Dataset:
    """Shuffle under ``seed`` and cut into train/val/test.

    Val and test sizes are floor-rounded; the remainder goes to train.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    fr = [float(f) for f in fractions]
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    perm = make_rng(seed, 0x5B1).permutation(n)
    n_val = int(math.floor(n * fr[1] + 1e-9))
    n_test = int(math.floor(n * fr[2] + 1e-9))
    n_train = n - n_val - n_test
    split = Split(
        train=perm[:n_train],
        val=perm[n_train : n_train + n_val],
        test=perm[n_train + n_val :],
    )
    return replace(dataset, split=split)


# -- NDJSON persistence -----------------------------------------------------

def _tolist(a: np.ndarray):
    return np.asarray(a, dtype=np.float64).tolist()


def save_dataset(dataset: Dataset, path) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "task": dataset.task,
        "seed": int(dataset.seed),
        "split": None
        if dataset.split is None
        else {k: getattr(dataset.split, k).tolist() for k in ("train", "val", "test")},
        "meta": dataset.meta,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for s in dataset.samples:
            row = {"design": _tolist(s.design), "realization": _tolist(s.realization), "goal": _tolist(s.goal)}
            fh.write(json.dumps(row) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported dataset format {header.get('format_version')}")
        samples = []
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            samples.append(
                Sample(
                    np.array(row["design"], dtype=np.float64),
                    np.array(row["realization"], dtype=np.float64),
                    np.array(row["goal"], dtype=np.float64),
                )
            )
    sp = header.get("split")
    split = None if sp is None else Split(*(np.array(sp[k], dtype=np.int64) for k in ("train", "val", "test")))
    return Dataset(header["task"], tuple(samples), int(header["seed"]), split, header.get("meta") or {})
