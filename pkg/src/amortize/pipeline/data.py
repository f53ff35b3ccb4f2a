"""Dataset generation for the three tasks."""
from __future__ import annotations

import numpy as np

from ..core import Dataset, make_rng, split_dataset
from ..sampling import generate_paths
from .config import DATA_DEFAULTS, worker_count
from .tasks import get_task


def gen_dataset(task: str, count: int, seed: int = 0, workers: int | None = None, split=None, **task_kw) -> Dataset:
    """Sample ``count`` designs, realize them and extract goals, then split.

    Sample ``i`` uses its own RNG stream, so the result does not depend on
    ``workers``. ``split`` defaults to the task's fractions.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    t = get_task(task, **task_kw)
    if workers is None:
        workers = worker_count()
    if task == "fiber":
        # the per-path sampler streams are keyed by (seed, i) inside generate_paths
        raw = generate_paths(
            count,
            n_points=t.n_points,
            iters_per_path=t.iters_per_path,
            l=t.length_scale,
            seed=seed,
            workers=workers,
        )
        samples = tuple(t.sample_from_path(p) for p in raw)
        meta = {
            "n_points": t.n_points,
            "iters_per_path": t.iters_per_path,
            "length_scale": t.length_scale,
            "lag": t.cfg.lag,
            "spacing": t.cfg.spacing,
        }
    else:
        samples = tuple(t.sample(make_rng(seed, i)) for i in range(count))
        meta = {}
    ds = Dataset(task, samples, seed, None, meta)
    fractions = DATA_DEFAULTS[task][1] if split is None else split
    return split_dataset(ds, fractions, seed)


def check_dataset(ds: Dataset) -> None:
    """Re-run the realization of every sample and compare bit for bit."""
    t = task_for(ds)
    for i, s in enumerate(ds.samples):
        if not np.array_equal(t.realize(s.design), s.realization):
            raise ValueError(f"sample {i}: stored realization does not match the simulator")


def task_for(ds: Dataset):
    """Task object matching the settings recorded in a dataset header."""
    if ds.task == "fiber" and "lag" in ds.meta:
        from ..sim import FiberConfig

        m = ds.meta
        return get_task(
            "fiber",
            cfg=FiberConfig(lag=float(m["lag"]), spacing=float(m["spacing"])),
            n_points=int(m.get("n_points", 200)),
            iters_per_path=int(m.get("iters_per_path", 200)),
            length_scale=float(m.get("length_scale", 0.1)),
        )
    return get_task(ds.task)
