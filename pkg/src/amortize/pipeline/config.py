"""Training configuration and desk-scale defaults."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace

# per task: (dataset size, split fractions)
DATA_DEFAULTS = {
    "ballistic": (4000, (0.8, 0.1, 0.1)),
    "fiber": (1000, (0.9, 0.05, 0.05)),
    "arm": (8000, (0.9, 0.05, 0.05)),
}

# per task: (epochs, lr decay per epoch, batch size, regulariser weight)
# Fiber and arm epochs are cut down from 10 and 200 so that a full
# three-seed comparison fits on one CPU core.
_TRAIN_DEFAULTS = {
    "ballistic": (300, 0.98, 32, 0.0),
    "fiber": (5, 0.95, 1, 0.3),
    "arm": (150, 0.98, 8, 0.05),
}


@dataclass(frozen=True)
class TrainConfig:
    task: str
    epochs: int
    lr: float = 1e-3
    lr_decay: float = 0.95
    batch_size: int = 1
    reg_weight: float = 0.0
    seed: int = 0
    hidden: tuple[int, ...] | None = None  # None keeps the task's default widths

    def __post_init__(self):
        if self.task not in _TRAIN_DEFAULTS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.reg_weight < 0:
            raise ValueError("reg_weight must be non-negative")
        if self.hidden is not None:
            hid = tuple(int(h) for h in self.hidden)
            if any(h <= 0 for h in hid):
                raise ValueError("hidden widths must be positive")
            object.__setattr__(self, "hidden", hid)

    @classmethod
    def default(cls, task: str, **overrides) -> "TrainConfig":
        if task not in _TRAIN_DEFAULTS:
            raise ValueError(f"unknown task {task!r}")
        epochs, decay, bs, reg = _TRAIN_DEFAULTS[task]
        base = cls(task=task, epochs=epochs, lr_decay=decay, batch_size=bs, reg_weight=reg)
        names = {f.name for f in fields(cls)}
        unknown = set(overrides) - names
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return replace(base, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = None if self.hidden is None else list(self.hidden)
        return d


def worker_count() -> int:
    """Worker cap from ``AMORTIZE_THREADS``, defaulting to the core count."""
    cores = os.cpu_count() or 1
    raw = os.environ.get("AMORTIZE_THREADS")
    if not raw:
        return cores
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"AMORTIZE_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)
