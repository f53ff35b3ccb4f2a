"""The three training procedures: surrogate, encoder through the frozen
surrogate, and supervised goal-to-design regression."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..core import Dataset, make_rng
from ..nn import AdamState, Mlp, adam_step, init_params
from .config import TrainConfig
from .data import task_for
from .tasks import check_model

log = logging.getLogger(__name__)

_VAL_STREAM = 0x7A1
_EPOCH_STREAM = 0xE90


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainResult:
    model: Mlp
    history: list[dict] = field(default_factory=list)  # one row per epoch

    def losses_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,lr"]
        for h in self.history:
            lines.append(f"{h['epoch']},{h['train_loss']!r},{h['val_loss']!r},{h['lr']!r}")
        return "\n".join(lines) + "\n"


def _subsets(data: Dataset):
    if data.split is None:
        raise ValueError("dataset has no train/val/test split")
    train = data.subset("train")
    if not train:
        raise ValueError("train split is empty")
    return train, data.subset("val")


def _eval(loss_fn, model, samples, chunk, seed):
    if not samples:
        return float("nan")
    rng = make_rng(seed, _VAL_STREAM)
    tot = 0.0
    for b in range(0, len(samples), chunk):
        batch = samples[b : b + chunk]
        loss, _ = loss_fn(model, batch, rng, False)
        tot += loss * len(batch)
    return tot / len(samples)


def _fit(model: Mlp, loss_fn, train, val, cfg: TrainConfig, what: str) -> TrainResult:
    """Adam over shuffled mini-batches; ``loss_fn(model, batch, rng, need_grad)``."""
    state = AdamState.for_params(model, lr=cfg.lr)
    history = []
    val_chunk = max(cfg.batch_size, 256 if cfg.task != "fiber" else 1)
    for epoch in range(cfg.epochs):
        rng = make_rng(cfg.seed, _EPOCH_STREAM, epoch)
        order = rng.permutation(len(train))
        tot, cnt = 0.0, 0
        for step, b in enumerate(range(0, len(train), cfg.batch_size)):
            batch = [train[i] for i in order[b : b + cfg.batch_size]]
            loss, grads = loss_fn(model, batch, rng, True)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(a)) for a in grads.arrays()):
                raise TrainingDiverged(
                    f"{what}: non-finite loss/gradient at epoch {epoch + 1}, step {step}, lr {state.lr:.3g} "
                    f"(last finite epoch mean {tot / max(cnt, 1):.6g})"
                )
            adam_step(model, grads, state)
            tot += loss * len(batch)
            cnt += len(batch)
        val_loss = _eval(loss_fn, model, val, val_chunk, cfg.seed)
        history.append({"epoch": epoch + 1, "train_loss": tot / cnt, "val_loss": val_loss, "lr": state.lr})
        log.info("%s epoch %d train %.6g val %.6g", what, epoch + 1, tot / cnt, val_loss)
        state.lr *= cfg.lr_decay
    return TrainResult(model, history)


def train_decoder(data: Dataset, cfg: TrainConfig, task=None) -> TrainResult:
    """Fit the realization surrogate by mean squared error.

    ``task`` overrides the task object built from the dataset header.
    """
    task = task or task_for(data)
    train, val = _subsets(data)
    model = init_params(task.decoder_spec(cfg.hidden), cfg.seed)
    if hasattr(task, "decoder_units"):
        train = task.decoder_units(train, cfg.seed)

    def loss_fn(m, batch, rng, need_grad):
        return task.decoder_loss(m, batch, rng, need_grad)

    return _fit(model, loss_fn, train, val, cfg, f"{data.task} decoder")


def train_encoder(data: Dataset, decoder: Mlp, cfg: TrainConfig, task=None) -> TrainResult:
    """Fit goal -> design by minimising the task cost through a frozen decoder.

    ``cfg.hidden == ()`` gives a linear encoder.
    """
    task = task or task_for(data)
    ref = task.decoder_spec()
    check_model(decoder, ref.layer_sizes[0], ref.layer_sizes[-1], "decoder")
    train, val = _subsets(data)
    if hasattr(task, "path_units"):
        train = task.path_units(train, cfg.seed)
    model = init_params(task.encoder_spec(cfg.hidden), cfg.seed)
    before = decoder.fingerprint()

    def loss_fn(m, batch, rng, need_grad):
        return task.encoder_loss(m, decoder, batch, cfg.reg_weight, rng, need_grad)

    res = _fit(model, loss_fn, train, val, cfg, f"{data.task} encoder")
    if decoder.fingerprint() != before:
        raise RuntimeError("decoder parameters changed during encoder training")
    return res


def train_direct_learning(data: Dataset, cfg: TrainConfig, task=None) -> TrainResult:
    """Supervised goal -> design regression plus the design regulariser."""
    task = task or task_for(data)
    train, val = _subsets(data)
    if hasattr(task, "path_units"):
        train = task.path_units(train, cfg.seed)
    model = init_params(task.encoder_spec(cfg.hidden), cfg.seed)

    def loss_fn(m, batch, rng, need_grad):
        return task.direct_loss(m, batch, cfg.reg_weight, rng, need_grad)

    return _fit(model, loss_fn, train, val, cfg, f"{data.task} direct-learning")
