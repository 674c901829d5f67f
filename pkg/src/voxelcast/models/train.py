"""Minibatch Adam training on the render loss, with validation and checkpoints."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import adam_step
from ..metrics import dssim, mse_255
from .loss import LossWeights, render_loss
from .nvr import NeuralVoxelRenderer, NvrConfig

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "l1", "perceptual", "total", "val_mse", "val_dssim")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-4
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)
    val_limit: int = 64
    log_path: str | None = None
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")


@dataclass
class TrainResult:
    model: NeuralVoxelRenderer
    losses: list[float]
    log_rows: list[dict]
    best_val_mse: float = math.inf
    best_state: dict | None = None

    def best_model(self) -> NeuralVoxelRenderer:
        if self.best_state is None:
            return self.model
        model = NeuralVoxelRenderer(self.model.config, self.model.store.dtype)
        model.load_state_arrays(self.best_state)
        return model


def predict_arrays(model: NeuralVoxelRenderer, data, batch_size: int = 16) -> np.ndarray:
    outs = []
    for lo in range(0, len(data), batch_size):
        v, light, s, _ = data.batch(np.arange(lo, min(lo + batch_size, len(data))))
        outs.append(model.predict(v, light, s if model.config.plus else None, batch_size))
    return np.concatenate(outs)


def evaluate(model: NeuralVoxelRenderer, data, limit: int | None = None) -> tuple[float, float]:
    """Mean MSE (0-255) and mean DSSIM over (up to ``limit``) samples."""
    if limit is not None and len(data) > limit:
        data = data.subset(np.arange(limit))
    pred = predict_arrays(model, data)
    mses = [mse_255(p, t) for p, t in zip(pred, data.targets)]
    dss = [dssim(p, t) for p, t in zip(pred, data.targets)]
    return float(np.mean(mses)), float(np.mean(dss))


def train(data, config: NvrConfig, settings: TrainConfig | None = None, val=None,
          model: NeuralVoxelRenderer | None = None) -> TrainResult:
    """Run ``settings.steps`` Adam steps over shuffled epochs of ``data``.

    One log row is written at the end of every epoch (and after the last
    step) with the epoch-mean training loss terms and validation scores.
    """
    settings = settings or TrainConfig()
    if len(data) == 0:
        raise TrainingError("empty training set")
    model = model or NeuralVoxelRenderer(config)
    model.training = True
    rng = np.random.default_rng(settings.seed)
    n = len(data)
    bs = min(settings.batch_size, n)
    steps_per_epoch = max(1, n // bs)
    order = rng.permutation(n)
    pos = 0
    losses: list[float] = []
    rows: list[dict] = []
    running = {"l1": [], "perceptual": [], "total": []}
    result = TrainResult(model, losses, rows)

    writer = fh = None
    if settings.log_path:
        Path(settings.log_path).parent.mkdir(parents=True, exist_ok=True)
        fh = open(settings.log_path, "w", newline="", encoding="utf-8")
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
    try:
        for step in range(1, settings.steps + 1):
            if pos + bs > n:
                order = rng.permutation(n)
                pos = 0
            idx = np.sort(order[pos:pos + bs])
            pos += bs
            v, light, s, t = data.batch(idx)
            out = model.forward(v, light, s if config.plus else None)
            loss, parts = render_loss(out, t, settings.loss)
            if not math.isfinite(parts["total"]):
                raise TrainingError(f"non-finite loss at step {step}: {parts}")
            loss.backward()
            adam_step(model.store, settings.lr)
            losses.append(parts["total"])
            for k in running:
                running[k].append(parts[k])

            if step % steps_per_epoch == 0 or step == settings.steps:
                row = {"step": step, **{k: float(np.mean(vs)) for k, vs in running.items()}}
                running = {k: [] for k in running}
                if val is not None and len(val):
                    row["val_mse"], row["val_dssim"] = evaluate(model, val, settings.val_limit)
                    model.training = True
                    if row["val_mse"] < result.best_val_mse:
                        result.best_val_mse = row["val_mse"]
                        result.best_state = {k: a.copy() for k, a in model.state_arrays().items()}
                        if settings.checkpoint_path:
                            model.save(settings.checkpoint_path)
                else:
                    row["val_mse"] = row["val_dssim"] = float("nan")
                rows.append(row)
                log.info("step %d total %.4f val_mse %.2f", step, row["total"], row["val_mse"])
                if writer:
                    writer.writerow(row)
                    fh.flush()
    finally:
        if fh:
            fh.close()
    if settings.checkpoint_path and result.best_state is None:
        model.save(settings.checkpoint_path)
    return result
