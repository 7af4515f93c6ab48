"""Mini-batch training loop shared by pretraining, MTL and the MLP baseline."""
from __future__ import annotations

import csv
import logging
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .nn import AdamState, ModelParams, TrainingError, adam_step

log = logging.getLogger(__name__)


def batches(n: int, batch_size: int, rng=None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _split(out):
    """Loss functions return ``loss`` or ``(loss, {name: part})``."""
    loss, parts = out if isinstance(out, tuple) else (out, {})
    vals = {"loss": float(ad.value(loss))}
    vals.update({k: float(ad.value(v)) for k, v in parts.items()})
    return loss, vals


def gradient_step(params: ModelParams, opt: AdamState, loss_fn: Callable, batch) -> dict:
    tape = ad.Tape()
    p = params.bind(tape)
    loss, vals = _split(loss_fn(p, batch))
    if not all(np.isfinite(v) for v in vals.values()):
        raise TrainingError(f"loss became non-finite: {vals}")
    if isinstance(loss, ad.Var):
        grads = params.flatten_grads(ad.backward(tape, loss))
        params.flat[:] = adam_step(opt, params.flat, grads)
    return vals


def _accumulate(total: dict, vals: dict, n: int):
    for k, v in vals.items():
        total[k] = total.get(k, 0.0) + v * n


def evaluate(params: ModelParams, loss_fn: Callable, items: Sequence, batch_size: int) -> dict:
    """Size-weighted means of batch losses (and parts), no tape."""
    if not items:
        return {"loss": float("nan")}
    p = params.arrays()
    total: dict = {}
    for idx in batches(len(items), batch_size):
        _accumulate(total, _split(loss_fn(p, [items[i] for i in idx]))[1], len(idx))
    return {k: v / len(items) for k, v in total.items()}


def fit(params: ModelParams, loss_fn: Callable, train: Sequence, test: Sequence, *,
        epochs: int, batch_size: int, lr: float, rng, prepare_epoch=None,
        label="train") -> list[dict]:
    """Adam over shuffled mini-batches; returns one record per epoch.

    ``loss_fn(p, batch)`` returns a scalar (Var when ``p`` holds tape leaves).
    ``prepare_epoch(items, rng)`` may re-draw per-epoch randomness (e.g. blanks).
    """
    opt = AdamState(len(params), lr=lr)
    curve = []
    for epoch in range(1, epochs + 1):
        items = prepare_epoch(train, rng) if prepare_epoch else train
        total: dict = {}
        for idx in batches(len(items), batch_size, rng):
            batch = [items[i] for i in idx]
            _accumulate(total, gradient_step(params, opt, loss_fn, batch), len(batch))
        rec = {"epoch": epoch}
        for k, v in total.items():
            rec[f"train_{k}"] = v / max(len(items), 1)
        for k, v in evaluate(params, loss_fn, test, batch_size).items():
            rec[f"test_{k}"] = v
        log.info("%s epoch %d: train %.5f test %.5f", label, epoch,
                 rec["train_loss"], rec["test_loss"])
        curve.append(rec)
    return curve


def write_curve_csv(path, rows: list[dict], columns: Sequence[str]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v
