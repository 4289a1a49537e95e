"""Mean-absolute-error objective, analytic gradients, and Adam training.

The objective is mean(|target - output|) over every value in a batch, plus
l2_weight * sum(w^2) over the weight matrices when configured. Training
splits the pairs 9:1 into train/validation by a seeded shuffle, runs
minibatch Adam, and returns the snapshot with the best validation MAE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..preprocess import Frame
from .config import AseConfig, TrainSpec
from .net import (
    AseModel,
    _init_params,
    add_l2_gradients,
    backward_batch,
    forward_batch,
    l2_penalty,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the 1-based epoch index."""

    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainResult:
    """Best-validation model plus the per-epoch loss history."""

    model: AseModel
    train_mae: list[float] = field(default_factory=list)
    val_mae: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mae: float = math.inf
    n_val: int = 0


def mae_loss(enhanced: Frame, target_hr: Frame) -> float:
    """Mean absolute difference over all values of two same-geometry frames."""
    if enhanced.values.shape != target_hr.values.shape:
        raise ValueError(
            f"frame geometries differ: {enhanced.values.shape} vs {target_hr.values.shape}"
        )
    return float(np.abs(target_hr.values - enhanced.values).mean())


def _mae_and_grad(output: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """MAE over a batch and d(MAE)/d(output); sign(0) contributes 0 (subgradient)."""
    residual = target - output
    loss = float(np.abs(residual).mean())
    d_out = -np.sign(residual) / residual.size
    return loss, d_out


def gradients(model: AseModel, lr_frame: Frame, target_hr: Frame) -> dict[str, np.ndarray]:
    """Analytic gradients of the regularized MAE objective for one pair."""
    x = lr_frame.values.reshape(1, -1)
    t = target_hr.values.reshape(1, -1)
    if t.shape[1] != model.config.out_len:
        raise ValueError(
            f"target has {t.shape[1]} values, model produces {model.config.out_len}"
        )
    cache: list = []
    y = forward_batch(model, x, cache=cache)
    _, d_out = _mae_and_grad(y, t)
    grads = backward_batch(model, cache, d_out)
    return add_l2_gradients(grads, model.params, model.config.l2_weight)


def objective(model: AseModel, lr_values: np.ndarray, hr_values: np.ndarray) -> float:
    """Regularized objective on flat (B, in_len)/(B, out_len) arrays."""
    y = forward_batch(model, lr_values)
    loss, _ = _mae_and_grad(y, hr_values)
    return loss + l2_penalty(model.params, model.config.l2_weight)


def _batch_mae(model: AseModel, X: np.ndarray, Y: np.ndarray) -> float:
    return float(np.abs(Y - forward_batch(model, X)).mean())


def train(pairs: list[tuple[Frame, Frame]], config: AseConfig, spec: TrainSpec) -> TrainResult:
    """Train an enhancer on (low-rate frame, full-rate frame) pairs.

    Deterministic given ``spec.seed``: the 9:1 split, weight init, batch
    order, and dropout masks all come from one seeded generator. Early
    stopping triggers after ``spec.patience`` epochs without a validation
    improvement; the returned model is the best-validation snapshot.
    """
    if len(pairs) < 10:
        raise ValueError(f"need at least 10 pairs to hold out a validation set, got {len(pairs)}")
    for lr_frame, hr_frame in pairs:
        if not (lr_frame.normalized and hr_frame.normalized):
            raise ValueError("all frames must be normalized before training")
        if lr_frame.n_values != config.in_len or hr_frame.n_values != config.out_len:
            raise ValueError(
                f"pair geometry ({lr_frame.n_values} -> {hr_frame.n_values}) does not match "
                f"config ({config.in_len} -> {config.out_len})"
            )

    rng = np.random.default_rng(spec.seed)
    X = np.stack([lr.values.reshape(-1) for lr, _ in pairs])
    Y = np.stack([hr.values.reshape(-1) for _, hr in pairs])

    n = len(pairs)
    n_val = spec.val_size(n)
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    X_tr, Y_tr = X[train_idx], Y[train_idx]
    X_val, Y_val = X[val_idx], Y[val_idx]

    params = _init_params(config, rng)
    model = AseModel(config=config, params=params)
    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    step = 0

    result = TrainResult(model=model, n_val=n_val)
    epochs_since_best = 0
    use_dropout = config.dropout_p > 0.0

    for epoch in range(1, spec.max_epochs + 1):
        order = rng.permutation(len(train_idx))
        for start in range(0, len(order), spec.batch_size):
            batch = order[start : start + spec.batch_size]
            cache: list = []
            y = forward_batch(
                model, X_tr[batch], dropout_rng=rng if use_dropout else None, cache=cache
            )
            loss, d_out = _mae_and_grad(y, Y_tr[batch])
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            grads = backward_batch(model, cache, d_out)
            add_l2_gradients(grads, params, config.l2_weight)
            step += 1
            bias1 = 1.0 - ADAM_BETA1**step
            bias2 = 1.0 - ADAM_BETA2**step
            for name, g in grads.items():
                adam_m[name] = ADAM_BETA1 * adam_m[name] + (1.0 - ADAM_BETA1) * g
                adam_v[name] = ADAM_BETA2 * adam_v[name] + (1.0 - ADAM_BETA2) * g * g
                m_hat = adam_m[name] / bias1
                v_hat = adam_v[name] / bias2
                params[name] -= spec.step_size * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

        train_mae = _batch_mae(model, X_tr, Y_tr)
        val_mae = _batch_mae(model, X_val, Y_val)
        if not (math.isfinite(train_mae) and math.isfinite(val_mae)):
            raise TrainingDivergedError(epoch)
        result.train_mae.append(train_mae)
        result.val_mae.append(val_mae)

        if val_mae < result.best_val_mae:
            result.best_val_mae = val_mae
            result.best_epoch = epoch
            result.model = AseModel(config=config, params={k: v.copy() for k, v in params.items()})
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= spec.patience:
                break

    return result
