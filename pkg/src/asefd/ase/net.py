"""Forward pass and backpropagation for the enhancer network.

All tensors are float64 numpy arrays. Convolutions are 3x3, stride 1, zero
same-padding, computed via sliding windows + einsum; they carry no
activation. Dense layers use ReLU except the final output layer. Dropout
(training only) applies to the ReLU outputs of the encoder dense stack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..preprocess import Frame
from .config import AseConfig


@dataclass
class AseModel:
    """An AseConfig plus its parameter arrays, keyed by layer name.

    Treated as immutable once trained; forward passes never mutate it, so a
    model can be shared across threads.
    """

    config: AseConfig
    params: dict[str, np.ndarray]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())


def parameter_shapes(config: AseConfig) -> dict[str, tuple[int, ...]]:
    """Layer parameter shapes in declaration (serialization) order."""
    if config.channels < 1 or not config.encoder_dense_widths or config.out_len < 1:
        raise ValueError("config does not describe a realizable model")
    c = config.channels
    shapes: dict[str, tuple[int, ...]] = {
        "enc_conv1_w": (c, 1, 3, 3),
        "enc_conv1_b": (c,),
        "enc_conv2_w": (c, c, 3, 3),
        "enc_conv2_b": (c,),
    }
    prev = config.flatten_len
    for i, width in enumerate(config.encoder_dense_widths):
        shapes[f"enc_dense{i}_w"] = (prev, width)
        shapes[f"enc_dense{i}_b"] = (width,)
        prev = width
    shapes["dec_conv_w"] = (1, 1, 3, 3)
    shapes["dec_conv_b"] = (1,)
    shapes["dec_dense_w"] = (prev, config.out_len)
    shapes["dec_dense_b"] = (config.out_len,)
    return shapes


def _init_params(config: AseConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            limit = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-limit, limit, shape)
    return params


def init_model(config: AseConfig, seed: int = 0) -> AseModel:
    """Uniform fan-in-scaled weights, zero biases, deterministic per seed."""
    return AseModel(config=config, params=_init_params(config, np.random.default_rng(seed)))


# ---------------------------------------------------------------------------
# Layer primitives
# ---------------------------------------------------------------------------

def _conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded 3x3 convolution. x: (B, Cin, H, W) -> (B, Cout, H, W)."""
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(xp, (3, 3), axis=(2, 3))
    return np.einsum("bchwij,ocij->bohw", windows, w, optimize=True) + b[None, :, None, None]


def _conv2d_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(xp, (3, 3), axis=(2, 3))
    dw = np.einsum("bchwij,bohw->ocij", windows, dy, optimize=True)
    db = dy.sum(axis=(0, 2, 3))
    dyp = np.pad(dy, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dy_windows = sliding_window_view(dyp, (3, 3), axis=(2, 3))
    dx = np.einsum("bohwij,ocij->bchw", dy_windows, w[:, :, ::-1, ::-1], optimize=True)
    return dx, dw, db


def _dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def _dense_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


# ---------------------------------------------------------------------------
# Whole-network forward / backward
# ---------------------------------------------------------------------------

def forward_batch(
    model: AseModel,
    x_flat: np.ndarray,
    *,
    dropout_rng: np.random.Generator | None = None,
    cache: list | None = None,
) -> np.ndarray:
    """Run (B, in_len) inputs through the network; returns (B, out_len).

    Dropout fires only when a `dropout_rng` is passed and the config sets
    dropout_p > 0 (i.e. during training). With `cache` a list, the tensors
    needed for the backward pass are appended to it.
    """
    cfg = model.config
    p = model.params
    B = x_flat.shape[0]
    if x_flat.shape[1] != cfg.in_len:
        raise ValueError(f"input has {x_flat.shape[1]} values, model expects {cfg.in_len}")
    drop = cfg.dropout_p if dropout_rng is not None else 0.0

    def save(item):
        if cache is not None:
            cache.append(item)

    h = x_flat.reshape(B, 1, *cfg.input_grid)
    save(("conv", "enc_conv1", h))
    h = _conv2d(h, p["enc_conv1_w"], p["enc_conv1_b"])
    save(("conv", "enc_conv2", h))
    h = _conv2d(h, p["enc_conv2_w"], p["enc_conv2_b"])
    h = h.reshape(B, -1)

    for i in range(len(cfg.encoder_dense_widths)):
        name = f"enc_dense{i}"
        save(("dense", name, h))
        z = _dense(h, p[f"{name}_w"], p[f"{name}_b"])
        save(("relu", name, z))
        h = np.maximum(z, 0.0)
        if drop > 0.0:
            mask = (dropout_rng.random(h.shape) >= drop) / (1.0 - drop)
            save(("dropout", name, mask))
            h = h * mask

    h = h.reshape(B, 1, *cfg.decoder_grid)
    save(("conv", "dec_conv", h))
    h = _conv2d(h, p["dec_conv_w"], p["dec_conv_b"])
    h = h.reshape(B, -1)
    save(("dense", "dec_dense", h))
    return _dense(h, p["dec_dense_w"], p["dec_dense_b"])


def backward_batch(model: AseModel, cache: list, d_out: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the data loss w.r.t. every parameter, given d(loss)/d(output)."""
    p = model.params
    grads: dict[str, np.ndarray] = {}
    dy = d_out
    for kind, name, saved in reversed(cache):
        if kind == "dense":
            dy, dw, db = _dense_backward(saved, p[f"{name}_w"], dy)
            grads[f"{name}_w"] = dw
            grads[f"{name}_b"] = db
        elif kind == "relu":
            dy = dy * (saved > 0.0)
        elif kind == "dropout":
            dy = dy * saved
        elif kind == "conv":
            x = saved
            dy = dy.reshape(x.shape[0], -1, x.shape[2], x.shape[3])
            dx, dw, db = _conv2d_backward(x, p[f"{name}_w"], dy)
            grads[f"{name}_w"] = dw
            grads[f"{name}_b"] = db
            dy = dx
            if name == "dec_conv":
                dy = dy.reshape(x.shape[0], -1)
        else:  # pragma: no cover
            raise RuntimeError(f"unknown cache entry {kind!r}")
        if kind == "dense" and name == "enc_dense0":
            # entering the encoder convolution output: restore the grid shape
            B = dy.shape[0]
            cfg = model.config
            dy = dy.reshape(B, cfg.channels, *cfg.input_grid)
    return grads


def add_l2_gradients(grads: dict, params: dict, l2_weight: float) -> dict:
    """In-place: d/dw of l2_weight * sum(w^2) added for weight arrays (not biases)."""
    if l2_weight > 0.0:
        for name, value in params.items():
            if name.endswith("_w"):
                grads[name] = grads[name] + 2.0 * l2_weight * value
    return grads


def l2_penalty(params: dict, l2_weight: float) -> float:
    if l2_weight <= 0.0:
        return 0.0
    return l2_weight * float(sum((w**2).sum() for n, w in params.items() if n.endswith("_w")))


# ---------------------------------------------------------------------------
# Frame-level operations
# ---------------------------------------------------------------------------

def _check_frame_input(model: AseModel, lr_frame: Frame) -> None:
    if not lr_frame.normalized:
        raise ValueError("input frame must be normalized")
    if lr_frame.n_values != model.config.in_len:
        raise ValueError(
            f"frame geometry 3x{lr_frame.per_axis_len} ({lr_frame.n_values} values) does not "
            f"match the model input of {model.config.in_len} values (alpha={model.config.alpha})"
        )


def forward(model: AseModel, lr_frame: Frame) -> Frame:
    """Reconstruct a full-rate frame from a normalized low-rate frame.

    The result is 3 x 256, carries the input's norm params, and reports the
    reconstructed (full) rate. Inference never applies dropout.
    """
    _check_frame_input(model, lr_frame)
    y = forward_batch(model, lr_frame.values.reshape(1, -1))
    values = y.reshape(3, model.config.out_len // 3)
    return Frame(
        values=values,
        source_rate_hz=lr_frame.source_rate_hz * 2**model.config.alpha,
        norm_params=lr_frame.norm_params,
    )


def enhance(model: AseModel, lr_frame: Frame) -> Frame:
    """Alias for the inference forward pass; pure and repeatable."""
    return forward(model, lr_frame)
