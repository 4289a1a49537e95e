"""Enhancer architecture and training hyperparameter containers.

The architecture family is indexed by the downsample exponent alpha: two
3x3/stride-1 encoder convolutions with 5*(8 - alpha) output channels, an
encoder dense stack whose widths grow back to 768, one 3x3 decoder
convolution, and a final 768-wide dense layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

FRAME_VALUES = 768  # 3 axes x 256 samples
MAX_ALPHA = 7

CONV_KERNEL = 3
ENCODER_CONV_LAYERS = 2
DECODER_CONV_LAYERS = 1

# Encoder dense widths per alpha; the stack always ends at 768.
ENCODER_DENSE_WIDTHS: dict[int, tuple[int, ...]] = {
    0: (768, 768, 768, 768, 768),
    1: (384, 384, 384, 384, 768, 768),
    2: (192, 192, 192, 384, 768, 768),
    3: (96, 96, 96, 96, 192, 384, 768, 768),
    4: (48, 48, 48, 96, 192, 384, 768, 768),
    5: (24, 24, 48, 96, 192, 384, 768, 768),
    6: (12, 24, 48, 96, 192, 384, 768, 768),
    7: (12, 24, 48, 96, 192, 384, 768, 768),
}


def encoder_channels(alpha: int) -> int:
    """Encoder convolution output channels: 5 * (8 - alpha)."""
    return 5 * (8 - alpha)


@dataclass(frozen=True)
class AseConfig:
    """Shapes and regularization of one enhancer model.

    ``in_len`` / ``out_len`` are total value counts (3 axes flattened).
    Custom reduced geometries are allowed for testing; ``build_config``
    produces the standard per-alpha family.
    """

    alpha: int
    in_len: int
    channels: int
    encoder_dense_widths: tuple[int, ...]
    out_len: int = FRAME_VALUES
    l2_weight: float = 0.0
    dropout_p: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "encoder_dense_widths", tuple(self.encoder_dense_widths))
        if self.in_len < 0 or self.in_len % 3:
            raise ValueError(f"in_len must be a non-negative multiple of 3, got {self.in_len}")
        if self.channels < 0:
            raise ValueError("channels must be >= 0")
        if any(w <= 0 for w in self.encoder_dense_widths):
            raise ValueError("encoder dense widths must be positive")
        if self.out_len < 0:
            raise ValueError("out_len must be >= 0")
        if self.l2_weight < 0:
            raise ValueError("l2_weight must be >= 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")

    @property
    def input_grid(self) -> tuple[int, int]:
        """Convolution input layout: 3 rows (axes) x L columns."""
        return (3, self.in_len // 3)

    @property
    def decoder_grid(self) -> tuple[int, int]:
        """Layout of the last encoder output ahead of the decoder convolution.

        The standard family reshapes the 768-wide vector to 3 x 256; widths
        not divisible by 3 (reduced test models) fall back to a single row.
        """
        width = self.encoder_dense_widths[-1]
        if width % 3 == 0:
            return (3, width // 3)
        return (1, width)

    @property
    def flatten_len(self) -> int:
        return self.channels * self.in_len


def build_config(alpha: int, l2: float = 0.0, dropout: float = 0.0) -> AseConfig:
    """Standard architecture for downsample exponent alpha in [0, 7]."""
    if not isinstance(alpha, int) or not 0 <= alpha <= MAX_ALPHA:
        raise ValueError(f"alpha must be an integer in [0, {MAX_ALPHA}], got {alpha!r}")
    return AseConfig(
        alpha=alpha,
        in_len=FRAME_VALUES >> alpha,
        channels=encoder_channels(alpha),
        encoder_dense_widths=ENCODER_DENSE_WIDTHS[alpha],
        out_len=FRAME_VALUES,
        l2_weight=l2,
        dropout_p=dropout,
    )


@dataclass(frozen=True)
class TrainSpec:
    """Optimization settings; the 9:1 train/validation split is fixed."""

    max_epochs: int = 300
    batch_size: int = 32
    step_size: float = 1e-3
    patience: int = 20
    seed: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.max_epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("max_epochs, batch_size, and patience must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.val_fraction != 0.1:
            raise ValueError("val_fraction is fixed at 1/10")

    def val_size(self, n_pairs: int) -> int:
        return math.ceil(n_pairs * self.val_fraction)
