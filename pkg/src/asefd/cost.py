"""Forward-pass FLOP counts and the MCU power / battery / latency estimates.

Counting convention: 2 FLOPs per multiply-accumulate, 1 per bias add, 1 per
ReLU. The mapping coefficients (mA per MFLOP and cycles per FLOP) are
calibration constants fitted to the reference deployment figures; the
estimator accepts externally measured MFLOPs so published numbers can be
reproduced independently of our counting convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .ase import AseConfig, build_config

DEFAULT_CLOCK_HZ = 80e6
DEFAULT_BATTERY_MAH = 1000.0
DEFAULT_MA_PER_MFLOP = 1.283
DEFAULT_CYCLES_PER_FLOP = 7.0

UNBOUNDED = math.inf  # battery life at zero power draw


@dataclass(frozen=True)
class CostModel:
    clock_hz: float = DEFAULT_CLOCK_HZ
    battery_mah: float = DEFAULT_BATTERY_MAH
    ma_per_mflop: float = DEFAULT_MA_PER_MFLOP
    cycles_per_flop: float = DEFAULT_CYCLES_PER_FLOP

    def __post_init__(self):
        for name in ("clock_hz", "battery_mah", "ma_per_mflop", "cycles_per_flop"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CostEstimate:
    power_ma: float
    battery_life_h: float  # UNBOUNDED (inf) at zero power
    response_time_s: float


def dense_flops(n_in: int, n_out: int, relu: bool = False) -> int:
    """2 FLOPs per MAC plus one bias add per output, plus optional ReLU."""
    return 2 * n_in * n_out + n_out + (n_out if relu else 0)


def conv_flops(cells: int, c_in: int, c_out: int, kernel: int = 9) -> int:
    """Same-padded convolution over `cells` spatial positions, bias included."""
    return 2 * cells * c_out * c_in * kernel + cells * c_out


def count_flops(config: AseConfig) -> float:
    """MFLOPs of one forward pass; layers absent from the config count zero."""
    flops = 0
    prev = config.in_len
    if config.channels > 0:
        flops += conv_flops(config.in_len, 1, config.channels)
        flops += conv_flops(config.in_len, config.channels, config.channels)
        prev = config.flatten_len
    for width in config.encoder_dense_widths:
        flops += dense_flops(prev, width, relu=True)
        prev = width
    if config.out_len > 0 and config.encoder_dense_widths:
        grid = config.encoder_dense_widths[-1]
        flops += conv_flops(grid, 1, 1)
        flops += dense_flops(grid, config.out_len, relu=False)
    return flops / 1e6


def estimate(cost_model: CostModel, mflops: float) -> CostEstimate:
    """Power draw, battery life, and response time for a given workload."""
    if mflops < 0:
        raise ValueError("mflops must be >= 0")
    power = cost_model.ma_per_mflop * mflops
    battery = UNBOUNDED if power == 0.0 else cost_model.battery_mah / power
    response = mflops * 1e6 * cost_model.cycles_per_flop / cost_model.clock_hz
    return CostEstimate(power_ma=power, battery_life_h=battery, response_time_s=response)


def cost_table(
    cost_model: CostModel,
    hr_rate_hz: float = 200.0,
    mflops_override: list[float] | None = None,
) -> list[dict]:
    """Per-alpha cost rows for the standard architecture family.

    With `mflops_override` (one value per alpha, highest rate first), a second
    row group is emitted using the supplied counts instead of ours.
    """
    rows = []
    for alpha in range(8):
        counted = count_flops(build_config(alpha))
        est = estimate(cost_model, counted)
        rows.append(
            {
                "alpha": alpha,
                "rate_hz": hr_rate_hz / 2**alpha,
                "source": "counted",
                "mflops": counted,
                "power_ma": est.power_ma,
                "battery_life_h": est.battery_life_h,
                "response_time_s": est.response_time_s,
            }
        )
    if mflops_override is not None:
        if len(mflops_override) > 8:
            raise ValueError("at most 8 override values (one per alpha)")
        for alpha, given in enumerate(mflops_override):
            est = estimate(cost_model, given)
            rows.append(
                {
                    "alpha": alpha,
                    "rate_hz": hr_rate_hz / 2**alpha,
                    "source": "supplied",
                    "mflops": given,
                    "power_ma": est.power_ma,
                    "battery_life_h": est.battery_life_h,
                    "response_time_s": est.response_time_s,
                }
            )
    return rows
