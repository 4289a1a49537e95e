"""Impact-defined windowing, dyadic downsampling, frame geometry, normalization.

The canonical frame is 3 axes x 256 samples (768 values); a frame produced at
downsample factor exponent ``alpha`` holds 3 x (256 / 2**alpha) values. The
pipeline order is: window the full-rate trial, downsample the windowed
segment, resample to frame geometry, then min-max normalize.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import Trial

FRAME_AXES = 3
FRAME_LEN = 256  # per-axis samples at full rate
MAX_ALPHA = 7

_FRAME_MAGIC = b"ASEF"
_FRAME_VERSION = 1


def _check_alpha(alpha: int) -> int:
    if not isinstance(alpha, (int, np.integer)) or not 0 <= alpha <= MAX_ALPHA:
        raise ValueError(f"alpha must be an integer in [0, {MAX_ALPHA}], got {alpha!r}")
    return int(alpha)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class DownsampleSpec:
    alpha: int
    rate_hr_hz: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.rate_hr_hz <= 0:
            raise ValueError("rate_hr_hz must be positive")

    @property
    def rate_lr_hz(self) -> float:
        return self.rate_hr_hz / 2**self.alpha


@dataclass(frozen=True)
class WindowSpec:
    """Impact-window spans in seconds: backward (pre-impact) and forward."""

    ws_backward_s: float
    ws_forward_s: float

    def __post_init__(self):
        if self.ws_backward_s <= 0 or self.ws_forward_s <= 0:
            raise ValueError("window spans must be positive")

    def length(self, rate_hz: float) -> int:
        """Total window length in samples at `rate_hz`, impact sample included."""
        return (
            _round_half_up(self.ws_backward_s * rate_hz)
            + 1
            + _round_half_up(self.ws_forward_s * rate_hz)
        )


@dataclass(frozen=True)
class Frame:
    """Fixed-geometry tri-axial window: values is a read-only (3, L) array.

    ``norm_params`` holds the (min, max) that produced normalized values;
    None means the frame is in physical units.
    """

    values: np.ndarray
    source_rate_hz: float
    norm_params: tuple[float, float] | None = None

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != FRAME_AXES:
            raise ValueError(f"frame values must be (3, L), got shape {arr.shape}")
        L = arr.shape[1]
        if L not in {FRAME_LEN >> a for a in range(MAX_ALPHA + 1)}:
            raise ValueError(f"per-axis length {L} is not {FRAME_LEN}/2**alpha for alpha in [0, 7]")
        if not np.all(np.isfinite(arr)):
            raise ValueError("frame contains non-finite values")
        if self.source_rate_hz <= 0:
            raise ValueError("source_rate_hz must be positive")
        if self.norm_params is not None:
            lo, hi = self.norm_params
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
                raise ValueError(f"bad norm_params {self.norm_params!r}")
            object.__setattr__(self, "norm_params", (float(lo), float(hi)))
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def per_axis_len(self) -> int:
        return self.values.shape[1]

    @property
    def n_values(self) -> int:
        return self.values.size

    @property
    def alpha(self) -> int:
        # L = 256 >> alpha  =>  alpha = 9 - bit_length(L)
        return 9 - int(self.per_axis_len).bit_length()

    @property
    def normalized(self) -> bool:
        return self.norm_params is not None


# ---------------------------------------------------------------------------
# Downsampling (keep the first of every 2**alpha samples)
# ---------------------------------------------------------------------------

def downsample_values(values: np.ndarray, alpha: int) -> np.ndarray:
    """Keep rows at 0-based indices 2**alpha * n; length floor((n-1)/2**alpha)+1."""
    alpha = _check_alpha(alpha)
    return values[:: 2**alpha]


def downsample(trial: Trial, alpha: int) -> Trial:
    alpha = _check_alpha(alpha)
    if alpha == 0:
        return trial
    return Trial(
        subject_id=trial.subject_id,
        activity_code=trial.activity_code,
        label=trial.label,
        rate_hz=trial.rate_hz / 2**alpha,
        samples=downsample_values(trial.samples, alpha),
    )


# ---------------------------------------------------------------------------
# Impact-defined window
# ---------------------------------------------------------------------------

def impact_index(samples: np.ndarray) -> int:
    """Index of the maximum tri-axial norm; ties break to the first occurrence."""
    norms = np.sqrt((samples**2).sum(axis=1))
    return int(np.argmax(norms))


def impact_window(trial: Trial, spec: WindowSpec) -> np.ndarray:
    """Fixed-length (n_w, 3) segment around the impact sample.

    The search area is the whole trial. Positions outside the trial are
    zero-padded, so the output length depends only on (rate, spec).
    """
    i = impact_index(trial.samples)
    rate = trial.rate_hz
    n_b = _round_half_up(spec.ws_backward_s * rate)
    n_f = _round_half_up(spec.ws_forward_s * rate)
    n = trial.n_samples
    out = np.zeros((n_b + 1 + n_f, 3))
    lo = i - n_b
    hi = i + n_f + 1  # exclusive
    src_lo, src_hi = max(lo, 0), min(hi, n)
    if src_lo < src_hi:
        out[src_lo - lo : src_hi - lo] = trial.samples[src_lo:src_hi]
    return out


# ---------------------------------------------------------------------------
# Frame construction and normalization
# ---------------------------------------------------------------------------

def resample_axis(values: np.ndarray, target_len: int) -> np.ndarray:
    """Linear resample of one axis to `target_len` points spanning the same range."""
    n = len(values)
    if n == target_len:
        return np.asarray(values, dtype=np.float64).copy()
    positions = np.linspace(0.0, n - 1, target_len)
    return np.interp(positions, np.arange(n), values)


def to_frame(window: np.ndarray, alpha: int, source_rate_hz: float) -> Frame:
    """Resample an (n, 3) window to the canonical 3 x (256 / 2**alpha) frame."""
    alpha = _check_alpha(alpha)
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[1] != 3 or window.shape[0] < 1:
        raise ValueError(f"window must be a non-empty (n, 3) array, got {window.shape}")
    L = FRAME_LEN >> alpha
    values = np.stack([resample_axis(window[:, k], L) for k in range(3)])
    return Frame(values=values, source_rate_hz=source_rate_hz)


def resample_frame(frame: Frame, per_axis_len: int = FRAME_LEN) -> Frame:
    """Linearly resample a frame's axes to a new length, keeping its metadata."""
    values = np.stack([resample_axis(frame.values[k], per_axis_len) for k in range(3)])
    return Frame(values=values, source_rate_hz=frame.source_rate_hz, norm_params=frame.norm_params)


def minmax_normalize(frame: Frame) -> Frame:
    """Scale all 3L values into [0, 1] by the global min/max, storing the params.

    A constant frame maps to all zeros (with the degenerate params stored).
    """
    if frame.normalized:
        raise ValueError("frame is already normalized")
    lo = float(frame.values.min())
    hi = float(frame.values.max())
    if hi == lo:
        values = np.zeros_like(frame.values)
    else:
        values = (frame.values - lo) / (hi - lo)
    return Frame(values=values, source_rate_hz=frame.source_rate_hz, norm_params=(lo, hi))


def denormalize(frame: Frame) -> Frame:
    """Invert min-max normalization using the frame's stored params."""
    if frame.norm_params is None:
        raise ValueError("frame has no stored norm_params")
    lo, hi = frame.norm_params
    values = frame.values * (hi - lo) + lo
    return Frame(values=values, source_rate_hz=frame.source_rate_hz, norm_params=None)


# ---------------------------------------------------------------------------
# Flat binary frame records
# ---------------------------------------------------------------------------

def frame_to_bytes(frame: Frame) -> bytes:
    """ASEF record: magic, version, alpha, L, rate (f32), 3L f32 values, optional min/max."""
    header = struct.pack(
        "<4sBBHf", _FRAME_MAGIC, _FRAME_VERSION, frame.alpha, frame.per_axis_len,
        frame.source_rate_hz,
    )
    body = frame.values.astype("<f4").tobytes()
    tail = b""
    if frame.norm_params is not None:
        tail = struct.pack("<ff", *frame.norm_params)
    return header + body + tail


def frame_from_bytes(blob: bytes) -> Frame:
    header_size = struct.calcsize("<4sBBHf")
    if len(blob) < header_size:
        raise ValueError("frame record truncated")
    magic, version, alpha, L, rate = struct.unpack("<4sBBHf", blob[:header_size])
    if magic != _FRAME_MAGIC:
        raise ValueError(f"bad frame magic {magic!r}")
    if version != _FRAME_VERSION:
        raise ValueError(f"unsupported frame version {version}")
    if L != FRAME_LEN >> alpha:
        raise ValueError(f"inconsistent geometry: alpha={alpha} but L={L}")
    n_body = 3 * L * 4
    rest = len(blob) - header_size
    if rest not in (n_body, n_body + 8):
        raise ValueError(f"frame record has {rest} payload bytes, expected {n_body} (+8)")
    values = np.frombuffer(blob, dtype="<f4", count=3 * L, offset=header_size)
    values = values.astype(np.float64).reshape(3, L)
    norm_params = None
    if rest == n_body + 8:
        lo, hi = struct.unpack_from("<ff", blob, header_size + n_body)
        norm_params = (float(lo), float(hi))
    return Frame(values=values, source_rate_hz=float(rate), norm_params=norm_params)


def save_frame(frame: Frame, path) -> None:
    Path(path).write_bytes(frame_to_bytes(frame))


def load_frame(path) -> Frame:
    return frame_from_bytes(Path(path).read_bytes())
