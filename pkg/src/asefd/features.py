"""Six derived channels and the 54 statistical features used by the classifiers.

Channels: the three axis components plus the tri-axial Euclidean norm, the
absolute vertical component, and the horizontal-plane norm. Features: eight
one-dimensional statistics per channel (48) plus Pearson correlations for
the axis triple and the derived triple (6).

Conventions: standard deviation and variance use the sample (N-1) divisor;
kurtosis is m4/m2^2 and skewness m3/m2^1.5 on population moments; a
zero-variance channel gets kurtosis = skewness = 0 and correlation 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import Axis, Label
from .preprocess import Frame

CHANNEL_NAMES = ("ax", "ay", "az", "anorm", "averti", "ahorti")
STAT_NAMES = ("mean", "std", "var", "max", "min", "range", "kurtosis", "skewness")
CORR_PAIRS = (
    ("ax", "ay"),
    ("ax", "az"),
    ("ay", "az"),
    ("anorm", "averti"),
    ("anorm", "ahorti"),
    ("averti", "ahorti"),
)

FEATURE_NAMES: tuple[str, ...] = tuple(
    [f"{stat}_{ch}" for stat in STAT_NAMES for ch in CHANNEL_NAMES]
    + [f"corr_{a}_{b}" for a, b in CORR_PAIRS]
)
N_FEATURES = len(FEATURE_NAMES)  # 54


@dataclass(frozen=True)
class SixChannelFrame:
    """(6, N) array in channel order ax, ay, az, anorm, averti, ahorti (all in g)."""

    channels: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.channels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != 6 or arr.shape[1] < 1:
            raise ValueError(f"channels must be a non-empty (6, N) array, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("channels contain non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "channels", arr)

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


def derive_channels(frame: Frame, vertical_axis: Axis) -> SixChannelFrame:
    """Compute the norm / vertical / horizontal channels of a physical-unit frame."""
    if frame.normalized:
        raise ValueError("derive_channels expects a denormalized frame (physical units)")
    xyz = frame.values
    v = vertical_axis.value
    others = [k for k in range(3) if k != v]
    anorm = np.sqrt((xyz**2).sum(axis=0))
    averti = np.abs(xyz[v])
    ahorti = np.sqrt(xyz[others[0]] ** 2 + xyz[others[1]] ** 2)
    return SixChannelFrame(channels=np.vstack([xyz, anorm, averti, ahorti]))


def _channel_stats(x: np.ndarray) -> dict[str, float]:
    mean = float(x.mean())
    std = float(x.std(ddof=1))
    var = std * std  # kept exactly equal to std**2 by construction
    mx = float(x.max())
    mn = float(x.min())
    d = x - mean
    m2 = float((d**2).mean())
    if m2 > 0.0:
        kurtosis = float((d**4).mean()) / (m2 * m2)
        skewness = float((d**3).mean()) / m2**1.5
    else:
        kurtosis = 0.0
        skewness = 0.0
    return {
        "mean": mean,
        "std": std,
        "var": var,
        "max": mx,
        "min": mn,
        "range": mx - mn,
        "kurtosis": kurtosis,
        "skewness": skewness,
    }


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    denom = float(np.sqrt((da**2).sum()) * np.sqrt((db**2).sum()))
    if denom == 0.0:
        return 0.0
    return float((da * db).sum()) / denom


def extract(scf: SixChannelFrame) -> np.ndarray:
    """The 54 features of one frame, in FEATURE_NAMES order."""
    if scf.n_samples < 2:
        raise ValueError("feature extraction needs at least 2 samples per channel")
    by_name = dict(zip(CHANNEL_NAMES, scf.channels))
    stats = {ch: _channel_stats(by_name[ch]) for ch in CHANNEL_NAMES}
    out = [stats[ch][stat] for stat in STAT_NAMES for ch in CHANNEL_NAMES]
    out += [_pearson(by_name[a], by_name[b]) for a, b in CORR_PAIRS]
    vec = np.asarray(out, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        raise ValueError("non-finite feature value")
    return vec


def export_features_csv(path, rows: list[tuple[str, Label, np.ndarray]]) -> None:
    """Write a feature matrix: subject_id, label, then the 54 named columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "label", *FEATURE_NAMES])
        for subject_id, label, vec in rows:
            writer.writerow([subject_id, label.value, *[repr(float(v)) for v in vec]])


def load_features_csv(path) -> list[tuple[str, Label, np.ndarray]]:
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["subject_id", "label"] or tuple(header[2:]) != FEATURE_NAMES:
            raise ValueError(f"{path}: not a feature matrix (bad header)")
        for line in reader:
            rows.append((line[0], Label(line[1]), np.asarray([float(v) for v in line[2:]])))
    if not rows:
        raise ValueError(f"{path}: feature matrix is empty")
    return rows
