"""Trial loading, synthetic trial generation, and leave-one-subject-out partitioning.

Trials come from three places: CSV files on disk (real recordings), a seeded
synthetic generator (desk-scale tests without external downloads), or a JSON
manifest that lists CSV files together with dataset-level settings.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

# Sanity bound on |acceleration|, comfortably above the +/-8 g and +/-16 g
# sensor ranges of the supported datasets.
MAX_ABS_G = 32.0

DEFAULT_SCHEMA = {"t": "t", "ax": "ax", "ay": "ay", "az": "az"}


class Label(Enum):
    FALL = "FALL"
    ADL = "ADL"


class Axis(Enum):
    X = 0
    Y = 1
    Z = 2


class DatasetName(Enum):
    SISFALL = "SISFALL"
    FALLALLD = "FALLALLD"
    SYNTHETIC = "SYNTHETIC"


class SynthKind(Enum):
    FALL_LIKE = "FALL_LIKE"
    ADL_WALK = "ADL_WALK"
    ADL_STILL = "ADL_STILL"


# Activity-code prefix -> label. Dataset code schemes differ, so this is
# configuration with a permissive default.
DEFAULT_CODE_MAP: dict[str, Label] = {"F": Label.FALL, "A": Label.ADL, "D": Label.ADL}

# Per-dataset defaults: vertical axis and impact-window spans (seconds).
DATASET_DEFAULTS: dict[DatasetName, dict] = {
    DatasetName.SISFALL: dict(vertical_axis=Axis.Z, window_backward_s=1.44, window_forward_s=2.0),
    DatasetName.FALLALLD: dict(vertical_axis=Axis.Y, window_backward_s=1.23, window_forward_s=2.0),
    DatasetName.SYNTHETIC: dict(vertical_axis=Axis.Z, window_backward_s=1.44, window_forward_s=2.0),
}


class EmptyTrialFileError(ValueError):
    """Trial CSV had a header but no data rows (or no content at all)."""


class MalformedRowError(ValueError):
    """A data row could not be parsed as numbers."""

    def __init__(self, path, row_number: int, detail: str):
        super().__init__(f"{path}: data row {row_number}: {detail}")
        self.path = path
        self.row_number = row_number


class UnknownActivityCodeError(ValueError):
    """Activity code does not match any prefix in the code map."""


class SingleSubjectError(ValueError):
    """LOSO partitioning needs at least two distinct subjects."""


@dataclass(frozen=True)
class Sample:
    """One tri-axial accelerometer reading, in g."""

    ax: float
    ay: float
    az: float


@dataclass(frozen=True)
class AdcSpec:
    """Raw-count conversion: value -> (2 * range_g / 2**resolution_bits) * value."""

    range_g: float
    resolution_bits: int

    def __post_init__(self):
        if not 8 <= self.resolution_bits <= 16:
            raise ValueError(f"resolution_bits must be in [8, 16], got {self.resolution_bits}")
        if self.range_g <= 0:
            raise ValueError("range_g must be positive")

    @property
    def scale(self) -> float:
        return 2.0 * self.range_g / 2.0**self.resolution_bits


@dataclass(frozen=True)
class Trial:
    """One labeled recording: samples are an (n, 3) float array in g."""

    subject_id: str
    activity_code: str
    label: Label
    rate_hz: float
    samples: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.samples, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
            raise ValueError(f"samples must be a non-empty (n, 3) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples contain non-finite values")
        if np.abs(arr).max() > MAX_ABS_G:
            raise ValueError(f"|acceleration| exceeds the {MAX_ABS_G} g sanity bound")
        if not self.rate_hz > 0:
            raise ValueError("rate_hz must be positive")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def norms(self) -> np.ndarray:
        """Per-sample Euclidean norm of the three components."""
        return np.sqrt((self.samples**2).sum(axis=1))


@dataclass(frozen=True)
class DatasetManifest:
    """A set of trials plus the dataset-level settings the pipeline needs."""

    dataset_name: DatasetName
    trials: tuple[Trial, ...]
    vertical_axis: Axis
    window_backward_s: float
    window_forward_s: float

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))
        if self.window_backward_s <= 0 or self.window_forward_s <= 0:
            raise ValueError("window sizes must be positive")

    @property
    def subject_ids(self) -> tuple[str, ...]:
        return tuple(sorted({t.subject_id for t in self.trials}))


@dataclass(frozen=True)
class LosoFold:
    test_subject: str
    train_trials: tuple[Trial, ...]
    test_trials: tuple[Trial, ...]


def make_manifest(dataset_name: DatasetName, trials, **overrides) -> DatasetManifest:
    """Build a manifest with per-dataset defaults, overridable field by field."""
    settings = dict(DATASET_DEFAULTS[dataset_name])
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return DatasetManifest(dataset_name=dataset_name, trials=tuple(trials), **settings)


def label_for_code(activity_code: str, code_map: dict[str, Label] | None = None) -> Label:
    code_map = DEFAULT_CODE_MAP if code_map is None else code_map
    if activity_code and activity_code[0].upper() in code_map:
        return code_map[activity_code[0].upper()]
    raise UnknownActivityCodeError(
        f"activity code {activity_code!r} matches no prefix in {sorted(code_map)}"
    )


def _parse_stem(stem: str) -> tuple[str, str]:
    """'F14_SA01_R01' -> (activity 'F14', subject 'SA01'); bare stems map to themselves."""
    parts = stem.split("_")
    activity = parts[0]
    subject = parts[1] if len(parts) > 1 else stem
    return activity, subject


def load_trial_csv(
    path,
    schema: dict[str, str] | None = None,
    adc_spec: AdcSpec | None = None,
    *,
    rate_hz: float | None = None,
    subject_id: str | None = None,
    activity_code: str | None = None,
    code_map: dict[str, Label] | None = None,
) -> Trial:
    """Load one trial from a header CSV.

    `schema` maps the roles "ax"/"ay"/"az" (and optionally "t") to column
    names. With `adc_spec`, raw counts are converted to g. The sampling rate
    is taken from `rate_hz` or, failing that, inferred from the "t" column.
    Subject and activity default to the filename stem ("ACT_SUBJ_...").
    """
    path = Path(path)
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    stem_activity, stem_subject = _parse_stem(path.stem)
    activity_code = activity_code or stem_activity
    subject_id = subject_id or stem_subject
    label = label_for_code(activity_code, code_map)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyTrialFileError(f"{path}: file is empty")
        for role in ("ax", "ay", "az"):
            col = schema.get(role)
            if col is None or col not in reader.fieldnames:
                raise ValueError(f"{path}: schema column {col!r} for {role!r} not in header")
        t_col = schema.get("t") if schema.get("t") in reader.fieldnames else None

        rows: list[tuple[float, float, float]] = []
        times: list[float] = []
        for i, row in enumerate(reader, start=1):
            try:
                rows.append(
                    (float(row[schema["ax"]]), float(row[schema["ay"]]), float(row[schema["az"]]))
                )
                if t_col is not None:
                    times.append(float(row[t_col]))
            except (TypeError, ValueError, KeyError) as exc:
                raise MalformedRowError(path, i, f"non-numeric or missing value ({exc})") from None

    if not rows:
        raise EmptyTrialFileError(f"{path}: no data rows")

    samples = np.asarray(rows, dtype=np.float64)
    if adc_spec is not None:
        samples = samples * adc_spec.scale

    if rate_hz is None:
        if len(times) >= 2:
            dt = float(np.median(np.diff(times)))
            if dt <= 0:
                raise ValueError(f"{path}: cannot infer rate, time column is not increasing")
            rate_hz = 1.0 / dt
        else:
            raise ValueError(f"{path}: rate_hz not given and no usable time column")

    return Trial(
        subject_id=subject_id,
        activity_code=activity_code,
        label=label,
        rate_hz=float(rate_hz),
        samples=samples,
    )


# ---------------------------------------------------------------------------
# Synthetic trials
# ---------------------------------------------------------------------------

def synth_trial(
    kind: SynthKind,
    seed: int,
    rate_hz: float,
    duration_s: float,
    *,
    gait_hz: float | None = None,
    impact_g: float | None = None,
    noise_g: float | None = None,
    subject_id: str = "SYN",
    activity_code: str | None = None,
) -> Trial:
    """Generate a deterministic synthetic trial.

    FALL_LIKE: ~1 g baseline, free-fall dip toward 0 g, a single interior
    impact spike of norm >= 3.5 g, damped vibration, then low-noise rest in a
    lying orientation. ADL_WALK: periodic 1-2 Hz gait. ADL_STILL: 1 g plus
    bounded noise (norm stays well under 1.5 g). Noise is uniform, so the
    stated amplitude bounds are hard bounds.
    """
    if rate_hz <= 0:
        raise ValueError("rate_hz must be positive")
    if duration_s < 4.0:
        raise ValueError("duration_s must be >= 4 s (must exceed the largest window)")
    rng = np.random.default_rng(seed)
    n = int(round(rate_hz * duration_s))
    t = np.arange(n) / rate_hz
    out = np.zeros((n, 3))

    if kind is SynthKind.ADL_STILL:
        amp = 0.02 if noise_g is None else min(noise_g, 0.1)
        out[:, 0] = rng.uniform(-amp, amp, n)
        out[:, 1] = rng.uniform(-amp, amp, n)
        out[:, 2] = 1.0 + rng.uniform(-amp, amp, n)
        code = activity_code or "A01"
    elif kind is SynthKind.ADL_WALK:
        f = gait_hz if gait_hz is not None else rng.uniform(1.0, 2.0)
        amp = 0.04 if noise_g is None else min(noise_g, 0.1)
        ph = rng.uniform(0, 2 * np.pi, 3)
        out[:, 0] = 0.18 * np.sin(2 * np.pi * f * t + ph[0]) + rng.uniform(-amp, amp, n)
        out[:, 1] = 0.12 * np.sin(2 * np.pi * f * t + ph[1]) + rng.uniform(-amp, amp, n)
        out[:, 2] = (
            1.0
            + 0.25 * np.sin(2 * np.pi * f * t)
            + 0.08 * np.sin(4 * np.pi * f * t + ph[2])
            + rng.uniform(-amp, amp, n)
        )
        code = activity_code or "D01"
    elif kind is SynthKind.FALL_LIKE:
        spike = impact_g if impact_g is not None else rng.uniform(3.5, 6.0)
        spike = float(np.clip(spike, 3.5, 8.0))
        amp = 0.03 if noise_g is None else min(noise_g, 0.1)
        i_imp = int(round(n * rng.uniform(0.45, 0.65)))
        i_ff = max(1, i_imp - int(round(0.35 * rate_hz)))
        i_vib_end = min(n - 1, i_imp + int(round(0.5 * rate_hz)))

        # upright baseline with a little sway
        out[:, 0] = rng.uniform(-0.05, 0.05, n)
        out[:, 1] = rng.uniform(-0.05, 0.05, n)
        out[:, 2] = 1.0 + 0.05 * np.sin(2 * np.pi * 1.2 * t) + rng.uniform(-amp, amp, n)

        # free-fall: vertical component ramps toward 0 g
        ramp = np.linspace(1.0, 0.05, i_imp - i_ff, endpoint=False)
        out[i_ff:i_imp, 2] = ramp + rng.uniform(-amp, amp, i_imp - i_ff)
        out[i_ff:i_imp, 0] *= 0.5
        out[i_ff:i_imp, 1] *= 0.5

        # lying orientation after the fall: gravity mostly on x
        post = np.array([0.95, 0.15, 0.20])
        rest = slice(i_imp + 3, n)
        n_rest = n - (i_imp + 3)
        out[rest] = post + rng.uniform(-0.01, 0.01, (n_rest, 3))

        # damped vibration right after the impact
        vib = slice(i_imp + 3, i_vib_end)
        n_vib = max(0, i_vib_end - (i_imp + 3))
        if n_vib:
            env = np.linspace(0.8, 0.0, n_vib)
            osc = np.sin(2 * np.pi * 18.0 * t[:n_vib])
            out[vib] += (env * osc)[:, None] * np.array([0.3, 0.2, 0.3])

        # the spike itself: unit direction scaled so the norm is exactly `spike`
        d = np.array([0.5, 0.33, 0.8])
        d /= np.sqrt((d**2).sum())
        for off, scale in ((-2, 0.25), (-1, 0.55), (1, 0.55), (2, 0.25)):
            j = i_imp + off
            if 0 <= j < n:
                out[j] = scale * spike * d
        out[i_imp] = spike * d
        code = activity_code or "F01"
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown synth kind {kind!r}")

    return Trial(
        subject_id=subject_id,
        activity_code=code,
        label=label_for_code(code),
        rate_hz=float(rate_hz),
        samples=out,
    )


def make_synth_manifest(
    n_subjects: int,
    trials_per_subject: int,
    seed: int = 0,
    *,
    rate_hz: float = 200.0,
    duration_s: float = 8.0,
) -> DatasetManifest:
    """Deterministic multi-subject synthetic dataset (half falls, half ADLs).

    Each subject gets its own gait frequency, impact amplitude, and noise
    level so LOSO folds see genuine subject-to-subject variation.
    """
    if n_subjects < 1 or trials_per_subject < 1:
        raise ValueError("n_subjects and trials_per_subject must be >= 1")
    trials = []
    for si in range(n_subjects):
        traits_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(si,)))
        gait = 1.0 + 0.9 * traits_rng.random()
        impact = traits_rng.uniform(3.6, 5.5)
        noise = traits_rng.uniform(0.015, 0.05)
        subject = f"S{si + 1:02d}"
        for ti in range(trials_per_subject):
            trial_seed = int(
                np.random.SeedSequence(seed, spawn_key=(si, ti)).generate_state(1)[0]
            )
            slot = ti % 4
            if slot in (0, 2):
                kind, code = SynthKind.FALL_LIKE, f"F{ti:02d}"
            elif slot == 1:
                kind, code = SynthKind.ADL_WALK, f"D{ti:02d}"
            else:
                kind, code = SynthKind.ADL_STILL, f"A{ti:02d}"
            trials.append(
                synth_trial(
                    kind,
                    trial_seed,
                    rate_hz,
                    duration_s,
                    gait_hz=gait,
                    impact_g=impact,
                    noise_g=noise,
                    subject_id=subject,
                    activity_code=code,
                )
            )
    return make_manifest(DatasetName.SYNTHETIC, trials)


# ---------------------------------------------------------------------------
# LOSO partitioning
# ---------------------------------------------------------------------------

def partition_loso(manifest: DatasetManifest) -> list[LosoFold]:
    """One fold per subject; every trial lands in exactly one test set."""
    subjects = manifest.subject_ids
    if len(subjects) < 2:
        raise SingleSubjectError(
            f"LOSO needs >= 2 distinct subjects, manifest has {len(subjects)}"
        )
    folds = []
    for subject in subjects:
        test = tuple(t for t in manifest.trials if t.subject_id == subject)
        train = tuple(t for t in manifest.trials if t.subject_id != subject)
        folds.append(LosoFold(test_subject=subject, train_trials=train, test_trials=test))
    return folds


# ---------------------------------------------------------------------------
# Manifest / dataset files
# ---------------------------------------------------------------------------

def write_trial_csv(trial: Trial, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "ax", "ay", "az"])
        for i, (x, y, z) in enumerate(trial.samples):
            writer.writerow([repr(i / trial.rate_hz), repr(float(x)), repr(float(y)), repr(float(z))])


def save_dataset(manifest: DatasetManifest, out_dir) -> Path:
    """Write every trial as a CSV plus a manifest.json that points at them."""
    out_dir = Path(out_dir)
    trials_dir = out_dir / "trials"
    trials_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    rates = {t.rate_hz for t in manifest.trials}
    for trial in manifest.trials:
        name = f"{trial.activity_code}_{trial.subject_id}.csv"
        write_trial_csv(trial, trials_dir / name)
        entries.append(
            {
                "path": f"trials/{name}",
                "subject_id": trial.subject_id,
                "activity_code": trial.activity_code,
            }
        )
    doc = {
        "dataset_name": manifest.dataset_name.value,
        "vertical_axis": manifest.vertical_axis.name,
        "window_backward_s": manifest.window_backward_s,
        "window_forward_s": manifest.window_forward_s,
        "trials": entries,
    }
    if len(rates) == 1:
        doc["rate_hz"] = next(iter(rates))
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return manifest_path


def load_manifest(path) -> DatasetManifest:
    """Load a manifest.json and every trial CSV it references.

    Recognized keys: dataset_name, trials [{path, subject_id, activity_code,
    rate_hz?}], and optional vertical_axis, window_backward_s,
    window_forward_s, rate_hz, columns, adc {range_g, resolution_bits},
    exclude_subjects.
    """
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    try:
        dataset = DatasetName(doc["dataset_name"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: bad or missing dataset_name ({exc})") from None
    if "trials" not in doc or not isinstance(doc["trials"], list):
        raise ValueError(f"{path}: manifest must list trials")

    schema = doc.get("columns")
    adc = AdcSpec(**doc["adc"]) if "adc" in doc else None
    base_rate = doc.get("rate_hz")
    excluded = set(doc.get("exclude_subjects", []))

    trials = []
    for entry in doc["trials"]:
        if entry.get("subject_id") in excluded:
            continue
        trial_path = Path(entry["path"])
        if not trial_path.is_absolute():
            trial_path = path.parent / trial_path
        trials.append(
            load_trial_csv(
                trial_path,
                schema=schema,
                adc_spec=adc,
                rate_hz=entry.get("rate_hz", base_rate),
                subject_id=entry.get("subject_id"),
                activity_code=entry.get("activity_code"),
            )
        )
    if not trials:
        raise ValueError(f"{path}: manifest has no usable trials")

    axis = Axis[doc["vertical_axis"]] if "vertical_axis" in doc else None
    return make_manifest(
        dataset,
        trials,
        vertical_axis=axis,
        window_backward_s=doc.get("window_backward_s"),
        window_forward_s=doc.get("window_forward_s"),
    )
