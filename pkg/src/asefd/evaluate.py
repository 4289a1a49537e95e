"""Leave-one-subject-out evaluation of the full pipeline, with and without
the enhancement front end, plus confusion-matrix metrics and rate sweeps.

Per fold: trials are windowed at full rate, low-rate/full-rate frame pairs
are built from the training subjects only, the enhancer (when enabled) is
trained on those pairs, features are extracted from enhanced (or linearly
resampled) denormalized frames, and a standardizer plus classifier are
fitted on training features only. FALL is the positive class.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path

import numpy as np

from .ase import TrainSpec, build_config, enhance, train
from .classify import (
    KnnModel,
    apply_standardizer,
    fit_standardizer,
    predict_knn,
    svm_decision,
    train_svm,
    train_knn,
)
from .features import derive_channels, extract
from .ingest import DatasetManifest, Label, LosoFold, Trial, partition_loso
from .preprocess import (
    FRAME_LEN,
    Frame,
    WindowSpec,
    denormalize,
    downsample_values,
    impact_window,
    minmax_normalize,
    resample_frame,
    to_frame,
)

CLASSIFIERS = ("svm", "knn")
METRIC_NAMES = ("acc", "sen", "spe", "pre")


class LeakageError(RuntimeError):
    """Training-side code touched data from the held-out test subject."""


class LeakageGuard:
    """Instrumentation: every training-side trial access must pass through here."""

    def __init__(self, test_subject: str):
        self.test_subject = test_subject
        self.train_subjects: set[str] = set()

    def check_train(self, subject_id: str) -> None:
        if subject_id == self.test_subject:
            raise LeakageError(
                f"subject {subject_id!r} is the test subject of this fold but was "
                "used on the training side"
            )
        self.train_subjects.add(subject_id)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class Metrics:
    """Accuracy / sensitivity / specificity / precision; None when undefined."""

    acc: float | None
    sen: float | None
    spe: float | None
    pre: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {"acc": self.acc, "sen": self.sen, "spe": self.spe, "pre": self.pre}


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Exact ratio metrics; a zero denominator yields None (undefined)."""
    def ratio(num: int, den: int) -> float | None:
        return num / den if den else None

    return Metrics(
        acc=ratio(cm.tp + cm.tn, cm.total),
        sen=ratio(cm.tp, cm.tp + cm.fn),
        spe=ratio(cm.tn, cm.tn + cm.fp),
        pre=ratio(cm.tp, cm.tp + cm.fp),
    )


@dataclass(frozen=True)
class FoldResult:
    test_subject: str
    cm: ConfusionMatrix
    metrics: Metrics


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    classifier: str
    use_ase: bool
    alpha: int
    rate_hz: float
    folds: tuple[FoldResult, ...]
    mean_metrics: Metrics
    excluded: dict[str, int]  # folds skipped per metric (undefined denominators)
    descriptor: dict

    @property
    def front_end(self) -> str:
        return "ase" if self.use_ase else "original"


def display_rate(rate_hz: float) -> float:
    """Rates as reported in sweep tables (two decimals; 3.13, 1.56, ...)."""
    return round(rate_hz, 2)


def _average_metrics(folds: list[FoldResult]) -> tuple[Metrics, dict[str, int]]:
    means: dict[str, float | None] = {}
    excluded: dict[str, int] = {}
    for name in METRIC_NAMES:
        values = [getattr(f.metrics, name) for f in folds]
        defined = [v for v in values if v is not None]
        excluded[name] = len(values) - len(defined)
        means[name] = sum(defined) / len(defined) if defined else None
    return Metrics(**means), excluded


def _fold_seed(base_seed: int, alpha: int, classifier: str, use_ase: bool, fold_idx: int) -> int:
    key = (alpha, CLASSIFIERS.index(classifier), int(use_ase), fold_idx)
    return int(np.random.SeedSequence(entropy=base_seed, spawn_key=key).generate_state(1)[0])


def _trial_frames(trial: Trial, wspec: WindowSpec, alpha: int) -> tuple[Frame, Frame]:
    """Normalized (low-rate, full-rate) frame pair for one trial."""
    window = impact_window(trial, wspec)
    hr = minmax_normalize(to_frame(window, 0, trial.rate_hz))
    lr_window = downsample_values(window, alpha)
    lr = minmax_normalize(to_frame(lr_window, alpha, trial.rate_hz / 2**alpha))
    return lr, hr


def _features_from_lr(lr: Frame, manifest: DatasetManifest, model) -> np.ndarray:
    """Feature path shared by both front ends; they differ only in the
    enhancement step (model forward vs plain linear resampling)."""
    if model is not None:
        restored = enhance(model, lr)
    else:
        restored = resample_frame(lr, FRAME_LEN)
    return extract(derive_channels(denormalize(restored), manifest.vertical_axis))


def evaluate_fold(
    fold: LosoFold,
    manifest: DatasetManifest,
    alpha: int,
    classifier: str,
    use_ase: bool,
    train_spec: TrainSpec,
    l2_weight: float = 0.0,
    dropout_p: float = 0.0,
) -> FoldResult:
    """Run one LOSO fold; raises LeakageError if train/test subjects mix."""
    guard = LeakageGuard(fold.test_subject)
    wspec = WindowSpec(manifest.window_backward_s, manifest.window_forward_s)

    train_pairs: list[tuple[Frame, Frame]] = []
    train_labels: list[Label] = []
    for trial in fold.train_trials:
        guard.check_train(trial.subject_id)
        train_pairs.append(_trial_frames(trial, wspec, alpha))
        train_labels.append(trial.label)
    test_pairs = [_trial_frames(trial, wspec, alpha) for trial in fold.test_trials]
    test_labels = [trial.label for trial in fold.test_trials]

    model = None
    if use_ase:
        for trial in fold.train_trials:
            guard.check_train(trial.subject_id)
        config = build_config(alpha, l2=l2_weight, dropout=dropout_p)
        model = train(train_pairs, config, train_spec).model

    X_train = np.stack([_features_from_lr(lr, manifest, model) for lr, _ in train_pairs])
    X_test = np.stack([_features_from_lr(lr, manifest, model) for lr, _ in test_pairs])

    standardizer = fit_standardizer(X_train)
    X_train = apply_standardizer(standardizer, X_train)
    X_test = apply_standardizer(standardizer, X_test)

    if classifier == "svm":
        svm = train_svm(X_train, train_labels)
        decisions = svm_decision(svm, X_test)
        predictions = [Label.FALL if v >= 0.0 else Label.ADL for v in decisions]
    elif classifier == "knn":
        knn = train_knn(X_train, train_labels)
        predictions = [predict_knn(knn, x) for x in X_test]
    else:
        raise ValueError(f"classifier must be one of {CLASSIFIERS}, got {classifier!r}")

    tp = sum(1 for p, t in zip(predictions, test_labels) if p is Label.FALL and t is Label.FALL)
    tn = sum(1 for p, t in zip(predictions, test_labels) if p is Label.ADL and t is Label.ADL)
    fp = sum(1 for p, t in zip(predictions, test_labels) if p is Label.FALL and t is Label.ADL)
    fn = sum(1 for p, t in zip(predictions, test_labels) if p is Label.ADL and t is Label.FALL)
    cm = ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)
    return FoldResult(test_subject=fold.test_subject, cm=cm, metrics=metrics(cm))


def run_loso(
    manifest: DatasetManifest,
    alpha: int,
    classifier: str,
    use_ase: bool,
    *,
    train_spec: TrainSpec | None = None,
    l2_weight: float = 0.0,
    dropout_p: float = 0.0,
    base_seed: int = 0,
) -> EvalReport:
    """LOSO cross-validation of one (alpha, classifier, front-end) setting."""
    if classifier not in CLASSIFIERS:
        raise ValueError(f"classifier must be one of {CLASSIFIERS}, got {classifier!r}")
    rates = {t.rate_hz for t in manifest.trials}
    if len(rates) != 1:
        raise ValueError(f"trials must share one sampling rate, found {sorted(rates)}")
    rate_hr = next(iter(rates))
    spec = train_spec or TrainSpec()

    folds = partition_loso(manifest)
    results = []
    for fold_idx, fold in enumerate(folds):
        fold_spec = replace(
            spec, seed=_fold_seed(base_seed, alpha, classifier, use_ase, fold_idx)
        )
        results.append(
            evaluate_fold(
                fold, manifest, alpha, classifier, use_ase, fold_spec, l2_weight, dropout_p
            )
        )

    n_tested = sum(r.cm.total for r in results)
    if n_tested != len(manifest.trials):
        raise RuntimeError(
            f"fold confusion counts sum to {n_tested}, expected {len(manifest.trials)}"
        )
    mean, excluded = _average_metrics(results)
    return EvalReport(
        dataset=manifest.dataset_name.value,
        classifier=classifier,
        use_ase=use_ase,
        alpha=alpha,
        rate_hz=rate_hr / 2**alpha,
        folds=tuple(results),
        mean_metrics=mean,
        excluded=excluded,
        descriptor={
            "base_seed": base_seed,
            "l2_weight": l2_weight,
            "dropout_p": dropout_p,
            "max_epochs": spec.max_epochs,
            "batch_size": spec.batch_size,
            "step_size": spec.step_size,
            "patience": spec.patience,
        },
    )


def sweep(
    manifest: DatasetManifest,
    alphas,
    classifiers=CLASSIFIERS,
    ase_modes=(False, True),
    *,
    train_spec: TrainSpec | None = None,
    l2_weight: float = 0.0,
    dropout_p: float = 0.0,
    base_seed: int = 0,
    jobs: int = 1,
) -> list[EvalReport]:
    """Cartesian product of (alpha, classifier, front-end) settings.

    Cell seeds depend only on the cell identity, so the result is identical
    for any `jobs` value.
    """
    cells = list(product(alphas, classifiers, ase_modes))

    def run(cell):
        alpha, classifier, use_ase = cell
        return run_loso(
            manifest,
            alpha,
            classifier,
            use_ase,
            train_spec=train_spec,
            l2_weight=l2_weight,
            dropout_p=dropout_p,
            base_seed=base_seed,
        )

    if jobs > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, cells))
    return [run(cell) for cell in cells]


# ---------------------------------------------------------------------------
# Report export
# ---------------------------------------------------------------------------

_CSV_COLUMNS = [
    "dataset", "classifier", "front_end", "alpha", "rate_hz", "fold",
    "TP", "TN", "FP", "FN", "acc", "sen", "spe", "pre",
]


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(value)


def write_fold_csv(reports: list[EvalReport], path) -> None:
    """Per-fold rows plus one 'mean' row per report (counts are totals there)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for rep in reports:
            base = [rep.dataset, rep.classifier, rep.front_end, rep.alpha,
                    display_rate(rep.rate_hz)]
            for fold in rep.folds:
                writer.writerow(
                    base
                    + [fold.test_subject, fold.cm.tp, fold.cm.tn, fold.cm.fp, fold.cm.fn]
                    + [_fmt(getattr(fold.metrics, m)) for m in METRIC_NAMES]
                )
            totals = [sum(getattr(f.cm, k) for f in rep.folds) for k in ("tp", "tn", "fp", "fn")]
            writer.writerow(
                base + ["mean"] + totals
                + [_fmt(getattr(rep.mean_metrics, m)) for m in METRIC_NAMES]
            )


def write_summary_csv(reports: list[EvalReport], path) -> None:
    """One row per (classifier, front-end, rate) cell with fold-averaged metrics."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["dataset", "classifier", "front_end", "alpha", "rate_hz", "folds",
             "acc", "sen", "spe", "pre"]
        )
        for rep in reports:
            writer.writerow(
                [rep.dataset, rep.classifier, rep.front_end, rep.alpha,
                 display_rate(rep.rate_hz), len(rep.folds)]
                + [_fmt(getattr(rep.mean_metrics, m)) for m in METRIC_NAMES]
            )


def write_accuracy_matrix_csv(reports: list[EvalReport], path) -> None:
    """Accuracy pivot: rows classifier x front-end, columns sampling rates."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rates = sorted({rep.rate_hz for rep in reports}, reverse=True)
    rows = sorted({(rep.classifier, rep.front_end) for rep in reports})
    cells = {(rep.classifier, rep.front_end, rep.rate_hz): rep.mean_metrics.acc for rep in reports}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["classifier", "front_end"] + [display_rate(r) for r in rates])
        for classifier, front_end in rows:
            writer.writerow(
                [classifier, front_end]
                + [_fmt(cells.get((classifier, front_end, r))) for r in rates]
            )


def report_to_dict(rep: EvalReport) -> dict:
    return {
        "dataset": rep.dataset,
        "classifier": rep.classifier,
        "front_end": rep.front_end,
        "alpha": rep.alpha,
        "rate_hz": rep.rate_hz,
        "mean_metrics": rep.mean_metrics.as_dict(),
        "excluded_folds": rep.excluded,
        "descriptor": rep.descriptor,
        "folds": [
            {
                "fold": f.test_subject,
                "TP": f.cm.tp, "TN": f.cm.tn, "FP": f.cm.fp, "FN": f.cm.fn,
                **f.metrics.as_dict(),
            }
            for f in rep.folds
        ],
    }


def write_report_json(reports: list[EvalReport], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps([report_to_dict(r) for r in reports], indent=2), encoding="utf-8"
    )
