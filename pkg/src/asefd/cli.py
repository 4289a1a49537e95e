"""Command-line surface tying the pipeline together.

One binary with subcommands (synth, ingest, train-ase, enhance, features,
train-fd, eval, sweep, cost). Options can come from a JSON config file
(--config) with explicit flags taking precedence. Every command writes a
run.json provenance record (resolved config + seeds + version) into its
output directory, and report-producing commands render figures next to
their CSV output.

Exit codes: 0 success, 1 runtime failure, 2 configuration error. Failures
print machine-parsable ``error: <kind>: <message>`` lines to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, ase, report
from .classify import (
    apply_standardizer,
    fit_standardizer,
    load_fd_model,
    predict_knn,
    save_fd_model,
    svm_decision,
    train_knn,
    train_svm,
)
from .cost import CostModel, cost_table
from .evaluate import (
    CLASSIFIERS,
    run_loso,
    sweep,
    write_accuracy_matrix_csv,
    write_fold_csv,
    write_report_json,
    write_summary_csv,
)
from .features import FEATURE_NAMES, derive_channels, export_features_csv, extract, load_features_csv
from .ingest import (
    DatasetManifest,
    Label,
    load_manifest,
    make_synth_manifest,
    save_dataset,
)
from .preprocess import (
    FRAME_LEN,
    WindowSpec,
    denormalize,
    downsample_values,
    impact_window,
    load_frame,
    minmax_normalize,
    resample_frame,
    save_frame,
    to_frame,
)


@dataclass
class RunConfig:
    """Resolved settings of one command; every field has a documented default."""

    manifest: str | None = None
    dataset: str | None = None
    subjects: int = 6
    trials_per_subject: int = 20
    rate_hz: float = 200.0
    duration_s: float = 8.0
    alpha: int | None = None
    alphas: list[int] = field(default_factory=list)
    classifier: str | None = None
    classifiers: list[str] = field(default_factory=list)
    ase_mode: str = "off"  # on | off | both
    l2: float = 0.0
    dropout: float = 0.0
    max_epochs: int = 300
    batch_size: int = 32
    step_size: float = 1e-3
    patience: int = 20
    seed: int = 0
    jobs: int = 1
    outdir: str | None = None

    def validate(self, required: tuple[str, ...] = ()) -> list[str]:
        """Collect every violation rather than stopping at the first."""
        problems = []
        for name in required:
            if getattr(self, name) in (None, [], ""):
                problems.append(f"{name} is required")
        if self.manifest is not None and not Path(self.manifest).exists():
            problems.append(f"manifest file {self.manifest!r} does not exist")
        if self.dataset is not None and self.dataset != "synthetic":
            problems.append(f"dataset must be 'synthetic' (or use --manifest), got {self.dataset!r}")
        if self.subjects < 1:
            problems.append("subjects must be >= 1")
        if self.trials_per_subject < 1:
            problems.append("trials_per_subject must be >= 1")
        if self.rate_hz <= 0:
            problems.append("rate_hz must be positive")
        if self.duration_s < 4.0:
            problems.append("duration_s must be >= 4")
        if self.alpha is not None and not 0 <= self.alpha <= 7:
            problems.append(f"alpha must be in [0, 7], got {self.alpha}")
        for a in self.alphas:
            if not 0 <= a <= 7:
                problems.append(f"alphas entries must be in [0, 7], got {a}")
        if self.classifier is not None and self.classifier not in CLASSIFIERS:
            problems.append(f"classifier must be one of {list(CLASSIFIERS)}, got {self.classifier!r}")
        for c in self.classifiers:
            if c not in CLASSIFIERS:
                problems.append(f"classifiers entries must be one of {list(CLASSIFIERS)}, got {c!r}")
        if self.ase_mode not in ("on", "off", "both"):
            problems.append(f"ase must be on, off, or both, got {self.ase_mode!r}")
        if not 0.0 <= self.dropout < 1.0:
            problems.append("dropout must be in [0, 1)")
        if self.l2 < 0:
            problems.append("l2 must be >= 0")
        if self.max_epochs < 1 or self.batch_size < 1 or self.patience < 1:
            problems.append("max_epochs, batch_size, and patience must be >= 1")
        if self.step_size <= 0:
            problems.append("step_size must be positive")
        if self.jobs < 1:
            problems.append("jobs must be >= 1")
        return problems

    def train_spec(self) -> ase.TrainSpec:
        return ase.TrainSpec(
            max_epochs=self.max_epochs,
            batch_size=self.batch_size,
            step_size=self.step_size,
            patience=self.patience,
            seed=self.seed,
        )


def _parse_int_list(text: str) -> list[int]:
    """'0..7' or '0,3,7' or a mix ('0..2,7')."""
    out: list[int] = []
    for token in text.split(","):
        token = token.strip()
        if ".." in token:
            lo, hi = token.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif token:
            out.append(int(token))
    return out


def _parse_str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _fail(kind: str, message: str, code: int = 1) -> int:
    print(f"error: {kind}: {message}", file=sys.stderr)
    return code


def _write_run_record(outdir: Path, command: str, config: RunConfig) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    record = {"command": command, "version": __version__, "config": asdict(config)}
    (outdir / "run.json").write_text(json.dumps(record, indent=2), encoding="utf-8")


def _load_input_manifest(config: RunConfig) -> DatasetManifest:
    if config.manifest:
        return load_manifest(config.manifest)
    return make_synth_manifest(
        config.subjects,
        config.trials_per_subject,
        config.seed,
        rate_hz=config.rate_hz,
        duration_s=config.duration_s,
    )


def _manifest_frames(manifest: DatasetManifest, alpha: int):
    """Per-trial normalized (lr, hr) frames plus the trial itself."""
    wspec = WindowSpec(manifest.window_backward_s, manifest.window_forward_s)
    for trial in manifest.trials:
        window = impact_window(trial, wspec)
        hr = minmax_normalize(to_frame(window, 0, trial.rate_hz))
        lr_window = downsample_values(window, alpha)
        lr = minmax_normalize(to_frame(lr_window, alpha, trial.rate_hz / 2**alpha))
        yield trial, lr, hr


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_synth(config: RunConfig) -> int:
    outdir = Path(config.outdir)
    manifest = make_synth_manifest(
        config.subjects,
        config.trials_per_subject,
        config.seed,
        rate_hz=config.rate_hz,
        duration_s=config.duration_s,
    )
    manifest_path = save_dataset(manifest, outdir)
    _write_run_record(outdir, "synth", config)
    print(
        f"wrote {len(manifest.trials)} trials for {len(manifest.subject_ids)} subjects "
        f"to {manifest_path}"
    )
    return 0


def _cmd_ingest(config: RunConfig) -> int:
    manifest = load_manifest(config.manifest)
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "trials_summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "activity_code", "label", "n_samples", "rate_hz", "max_norm_g"])
        for trial in manifest.trials:
            writer.writerow(
                [trial.subject_id, trial.activity_code, trial.label.value,
                 trial.n_samples, trial.rate_hz, repr(float(trial.norms().max()))]
            )
    if config.alpha is not None:
        frames_dir = outdir / f"frames_alpha{config.alpha}"
        frames_dir.mkdir(exist_ok=True)
        for trial, lr, hr in _manifest_frames(manifest, config.alpha):
            stem = f"{trial.activity_code}_{trial.subject_id}"
            save_frame(lr, frames_dir / f"{stem}_lr.asef")
            save_frame(hr, frames_dir / f"{stem}_hr.asef")
    _write_run_record(outdir, "ingest", config)
    n_fall = sum(1 for t in manifest.trials if t.label is Label.FALL)
    print(
        f"loaded {len(manifest.trials)} trials ({n_fall} falls) from "
        f"{len(manifest.subject_ids)} subjects"
    )
    return 0


def _cmd_train_ase(config: RunConfig) -> int:
    manifest = _load_input_manifest(config)
    outdir = Path(config.outdir)
    pairs = [(lr, hr) for _, lr, hr in _manifest_frames(manifest, config.alpha)]
    model_config = ase.build_config(config.alpha, l2=config.l2, dropout=config.dropout)
    result = ase.train(pairs, model_config, config.train_spec())
    outdir.mkdir(parents=True, exist_ok=True)
    model_path = outdir / f"ase_model_alpha{config.alpha}.asem"
    ase.save_model(result.model, model_path)
    with open(outdir / "training_curve.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mae", "val_mae"])
        for i, (tr, va) in enumerate(zip(result.train_mae, result.val_mae), start=1):
            writer.writerow([i, repr(tr), repr(va)])
    report.save_training_curve(outdir / "fig_training_curve.png", result.train_mae, result.val_mae)
    _write_run_record(outdir, "train-ase", config)
    print(
        f"trained on {len(pairs)} pairs; best val MAE {result.best_val_mae:.5f} "
        f"at epoch {result.best_epoch}; saved {model_path}"
    )
    return 0


def _cmd_enhance(args, config: RunConfig) -> int:
    model = ase.load_model(args.model)
    lr = load_frame(args.frame)
    enhanced = ase.enhance(model, lr)
    save_frame(enhanced, args.out_frame)
    if args.figure:
        hr = load_frame(args.hr_frame) if args.hr_frame else None
        report.save_signal_comparison(args.figure, lr, enhanced, hr)
    print(f"enhanced 3x{lr.per_axis_len} -> 3x{enhanced.per_axis_len}, wrote {args.out_frame}")
    return 0


def _cmd_features(args, config: RunConfig) -> int:
    manifest = _load_input_manifest(config)
    outdir = Path(config.outdir)
    model = ase.load_model(args.ase_model) if args.ase_model else None
    alpha = model.config.alpha if model is not None else config.alpha
    if alpha is None:
        return _fail("config", "either --alpha or --ase-model is required", 2)
    rows = []
    for trial, lr, _ in _manifest_frames(manifest, alpha):
        restored = ase.enhance(model, lr) if model is not None else resample_frame(lr, FRAME_LEN)
        vec = extract(derive_channels(denormalize(restored), manifest.vertical_axis))
        rows.append((trial.subject_id, trial.label, vec))
    front_end = "ase" if model is not None else "original"
    out_path = outdir / f"features_alpha{alpha}_{front_end}.csv"
    export_features_csv(out_path, rows)
    _write_run_record(outdir, "features", config)
    print(f"wrote {len(rows)} feature vectors ({len(FEATURE_NAMES)} columns) to {out_path}")
    return 0


def _cmd_train_fd(args, config: RunConfig) -> int:
    rows = load_features_csv(args.features)
    X = np.stack([vec for _, _, vec in rows])
    y = [label for _, label, _ in rows]
    standardizer = fit_standardizer(X)
    Xs = apply_standardizer(standardizer, X)
    if config.classifier == "svm":
        model = train_svm(Xs, y)
    else:
        model = train_knn(Xs, y)
    save_fd_model(args.out, model, standardizer)
    print(f"trained {config.classifier} on {len(rows)} vectors, wrote {args.out}")
    return 0


def _cmd_eval(config: RunConfig) -> int:
    manifest = _load_input_manifest(config)
    outdir = Path(config.outdir)
    rep = run_loso(
        manifest,
        config.alpha,
        config.classifier,
        config.ase_mode == "on",
        train_spec=config.train_spec(),
        l2_weight=config.l2,
        dropout_p=config.dropout,
        base_seed=config.seed,
    )
    write_fold_csv([rep], outdir / "eval_folds.csv")
    write_report_json([rep], outdir / "eval_report.json")
    report.save_fold_accuracy(outdir / "fig_fold_accuracy.png", rep)
    _write_run_record(outdir, "eval", config)
    mm = rep.mean_metrics
    fmt = lambda v: "undefined" if v is None else f"{v:.4f}"
    print(
        f"{rep.classifier}/{rep.front_end} alpha={rep.alpha}: "
        f"ACC {fmt(mm.acc)} SEN {fmt(mm.sen)} SPE {fmt(mm.spe)} PRE {fmt(mm.pre)} "
        f"({len(rep.folds)} folds)"
    )
    return 0


def _cmd_sweep(config: RunConfig) -> int:
    manifest = _load_input_manifest(config)
    outdir = Path(config.outdir)
    ase_modes = {"on": (True,), "off": (False,), "both": (False, True)}[config.ase_mode]
    reports = sweep(
        manifest,
        config.alphas,
        tuple(config.classifiers),
        ase_modes,
        train_spec=config.train_spec(),
        l2_weight=config.l2,
        dropout_p=config.dropout,
        base_seed=config.seed,
        jobs=config.jobs,
    )
    write_fold_csv(reports, outdir / "sweep_folds.csv")
    write_summary_csv(reports, outdir / "sweep_summary.csv")
    write_accuracy_matrix_csv(reports, outdir / "sweep_accuracy_matrix.csv")
    write_report_json(reports, outdir / "sweep_report.json")
    if reports:
        report.save_metric_curves(reports, outdir)
    _write_run_record(outdir, "sweep", config)
    print(f"swept {len(reports)} settings over {len(manifest.trials)} trials; wrote {outdir}")
    return 0


def _cmd_cost(args, config: RunConfig) -> int:
    cost_model = CostModel(
        clock_hz=args.clock_mhz * 1e6,
        battery_mah=args.battery_mah,
        ma_per_mflop=args.ma_per_mflop,
        cycles_per_flop=args.cycles_per_flop,
    )
    override = [float(v) for v in _parse_str_list(args.mflops)] if args.mflops else None
    rows = cost_table(cost_model, hr_rate_hz=config.rate_hz, mflops_override=override)
    columns = ["alpha", "rate_hz", "source", "mflops", "power_ma", "battery_life_h",
               "response_time_s"]

    def fmt(column: str, value):
        if column in ("alpha", "source"):
            return value
        return f"{float(value):.6g}"

    def emit(fh):
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(c, row[c]) for c in columns])

    if config.outdir:
        outdir = Path(config.outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "cost.csv", "w", newline="", encoding="utf-8") as fh:
            emit(fh)
        report.save_cost_curves(outdir / "fig_cost.png", rows)
        _write_run_record(outdir, "cost", config)
        print(f"wrote {outdir / 'cost.csv'}")
    else:
        emit(sys.stdout)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_dataset_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", help="manifest.json of an on-disk dataset")
    p.add_argument("--dataset", choices=["synthetic"],
                   help="use the built-in synthetic generator instead of a manifest")
    p.add_argument("--subjects", type=int, help="synthetic: number of subjects (default 6)")
    p.add_argument("--trials-per-subject", type=int,
                   help="synthetic: trials per subject (default 20)")
    p.add_argument("--rate-hz", type=float, help="synthetic: sampling rate (default 200)")
    p.add_argument("--duration-s", type=float, help="synthetic: trial length (default 8)")


def _add_train_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--l2", type=float, help="L2 weight penalty (default 0)")
    p.add_argument("--dropout", type=float, help="dropout rate on dense layers (default 0)")
    p.add_argument("--max-epochs", type=int, help="training epoch cap (default 300)")
    p.add_argument("--batch-size", type=int, help="minibatch size (default 32)")
    p.add_argument("--step-size", type=float, help="Adam step size (default 1e-3)")
    p.add_argument("--patience", type=int, help="early-stop patience in epochs (default 20)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asefd",
        description="Signal enhancement and fall-detection evaluation for "
                    "low-sampling-rate accelerometer data.",
    )
    parser.add_argument("--version", action="version", version=f"asefd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file of option defaults (flags win)")
        p.add_argument("--seed", type=int, help="base seed (default 0)")
        return p

    p = common(sub.add_parser("synth", help="generate a synthetic dataset on disk"))
    p.add_argument("--outdir", required=True)
    p.add_argument("--subjects", type=int)
    p.add_argument("--trials-per-subject", type=int)
    p.add_argument("--rate-hz", type=float)
    p.add_argument("--duration-s", type=float)

    p = common(sub.add_parser("ingest", help="load a manifest, summarize, optionally export frames"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--alpha", type=int,
                   help="also export per-trial normalized frame records at this factor")

    p = common(sub.add_parser("train-ase", help="train an enhancer on all manifest trials"))
    _add_dataset_options(p)
    _add_train_options(p)
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--outdir", required=True)

    p = common(sub.add_parser("enhance", help="run one frame record through a trained enhancer"))
    p.add_argument("--model", required=True, help="ASEM checkpoint")
    p.add_argument("--frame", required=True, help="input ASEF frame record")
    p.add_argument("--out-frame", required=True, help="output ASEF path")
    p.add_argument("--figure", help="optional PNG comparing input and reconstruction")
    p.add_argument("--hr-frame", help="optional full-rate ASEF reference for the figure")

    p = common(sub.add_parser("features", help="extract the 54-feature matrix for a dataset"))
    _add_dataset_options(p)
    p.add_argument("--alpha", type=int, help="downsample factor exponent (baseline path)")
    p.add_argument("--ase-model", help="ASEM checkpoint; enables the enhanced path")
    p.add_argument("--outdir", required=True)

    p = common(sub.add_parser("train-fd", help="fit a classifier on a feature matrix CSV"))
    p.add_argument("--features", required=True)
    p.add_argument("--classifier", required=True, choices=list(CLASSIFIERS))
    p.add_argument("--out", required=True, help="output FDML container path")

    p = common(sub.add_parser("eval", help="LOSO evaluation of one setting"))
    _add_dataset_options(p)
    _add_train_options(p)
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--classifier", required=True, choices=list(CLASSIFIERS))
    p.add_argument("--ase", dest="ase_mode", choices=["on", "off"], default="off")
    p.add_argument("--outdir", required=True)

    p = common(sub.add_parser("sweep", help="LOSO sweep over rates, classifiers, front ends"))
    _add_dataset_options(p)
    _add_train_options(p)
    p.add_argument("--alphas", required=True, help="e.g. '0..7' or '0,3,7'")
    p.add_argument("--classifiers", default="svm,knn", help="comma list (default svm,knn)")
    p.add_argument("--ase", dest="ase_mode", choices=["on", "off", "both"], default="both")
    p.add_argument("--jobs", type=int, help="parallel sweep cells (default 1)")
    p.add_argument("--outdir", required=True)

    p = common(sub.add_parser("cost", help="FLOP counts and power/battery/latency table"))
    p.add_argument("--rate-hz", type=float, help="full sampling rate (default 200)")
    p.add_argument("--mflops",
                   help="comma list overriding the computed per-rate MFLOPs "
                        "(highest rate first), e.g. externally measured counts")
    p.add_argument("--battery-mah", type=float, default=1000.0)
    p.add_argument("--clock-mhz", type=float, default=80.0)
    p.add_argument("--ma-per-mflop", type=float, default=1.283)
    p.add_argument("--cycles-per-flop", type=float, default=7.0)
    p.add_argument("--outdir", help="write cost.csv + figure here instead of stdout")

    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < JSON config file < explicit flags."""
    config = RunConfig()
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        for key, value in doc.items():
            if not hasattr(config, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(config, key, value)
    mapping = {
        "manifest": "manifest", "dataset": "dataset", "subjects": "subjects",
        "trials_per_subject": "trials_per_subject", "rate_hz": "rate_hz",
        "duration_s": "duration_s", "alpha": "alpha", "classifier": "classifier",
        "ase_mode": "ase_mode", "l2": "l2", "dropout": "dropout",
        "max_epochs": "max_epochs", "batch_size": "batch_size",
        "step_size": "step_size", "patience": "patience", "seed": "seed",
        "jobs": "jobs", "outdir": "outdir",
    }
    for arg_name, cfg_name in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(config, cfg_name, value)
    if getattr(args, "alphas", None):
        config.alphas = _parse_int_list(args.alphas)
    if getattr(args, "classifiers", None):
        config.classifiers = _parse_str_list(args.classifiers)
    return config


_REQUIRED = {
    "synth": ("outdir",),
    "ingest": ("manifest", "outdir"),
    "train-ase": ("alpha", "outdir"),
    "enhance": (),
    "features": ("outdir",),
    "train-fd": ("classifier",),
    "eval": ("alpha", "classifier", "outdir"),
    "sweep": ("classifiers", "outdir"),
    "cost": (),
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _resolve_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        return _fail("config", str(exc), 2)

    problems = config.validate(_REQUIRED[args.command])
    if args.command == "sweep" and not config.alphas:
        problems.append("alphas is required (e.g. --alphas 0..7)")
    if problems:
        for problem in problems:
            print(f"error: config: {problem}", file=sys.stderr)
        return 2

    try:
        if args.command == "synth":
            return _cmd_synth(config)
        if args.command == "ingest":
            return _cmd_ingest(config)
        if args.command == "train-ase":
            return _cmd_train_ase(config)
        if args.command == "enhance":
            return _cmd_enhance(args, config)
        if args.command == "features":
            return _cmd_features(args, config)
        if args.command == "train-fd":
            return _cmd_train_fd(args, config)
        if args.command == "eval":
            return _cmd_eval(config)
        if args.command == "sweep":
            return _cmd_sweep(config)
        if args.command == "cost":
            return _cmd_cost(args, config)
        raise RuntimeError(f"unhandled command {args.command!r}")  # pragma: no cover
    except (ValueError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc))
    except (ase.TrainingDivergedError, RuntimeError) as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
