"""asefd: signal enhancement for low-sampling-rate wearable fall detection.

A library plus CLI that reconstructs full-rate tri-axial accelerometer
windows from downsampled ones with a trainable convolutional autoencoder,
measures how that front end changes fall-detection accuracy for SVM/kNN
classifiers across sampling rates under leave-one-subject-out evaluation,
and estimates the compute/power/latency cost of the enhancer.
"""

__version__ = "0.1.0"

from . import ase, classify, cost, evaluate, features, ingest, preprocess, report
from .ase import AseConfig, AseModel, TrainSpec, build_config, enhance, train
from .ingest import DatasetManifest, Label, Trial, make_synth_manifest, partition_loso
from .preprocess import Frame, WindowSpec, downsample, impact_window, minmax_normalize

__all__ = [
    "__version__",
    "ase",
    "classify",
    "cost",
    "evaluate",
    "features",
    "ingest",
    "preprocess",
    "report",
    "AseConfig",
    "AseModel",
    "DatasetManifest",
    "Frame",
    "Label",
    "Trial",
    "TrainSpec",
    "WindowSpec",
    "build_config",
    "downsample",
    "enhance",
    "impact_window",
    "make_synth_manifest",
    "minmax_normalize",
    "partition_loso",
    "train",
]
