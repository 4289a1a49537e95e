"""Binary fall/ADL classifiers: an RBF-kernel SVM trained with SMO, and a
3-nearest-neighbor voter, both over z-scored feature vectors.

The SVM solves the soft-margin dual with kernel exp(-||u - v||^2 / sigma^2),
sigma = 1 and box constraint C = 1, by repeatedly optimizing the maximal
KKT-violating pair until the violation falls under 1e-3. FALL is the
positive class (+1).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import Label

KKT_TOL = 1e-3
BOUND_EPS = 1e-12  # alphas this close to a bound snap onto it

_FD_MAGIC = b"FDML"
_FD_VERSION = 1


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-scoring fitted on training data; zero-spread features map to 0."""

    mean: np.ndarray
    std: np.ndarray


def fit_standardizer(X: np.ndarray) -> Standardizer:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a non-empty (n, d) matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    return Standardizer(mean=mean, std=std)


def apply_standardizer(standardizer: Standardizer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    safe = np.where(standardizer.std > 0.0, standardizer.std, 1.0)
    out = (x - standardizer.mean) / safe
    return np.where(standardizer.std > 0.0, out, 0.0)


def _labels_to_signs(y) -> np.ndarray:
    return np.array([1.0 if lbl is Label.FALL or lbl == Label.FALL else -1.0 for lbl in y])


def rbf_kernel(A: np.ndarray, B: np.ndarray, sigma: float) -> np.ndarray:
    """K[i, j] = exp(-||A_i - B_j||^2 / sigma^2)."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d2 = (A**2).sum(axis=1)[:, None] + (B**2).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-np.maximum(d2, 0.0) / sigma**2)


@dataclass
class SvmModel:
    support_vectors: np.ndarray  # (m, d)
    dual_coefs: np.ndarray  # alpha_i * y_i, (m,)
    alphas: np.ndarray  # (m,)
    bias: float
    box_c: float = 1.0
    kernel_sigma: float = 1.0
    n_iterations: int = 0


@dataclass
class KnnModel:
    points: np.ndarray  # (n, d) standardized training vectors
    signs: np.ndarray  # (n,), +1 FALL / -1 ADL
    k: int = 3


def train_svm(
    X: np.ndarray,
    y,
    *,
    box_c: float = 1.0,
    kernel_sigma: float = 1.0,
    tol: float = KKT_TOL,
    max_iterations: int | None = None,
) -> SvmModel:
    """SMO on the soft-margin dual; deterministic for a given input order."""
    X = np.asarray(X, dtype=np.float64)
    signs = _labels_to_signs(y)
    n = len(signs)
    if X.shape[0] != n:
        raise ValueError("X and y lengths differ")
    pos, neg = int((signs > 0).sum()), int((signs < 0).sum())
    if pos == 0 or neg == 0:
        raise ValueError(f"both classes must be present (got {pos} FALL, {neg} ADL)")
    if max_iterations is None:
        max_iterations = max(10_000, 200 * n)

    K = rbf_kernel(X, X, kernel_sigma)
    Q = (signs[:, None] * signs[None, :]) * K
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - sum(a)
    C = float(box_c)

    it = 0
    while True:
        if it >= max_iterations:
            raise RuntimeError(f"SMO did not converge within {max_iterations} iterations")
        score = -signs * grad
        up = ((signs > 0) & (alpha < C - BOUND_EPS)) | ((signs < 0) & (alpha > BOUND_EPS))
        low = ((signs > 0) & (alpha > BOUND_EPS)) | ((signs < 0) & (alpha < C - BOUND_EPS))
        m_up = score[up].max()
        m_low = score[low].min()
        if m_up - m_low <= tol:
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))

        s = signs[i] * signs[j]
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        eta = max(eta, 1e-12)
        delta = signs[j] * (signs[i] * grad[i] - signs[j] * grad[j]) / eta
        if s < 0:
            lo = max(0.0, alpha[j] - alpha[i])
            hi = min(C, C + alpha[j] - alpha[i])
        else:
            lo = max(0.0, alpha[i] + alpha[j] - C)
            hi = min(C, alpha[i] + alpha[j])
        new_j = float(np.clip(alpha[j] + delta, lo, hi))
        d_j = new_j - alpha[j]
        d_i = -s * d_j
        alpha[j] = new_j
        alpha[i] += d_i
        for idx in (i, j):
            if alpha[idx] < BOUND_EPS:
                alpha[idx] = 0.0
            elif alpha[idx] > C - BOUND_EPS:
                alpha[idx] = C
        grad += Q[:, i] * d_i + Q[:, j] * d_j
        it += 1

    free = (alpha > BOUND_EPS) & (alpha < C - BOUND_EPS)
    if free.any():
        bias = float(np.mean(-(signs * grad)[free]))
    else:
        bias = float((m_up + m_low) / 2.0)

    sv = alpha > 0.0
    return SvmModel(
        support_vectors=X[sv].copy(),
        dual_coefs=(alpha * signs)[sv],
        alphas=alpha[sv],
        bias=bias,
        box_c=C,
        kernel_sigma=kernel_sigma,
        n_iterations=it,
    )


def svm_decision(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """Decision values sum(alpha_i y_i K(sv_i, x)) + b for one or many points."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    K = rbf_kernel(np.atleast_2d(x), model.support_vectors, model.kernel_sigma)
    values = K @ model.dual_coefs + model.bias
    return float(values[0]) if single else values


def predict_svm(model: SvmModel, x: np.ndarray) -> tuple[Label, float]:
    """Label (FALL on non-negative decision value) plus the decision value."""
    value = svm_decision(model, np.asarray(x, dtype=np.float64))
    if np.ndim(value):
        raise ValueError("predict_svm takes a single vector; use svm_decision for batches")
    return (Label.FALL if value >= 0.0 else Label.ADL), float(value)


def train_knn(X: np.ndarray, y, k: int = 3) -> KnnModel:
    X = np.asarray(X, dtype=np.float64)
    signs = _labels_to_signs(y)
    if k % 2 == 0:
        raise ValueError("k must be odd to avoid vote ties")
    if X.shape[0] < k:
        raise ValueError(f"need at least k={k} training points, got {X.shape[0]}")
    return KnnModel(points=X.copy(), signs=signs, k=k)


def predict_knn(model: KnnModel, x: np.ndarray) -> Label:
    """Majority vote of the k nearest (Euclidean) neighbors.

    Equal distances break toward the lower training index (stable sort on
    squared distances).
    """
    x = np.asarray(x, dtype=np.float64)
    d2 = ((model.points - x) ** 2).sum(axis=1)
    nearest = np.argsort(d2, kind="stable")[: model.k]
    return Label.FALL if model.signs[nearest].sum() > 0 else Label.ADL


# ---------------------------------------------------------------------------
# Persistence: classifier + standardizer in one container
# ---------------------------------------------------------------------------

def _pack_arrays(header: dict, arrays: list[tuple[str, np.ndarray]]) -> bytes:
    header = dict(header)
    header["arrays"] = [
        {"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)} for name, arr in arrays
    ]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [struct.pack("<4sBI", _FD_MAGIC, _FD_VERSION, len(blob)), blob]
    parts += [np.ascontiguousarray(arr).tobytes() for _, arr in arrays]
    return b"".join(parts)


def save_fd_model(path, model: SvmModel | KnnModel, standardizer: Standardizer) -> None:
    arrays = [("standardizer_mean", standardizer.mean), ("standardizer_std", standardizer.std)]
    if isinstance(model, SvmModel):
        header = {
            "kind": "svm",
            "bias": model.bias,
            "box_c": model.box_c,
            "kernel_sigma": model.kernel_sigma,
        }
        arrays += [
            ("support_vectors", model.support_vectors),
            ("dual_coefs", model.dual_coefs),
            ("alphas", model.alphas),
        ]
    elif isinstance(model, KnnModel):
        header = {"kind": "knn", "k": model.k}
        arrays += [("points", model.points), ("signs", model.signs)]
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    Path(path).write_bytes(_pack_arrays(header, arrays))


def load_fd_model(path) -> tuple[SvmModel | KnnModel, Standardizer]:
    blob = Path(path).read_bytes()
    head_size = struct.calcsize("<4sBI")
    if len(blob) < head_size:
        raise ValueError("classifier container truncated")
    magic, version, json_len = struct.unpack("<4sBI", blob[:head_size])
    if magic != _FD_MAGIC:
        raise ValueError(f"bad container magic {magic!r}")
    if version != _FD_VERSION:
        raise ValueError(f"unsupported container version {version}")
    header = json.loads(blob[head_size : head_size + json_len].decode("utf-8"))

    offset = head_size + json_len
    arrays = {}
    for spec in header["arrays"]:
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        end = offset + dtype.itemsize * count
        if end > len(blob):
            raise ValueError(f"container truncated in array {spec['name']!r}")
        arrays[spec["name"]] = (
            np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
            .reshape(spec["shape"])
            .copy()
        )
        offset = end

    standardizer = Standardizer(mean=arrays["standardizer_mean"], std=arrays["standardizer_std"])
    if header["kind"] == "svm":
        model: SvmModel | KnnModel = SvmModel(
            support_vectors=arrays["support_vectors"],
            dual_coefs=arrays["dual_coefs"],
            alphas=arrays["alphas"],
            bias=header["bias"],
            box_c=header["box_c"],
            kernel_sigma=header["kernel_sigma"],
        )
    elif header["kind"] == "knn":
        model = KnnModel(points=arrays["points"], signs=arrays["signs"], k=header["k"])
    else:
        raise ValueError(f"unknown classifier kind {header['kind']!r}")
    return model, standardizer
