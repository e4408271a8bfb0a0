"""Outlier scores, threshold calibration, and hard ID/OOD decisions.

Score orientation is standardized across the package: higher always means
more outlier-like.  Scores that natively point the other way (such as the
max-softmax confidence baseline) are negated before they enter a ScoreSet,
and the set's orientation note records that.

The decision rule is a fixed threshold: an item is accepted as ID iff its
score is <= tau, where tau is the inclusive empirical quantile of inlier
scores at the target acceptance rate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputError

DEFAULT_ORIENTATION = "higher=more_anomalous"
SCORES_HEADER = "item_id,method,score,truth"


@dataclass
class ScoreSet:
    """Per-item outlier scores with ground truth for one method."""

    scores: np.ndarray
    is_ood: np.ndarray
    method: str
    orientation: str = DEFAULT_ORIENTATION

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.is_ood = np.asarray(self.is_ood, dtype=bool)
        if self.scores.ndim != 1 or self.scores.shape != self.is_ood.shape:
            raise InputError("scores and truth must be aligned 1-D arrays")
        if not np.all(np.isfinite(self.scores)):
            raise InputError("scores must be finite")

    @property
    def id_scores(self) -> np.ndarray:
        return self.scores[~self.is_ood]

    @property
    def ood_scores(self) -> np.ndarray:
        return self.scores[self.is_ood]


@dataclass
class GaussianModel:
    """Per-class means with one covariance shared across classes."""

    means: np.ndarray
    cov: np.ndarray
    precision: np.ndarray
    cholesky: np.ndarray


def fit_gaussian_model(
    rows: np.ndarray, class_ids: np.ndarray, num_classes: int
) -> GaussianModel:
    """Class-conditional Gaussian fit: per-class mean, pooled covariance.

    The covariance pools within-class scatter over all classes, normalized
    by N - K.  If it fails its Cholesky factorization it is ridged with
    eps * I, eps = 1e-6 * trace / dim, and a warning is emitted.
    """
    rows = np.asarray(rows, dtype=np.float64)
    class_ids = np.asarray(class_ids, dtype=np.int64)
    if rows.ndim != 2:
        raise InputError("rows must be (N, D)")
    if class_ids.shape != (rows.shape[0],):
        raise InputError("class_ids must align with rows")
    n, dim = rows.shape
    if n <= num_classes:
        raise InputError("need more rows than classes to fit a pooled covariance")
    means = np.zeros((num_classes, dim))
    scatter = np.zeros((dim, dim))
    for cid in range(num_classes):
        block = rows[class_ids == cid]
        if block.shape[0] == 0:
            raise InputError(f"no rows for class {cid}")
        means[cid] = block.mean(axis=0)
        centered = block - means[cid]
        scatter += centered.T @ centered
    cov = scatter / (n - num_classes)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        eps = 1e-6 * np.trace(cov) / dim
        if eps <= 0.0:
            eps = 1e-6
        warnings.warn(
            f"singular pooled covariance; regularizing with {eps:.3e} * I",
            stacklevel=2,
        )
        cov = cov + eps * np.eye(dim)
        chol = np.linalg.cholesky(cov)
    return GaussianModel(means, cov, np.linalg.inv(cov), chol)


def mahalanobis_score(model: GaussianModel, queries: np.ndarray) -> np.ndarray:
    """min over classes of the squared Mahalanobis distance to the class mean."""
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != model.means.shape[1]:
        raise InputError(
            f"queries must be (N, {model.means.shape[1]}), got {queries.shape}"
        )
    per_class = np.empty((queries.shape[0], model.means.shape[0]))
    for cid, mean in enumerate(model.means):
        centered = queries - mean
        per_class[:, cid] = np.einsum(
            "ij,jk,ik->i", centered, model.precision, centered
        )
    return per_class.min(axis=1)


@dataclass
class Threshold:
    """Calibrated acceptance cutoff: ID iff score <= tau."""

    tau: float
    target_tpr: float
    calibration_size: int


def calibrate_tau(id_scores: np.ndarray, target_tpr: float = 0.95) -> Threshold:
    """Smallest score value accepting at least target_tpr of the inliers.

    tau = sorted_scores[ceil(target_tpr * N) - 1], the inclusive empirical
    quantile; the achieved acceptance rate lies in [target, target + 1/N]
    whenever the scores are distinct.
    """
    id_scores = np.asarray(id_scores, dtype=np.float64)
    if id_scores.ndim != 1 or id_scores.size == 0:
        raise InputError("calibration needs a non-empty 1-D inlier score array")
    if not np.all(np.isfinite(id_scores)):
        raise InputError("calibration scores must be finite")
    if not 0.0 < target_tpr <= 1.0:
        raise InputError(f"target_tpr must be in (0, 1], got {target_tpr}")
    n = id_scores.size
    rank = math.ceil(target_tpr * n) - 1
    tau = float(np.sort(id_scores)[rank])
    return Threshold(tau, target_tpr, n)


def classify(scores: np.ndarray, threshold: Threshold) -> np.ndarray:
    """Boolean per item: True = rejected as OOD (score > tau)."""
    scores = np.asarray(scores, dtype=np.float64)
    return scores > threshold.tau


# --- score persistence ----------------------------------------------------------


def save_scores(path, score_sets: dict[str, ScoreSet]) -> None:
    """Dump all methods' scores to `item_id,method,score,truth` CSV."""
    lines = [SCORES_HEADER]
    for method in score_sets:
        ss = score_sets[method]
        for i, (score, ood) in enumerate(zip(ss.scores, ss.is_ood)):
            truth = "OOD" if ood else "ID"
            lines.append(f"{i},{method},{float(score)!r},{truth}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scores(path) -> dict[str, ScoreSet]:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != SCORES_HEADER:
        raise InputError(f"score CSV must start with header {SCORES_HEADER!r}")
    by_method: dict[str, tuple[list, list]] = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 4:
            raise InputError(f"score row has {len(parts)} fields, expected 4")
        _, method, score, truth = parts
        if truth not in ("ID", "OOD"):
            raise InputError(f"unknown truth value {truth!r}")
        scores, oods = by_method.setdefault(method, ([], []))
        scores.append(float(score))
        oods.append(truth == "OOD")
    return {
        method: ScoreSet(np.array(scores), np.array(oods), method)
        for method, (scores, oods) in by_method.items()
    }
