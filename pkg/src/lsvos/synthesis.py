"""Virtual-outlier generators behind one interface.

The main generator encodes class-augmented inlier features, shifts every
latent coordinate by a positive amount o = beta * (alpha + U(0,1)), and
decodes the result: the outliers live just outside the inlier manifold as
the decoder sees it.  Competitor generators from the comparison suite are
included: low-likelihood sampling from class-conditional Gaussians,
ID/FP linear mixing, pure N(0,1) noise, and uniformly jittered inliers.

Every generator returns a SynthBatch of raw D-dimensional rows (never the
one-hot suffix) and is deterministic under a fixed generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import models
from .errors import InputError, NotReadyError, NumericalFailure
from .features import (
    FeatureDataset,
    FeatureQueue,
    FeatureRecord,
    Label,
    append_one_hot,
)
from .scoring import fit_gaussian_model

METHODS = ("lsvos", "vos", "linear_mix", "random_noise", "noisy_id")


@dataclass
class NoiseSpec:
    """Latent noise parameters: each component is beta * (alpha + U(0,1))."""

    alpha: float = 0.25
    beta: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise InputError("alpha and beta must be finite")
        if self.alpha < 0.0 or self.beta < 0.0:
            raise InputError(
                f"alpha and beta must be non-negative, got {self.alpha}, {self.beta}"
            )


@dataclass
class SynthBatch:
    """Synthesized outlier rows plus how they were made."""

    vectors: np.ndarray
    method: str
    provenance: dict = field(default_factory=dict)
    seed: int | None = None
    class_ids: np.ndarray | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise InputError("synth batch vectors must be (M, D)")
        if not np.all(np.isfinite(self.vectors)):
            raise NumericalFailure(f"{self.method} produced non-finite outliers")
        if self.method not in METHODS:
            raise InputError(f"unknown synthesis method {self.method!r}")
        if self.class_ids is not None:
            self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
            if self.class_ids.shape != (self.vectors.shape[0],):
                raise InputError("class_ids must have one entry per synthesized row")


def latent_noise(shape, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """o = beta * (alpha + o'), o' ~ U(0,1); components in [b*a, b*(a+1)]."""
    return spec.beta * (spec.alpha + rng.uniform(0.0, 1.0, size=shape))


def lsvos_synthesize(
    ae: models.AutoEncoder,
    u_id: np.ndarray,
    class_ids: np.ndarray,
    spec: NoiseSpec,
    rng: np.random.Generator,
    seed: int | None = None,
) -> SynthBatch:
    """Decode latent codes pushed off the inlier manifold by positive noise.

    v = d(e(concat(u, one_hot)) + o).  With beta = 0 the output is exactly
    the plain auto-encoder reconstruction of the same inputs.
    """
    if not ae.trained:
        raise NotReadyError(
            "auto-encoder has not been trained; run the reconstruction phase first"
        )
    u_id = np.asarray(u_id, dtype=np.float64)
    if u_id.ndim != 2 or u_id.shape[1] != ae.feature_dim:
        raise InputError(f"expected (M, {ae.feature_dim}) inlier rows, got {u_id.shape}")
    class_ids = np.asarray(class_ids, dtype=np.int64)
    if class_ids.shape != (u_id.shape[0],):
        raise InputError("class_ids must align with inlier rows")
    augmented = append_one_hot(u_id, class_ids, ae.num_classes)
    z = models.encode(ae, augmented)
    noise = latent_noise(z.shape, spec, rng)
    # beta = 0 keeps the codes bitwise untouched (noise add skipped)
    z_star = z if spec.beta == 0.0 else z + noise
    vectors = models.decode(ae, z_star)
    return SynthBatch(
        vectors,
        "lsvos",
        provenance={"alpha": spec.alpha, "beta": spec.beta},
        seed=seed,
        class_ids=class_ids,
    )


def vos_synthesize(
    queue: FeatureQueue,
    n_per_class: int,
    quantile: float | None,
    n_candidates: int,
    rng: np.random.Generator,
    seed: int | None = None,
) -> SynthBatch:
    """Keep the lowest-likelihood Gaussian samples as outliers.

    Fits per-class means with a shared covariance from the queue contents
    (one-hot block stripped), draws n_candidates per class, keeps the
    n_per_class with the lowest Gaussian log-likelihood.  `quantile`, when
    given, bounds the kept fraction: selection must stay within the lowest
    quantile * n_candidates candidates.
    """
    if n_per_class <= 0 or n_candidates <= 0:
        raise InputError("n_per_class and n_candidates must be positive")
    if n_per_class > n_candidates:
        raise InputError("cannot keep more candidates than were drawn")
    if quantile is not None:
        if not 0.0 < quantile <= 1.0:
            raise InputError(f"quantile must be in (0, 1], got {quantile}")
        if n_per_class > quantile * n_candidates:
            raise InputError(
                f"keeping {n_per_class} of {n_candidates} exceeds the "
                f"lowest-likelihood quantile {quantile}"
            )
    dim = queue.dim
    blocks, ids = [], []
    for cid in range(queue.num_classes):
        snap = queue.snapshot(cid)
        if snap.shape[0] == 0:
            raise NotReadyError(f"queue empty for class {cid}; cannot fit Gaussian")
        blocks.append(snap[:, :dim])
        ids.append(np.full(snap.shape[0], cid))
    rows = np.vstack(blocks)
    class_ids = np.concatenate(ids)
    model = fit_gaussian_model(rows, class_ids, queue.num_classes)
    kept_blocks, kept_ids = [], []
    for cid in range(queue.num_classes):
        draws = rng.standard_normal((n_candidates, dim)) @ model.cholesky.T + model.means[cid]
        centered = draws - model.means[cid]
        # shared covariance: within one class, lowest log-likelihood is
        # exactly largest Mahalanobis distance
        maha = np.einsum("ij,jk,ik->i", centered, model.precision, centered)
        order = np.argsort(-maha, kind="stable")
        kept_blocks.append(draws[order[:n_per_class]])
        kept_ids.append(np.full(n_per_class, cid))
    return SynthBatch(
        np.vstack(kept_blocks),
        "vos",
        provenance={
            "n_per_class": n_per_class,
            "quantile": quantile,
            "n_candidates": n_candidates,
        },
        seed=seed,
        class_ids=np.concatenate(kept_ids),
    )


def linear_mix(
    u_id: np.ndarray,
    u_fp: np.ndarray,
    w: float,
    rng: np.random.Generator,
    seed: int | None = None,
) -> SynthBatch:
    """Rows w * u_id[i] + (1-w) * u_fp[j], i sequential, j uniform."""
    u_id = np.asarray(u_id, dtype=np.float64)
    u_fp = np.asarray(u_fp, dtype=np.float64)
    if not 0.0 <= w <= 1.0:
        raise InputError(f"mix weight must be in [0, 1], got {w}")
    if u_id.ndim != 2 or u_id.shape[0] == 0:
        raise InputError("u_id must be a non-empty (M, D) matrix")
    if u_fp.size == 0:
        raise NotReadyError("no false-positive features collected; cannot mix")
    if u_fp.ndim != 2 or u_fp.shape[1] != u_id.shape[1]:
        raise InputError("u_fp must share the feature dimension of u_id")
    picks = rng.integers(0, u_fp.shape[0], size=u_id.shape[0])
    vectors = w * u_id + (1.0 - w) * u_fp[picks]
    return SynthBatch(vectors, "linear_mix", provenance={"w": w}, seed=seed)


def random_noise(
    m: int, d: int, rng: np.random.Generator, seed: int | None = None
) -> SynthBatch:
    """m x d matrix of N(0,1) draws."""
    if m <= 0 or d <= 0:
        raise InputError("m and d must be positive")
    return SynthBatch(rng.standard_normal((m, d)), "random_noise", seed=seed)


def noisy_id(
    u_id: np.ndarray, rng: np.random.Generator, seed: int | None = None
) -> SynthBatch:
    """Inlier rows plus element-wise U(0,1) noise."""
    u_id = np.asarray(u_id, dtype=np.float64)
    if u_id.ndim != 2 or u_id.shape[0] == 0:
        raise InputError("u_id must be a non-empty (M, D) matrix")
    vectors = u_id + rng.uniform(0.0, 1.0, size=u_id.shape)
    return SynthBatch(vectors, "noisy_id", seed=seed)


def as_dataset(
    batch: SynthBatch,
    num_classes: int,
    class_names: list[str] | None = None,
    split: str = "train",
) -> FeatureDataset:
    """Wrap a synth batch as SYNTH_OUTLIER records for feature-file output."""
    ids = (
        batch.class_ids
        if batch.class_ids is not None
        else np.zeros(batch.vectors.shape[0], dtype=np.int64)
    )
    records = [
        FeatureRecord(vec, int(cid), Label.SYNTH_OUTLIER, source_id=batch.method)
        for vec, cid in zip(batch.vectors, ids)
    ]
    if class_names is None:
        class_names = [f"class_{i}" for i in range(num_classes)]
    return FeatureDataset(batch.vectors.shape[1], num_classes, class_names, records, split)
