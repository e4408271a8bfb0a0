"""Experiment orchestration: config files, two-phase training, ablations.

Phase 1 trains the auto-encoder and the surrogate classifier on inlier
features (the uncertainty weight is forced to zero).  Phase 2 keeps both
running and adds the uncertainty head: each step pushes its inlier
minibatch into the per-class queue, draws the stratified sample for the
reconstruction loss, synthesizes virtual outliers from the minibatch,
stacks them with real false-positive features, and applies the weighted
uncertainty update.  A zero weight skips synthesis and the uncertainty
update entirely, so those parameters stay bitwise untouched.

Configs are flat "dotted.key = value" text; the config hash is taken
over the canonically sorted rendering, so key order in the file never
changes the hash.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import nn
from .datagen import GeneratorSpec, generate_features
from .errors import InputError, LsvosError, NumericalFailure
from .features import FeatureQueue, Label, append_one_hot, load_features
from .metrics import EvaluationReport, build_report, ece
from .models import (
    ModelBundle,
    ae_gradients,
    classifier_gradients,
    default_score,
    softmax_probs,
    total_loss,
    uncertainty_gradients,
    uncertainty_score,
)
from .scoring import ScoreSet, fit_gaussian_model, mahalanobis_score, save_scores
from .synthesis import (
    METHODS,
    NoiseSpec,
    SynthBatch,
    linear_mix,
    lsvos_synthesize,
    noisy_id,
    random_noise,
    vos_synthesize,
)

SCORER_NAMES = ("uncertainty", "default_score", "mahalanobis")
UNCERTAINTY_VARIANTS = ("sigmoid", "bce")
HISTORY_HEADER = "phase,epoch,step,loss_total,loss_ae,loss_clf,loss_unc,queue_occupancy"
VOS_CANDIDATES = 10000


@dataclass
class ExperimentConfig:
    """Flat experiment knobs; one attribute per dotted config key."""

    dataset: str = "synthetic"
    data_dim: int = 64
    data_classes: int = 3
    data_class_separation: float = 16.0
    data_cov_scale: float = 1.0
    data_fp_overlap: float = 0.5
    data_fp_displacement: float = 10.0
    data_n_id_train: int = 6000
    data_n_fp_train: int = 2000
    data_n_id_val: int = 2000
    data_n_fp_val: int = 700
    model_latent_dim: int = 128
    model_encoder_hidden: tuple[int, ...] = (256, 128)
    model_decoder_hidden: tuple[int, ...] = (128, 256)
    model_uncertainty_hidden: tuple[int, ...] = (256, 256)
    model_classifier_hidden: tuple[int, ...] = (128,)
    noise_alpha: float = 0.25
    noise_beta: float = 1.0
    loss_lambda: float = 1.0
    loss_variant: str = "sigmoid"
    synth_method: str = "lsvos"
    train_phase1_epochs: int = 50
    train_phase2_epochs: int = 20
    train_epoch_scale: float = 1.0
    train_lr: float = 1e-3
    train_batch_size: int = 512
    queue_capacity: int = 1000
    sample_n_per_class: int = 500
    seed: int = 0
    methods: tuple[str, ...] = SCORER_NAMES

    def validate(self) -> None:
        if not self.dataset:
            raise InputError("dataset must be 'synthetic' or a feature directory")
        if self.data_dim <= 0 or self.data_classes < 2:
            raise InputError("data.dim must be positive and data.classes at least 2")
        if not 0.0 <= self.data_fp_overlap <= 1.0:
            raise InputError(f"data.fp_overlap must be in [0, 1], got {self.data_fp_overlap}")
        for key in ("data_n_id_train", "data_n_fp_train", "data_n_id_val", "data_n_fp_val"):
            if getattr(self, key) <= 0:
                raise InputError(f"{_ATTR_TO_KEY[key]} must be positive")
        if self.model_latent_dim <= 0:
            raise InputError("model.latent_dim must be positive")
        for key in (
            "model_encoder_hidden",
            "model_decoder_hidden",
            "model_uncertainty_hidden",
            "model_classifier_hidden",
        ):
            if any(h <= 0 for h in getattr(self, key)):
                raise InputError(f"{_ATTR_TO_KEY[key]} layer widths must be positive")
        if not math.isfinite(self.noise_alpha) or self.noise_alpha < 0.0:
            raise InputError(f"noise.alpha must be finite and non-negative, got {self.noise_alpha}")
        if not math.isfinite(self.noise_beta) or self.noise_beta < 0.0:
            raise InputError(f"noise.beta must be finite and non-negative, got {self.noise_beta}")
        if not math.isfinite(self.loss_lambda) or self.loss_lambda < 0.0:
            raise InputError(f"loss.lambda must be finite and non-negative, got {self.loss_lambda}")
        if self.loss_variant not in UNCERTAINTY_VARIANTS:
            raise InputError(
                f"loss.variant must be one of {UNCERTAINTY_VARIANTS}, got {self.loss_variant!r}"
            )
        if self.synth_method not in METHODS:
            raise InputError(f"synth.method must be one of {METHODS}, got {self.synth_method!r}")
        if self.train_phase1_epochs < 0 or self.train_phase2_epochs < 0:
            raise InputError("epoch counts must be non-negative")
        if self.train_epoch_scale <= 0.0:
            raise InputError("train.epoch_scale must be positive")
        if self.train_lr <= 0.0 or self.train_batch_size <= 0:
            raise InputError("train.lr and train.batch_size must be positive")
        if self.queue_capacity <= 0 or self.sample_n_per_class <= 0:
            raise InputError("queue.capacity and sample.n_per_class must be positive")
        if not self.methods:
            raise InputError("methods must name at least one scorer")
        unknown = [m for m in self.methods if m not in SCORER_NAMES]
        if unknown:
            raise InputError(f"unknown scorer methods {unknown}; choose from {SCORER_NAMES}")
        if len(set(self.methods)) != len(self.methods):
            raise InputError("methods must not repeat")


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    value = float(text)
    return value


def _parse_hidden(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))


def _parse_methods(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _fmt_hidden(value: tuple[int, ...]) -> str:
    return ",".join(str(v) for v in value)


def _fmt_float(value: float) -> str:
    return repr(float(value))


# dotted key -> (attribute, parser, formatter)
KEY_MAP = {
    "dataset": ("dataset", str, str),
    "data.dim": ("data_dim", _parse_int, str),
    "data.classes": ("data_classes", _parse_int, str),
    "data.class_separation": ("data_class_separation", _parse_float, _fmt_float),
    "data.cov_scale": ("data_cov_scale", _parse_float, _fmt_float),
    "data.fp_overlap": ("data_fp_overlap", _parse_float, _fmt_float),
    "data.fp_displacement": ("data_fp_displacement", _parse_float, _fmt_float),
    "data.n_id_train": ("data_n_id_train", _parse_int, str),
    "data.n_fp_train": ("data_n_fp_train", _parse_int, str),
    "data.n_id_val": ("data_n_id_val", _parse_int, str),
    "data.n_fp_val": ("data_n_fp_val", _parse_int, str),
    "model.latent_dim": ("model_latent_dim", _parse_int, str),
    "model.encoder_hidden": ("model_encoder_hidden", _parse_hidden, _fmt_hidden),
    "model.decoder_hidden": ("model_decoder_hidden", _parse_hidden, _fmt_hidden),
    "model.uncertainty_hidden": ("model_uncertainty_hidden", _parse_hidden, _fmt_hidden),
    "model.classifier_hidden": ("model_classifier_hidden", _parse_hidden, _fmt_hidden),
    "noise.alpha": ("noise_alpha", _parse_float, _fmt_float),
    "noise.beta": ("noise_beta", _parse_float, _fmt_float),
    "loss.lambda": ("loss_lambda", _parse_float, _fmt_float),
    "loss.variant": ("loss_variant", str, str),
    "synth.method": ("synth_method", str, str),
    "train.phase1_epochs": ("train_phase1_epochs", _parse_int, str),
    "train.phase2_epochs": ("train_phase2_epochs", _parse_int, str),
    "train.epoch_scale": ("train_epoch_scale", _parse_float, _fmt_float),
    "train.lr": ("train_lr", _parse_float, _fmt_float),
    "train.batch_size": ("train_batch_size", _parse_int, str),
    "queue.capacity": ("queue_capacity", _parse_int, str),
    "sample.n_per_class": ("sample_n_per_class", _parse_int, str),
    "seed": ("seed", _parse_int, str),
    "methods": ("methods", _parse_methods, _fmt_hidden),
}
_ATTR_TO_KEY = {attr: key for key, (attr, _, _) in KEY_MAP.items()}


def parse_config(text: str) -> ExperimentConfig:
    """Parse "key = value" lines; '#' starts a comment, blanks ignored.

    All offending keys and values are collected before raising, so one
    error message lists every problem in the file.
    """
    values: dict[str, object] = {}
    problems: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in KEY_MAP:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        attr, parser, _ = KEY_MAP[key]
        try:
            values[attr] = parser(value)
        except (ValueError, TypeError):
            problems.append(f"line {lineno}: bad value {value!r} for key {key!r}")
    if problems:
        raise InputError("config errors: " + "; ".join(problems))
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical rendering: one key per line, sorted by dotted key."""
    lines = []
    for key in sorted(KEY_MAP):
        attr, _, fmt = KEY_MAP[key]
        lines.append(f"{key} = {fmt(getattr(cfg, attr))}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def apply_overrides(cfg: ExperimentConfig, pairs) -> ExperimentConfig:
    """New config with "dotted.key=value" strings (or a dict) applied."""
    if isinstance(pairs, dict):
        pairs = [f"{k}={v}" for k, v in pairs.items()]
    updates: dict[str, object] = {}
    problems: list[str] = []
    for pair in pairs:
        if "=" not in pair:
            problems.append(f"expected key=value, got {pair!r}")
            continue
        key, _, value = pair.partition("=")
        key = key.strip()
        if key not in KEY_MAP:
            problems.append(f"unknown key {key!r}")
            continue
        attr, parser, _ = KEY_MAP[key]
        try:
            updates[attr] = parser(value.strip())
        except (ValueError, TypeError):
            problems.append(f"bad value {value.strip()!r} for key {key!r}")
    if problems:
        raise InputError("override errors: " + "; ".join(problems))
    out = replace(cfg, **updates)
    out.validate()
    return out


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 of the canonical rendering; immune to key reordering."""
    return hashlib.sha256(format_config(cfg).encode("utf-8")).hexdigest()


def desk_preset() -> ExperimentConfig:
    """Laptop-scale run: slimmer nets, schedule scaled to 10 + 4 epochs."""
    return ExperimentConfig(
        model_latent_dim=32,
        model_encoder_hidden=(128,),
        model_decoder_hidden=(128,),
        model_uncertainty_hidden=(128, 128),
        model_classifier_hidden=(64,),
        train_epoch_scale=0.2,
    )


def effective_epochs(epochs: int, scale: float) -> int:
    """Scaled epoch count; a configured phase never drops below one epoch."""
    if epochs == 0:
        return 0
    return max(1, round(epochs * scale))


# --- manifest ------------------------------------------------------------------


@dataclass
class RunManifest:
    """Provenance sidecar: everything needed to reproduce or audit a run.

    Wall-clock time and the creation stamp vary between runs; reports,
    scores and checkpoints do not.
    """

    config_hash: str
    seed: int
    package_version: str
    numpy_version: str
    python_version: str
    checkpoint_format_version: int
    feature_format_version: int
    wall_clock_seconds: float
    outputs: dict[str, str]
    created: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        try:
            payload = json.loads(text)
            return cls(**{f.name: payload[f.name] for f in fields(cls)})
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InputError(f"malformed manifest JSON: {exc}") from exc


# --- training ------------------------------------------------------------------


@dataclass
class RunResult:
    report: EvaluationReport
    bundle: ModelBundle
    history: list[dict]
    manifest: RunManifest
    score_sets: dict[str, ScoreSet]
    out_dir: Path | None


class _Cycle:
    """Endless shuffled passes over a row matrix."""

    def __init__(self, rows: np.ndarray, rng: np.random.Generator):
        self.rows = rows
        self.rng = rng
        self.order = rng.permutation(len(rows)) if len(rows) else np.zeros(0, np.int64)
        self.pos = 0

    def take(self, n: int) -> np.ndarray:
        if len(self.rows) == 0:
            return self.rows[:0]
        picks = []
        while n > 0:
            if self.pos == len(self.order):
                self.order = self.rng.permutation(len(self.rows))
                self.pos = 0
            grab = min(n, len(self.order) - self.pos)
            picks.append(self.order[self.pos : self.pos + grab])
            self.pos += grab
            n -= grab
        return self.rows[np.concatenate(picks)]


class _Optimizer:
    """Adam wrapper that writes updated parameters back into a net."""

    def __init__(self, nets: list[nn.DenseNet], lr: float):
        self.lr = lr
        self.state = nn.init_adam([p for net in nets for p in nn.parameters(net)])

    def apply(self, nets: list[nn.DenseNet], grads: list[np.ndarray]) -> list[nn.DenseNet]:
        params = [p for net in nets for p in nn.parameters(net)]
        new_params, self.state = nn.adam_step(params, grads, self.state, lr=self.lr)
        out = []
        start = 0
        for net in nets:
            width = 2 * len(net.layers)
            out.append(nn.with_parameters(net, new_params[start : start + width]))
            start += width
        return out


def _load_datasets(cfg: ExperimentConfig):
    if cfg.dataset == "synthetic":
        spec = GeneratorSpec(
            dim=cfg.data_dim,
            num_classes=cfg.data_classes,
            class_separation=cfg.data_class_separation,
            cov_scale=cfg.data_cov_scale,
            fp_overlap=cfg.data_fp_overlap,
            fp_displacement=cfg.data_fp_displacement,
            n_id_train=cfg.data_n_id_train,
            n_fp_train=cfg.data_n_fp_train,
            n_id_val=cfg.data_n_id_val,
            n_fp_val=cfg.data_n_fp_val,
            seed=cfg.seed,
        )
        return generate_features(spec)
    root = Path(cfg.dataset)
    train_path = root / "train.vosf"
    val_path = root / "val.vosf"
    if not train_path.is_file() or not val_path.is_file():
        raise InputError(
            f"dataset directory {root} must contain train.vosf and val.vosf"
        )
    train = load_features(train_path, split="train")
    val = load_features(val_path, split="val")
    if train.dim != val.dim or train.num_classes != val.num_classes:
        raise InputError("train and val feature files disagree on dim or classes")
    return train, val


def _synthesize(
    cfg: ExperimentConfig,
    bundle: ModelBundle,
    queue: FeatureQueue,
    feats: np.ndarray,
    cls: np.ndarray,
    u_fp: np.ndarray,
    rng: np.random.Generator,
) -> SynthBatch:
    method = cfg.synth_method
    if method == "lsvos":
        spec = NoiseSpec(cfg.noise_alpha, cfg.noise_beta)
        return lsvos_synthesize(bundle.auto_encoder, feats, cls, spec, rng)
    if method == "vos":
        n_per_class = max(1, math.ceil(len(feats) / queue.num_classes))
        return vos_synthesize(queue, n_per_class, None, VOS_CANDIDATES, rng)
    if method == "linear_mix":
        return linear_mix(feats, u_fp, 0.5, rng)
    if method == "random_noise":
        return random_noise(len(feats), feats.shape[1], rng)
    if method == "noisy_id":
        return noisy_id(feats, rng)
    raise InputError(f"unknown synthesis method {method!r}")


def _train(cfg: ExperimentConfig, train_ds, rngs) -> tuple[ModelBundle, list[dict]]:
    rng_model, rng_train, rng_synth = rngs
    dim, num_classes = train_ds.dim, train_ds.num_classes
    u_id, id_cls = train_ds.select(Label.ID)
    u_fp, _ = train_ds.select(Label.FP)
    if len(u_id) == 0:
        raise InputError("training needs at least one inlier feature row")
    bundle = ModelBundle.build(
        dim,
        num_classes,
        rng_model,
        latent_dim=cfg.model_latent_dim,
        encoder_hidden=tuple(cfg.model_encoder_hidden),
        decoder_hidden=tuple(cfg.model_decoder_hidden),
        uncertainty_hidden=tuple(cfg.model_uncertainty_hidden),
        classifier_hidden=tuple(cfg.model_classifier_hidden),
    )
    queue = FeatureQueue(dim, num_classes, cfg.queue_capacity)
    opt_ae = _Optimizer([bundle.auto_encoder.encoder, bundle.auto_encoder.decoder], cfg.train_lr)
    opt_clf = _Optimizer([bundle.classifier.net], cfg.train_lr)
    opt_unc = _Optimizer([bundle.uncertainty.net], cfg.train_lr)
    fp_cycle = _Cycle(u_fp, rng_train)
    history: list[dict] = []
    schedule = (
        (1, effective_epochs(cfg.train_phase1_epochs, cfg.train_epoch_scale), 0.0),
        (2, effective_epochs(cfg.train_phase2_epochs, cfg.train_epoch_scale), cfg.loss_lambda),
    )
    step = 0
    for phase, n_epochs, lam in schedule:
        for epoch in range(n_epochs):
            order = rng_train.permutation(len(u_id))
            for start in range(0, len(order), cfg.train_batch_size):
                idx = order[start : start + cfg.train_batch_size]
                feats, cls = u_id[idx], id_cls[idx]
                queue.push_many(feats, cls)
                x_ae = queue.sample(cfg.sample_n_per_class, rng_train)
                try:
                    loss_ae, enc_g, dec_g = ae_gradients(bundle.auto_encoder, x_ae)
                    enc, dec = opt_ae.apply(
                        [bundle.auto_encoder.encoder, bundle.auto_encoder.decoder],
                        enc_g + dec_g,
                    )
                    bundle.auto_encoder.encoder = enc
                    bundle.auto_encoder.decoder = dec
                    loss_clf, clf_g = classifier_gradients(bundle.classifier, feats, cls)
                    (bundle.classifier.net,) = opt_clf.apply([bundle.classifier.net], clf_g)
                    loss_unc = 0.0
                    if lam > 0.0:
                        synth = _synthesize(cfg, bundle, queue, feats, cls, u_fp, rng_synth)
                        fp_batch = fp_cycle.take(len(feats))
                        u_ood = (
                            np.vstack([synth.vectors, fp_batch])
                            if len(fp_batch)
                            else synth.vectors
                        )
                        loss_unc, unc_g = uncertainty_gradients(
                            bundle.uncertainty, feats, u_ood, cfg.loss_variant
                        )
                        (bundle.uncertainty.net,) = opt_unc.apply(
                            [bundle.uncertainty.net], [lam * g for g in unc_g]
                        )
                    loss_total = total_loss(loss_clf, loss_ae, loss_unc, lam)
                    if not math.isfinite(loss_total):
                        raise NumericalFailure(f"non-finite total loss {loss_total}")
                except NumericalFailure as exc:
                    raise NumericalFailure(
                        f"training diverged in phase {phase}, step {step}: {exc}"
                    ) from exc
                history.append(
                    {
                        "phase": phase,
                        "epoch": epoch,
                        "step": step,
                        "loss_total": loss_total,
                        "loss_ae": loss_ae,
                        "loss_clf": loss_clf,
                        "loss_unc": loss_unc,
                        "queue_occupancy": sum(queue.occupancy()),
                    }
                )
                step += 1
        if phase == 1 and n_epochs > 0:
            bundle.auto_encoder.trained = True
    return bundle, history


# --- evaluation ----------------------------------------------------------------


def evaluate_bundle(
    bundle: ModelBundle, train_ds, val_ds, methods
) -> tuple[dict[str, ScoreSet], dict[str, float | None]]:
    """Score held-out ID vs FP rows with each configured scorer.

    Every score set follows the repo orientation (higher = more
    anomalous); max-softmax is negated accordingly.  ECE is attached to
    the scorers that expose a probability: the classifier's max softmax
    (class correctness on ID rows) and the uncertainty head's sigmoid
    (OOD decision correctness on all rows).
    """
    val_id, val_id_cls = val_ds.select(Label.ID)
    val_fp, _ = val_ds.select(Label.FP)
    if len(val_id) == 0 or len(val_fp) == 0:
        raise InputError("evaluation needs both ID and FP rows in the val split")
    rows = np.vstack([val_id, val_fp])
    is_ood = np.zeros(len(rows), dtype=bool)
    is_ood[len(val_id) :] = True
    score_sets: dict[str, ScoreSet] = {}
    ece_values: dict[str, float | None] = {}
    for method in methods:
        if method == "uncertainty":
            scores = uncertainty_score(bundle.uncertainty, rows)
            p_ood = nn.sigmoid(scores)
            conf = np.maximum(p_ood, 1.0 - p_ood)
            correct = (p_ood > 0.5) == is_ood
            ece_values[method] = ece(conf, correct)
        elif method == "default_score":
            # negated max-softmax: keeps higher = more anomalous
            scores = -default_score(bundle.classifier, rows)
            probs = softmax_probs(bundle.classifier, val_id)
            correct = probs.argmax(axis=1) == val_id_cls
            ece_values[method] = ece(probs.max(axis=1), correct)
        elif method == "mahalanobis":
            train_id, train_cls = train_ds.select(Label.ID)
            model = fit_gaussian_model(train_id, train_cls, train_ds.num_classes)
            scores = mahalanobis_score(model, rows)
            ece_values[method] = None
        else:
            raise InputError(f"unknown scorer {method!r}")
        score_sets[method] = ScoreSet(scores, is_ood, method)
    return score_sets, ece_values


# --- artifacts -----------------------------------------------------------------


def _write_history(path: Path, history: list[dict]) -> None:
    lines = [HISTORY_HEADER]
    for row in history:
        lines.append(
            f"{row['phase']},{row['epoch']},{row['step']},"
            f"{float(row['loss_total'])!r},{float(row['loss_ae'])!r},"
            f"{float(row['loss_clf'])!r},{float(row['loss_unc'])!r},"
            f"{row['queue_occupancy']}"
        )
    path.write_text("\n".join(lines) + "\n")


def _pca_rows(groups: dict[str, np.ndarray]) -> list[tuple[str, float, float]]:
    """2-D projection of all groups via SVD of the pooled matrix.

    Component signs are fixed by making each one's largest-magnitude
    loading positive, so the plot file is reproducible.
    """
    stacked = np.vstack([g for g in groups.values() if len(g)])
    centered = stacked - stacked.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[: min(2, vt.shape[0])].copy()
    for comp in comps:
        pivot = np.argmax(np.abs(comp))
        if comp[pivot] < 0:
            comp *= -1.0
    rows: list[tuple[str, float, float]] = []
    for name, block in groups.items():
        if len(block) == 0:
            continue
        proj = (block - stacked.mean(axis=0)) @ comps.T
        for point in proj:
            x = float(point[0])
            y = float(point[1]) if proj.shape[1] > 1 else 0.0
            rows.append((name, x, y))
    return rows


def _write_plot_files(
    plots_dir: Path,
    report: EvaluationReport,
    pca_groups: dict[str, np.ndarray],
) -> list[str]:
    plots_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for method, payload in report.curves.items():
        roc = payload["roc"]
        name = f"roc_{method}.csv"
        lines = ["fpr,tpr"] + [
            f"{f!r},{t!r}" for f, t in zip(roc["fpr"], roc["tpr"])
        ]
        (plots_dir / name).write_text("\n".join(lines) + "\n")
        written.append(name)
        pr = payload["pr_id"]
        name = f"pr_{method}.csv"
        lines = ["recall,precision"] + [
            f"{r!r},{p!r}" for r, p in zip(pr["recall"], pr["precision"])
        ]
        (plots_dir / name).write_text("\n".join(lines) + "\n")
        written.append(name)
        hist = payload["histogram"]
        name = f"hist_{method}.csv"
        lines = ["bin_left,bin_right,id_count,ood_count"]
        edges = hist["edges"]
        for i, (idc, oodc) in enumerate(zip(hist["id_counts"], hist["ood_counts"])):
            lines.append(f"{edges[i]!r},{edges[i + 1]!r},{idc},{oodc}")
        (plots_dir / name).write_text("\n".join(lines) + "\n")
        written.append(name)
    pca = _pca_rows(pca_groups)
    lines = ["group,x,y"] + [f"{g},{x!r},{y!r}" for g, x, y in pca]
    (plots_dir / "pca.csv").write_text("\n".join(lines) + "\n")
    written.append("pca.csv")
    return written


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Train per the config, evaluate, and (optionally) write artifacts.

    Artifacts: report.json, model.ckpt, scores.csv, config.txt,
    history.csv, model_card.json, plots/*.csv, manifest.json.  Reports,
    scores and checkpoints are byte-identical across reruns of the same
    config and seed; only the manifest carries timing.
    """
    cfg.validate()
    started = time.time()
    train_ds, val_ds = _load_datasets(cfg)
    if train_ds.num_classes < 2:
        raise InputError("training needs at least 2 classes")
    rngs = [np.random.default_rng(np.random.SeedSequence([cfg.seed, k])) for k in (1, 2, 3)]
    bundle, history = _train(cfg, train_ds, rngs)
    score_sets, ece_values = evaluate_bundle(bundle, train_ds, val_ds, cfg.methods)
    report = build_report(score_sets, config_hash(cfg), cfg.seed, ece_values)
    out_path: Path | None = None
    outputs: dict[str, str] = {}
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        (out_path / "report.json").write_text(report.to_json())
        bundle.save(out_path / "model.ckpt")
        save_scores(out_path / "scores.csv", score_sets)
        (out_path / "config.txt").write_text(format_config(cfg))
        _write_history(out_path / "history.csv", history)
        card = bundle.model_card()
        card.update(
            {
                "noise_alpha": cfg.noise_alpha,
                "noise_beta": cfg.noise_beta,
                "loss_lambda": cfg.loss_lambda,
                "synth_method": cfg.synth_method,
                "seed": cfg.seed,
            }
        )
        (out_path / "model_card.json").write_text(
            json.dumps(card, sort_keys=True, indent=2) + "\n"
        )
        val_id, _ = val_ds.select(Label.ID)
        val_fp, _ = val_ds.select(Label.FP)
        pca_groups = {"id": val_id, "fp": val_fp}
        if cfg.loss_lambda > 0.0 and bundle.auto_encoder.trained:
            train_id, train_cls = train_ds.select(Label.ID)
            head = min(len(train_id), 500)
            queue = FeatureQueue(train_ds.dim, train_ds.num_classes, cfg.queue_capacity)
            queue.push_many(train_id, train_cls)
            train_fp, _ = train_ds.select(Label.FP)
            synth = _synthesize(
                cfg,
                bundle,
                queue,
                train_id[:head],
                train_cls[:head],
                train_fp,
                np.random.default_rng(np.random.SeedSequence([cfg.seed, 4])),
            )
            pca_groups["synth"] = synth.vectors
        plot_files = _write_plot_files(out_path / "plots", report, pca_groups)
        outputs = {
            "report": "report.json",
            "checkpoint": "model.ckpt",
            "scores": "scores.csv",
            "config": "config.txt",
            "history": "history.csv",
            "model_card": "model_card.json",
            "plots": ",".join(plot_files),
        }
    import lsvos

    manifest = RunManifest(
        config_hash=config_hash(cfg),
        seed=cfg.seed,
        package_version=lsvos.__version__,
        numpy_version=np.__version__,
        python_version=platform.python_version(),
        checkpoint_format_version=1,
        feature_format_version=1,
        wall_clock_seconds=time.time() - started,
        outputs=outputs,
        created=datetime.now(timezone.utc).isoformat(),
    )
    if out_path is not None:
        (out_path / "manifest.json").write_text(manifest.to_json())
    return RunResult(report, bundle, history, manifest, score_sets, out_path)


# --- ablation ------------------------------------------------------------------


@dataclass
class AblationResult:
    rows: list[dict]
    results: list[RunResult | None]

    def to_json(self) -> str:
        return json.dumps(self.rows, sort_keys=True, indent=2) + "\n"


def sweep_from_specs(specs: list[str]) -> list[dict[str, str]]:
    """Expand "key=v1,v2,..." specs into per-run override dicts.

    Multiple specs form the cartesian product of their value lists.
    """
    axes: list[tuple[str, list[str]]] = []
    for spec in specs:
        if "=" not in spec:
            raise InputError(f"sweep spec must be key=v1,v2,..., got {spec!r}")
        key, _, values = spec.partition("=")
        key = key.strip()
        if key not in KEY_MAP:
            raise InputError(f"unknown sweep key {key!r}")
        parts = [v.strip() for v in values.split(",") if v.strip()]
        if not parts:
            raise InputError(f"sweep spec {spec!r} lists no values")
        axes.append((key, parts))
    combos: list[dict[str, str]] = [{}]
    for key, parts in axes:
        combos = [{**combo, key: value} for combo in combos for value in parts]
    return combos


def ablate(
    base_cfg: ExperimentConfig,
    sweep: list[dict[str, str]],
    out_dir=None,
) -> AblationResult:
    """One run per override set; failures are recorded, not fatal.

    Rows are keyed by the swept values so the consolidated table reads
    like the sweep spec.
    """
    if not sweep:
        raise InputError("ablation sweep must contain at least one override set")
    out_path = Path(out_dir) if out_dir is not None else None
    rows: list[dict] = []
    results: list[RunResult | None] = []
    for i, overrides in enumerate(sweep):
        row: dict = {"overrides": dict(overrides)}
        run_dir = out_path / f"run_{i:03d}" if out_path else None
        try:
            cfg = apply_overrides(base_cfg, dict(overrides))
            result = run_experiment(cfg, out_dir=run_dir)
        except LsvosError as exc:
            row["status"] = "error"
            row["error"] = str(exc)
            rows.append(row)
            results.append(None)
            continue
        row["status"] = "ok"
        row["metrics"] = {
            name: {
                "auroc": block.auroc,
                "aupr_id": block.aupr_id,
                "aupr_ood": block.aupr_ood,
                "fpr95": block.fpr95,
                "ece": block.ece,
            }
            for name, block in result.report.methods.items()
        }
        rows.append(row)
        results.append(result)
    out = AblationResult(rows, results)
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        (out_path / "ablation.json").write_text(out.to_json())
        _write_ablation_csv(out_path / "ablation.csv", rows, base_cfg.methods)
    return out


def _write_ablation_csv(path: Path, rows: list[dict], methods) -> None:
    keys = sorted({k for row in rows for k in row["overrides"]})
    header = keys + ["status"]
    for method in methods:
        header += [f"{method}_auroc", f"{method}_aupr_id", f"{method}_fpr95"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            line = [row["overrides"].get(k, "") for k in keys] + [row["status"]]
            for method in methods:
                block = row.get("metrics", {}).get(method)
                if block is None:
                    line += ["", "", ""]
                else:
                    line += [
                        repr(float(block["auroc"])),
                        repr(float(block["aupr_id"])),
                        repr(float(block["fpr95"])),
                    ]
            writer.writerow(line)
