"""Command-line surface: generate, train, evaluate, ablate, report.

All plotting output stays data-only (CSV of curve points); rendering is
left to external tools.  The default output root is the LSVOS_OUT
environment variable, falling back to ./lsvos_out.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .datagen import GeneratorSpec, generate_features, generate_scenes
from .errors import InputError, LsvosError
from .features import Label, load_features, save_features
from .geometry import save_scene
from .metrics import EvaluationReport, build_report
from .models import ModelBundle
from .pipeline import (
    ablate,
    apply_overrides,
    config_hash,
    desk_preset,
    evaluate_bundle,
    format_config,
    load_config,
    run_experiment,
    sweep_from_specs,
)

ENV_OUT = "LSVOS_OUT"


def _output_root() -> Path:
    return Path(os.environ.get(ENV_OUT, "lsvos_out"))


def _resolve_out(flag_value: str | None, default_name: str) -> Path:
    return Path(flag_value) if flag_value else _output_root() / default_name


def _base_config(args) -> "object":
    cfg = load_config(args.config) if args.config else desk_preset()
    return apply_overrides(cfg, args.set or [])


def render_table(report: EvaluationReport) -> str:
    """Fixed-width methods x metrics table; '-' for absent ECE."""
    header = f"{'method':<16}{'AUROC':>9}{'AUPR-ID':>9}{'AUPR-OOD':>10}{'FPR95':>9}{'ECE':>9}"
    lines = [header]
    for name in sorted(report.methods):
        m = report.methods[name]
        ece_txt = f"{m.ece:>9.4f}" if m.ece is not None else f"{'-':>9}"
        lines.append(
            f"{name:<16}{m.auroc:>9.4f}{m.aupr_id:>9.4f}"
            f"{m.aupr_ood:>10.4f}{m.fpr95:>9.4f}{ece_txt}"
        )
    return "\n".join(lines)


def cmd_generate(args) -> int:
    spec = GeneratorSpec(
        dim=args.dim,
        num_classes=args.classes,
        fp_overlap=args.fp_overlap,
        fp_displacement=args.fp_displacement,
        n_id_train=args.n_id_train,
        n_fp_train=args.n_fp_train,
        n_id_val=args.n_id_val,
        n_fp_val=args.n_fp_val,
        seed=args.seed,
    )
    out = _resolve_out(args.out, "generate")
    out.mkdir(parents=True, exist_ok=True)
    train, val = generate_features(spec)
    save_features(out / "train.vosf", train)
    save_features(out / "val.vosf", val)
    scenes_dir = out / "scenes"
    scenes_dir.mkdir(exist_ok=True)
    scenes = generate_scenes(args.scenes, args.boxes, args.jitter, args.seed)
    for i, scene in enumerate(scenes):
        save_scene(scenes_dir / f"scene_{i:03d}.csv", scene.preds, scene.gts)
    for split, ds in (("train", train), ("val", val)):
        counts = ds.counts()
        print(f"{split}: {len(ds.records)} rows (ID {counts['ID']}, FP {counts['FP']})")
    boxes = sum(len(s.preds) for s in scenes)
    print(f"scenes: {len(scenes)} files, {boxes} predictions")
    print(f"wrote {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _base_config(args)
    if args.dry_run:
        print("config ok")
        print(format_config(cfg), end="")
        return 0
    out = _resolve_out(args.out, f"run-{config_hash(cfg)[:8]}")
    result = run_experiment(cfg, out_dir=out)
    print(render_table(result.report))
    print(f"wrote {out}")
    return 0


def cmd_evaluate(args) -> int:
    if args.run:
        report_path = Path(args.run) / "report.json"
        if not report_path.is_file():
            raise InputError(f"no report.json under {args.run}")
        report = EvaluationReport.from_json(report_path.read_text())
    elif args.checkpoint and args.data:
        bundle = ModelBundle.load(args.checkpoint)
        data = Path(args.data)
        train = load_features(data / "train.vosf", split="train")
        val = load_features(data / "val.vosf", split="val")
        methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
        score_sets, ece_values = evaluate_bundle(bundle, train, val, methods)
        report = build_report(score_sets, "recomputed", 0, ece_values)
    else:
        raise InputError("evaluate needs --run DIR, or --checkpoint and --data")
    print(render_table(report))
    return 0


def cmd_ablate(args) -> int:
    base = _base_config(args)
    sweep = sweep_from_specs(args.sweep)
    out = _resolve_out(args.out, "ablation")
    result = ablate(base, sweep, out_dir=out)
    keys = sorted({k for row in result.rows for k in row["overrides"]})
    method_names = list(base.methods)
    header = "".join(f"{k:>24}" for k in keys) + f"{'status':>9}"
    header += "".join(f"{m + '_auroc':>22}" for m in method_names)
    print(header)
    failures = 0
    for row in result.rows:
        line = "".join(f"{row['overrides'].get(k, ''):>24}" for k in keys)
        line += f"{row['status']:>9}"
        if row["status"] == "ok":
            for m in method_names:
                line += f"{row['metrics'][m]['auroc']:>22.4f}"
        else:
            failures += 1
            line += "".join(f"{'-':>22}" for _ in method_names)
        print(line)
    print(f"wrote {out}")
    if failures:
        print(f"{failures} of {len(result.rows)} runs failed", file=sys.stderr)
        return 1
    return 0


def cmd_report(args) -> int:
    report_path = Path(args.run) / "report.json"
    if not report_path.is_file():
        raise InputError(f"no report.json under {args.run}")
    report = EvaluationReport.from_json(report_path.read_text())
    print(render_table(report))
    print(
        f"counts: {report.n_id} ID / {report.n_ood} OOD; "
        f"seed {report.seed}; config {report.config_hash[:12]}"
    )
    return 0


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="experiment config file (default: desk preset)")
    sub.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a dotted config key (repeatable)",
    )
    sub.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsvos",
        description="Latent-space virtual outlier synthesis harness",
    )
    subs = parser.add_subparsers(dest="subcommand", required=True)

    gen = subs.add_parser("generate", help="write synthetic feature and scene files")
    gen.add_argument("--preset", choices=["desk"], default="desk")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--dim", type=int, default=64)
    gen.add_argument("--classes", type=int, default=3)
    gen.add_argument("--fp-overlap", type=float, default=0.5)
    gen.add_argument("--fp-displacement", type=float, default=10.0)
    gen.add_argument("--n-id-train", type=int, default=6000)
    gen.add_argument("--n-fp-train", type=int, default=2000)
    gen.add_argument("--n-id-val", type=int, default=2000)
    gen.add_argument("--n-fp-val", type=int, default=700)
    gen.add_argument("--scenes", type=int, default=5)
    gen.add_argument("--boxes", type=int, default=8)
    gen.add_argument("--jitter", type=float, default=0.2)
    gen.add_argument("--out", help="output directory")
    gen.set_defaults(func=cmd_generate)

    train = subs.add_parser("train", help="run the two-phase training pipeline")
    _add_config_flags(train)
    train.add_argument(
        "--dry-run",
        action="store_true",
        help="validate the config and exit without training",
    )
    train.set_defaults(func=cmd_train)

    ev = subs.add_parser("evaluate", help="print the metric table for a run")
    ev.add_argument("--run", help="run directory containing report.json")
    ev.add_argument("--checkpoint", help="model checkpoint to score")
    ev.add_argument("--data", help="feature directory with train.vosf and val.vosf")
    ev.add_argument(
        "--methods",
        default="uncertainty,default_score,mahalanobis",
        help="comma-separated scorers for --checkpoint mode",
    )
    ev.set_defaults(func=cmd_evaluate)

    ab = subs.add_parser("ablate", help="sweep config overrides and tabulate")
    _add_config_flags(ab)
    ab.add_argument(
        "--sweep",
        action="append",
        required=True,
        metavar="KEY=V1,V2,...",
        help="sweep axis (repeatable; multiple axes form a product)",
    )
    ab.set_defaults(func=cmd_ablate)

    rep = subs.add_parser("report", help="render a stored report.json")
    rep.add_argument("--run", required=True, help="run directory")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LsvosError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
