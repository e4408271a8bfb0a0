import json
import math

import numpy as np
import pytest

import lsvos.nn as nn
from lsvos.errors import InputError, NumericalFailure
from lsvos.features import Label, save_features
from lsvos.models import ModelBundle
from lsvos.pipeline import (
    ExperimentConfig,
    RunManifest,
    ablate,
    apply_overrides,
    config_hash,
    desk_preset,
    effective_epochs,
    evaluate_bundle,
    format_config,
    parse_config,
    run_experiment,
    sweep_from_specs,
)


def micro_cfg(**overrides):
    base = dict(
        data_dim=8,
        data_classes=3,
        data_n_id_train=400,
        data_n_fp_train=150,
        data_n_id_val=200,
        data_n_fp_val=100,
        model_latent_dim=8,
        model_encoder_hidden=(32,),
        model_decoder_hidden=(32,),
        model_uncertainty_hidden=(32,),
        model_classifier_hidden=(16,),
        train_phase1_epochs=2,
        train_phase2_epochs=2,
        train_batch_size=128,
        queue_capacity=300,
        sample_n_per_class=60,
        seed=11,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfig:
    def test_format_parse_round_trip(self):
        cfg = micro_cfg(noise_beta=2.5, loss_lambda=0.25, methods=("uncertainty",))
        assert parse_config(format_config(cfg)) == cfg

    def test_parse_ignores_comments_and_blanks(self):
        cfg = parse_config(
            "# experiment\n\nseed = 9   # tail comment\nloss.lambda=2\n"
        )
        assert cfg.seed == 9
        assert cfg.loss_lambda == 2.0

    def test_parse_collects_all_unknown_keys(self):
        with pytest.raises(InputError) as err:
            parse_config("seed = 1\nbogus.key = 2\nanother = x\n")
        assert "bogus.key" in str(err.value)
        assert "another" in str(err.value)

    def test_parse_reports_bad_values_with_key(self):
        with pytest.raises(InputError) as err:
            parse_config("train.batch_size = soon\n")
        assert "train.batch_size" in str(err.value)
        assert "soon" in str(err.value)

    def test_parse_last_duplicate_wins(self):
        cfg = parse_config("seed = 1\nseed = 5\n")
        assert cfg.seed == 5

    def test_hash_stable_under_reordering(self):
        text = format_config(micro_cfg())
        lines = [ln for ln in text.splitlines() if ln]
        shuffled = "\n".join(lines[::-1]) + "\n"
        assert config_hash(parse_config(shuffled)) == config_hash(parse_config(text))

    def test_hash_changes_with_value(self):
        assert config_hash(micro_cfg(seed=1)) != config_hash(micro_cfg(seed=2))

    def test_apply_overrides(self):
        cfg = apply_overrides(micro_cfg(), ["loss.lambda=2.5", "noise.beta=0"])
        assert cfg.loss_lambda == 2.5
        assert cfg.noise_beta == 0.0

    def test_apply_overrides_rejects_unknown_key(self):
        with pytest.raises(InputError) as err:
            apply_overrides(micro_cfg(), ["nope=1"])
        assert "nope" in str(err.value)

    def test_empty_overrides_match_base_exactly(self):
        base = micro_cfg()
        assert apply_overrides(base, []) == base
        assert config_hash(apply_overrides(base, [])) == config_hash(base)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"methods": ("nonsense",)},
            {"methods": ("uncertainty", "uncertainty")},
            {"methods": ()},
            {"loss_variant": "focal"},
            {"loss_lambda": -1.0},
            {"synth_method": "magic"},
            {"train_batch_size": 0},
            {"data_fp_overlap": 1.5},
            {"train_phase1_epochs": -1},
            {"train_epoch_scale": 0.0},
            {"model_encoder_hidden": (64, 0)},
        ],
    )
    def test_validate_rejects(self, overrides):
        with pytest.raises(InputError):
            micro_cfg(**overrides).validate()

    def test_desk_preset_is_valid_and_scaled(self):
        cfg = desk_preset()
        cfg.validate()
        assert effective_epochs(cfg.train_phase1_epochs, cfg.train_epoch_scale) == 10
        assert effective_epochs(cfg.train_phase2_epochs, cfg.train_epoch_scale) == 4

    def test_effective_epochs_floor_and_zero(self):
        assert effective_epochs(0, 0.2) == 0
        assert effective_epochs(1, 0.01) == 1
        assert effective_epochs(50, 1.0) == 50


class TestSweepSpecs:
    def test_single_axis(self):
        combos = sweep_from_specs(["loss.lambda=0.1,0.5,1"])
        assert combos == [
            {"loss.lambda": "0.1"},
            {"loss.lambda": "0.5"},
            {"loss.lambda": "1"},
        ]

    def test_two_axes_cartesian(self):
        combos = sweep_from_specs(["noise.beta=1,2", "noise.alpha=0,0.25"])
        assert len(combos) == 4
        assert {"noise.beta": "2", "noise.alpha": "0.25"} in combos

    def test_rejects_unknown_key_and_empty_values(self):
        with pytest.raises(InputError):
            sweep_from_specs(["bogus=1,2"])
        with pytest.raises(InputError):
            sweep_from_specs(["loss.lambda="])
        with pytest.raises(InputError):
            sweep_from_specs(["loss.lambda"])


class TestRunExperiment:
    def test_report_covers_all_methods(self):
        res = run_experiment(micro_cfg())
        assert set(res.report.methods) == {"uncertainty", "default_score", "mahalanobis"}
        assert res.report.n_id == 200
        assert res.report.n_ood == 100
        assert res.report.config_hash == config_hash(micro_cfg())

    def test_history_schedule_and_queue_occupancy(self):
        cfg = micro_cfg()
        res = run_experiment(cfg)
        steps_per_epoch = math.ceil(cfg.data_n_id_train / cfg.train_batch_size)
        assert len(res.history) == 4 * steps_per_epoch
        assert {row["phase"] for row in res.history} == {1, 2}
        occ = [row["queue_occupancy"] for row in res.history]
        assert all(b >= a for a, b in zip(occ, occ[1:]))
        # four epochs re-push the whole train split each time
        cap = cfg.queue_capacity * cfg.data_classes
        assert occ[-1] == min(cap, 4 * cfg.data_n_id_train)
        phase1 = [row for row in res.history if row["phase"] == 1]
        assert all(row["loss_unc"] == 0.0 for row in phase1)

    def test_artifacts_written(self, tmp_path):
        cfg = micro_cfg()
        res = run_experiment(cfg, out_dir=tmp_path / "run")
        root = tmp_path / "run"
        for name in (
            "report.json",
            "model.ckpt",
            "scores.csv",
            "config.txt",
            "history.csv",
            "model_card.json",
            "manifest.json",
        ):
            assert (root / name).is_file(), name
        for method in cfg.methods:
            assert (root / "plots" / f"roc_{method}.csv").is_file()
            assert (root / "plots" / f"pr_{method}.csv").is_file()
            assert (root / "plots" / f"hist_{method}.csv").is_file()
        pca = (root / "plots" / "pca.csv").read_text().splitlines()
        assert pca[0] == "group,x,y"
        groups = {line.split(",")[0] for line in pca[1:]}
        assert groups == {"id", "fp", "synth"}
        manifest = RunManifest.from_json((root / "manifest.json").read_text())
        assert manifest.config_hash == res.report.config_hash
        assert manifest.wall_clock_seconds >= 0.0
        card = json.loads((root / "model_card.json").read_text())
        assert card["feature_dim"] == 8
        assert card["loss_lambda"] == cfg.loss_lambda

    def test_reruns_are_byte_identical_except_manifest(self, tmp_path):
        cfg = micro_cfg()
        run_experiment(cfg, out_dir=tmp_path / "a")
        run_experiment(cfg, out_dir=tmp_path / "b")
        for name in ("report.json", "model.ckpt", "scores.csv", "history.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b, name
        ma = RunManifest.from_json((tmp_path / "a" / "manifest.json").read_text())
        mb = RunManifest.from_json((tmp_path / "b" / "manifest.json").read_text())
        assert ma.config_hash == mb.config_hash
        assert ma.seed == mb.seed

    def test_different_seed_changes_results(self):
        a = run_experiment(micro_cfg(seed=1))
        b = run_experiment(micro_cfg(seed=2))
        assert a.report.to_json() != b.report.to_json()

    def test_lambda_zero_skips_uncertainty_entirely(self):
        cfg = micro_cfg(loss_lambda=0.0)
        res = run_experiment(cfg)
        assert all(row["loss_unc"] == 0.0 for row in res.history)
        fresh = ModelBundle.build(
            cfg.data_dim,
            cfg.data_classes,
            np.random.default_rng(np.random.SeedSequence([cfg.seed, 1])),
            latent_dim=cfg.model_latent_dim,
            encoder_hidden=cfg.model_encoder_hidden,
            decoder_hidden=cfg.model_decoder_hidden,
            uncertainty_hidden=cfg.model_uncertainty_hidden,
            classifier_hidden=cfg.model_classifier_hidden,
        )
        trained = nn.parameters(res.bundle.uncertainty.net)
        untouched = nn.parameters(fresh.uncertainty.net)
        assert all(np.array_equal(a, b) for a, b in zip(trained, untouched))

    def test_untrained_head_scores_at_chance(self):
        # No phase 2 and fully overlapping FPs: nothing separates the
        # classes, so the raw head must sit at AUROC ~ 0.5.
        cfg = micro_cfg(
            train_phase2_epochs=0,
            data_fp_overlap=1.0,
            data_n_id_val=1000,
            data_n_fp_val=1000,
        )
        res = run_experiment(cfg)
        assert abs(res.report.methods["uncertainty"].auroc - 0.5) < 0.05

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_names_phase_and_step(self):
        with pytest.raises(NumericalFailure) as err:
            run_experiment(micro_cfg(train_lr=1e200))
        assert "phase" in str(err.value)
        assert "step" in str(err.value)

    def test_dataset_directory_mode(self, tmp_path):
        from lsvos.datagen import GeneratorSpec, generate_features

        spec = GeneratorSpec(
            dim=8,
            num_classes=3,
            n_id_train=300,
            n_fp_train=120,
            n_id_val=150,
            n_fp_val=80,
            seed=3,
        )
        train, val = generate_features(spec)
        save_features(tmp_path / "train.vosf", train)
        save_features(tmp_path / "val.vosf", val)
        cfg = micro_cfg(dataset=str(tmp_path))
        res = run_experiment(cfg)
        assert res.report.n_id == 150
        assert res.report.n_ood == 80

    def test_dataset_directory_missing_files(self, tmp_path):
        with pytest.raises(InputError) as err:
            run_experiment(micro_cfg(dataset=str(tmp_path)))
        assert "train.vosf" in str(err.value)

    def test_methods_subset_respected(self):
        res = run_experiment(micro_cfg(methods=("mahalanobis",)))
        assert set(res.report.methods) == {"mahalanobis"}
        assert res.report.methods["mahalanobis"].ece is None

    @pytest.mark.parametrize("method", ["vos", "linear_mix", "random_noise", "noisy_id"])
    def test_competitor_synthesis_methods_run(self, method):
        res = run_experiment(micro_cfg(synth_method=method))
        assert set(res.report.methods) == {"uncertainty", "default_score", "mahalanobis"}

    def test_bce_variant_runs(self):
        res = run_experiment(micro_cfg(loss_variant="bce"))
        phase2 = [row for row in res.history if row["phase"] == 2]
        # bce losses are unbounded below zero is wrong: they are positive
        assert all(row["loss_unc"] > 0.0 for row in phase2)

    def test_sigmoid_variant_loss_bounded(self):
        res = run_experiment(micro_cfg())
        phase2 = [row for row in res.history if row["phase"] == 2]
        assert all(-2.0 <= row["loss_unc"] < 0.0 for row in phase2)


class TestEvaluateBundle:
    def test_ece_attachment(self):
        res = run_experiment(micro_cfg())
        assert res.report.methods["uncertainty"].ece is not None
        assert res.report.methods["default_score"].ece is not None
        assert res.report.methods["mahalanobis"].ece is None

    def test_orientation_is_uniform(self):
        res = run_experiment(micro_cfg())
        for block in res.report.methods.values():
            assert block.orientation == "higher=more_anomalous"

    def test_requires_both_populations(self):
        from lsvos.datagen import GeneratorSpec, generate_features
        from lsvos.features import FeatureDataset

        cfg = micro_cfg()
        spec = GeneratorSpec(
            dim=8, num_classes=3, n_id_train=60, n_fp_train=30,
            n_id_val=30, n_fp_val=20, seed=0,
        )
        train, val = generate_features(spec)
        id_only = FeatureDataset(
            8, 3, val.class_names,
            [r for r in val.records if r.label == Label.ID], "val",
        )
        res = run_experiment(cfg)
        with pytest.raises(InputError):
            evaluate_bundle(res.bundle, train, id_only, ("mahalanobis",))


class TestAblate:
    def test_sweep_runs_and_tables(self, tmp_path):
        base = micro_cfg(train_phase1_epochs=1, train_phase2_epochs=1)
        sweep = sweep_from_specs(["loss.lambda=0.5,2"])
        out = ablate(base, sweep, out_dir=tmp_path)
        assert [row["status"] for row in out.rows] == ["ok", "ok"]
        assert out.rows[0]["overrides"] == {"loss.lambda": "0.5"}
        assert "uncertainty" in out.rows[0]["metrics"]
        table = json.loads((tmp_path / "ablation.json").read_text())
        assert len(table) == 2
        csv_lines = (tmp_path / "ablation.csv").read_text().splitlines()
        assert csv_lines[0].startswith("loss.lambda,status")
        assert "uncertainty_auroc" in csv_lines[0]
        assert len(csv_lines) == 3
        assert (tmp_path / "run_000" / "report.json").is_file()

    def test_failures_recorded_without_stopping(self, tmp_path):
        base = micro_cfg(train_phase1_epochs=1, train_phase2_epochs=1)
        sweep = [{"data.fp_overlap": "1.5"}, {"loss.lambda": "0.5"}]
        out = ablate(base, sweep, out_dir=tmp_path)
        assert out.rows[0]["status"] == "error"
        assert "fp_overlap" in out.rows[0]["error"]
        assert out.rows[1]["status"] == "ok"
        csv_lines = (tmp_path / "ablation.csv").read_text().splitlines()
        assert len(csv_lines) == 3

    def test_empty_sweep_rejected(self):
        with pytest.raises(InputError):
            ablate(micro_cfg(), [])

    def test_empty_override_row_matches_base_run(self):
        base = micro_cfg(train_phase1_epochs=1, train_phase2_epochs=1)
        out = ablate(base, [{}])
        direct = run_experiment(base)
        assert out.rows[0]["status"] == "ok"
        assert out.results[0].report.to_json() == direct.report.to_json()
