import numpy as np
import pytest

from lsvos import features, models, nn, synthesis
from lsvos.errors import InputError, NotReadyError
from lsvos.features import FeatureQueue, FeatureRecord, Label
from lsvos.synthesis import NoiseSpec


def _trained_flagged_ae(dim=3, num_classes=2, seed=0):
    ae = models.AutoEncoder.build(
        dim, num_classes, nn.make_rng(seed),
        latent_dim=4, encoder_hidden=(8,), decoder_hidden=(8,),
    )
    ae.trained = True
    return ae


def _filled_queue(dim=2, num_classes=2, per_class=400, seed=0, scale=1.0):
    q = FeatureQueue(dim=dim, num_classes=num_classes, capacity_per_class=per_class)
    rng = nn.make_rng(seed)
    for cid in range(num_classes):
        center = np.full(dim, 3.0 * cid)
        q.push_many(center + scale * rng.normal(size=(per_class, dim)),
                    np.full(per_class, cid))
    return q


class TestNoiseSpec:
    def test_defaults(self):
        spec = NoiseSpec()
        assert spec.alpha == 0.25 and spec.beta == 1.0

    def test_rejects_negative_or_non_finite(self):
        with pytest.raises(InputError):
            NoiseSpec(alpha=-0.1)
        with pytest.raises(InputError):
            NoiseSpec(beta=-1.0)
        with pytest.raises(InputError):
            NoiseSpec(alpha=np.inf)

    def test_components_within_band(self):
        rng = nn.make_rng(1)
        noise = synthesis.latent_noise((1000, 16), NoiseSpec(0.25, 1.0), rng)
        assert noise.min() >= 0.25
        assert noise.max() <= 1.25

    def test_band_scales_with_beta(self):
        rng = nn.make_rng(2)
        noise = synthesis.latent_noise((1000, 8), NoiseSpec(0.5, 4.0), rng)
        assert noise.min() >= 2.0
        assert noise.max() <= 6.0

    def test_mean_norm_increases_with_beta(self):
        norms = []
        for beta in (0.1, 1.0, 10.0):
            rng = nn.make_rng(3)
            noise = synthesis.latent_noise((1000, 32), NoiseSpec(0.25, beta), rng)
            norms.append(np.linalg.norm(noise, axis=1).mean())
        assert norms[0] < norms[1] < norms[2]

    def test_mean_norm_matches_theory(self):
        # E||o|| ~ beta * sqrt(D' * E(alpha + U)^2), E(alpha+U)^2 = a^2 + a + 1/3
        alpha, beta, dim = 0.25, 2.0, 64
        rng = nn.make_rng(4)
        noise = synthesis.latent_noise((4000, dim), NoiseSpec(alpha, beta), rng)
        expected = beta * np.sqrt(dim * (alpha**2 + alpha + 1.0 / 3.0))
        assert np.linalg.norm(noise, axis=1).mean() == pytest.approx(expected, rel=0.02)


class TestLsvosSynthesize:
    def test_untrained_ae_not_ready(self):
        ae = _trained_flagged_ae()
        ae.trained = False
        with pytest.raises(NotReadyError):
            synthesis.lsvos_synthesize(
                ae, np.zeros((2, 3)), [0, 1], NoiseSpec(), nn.make_rng(0)
            )

    def test_beta_zero_is_bitwise_reconstruction(self):
        ae = _trained_flagged_ae()
        rng = nn.make_rng(5)
        u = rng.normal(size=(10, 3))
        cids = rng.integers(0, 2, size=10)
        batch = synthesis.lsvos_synthesize(
            ae, u, cids, NoiseSpec(alpha=0.25, beta=0.0), nn.make_rng(6)
        )
        recon = models.reconstruct(ae, features.append_one_hot(u, cids, 2))
        assert np.array_equal(batch.vectors, recon)

    def test_output_shape_and_method(self):
        ae = _trained_flagged_ae()
        rng = nn.make_rng(7)
        batch = synthesis.lsvos_synthesize(
            ae, rng.normal(size=(6, 3)), rng.integers(0, 2, size=6), NoiseSpec(), rng
        )
        assert batch.vectors.shape == (6, 3)
        assert batch.method == "lsvos"
        assert batch.provenance == {"alpha": 0.25, "beta": 1.0}
        np.testing.assert_array_equal(batch.class_ids is not None, True)

    def test_deterministic_under_fixed_seed(self):
        ae = _trained_flagged_ae()
        u = nn.make_rng(8).normal(size=(5, 3))
        cids = [0, 1, 0, 1, 0]
        a = synthesis.lsvos_synthesize(ae, u, cids, NoiseSpec(), nn.make_rng(9))
        b = synthesis.lsvos_synthesize(ae, u, cids, NoiseSpec(), nn.make_rng(9))
        assert np.array_equal(a.vectors, b.vectors)

    def test_noise_pushes_codes_off_manifold(self):
        ae = _trained_flagged_ae()
        rng = nn.make_rng(10)
        u = rng.normal(size=(4, 3))
        cids = [0, 0, 1, 1]
        batch = synthesis.lsvos_synthesize(ae, u, cids, NoiseSpec(0.25, 5.0), rng)
        recon = models.reconstruct(ae, features.append_one_hot(u, cids, 2))
        assert not np.allclose(batch.vectors, recon)

    def test_misaligned_classes_rejected(self):
        ae = _trained_flagged_ae()
        with pytest.raises(InputError):
            synthesis.lsvos_synthesize(
                ae, np.zeros((3, 3)), [0, 1], NoiseSpec(), nn.make_rng(0)
            )


class TestVosSynthesize:
    def test_row_count_and_class_blocks(self):
        q = _filled_queue(num_classes=3)
        batch = synthesis.vos_synthesize(q, 50, None, 400, nn.make_rng(1))
        assert batch.vectors.shape == (150, 2)
        np.testing.assert_array_equal(
            batch.class_ids, np.repeat(np.arange(3), 50)
        )

    def test_kept_are_lowest_likelihood_prefix(self):
        # same rng stream: keeping everything sorts candidates by rising
        # likelihood, and a smaller keep must be exactly its prefix
        q = _filled_queue()
        small = synthesis.vos_synthesize(q, 10, None, 300, nn.make_rng(2))
        full = synthesis.vos_synthesize(q, 300, None, 300, nn.make_rng(2))
        for cid in range(2):
            kept = small.vectors[small.class_ids == cid]
            ranked = full.vectors[full.class_ids == cid]
            np.testing.assert_array_equal(kept, ranked[:10])

    def test_one_dimensional_tail_cutoff(self):
        # keeping the lowest-likelihood 5% of a unit Gaussian leaves only
        # samples beyond roughly the central 95% band (|x| > ~1.96)
        q = FeatureQueue(dim=1, num_classes=1, capacity_per_class=3000)
        rng = nn.make_rng(3)
        q.push_many(rng.normal(size=(3000, 1)), np.zeros(3000, dtype=int))
        batch = synthesis.vos_synthesize(q, 5000, 0.05, 100_000, nn.make_rng(4))
        kept = np.abs(batch.vectors[:, 0])
        assert kept.min() > 1.8
        assert kept.max() > 3.0

    def test_quantile_guard(self):
        q = _filled_queue()
        with pytest.raises(InputError):
            synthesis.vos_synthesize(q, 100, 0.05, 1000, nn.make_rng(0))
        with pytest.raises(InputError):
            synthesis.vos_synthesize(q, 200, None, 100, nn.make_rng(0))

    def test_empty_class_not_ready(self):
        q = FeatureQueue(dim=2, num_classes=2)
        q.push(FeatureRecord(np.zeros(2), 0, Label.ID))
        with pytest.raises(NotReadyError):
            synthesis.vos_synthesize(q, 5, None, 50, nn.make_rng(0))

    def test_singular_covariance_regularized_with_warning(self):
        q = FeatureQueue(dim=2, num_classes=1, capacity_per_class=50)
        q.push_many(np.ones((30, 2)), np.zeros(30, dtype=int))
        with pytest.warns(UserWarning, match="regulariz"):
            batch = synthesis.vos_synthesize(q, 5, None, 100, nn.make_rng(5))
        assert np.all(np.isfinite(batch.vectors))

    def test_deterministic_under_fixed_seed(self):
        q = _filled_queue()
        a = synthesis.vos_synthesize(q, 20, None, 200, nn.make_rng(6))
        b = synthesis.vos_synthesize(q, 20, None, 200, nn.make_rng(6))
        assert np.array_equal(a.vectors, b.vectors)


class TestLinearMix:
    def test_midpoint_example(self):
        batch = synthesis.linear_mix(
            np.array([[2.0, 0.0]]), np.array([[0.0, 2.0]]), 0.5, nn.make_rng(0)
        )
        np.testing.assert_array_equal(batch.vectors, [[1.0, 1.0]])

    def test_weight_one_returns_inliers(self):
        rng = nn.make_rng(1)
        u_id = rng.normal(size=(5, 3))
        batch = synthesis.linear_mix(u_id, rng.normal(size=(4, 3)), 1.0, rng)
        np.testing.assert_allclose(batch.vectors, u_id)

    def test_row_count_follows_inliers(self):
        rng = nn.make_rng(2)
        batch = synthesis.linear_mix(
            rng.normal(size=(7, 2)), rng.normal(size=(3, 2)), 0.5, rng
        )
        assert batch.vectors.shape == (7, 2)

    def test_empty_fp_not_ready(self):
        with pytest.raises(NotReadyError):
            synthesis.linear_mix(np.ones((2, 2)), np.zeros((0, 2)), 0.5, nn.make_rng(0))

    def test_bad_weight_rejected(self):
        with pytest.raises(InputError):
            synthesis.linear_mix(np.ones((2, 2)), np.ones((2, 2)), 1.5, nn.make_rng(0))


class TestRandomNoise:
    def test_clt_moments(self):
        batch = synthesis.random_noise(1000, 1000, nn.make_rng(3))
        tol = 4.0 / np.sqrt(1_000_000)
        assert abs(batch.vectors.mean()) < tol
        assert abs(batch.vectors.var() - 1.0) < tol

    def test_fixed_seed_bit_exact(self):
        a = synthesis.random_noise(10, 4, nn.make_rng(4))
        b = synthesis.random_noise(10, 4, nn.make_rng(4))
        assert np.array_equal(a.vectors, b.vectors)

    def test_rejects_bad_shape(self):
        with pytest.raises(InputError):
            synthesis.random_noise(0, 4, nn.make_rng(0))


class TestNoisyId:
    def test_shift_bounds_and_mean(self):
        rng = nn.make_rng(5)
        u_id = rng.normal(size=(200, 50))
        batch = synthesis.noisy_id(u_id, rng)
        diff = batch.vectors - u_id
        assert np.all(diff >= 0.0)
        assert np.all(diff < 1.0)
        assert diff.mean() == pytest.approx(0.5, abs=0.01)

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            synthesis.noisy_id(np.zeros((0, 3)), nn.make_rng(0))


class TestPersistence:
    def test_synth_batch_saved_as_outlier_records(self, tmp_path):
        rng = nn.make_rng(6)
        batch = synthesis.random_noise(8, 3, rng)
        ds = synthesis.as_dataset(batch, num_classes=2)
        assert all(r.label == Label.SYNTH_OUTLIER for r in ds.records)
        path = tmp_path / "synth.vosf"
        features.save_features(path, ds)
        back = features.load_features(path)
        assert all(r.label == Label.SYNTH_OUTLIER for r in back.records)
        assert len(back.records) == 8
