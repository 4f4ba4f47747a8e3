import numpy as np
import pytest

from xspect.core import Image, Rng
from xspect.discrepancy import (
    EmbeddingSpec,
    FACTOR_HI,
    FACTOR_LO,
    PartScaling,
    apply_part_scaling,
    embed,
    pca2d,
    quantize_factor,
    run_experiment,
    synthetic_images,
)


def grid_image(channels=3, height=12, width=6, seed=0):
    return synthetic_images(1, channels, height, width, seed)[0]


class TestPartScaling:
    def test_identity_factors(self):
        img = grid_image()
        out = apply_part_scaling(img, PartScaling(np.ones((4, 3))))
        assert np.array_equal(out.pixels, img.pixels)

    def test_halving_one_band(self):
        img = grid_image(height=8)
        factors = np.ones((2, 3))
        factors[0] = 0.5
        out = apply_part_scaling(img, PartScaling(factors))
        assert np.array_equal(out.pixels[:, :4, :], img.pixels[:, :4, :] * 0.5)
        assert np.array_equal(out.pixels[:, 4:, :], img.pixels[:, 4:, :])

    def test_remainder_rows_go_to_last_band(self):
        img = grid_image(height=7)
        factors = np.ones((3, 3))
        factors[2] = 0.5
        out = apply_part_scaling(img, PartScaling(factors))
        # bands are rows [0,2), [2,4), [4,7)
        assert np.array_equal(out.pixels[:, :4, :], img.pixels[:, :4, :])
        assert np.array_equal(out.pixels[:, 4:, :], img.pixels[:, 4:, :] * 0.5)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            PartScaling(np.zeros((2, 3)))

    def test_channel_mismatch(self):
        with pytest.raises(ValueError):
            apply_part_scaling(grid_image(channels=2), PartScaling(np.ones((2, 3))))

    def test_too_many_parts(self):
        with pytest.raises(ValueError):
            apply_part_scaling(grid_image(height=4), PartScaling(np.ones((5, 3))))


class TestQuantizeFactor:
    def test_representable_values_fixed(self):
        assert quantize_factor(0.5) == 0.5
        assert quantize_factor(0.3 + 2.0 ** -26) != quantize_factor(0.3)

    def test_grid_product_is_exact(self):
        # quantized factor times a 1/4096 pixel has <= 38 fractional bits
        alpha = quantize_factor(0.7313)
        px = 1234 / 4096
        prod = alpha * px
        assert prod == (alpha * (1 << 26)) * 1234 / float(1 << 38)


class TestEmbed:
    def test_dimension(self):
        img = grid_image()
        spec = EmbeddingSpec(parts=4, bins=8)
        assert embed(img, spec).shape == (spec.dim(img.channels),)

    def test_mean_components_match_oracle(self):
        img = grid_image(height=8)
        spec = EmbeddingSpec(parts=2, bins=0, normalize=False)
        v = embed(img, spec)
        oracle = [
            img.pixels[c, lo:hi, :].mean()
            for lo, hi in ((0, 4), (4, 8))
            for c in [0, 1, 2]
        ]
        # oracle iterates band-major; embed does too
        oracle = []
        for lo, hi in ((0, 4), (4, 8)):
            for c in range(3):
                oracle.append(img.pixels[c, lo:hi, :].mean())
        assert np.abs(v - np.array(oracle)).max() < 1e-15

    def test_histogram_components_match_oracle(self):
        img = grid_image(height=6)
        spec = EmbeddingSpec(parts=3, bins=4, normalize=False)
        v = embed(img, spec)
        idx = 0
        for lo, hi in ((0, 2), (2, 4), (4, 6)):
            for c in range(3):
                vals = img.pixels[c, lo:hi, :].ravel()
                idx += 1  # skip the mean slot
                hist, _ = np.histogram(vals, bins=4, range=(0.0, 1.0))
                assert np.array_equal(v[idx:idx + 4], hist / vals.size)
                idx += 4

    def test_normalized_embedding_is_unit(self):
        v = embed(grid_image(), EmbeddingSpec(parts=3, bins=8))
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12

    def test_uniform_scaling_cancels_exactly(self):
        # the load-bearing invariant: a global factor leaves the mean-only
        # normalized embedding bit-identical
        spec = EmbeddingSpec(parts=6, bins=0, normalize=True)
        for seed in range(5):
            img = grid_image(height=48, width=24, seed=seed)
            alpha = quantize_factor(Rng(seed, 1).uniform(FACTOR_LO, FACTOR_HI))
            scaled = apply_part_scaling(
                img, PartScaling(np.full((6, 3), alpha))
            )
            assert np.array_equal(embed(img, spec), embed(scaled, spec))

    def test_per_part_scaling_moves_embedding(self):
        spec = EmbeddingSpec(parts=6, bins=0, normalize=True)
        img = grid_image(height=48, width=24, seed=3)
        factors = np.full((6, 3), 0.9)
        factors[0] = 0.4
        scaled = apply_part_scaling(img, PartScaling(factors))
        assert np.linalg.norm(embed(img, spec) - embed(scaled, spec)) > 1e-3


class TestRunExperiment:
    def test_uniform_mean_only_exactly_zero(self):
        imgs = synthetic_images(10, 3, 48, 24, seed=7)
        report = run_experiment(imgs, "uniform", 6, Rng(7, 99))
        assert report.mean_only_centroid_distance == 0.0
        assert report.mean_only_paired_mean == 0.0

    def test_per_part_strictly_positive(self):
        imgs = synthetic_images(10, 3, 48, 24, seed=8)
        report = run_experiment(imgs, "per-part", 6, Rng(8, 99))
        assert report.paired_mean > 0.0
        assert report.mean_only_paired_mean > 0.0

    def test_per_part_exceeds_uniform_full_spec(self):
        imgs = synthetic_images(20, 3, 48, 24, seed=9)
        uni = run_experiment(imgs, "uniform", 6, Rng(9, 1))
        per = run_experiment(imgs, "per-part", 6, Rng(9, 2))
        assert per.paired_mean > uni.paired_mean

    def test_determinism(self):
        imgs = synthetic_images(5, 3, 24, 12, seed=10)
        r1 = run_experiment(imgs, "per-part", 4, Rng(3, 0))
        r2 = run_experiment(imgs, "per-part", 4, Rng(3, 0))
        assert r1.paired_mean == r2.paired_mean
        assert r1.centroid_distance == r2.centroid_distance

    def test_needs_two_images(self):
        with pytest.raises(ValueError):
            run_experiment(synthetic_images(1, 3, 12, 6, 0), "uniform", 3, Rng(0))

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            run_experiment(synthetic_images(2, 3, 12, 6, 0), "banana", 3, Rng(0))

    def test_pca_attached_on_request(self):
        imgs = synthetic_images(4, 3, 24, 12, seed=11)
        report = run_experiment(imgs, "per-part", 4, Rng(4, 0), with_pca=True)
        assert report.pca is not None and report.pca.shape == (8, 2)


class TestPca2d:
    def test_collinear_points_have_zero_second_axis(self):
        t = np.linspace(0, 1, 7)
        pts = np.outer(t, np.array([3.0, 4.0, 0.0]))
        coords = pca2d(pts)
        assert np.abs(coords[:, 1]).max() < 1e-9
        # first axis preserves pairwise distances along the line
        d = np.abs(coords[:, 0] - coords[0, 0])
        assert np.allclose(d, 5.0 * t)

    def test_reconstruction_error_matches_trailing_eigenvalues(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(40, 5)) @ np.diag([4.0, 2.0, 0.5, 0.2, 0.1])
        coords = pca2d(x)
        centered = x - x.mean(axis=0)
        total_var = (centered ** 2).sum() / x.shape[0]
        captured = (coords ** 2).sum() / x.shape[0]
        evals = np.linalg.eigvalsh(centered.T @ centered / x.shape[0])
        expected = evals[-1] + evals[-2]
        assert captured == pytest.approx(expected, rel=1e-9)
        assert captured <= total_var + 1e-12

    def test_sign_is_deterministic(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(10, 4))
        c1, c2 = pca2d(x), pca2d(x.copy())
        assert np.array_equal(c1, c2)
        for axis in range(2):
            peak = int(np.argmax(np.abs(c1[:, axis])))
            assert c1[peak, axis] > 0

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            pca2d(np.zeros((1, 3)))


class TestSyntheticImages:
    def test_on_grid(self):
        img = grid_image(seed=13)
        assert np.all(img.pixels * 4096 == np.round(img.pixels * 4096))

    def test_per_image_streams_are_stable(self):
        a = synthetic_images(3, 3, 8, 4, seed=5)
        b = synthetic_images(2, 3, 8, 4, seed=5)
        assert np.array_equal(a[1].pixels, b[1].pixels)
