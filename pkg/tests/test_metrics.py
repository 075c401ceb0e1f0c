"""Metric implementations against the scikit-image reference."""

import numpy as np
import pytest
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from ctmar.metrics import (
    PSNR_CAP_DB,
    MethodMetrics,
    evaluate_methods,
    metrics_csv,
    psnr,
    ssim,
    summary_text,
)


def reference_ssim(a: np.ndarray, b: np.ndarray, data_range: float) -> float:
    return structural_similarity(
        a,
        b,
        win_size=11,
        gaussian_weights=True,
        sigma=1.5,
        use_sample_covariance=False,
        data_range=data_range,
    )


def smooth_pair(rng: np.random.Generator, size: int = 48) -> tuple[np.ndarray, np.ndarray]:
    from scipy.ndimage import gaussian_filter

    base = gaussian_filter(rng.normal(size=(size, size)), 3.0)
    base = 0.04 + 0.02 * base / max(np.abs(base).max(), 1e-12)
    noisy = base + rng.normal(scale=rng.uniform(1e-4, 5e-3), size=base.shape)
    return base, noisy


class TestPsnr:
    def test_matches_reference_on_random_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b = smooth_pair(rng)
            want = peak_signal_noise_ratio(a, b, data_range=0.08)
            assert psnr(a, b, 0.08) == pytest.approx(want, abs=1e-6)

    def test_identical_images_hit_cap(self):
        img = np.random.default_rng(1).uniform(size=(32, 32))
        assert psnr(img, img, 0.08) == PSNR_CAP_DB

    def test_near_identical_images_capped(self):
        img = np.full((32, 32), 0.04)
        other = img + 1e-12
        assert psnr(img, other, 0.08) == PSNR_CAP_DB

    def test_known_value(self):
        # constant offset e: mse = e^2, psnr = 20 log10(range/e)
        img = np.zeros((16, 16))
        off = img + 0.008
        assert psnr(img, off, 0.08) == pytest.approx(20.0, abs=1e-12)

    def test_rejects_shape_mismatch_and_bad_range(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)), 0.08)
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((4, 4)), 0.0)
        with pytest.raises(ValueError):
            psnr(np.full((4, 4), np.nan), np.zeros((4, 4)), 0.08)


class TestSsim:
    def test_matches_reference_on_random_pairs(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            a, b = smooth_pair(rng)
            want = reference_ssim(a, b, 0.08)
            assert ssim(a, b, 0.08) == pytest.approx(want, abs=1e-6)

    def test_matches_reference_on_pure_noise(self):
        rng = np.random.default_rng(8)
        a = rng.uniform(0, 0.08, size=(40, 40))
        b = rng.uniform(0, 0.08, size=(40, 40))
        assert ssim(a, b, 0.08) == pytest.approx(reference_ssim(a, b, 0.08), abs=1e-6)

    def test_identical_images_score_one(self):
        img = np.random.default_rng(2).uniform(size=(24, 24))
        assert ssim(img, img, 1.0) == 1.0

    def test_decreases_with_noise_level(self):
        rng = np.random.default_rng(3)
        base = np.full((32, 32), 0.04) + 0.01 * rng.standard_normal((32, 32))
        small = ssim(base, base + rng.normal(scale=1e-4, size=base.shape), 0.08)
        large = ssim(base, base + rng.normal(scale=5e-3, size=base.shape), 0.08)
        assert large < small <= 1.0

    def test_rejects_tiny_images_and_even_windows(self):
        ok = np.zeros((11, 11))
        assert ssim(ok, ok, 1.0) == 1.0
        with pytest.raises(ValueError):
            ssim(np.zeros((10, 10)), np.zeros((10, 10)), 1.0)
        with pytest.raises(ValueError):
            ssim(ok, ok, 1.0, kernel_size=8)

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(4)
        a, b = smooth_pair(rng)
        assert ssim(a, b, 0.08) == pytest.approx(ssim(b, a, 0.08), abs=1e-12)


class TestEvaluateMethods:
    def _cases(self):
        rng = np.random.default_rng(11)
        gts, goods, bads = [], [], []
        for _ in range(4):
            gt, good = smooth_pair(rng)
            gts.append(gt)
            goods.append(good)
            bads.append(gt + rng.normal(scale=0.01, size=gt.shape))
        return gts, goods, bads

    def test_orders_methods_by_fidelity(self):
        gts, goods, bads = self._cases()
        res = evaluate_methods(gts, {"good": goods, "bad": bads})
        assert res["good"].mean_psnr_db > res["bad"].mean_psnr_db
        assert res["good"].mean_ssim > res["bad"].mean_ssim
        assert len(res["good"].psnr_db) == 4

    def test_rejects_length_mismatch_and_bad_window(self):
        gts, goods, _ = self._cases()
        with pytest.raises(ValueError):
            evaluate_methods(gts, {"short": goods[:2]})
        with pytest.raises(ValueError):
            evaluate_methods(gts, {"good": goods}, intensity_window=(0.1, 0.1))

    def test_csv_is_deterministic_and_sorted(self):
        gts, goods, bads = self._cases()
        res = evaluate_methods(gts, {"zeta": bads, "alpha": goods})
        text = metrics_csv(res)
        again = metrics_csv(evaluate_methods(gts, {"zeta": bads, "alpha": goods}))
        assert text == again
        lines = text.strip().split("\n")
        assert lines[0] == "method,case,psnr_db,ssim"
        assert lines[1].startswith("alpha,0,")
        assert len(lines) == 1 + 2 * 4

    def test_csv_roundtrips_exact_floats(self):
        res = {"m": MethodMetrics(psnr_db=(31.123456789012345,), ssim=(0.912345678901234,))}
        line = metrics_csv(res).strip().split("\n")[1]
        _, _, p, s = line.split(",")
        assert float(p) == 31.123456789012345
        assert float(s) == 0.912345678901234

    def test_summary_text_contains_methods(self):
        gts, goods, bads = self._cases()
        res = evaluate_methods(gts, {"li": goods, "nmar": bads})
        table = summary_text(res)
        assert "li" in table and "nmar" in table
        assert table.index("li") < table.index("nmar")
