"""Image-quality metrics and the evaluation protocol.

Scores are computed on the full image (metal pixels included) against the
metal-free ground truth, with the dynamic range fixed to the width of the
display intensity window so results are comparable across cases.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.signal import convolve2d

__all__ = [
    "PSNR_CAP_DB",
    "psnr",
    "ssim",
    "MethodMetrics",
    "evaluate_methods",
    "metrics_csv",
    "summary_text",
]

PSNR_CAP_DB = 99.0


def _check_pair(reference: np.ndarray, test: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.asarray(reference, dtype=np.float64)
    img = np.asarray(test, dtype=np.float64)
    if ref.ndim != 2:
        raise ValueError("images must be 2-d arrays")
    if ref.shape != img.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {img.shape}")
    if not np.isfinite(ref).all() or not np.isfinite(img).all():
        raise ValueError("images contain non-finite values")
    return ref, img


def psnr(
    reference: np.ndarray,
    test: np.ndarray,
    data_range: float,
    cap_db: float = PSNR_CAP_DB,
) -> float:
    """Peak signal-to-noise ratio in dB, capped for (near-)identical pairs."""
    ref, img = _check_pair(reference, test)
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    mse = float(np.mean((ref - img) ** 2))
    if mse == 0.0:
        return cap_db
    value = 10.0 * np.log10(data_range**2 / mse)
    return float(min(value, cap_db))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    radius = (size - 1) // 2
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (offsets / sigma) ** 2)
    taps /= taps.sum()
    return np.outer(taps, taps)


def ssim(
    reference: np.ndarray,
    test: np.ndarray,
    data_range: float,
    kernel_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean structural similarity over Gaussian-weighted local windows.

    Local statistics come from valid-mode convolution, so the averaged map
    excludes the border strip where the window would hang off the image.
    """
    ref, img = _check_pair(reference, test)
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    if kernel_size % 2 != 1 or kernel_size < 3:
        raise ValueError("kernel_size must be odd and >= 3")
    if min(ref.shape) < kernel_size:
        raise ValueError("image smaller than the comparison window")

    kernel = _gaussian_kernel(kernel_size, sigma)

    def local_mean(a: np.ndarray) -> np.ndarray:
        return convolve2d(a, kernel, mode="valid")

    mu_r = local_mean(ref)
    mu_t = local_mean(img)
    # weighted second moments, no sample-size correction
    var_r = local_mean(ref * ref) - mu_r * mu_r
    var_t = local_mean(img * img) - mu_t * mu_t
    cov = local_mean(ref * img) - mu_r * mu_t

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    score_map = ((2 * mu_r * mu_t + c1) * (2 * cov + c2)) / (
        (mu_r * mu_r + mu_t * mu_t + c1) * (var_r + var_t + c2)
    )
    return float(score_map.mean())


@dataclass(frozen=True)
class MethodMetrics:
    """Per-case scores for one correction method."""

    psnr_db: tuple[float, ...]
    ssim: tuple[float, ...]

    @property
    def mean_psnr_db(self) -> float:
        return float(np.mean(self.psnr_db))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim))

    @property
    def std_psnr_db(self) -> float:
        return float(np.std(self.psnr_db))

    @property
    def std_ssim(self) -> float:
        return float(np.std(self.ssim))


def evaluate_methods(
    ground_truth: Sequence[np.ndarray],
    methods: Mapping[str, Sequence[np.ndarray]],
    intensity_window: tuple[float, float] = (0.0, 0.08),
) -> dict[str, MethodMetrics]:
    """Score every method against the shared ground-truth cases."""
    lo, hi = intensity_window
    if hi <= lo:
        raise ValueError("intensity window must have positive width")
    data_range = hi - lo
    results: dict[str, MethodMetrics] = {}
    for name, images in methods.items():
        if len(images) != len(ground_truth):
            raise ValueError(
                f"method {name!r} has {len(images)} images for "
                f"{len(ground_truth)} ground-truth cases"
            )
        psnr_vals = tuple(
            psnr(gt, img, data_range) for gt, img in zip(ground_truth, images)
        )
        ssim_vals = tuple(
            ssim(gt, img, data_range) for gt, img in zip(ground_truth, images)
        )
        results[name] = MethodMetrics(psnr_db=psnr_vals, ssim=ssim_vals)
    return results


def metrics_csv(results: Mapping[str, MethodMetrics]) -> str:
    """Per-case scores as deterministic CSV (methods sorted, repr floats)."""
    lines = ["method,case,psnr_db,ssim"]
    for name in sorted(results):
        entry = results[name]
        for case, (p, s) in enumerate(zip(entry.psnr_db, entry.ssim)):
            lines.append(f"{name},{case},{p!r},{s!r}")
    return "\n".join(lines) + "\n"


def summary_text(results: Mapping[str, MethodMetrics]) -> str:
    """Aligned mean/std table, one row per method."""
    header = f"{'method':<16} {'psnr_db':>10} {'std':>8} {'ssim':>8} {'std':>8}"
    lines = [header, "-" * len(header)]
    for name in sorted(results):
        entry = results[name]
        lines.append(
            f"{name:<16} {entry.mean_psnr_db:>10.3f} {entry.std_psnr_db:>8.3f} "
            f"{entry.mean_ssim:>8.4f} {entry.std_ssim:>8.4f}"
        )
    return "\n".join(lines) + "\n"
