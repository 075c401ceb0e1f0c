"""Classical sinogram-repair baselines: linear interpolation and
normalized (prior-weighted) interpolation.

Both operate on the projection of the corrupted image: rays whose paths
cross the implant form the metal trace, values inside the trace are
replaced by interpolation from untouched neighbours, and the repaired
sinogram is reconstructed. Everything outside the trace is restored
bit-exactly from the input.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .tomo import ProjectionGeometry, fbp_reconstruct, forward_project

__all__ = [
    "WATER_MM",
    "metal_trace",
    "li_interpolate",
    "nmar_correct",
    "run_baseline",
]

# reference soft-tissue attenuation per mm used by prior flattening
WATER_MM = 0.0193

TRACE_THRESHOLD = 1e-9


def metal_trace(
    mask: np.ndarray, geometry: ProjectionGeometry, threshold: float = TRACE_THRESHOLD
) -> np.ndarray:
    """Boolean sinogram of rays whose line integral touches the implant."""
    if mask.dtype != bool:
        raise ValueError("metal mask must be boolean")
    path = forward_project(mask.astype(np.float64), geometry).values
    return path > threshold


def li_interpolate(sino_values: np.ndarray, trace: np.ndarray) -> np.ndarray:
    """Per-view linear interpolation across traced bins.

    Views that are entirely traced have no anchors and raise. Trace runs
    touching the detector edge extend the nearest anchor value (constant).
    """
    sino = np.asarray(sino_values, dtype=np.float64)
    if sino.shape != trace.shape:
        raise ValueError("sinogram and trace shapes differ")
    out = sino.copy()
    bins = np.arange(sino.shape[1], dtype=np.float64)
    for v in range(sino.shape[0]):
        bad = trace[v]
        if not bad.any():
            continue
        if bad.all():
            raise ValueError(f"view {v} is fully covered by the metal trace")
        out[v, bad] = np.interp(bins[bad], bins[~bad], sino[v, ~bad])
    return out


def _flatten_prior(
    image: np.ndarray,
    water_value: float,
    air_threshold: float,
    bone_threshold: float,
    smoothing_sigma: float,
) -> np.ndarray:
    smoothed = gaussian_filter(image, smoothing_sigma)
    return np.where(
        smoothed < air_threshold,
        0.0,
        np.where(smoothed < bone_threshold, water_value, smoothed),
    )


def nmar_correct(
    sino_values: np.ndarray,
    trace: np.ndarray,
    geometry: ProjectionGeometry,
    water_value: float = WATER_MM,
    air_threshold: float | None = None,
    bone_threshold: float | None = None,
    smoothing_sigma: float = 1.0,
    floor_ratio: float = 1e-6,
    return_stages: bool = False,
):
    """Normalized interpolation with a flattened reconstruction prior.

    The linear-interpolation repair is reconstructed, smoothed, and
    flattened into air/water/bone classes; its projection normalizes the
    input sinogram so the trace interpolation happens on a nearly flat
    profile, then the prior projection is multiplied back in.
    """
    if air_threshold is None:
        air_threshold = 0.35 * water_value
    if bone_threshold is None:
        bone_threshold = 1.45 * water_value
    sino = np.asarray(sino_values, dtype=np.float64)

    li = li_interpolate(sino, trace)
    prior_image = _flatten_prior(
        fbp_reconstruct(li, geometry).values,
        water_value,
        air_threshold,
        bone_threshold,
        smoothing_sigma,
    )
    prior_sino = forward_project(prior_image, geometry).values
    peak = prior_sino.max()
    if peak <= 0.0:
        prior_sino = np.ones_like(prior_sino)
    else:
        prior_sino = np.maximum(prior_sino, floor_ratio * peak)

    normalized = sino / prior_sino
    normalized_repair = li_interpolate(normalized, trace)
    corrected = normalized_repair * prior_sino
    corrected[~trace] = sino[~trace]

    if return_stages:
        return corrected, {
            "li": li,
            "prior_image": prior_image,
            "prior_sinogram": prior_sino,
            "normalized": normalized,
            "normalized_repair": normalized_repair,
        }
    return corrected


def run_baseline(
    artifact_image: np.ndarray,
    metal_mask: np.ndarray,
    geometry: ProjectionGeometry,
    method: str = "li",
    water_value: float = WATER_MM,
    reinsert_metal: bool = False,
) -> np.ndarray:
    """Image-domain wrapper: project, repair the trace, reconstruct.

    With ``reinsert_metal`` the implant pixels of the input are copied back
    into the output so the hardware stays visible; metrics in this package
    compare against metal-free ground truth, so the default leaves the
    repaired tissue estimate in place.
    """
    trace = metal_trace(metal_mask, geometry)
    sino = forward_project(np.asarray(artifact_image, dtype=np.float64), geometry).values
    if method == "li":
        repaired = li_interpolate(sino, trace)
    elif method == "nmar":
        repaired = nmar_correct(sino, trace, geometry, water_value=water_value)
    else:
        raise ValueError(f"unknown baseline method {method!r}")
    out = fbp_reconstruct(repaired, geometry).values
    if reinsert_metal:
        out[metal_mask] = np.asarray(artifact_image)[metal_mask]
    return out
