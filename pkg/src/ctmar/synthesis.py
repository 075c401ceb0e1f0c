"""Synthetic metal-artifact corpus: beam hardening + photon noise.

The simulation keeps the clean image's content exact and adds only the
physics-driven corruption. For a case with inserted metal:

1. the clean slice (attenuation per mm at the spectrum's reference) gets
   metal stamped in,
2. materials are segmented into water/bone/metal occupancy maps,
3. the beam-hardening residual is the polychromatic projection of those
   maps minus their monochromatic projection at the spectrum-weighted mean
   attenuations (zero for a single-bin spectrum, Jensen-negative otherwise),
4. the residual is added to the ideal projection of the metal-bearing
   image, clamped to physical (non-negative) line integrals,
5. Poisson counting noise is applied at ``incident_photons`` per ray,
6. FBP reconstructs the artifact image.

Ground truth for paired test cases is the same pipeline degenerated to
"no metal, single effective energy, no noise": the FBP of the clean
slice's ideal projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import binary_dilation, label

from . import fileio
from .phantoms import ellipse_mask, random_phantom
from .tomo import ProjectionGeometry, Sinogram, default_geometry, fbp_reconstruct, forward_project

__all__ = [
    "SpectrumModel",
    "default_spectrum",
    "MaterialMap",
    "MetalMask",
    "segment_materials",
    "insert_metal",
    "polychromatic_project",
    "mono_project",
    "add_poisson_noise",
    "synthesize_case",
    "build_dataset",
    "load_dataset_manifest",
    "load_dataset_split",
    "dataset_geometry",
]


@dataclass(frozen=True)
class SpectrumModel:
    """Discrete polychromatic source + per-material attenuation (per mm)."""

    energies_kev: tuple[float, ...]
    weights: tuple[float, ...]
    water_mu: tuple[float, ...]
    bone_mu: tuple[float, ...]
    metal_mu: tuple[float, ...]

    def __post_init__(self) -> None:
        k = len(self.energies_kev)
        if k < 1:
            raise ValueError("spectrum needs at least one energy bin")
        for name in ("weights", "water_mu", "bone_mu", "metal_mu"):
            if len(getattr(self, name)) != k:
                raise ValueError(f"{name} length != number of energy bins")
        if any(e2 <= e1 for e1, e2 in zip(self.energies_kev, self.energies_kev[1:])):
            raise ValueError("energies must be strictly increasing")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        for name in ("water_mu", "bone_mu", "metal_mu"):
            mu = getattr(self, name)
            if any(m <= 0 for m in mu):
                raise ValueError(f"{name} must be positive")
            if any(m2 >= m1 for m1, m2 in zip(mu, mu[1:])):
                raise ValueError(f"{name} must decrease with energy")

    def mean_mu(self, material: str) -> float:
        """Spectrum-weighted mean attenuation = the monochromatic reference."""
        mu = getattr(self, f"{material}_mu")
        return float(sum(w * m for w, m in zip(self.weights, mu)))

    @property
    def material_names(self) -> tuple[str, str, str]:
        return ("water", "bone", "metal")


def default_spectrum() -> SpectrumModel:
    """Five bins over 40-120 keV, triangular weights peaked at 80 keV.

    Water/bone follow the NIST-shaped downward trend; the metal curve is a
    titanium-like shape scaled so the implant is ~20x water at the 80 keV
    reference bin (dense alloy hardware rather than pure titanium).
    """
    return SpectrumModel(
        energies_kev=(40.0, 60.0, 80.0, 100.0, 120.0),
        weights=(1 / 9, 2 / 9, 3 / 9, 2 / 9, 1 / 9),
        water_mu=(0.0268, 0.0206, 0.0184, 0.0171, 0.0161),
        bone_mu=(0.1280, 0.0605, 0.0428, 0.0357, 0.0317),
        metal_mu=(1.4600, 0.6000, 0.3680, 0.2870, 0.2480),
    )


@dataclass
class MaterialMap:
    """Per-pixel material occupancy fractions, each in [0, 1], sum <= 1."""

    water: np.ndarray
    bone: np.ndarray
    metal: np.ndarray

    def __post_init__(self) -> None:
        shapes = {self.water.shape, self.bone.shape, self.metal.shape}
        if len(shapes) != 1 or self.water.ndim != 2:
            raise ValueError("material fraction maps must share one 2D shape")
        for name in ("water", "bone", "metal"):
            arr = getattr(self, name)
            if arr.min() < 0.0 or arr.max() > 1.0 + 1e-9:
                raise ValueError(f"{name} fractions outside [0, 1]")
        if (self.water + self.bone + self.metal).max() > 1.0 + 1e-9:
            raise ValueError("material fractions sum above 1")

    def fraction(self, material: str) -> np.ndarray:
        return getattr(self, material)


@dataclass
class MetalMask:
    """Boolean implant mask plus its connected-component count."""

    mask: np.ndarray
    components: int

    def __post_init__(self) -> None:
        if self.mask.dtype != bool or self.mask.ndim != 2:
            raise ValueError("mask must be a boolean 2D array")

    @property
    def area_fraction(self) -> float:
        return float(self.mask.mean())


def segment_materials(
    values: np.ndarray,
    soft_threshold: float,
    bone_threshold: float,
    air_threshold: float | None = None,
) -> MaterialMap:
    """Soft-threshold water/bone occupancy split of an attenuation image.

    Pixels below ``soft_threshold`` are water, above ``bone_threshold``
    bone, with a linear ramp between. Near-air pixels (below
    ``air_threshold``, default 20% of the soft threshold) carry no material
    at all; metal is stamped separately by the caller.
    """
    if not 0 < soft_threshold < bone_threshold:
        raise ValueError("need 0 < soft_threshold < bone_threshold")
    if air_threshold is None:
        air_threshold = 0.2 * soft_threshold
    v = np.asarray(values, dtype=np.float64)
    ramp = np.clip((v - soft_threshold) / (bone_threshold - soft_threshold), 0.0, 1.0)
    bone = ramp
    water = 1.0 - ramp
    solid = v >= air_threshold
    return MaterialMap(
        water=np.where(solid, water, 0.0),
        bone=np.where(solid, bone, 0.0),
        metal=np.zeros_like(v),
    )


def insert_metal(
    values: np.ndarray,
    rng: np.random.Generator,
    metal_value: float,
    count: int | None = None,
    axis_fraction: tuple[float, float] = (0.02, 0.06),
    max_attempts: int = 200,
) -> tuple[np.ndarray, MetalMask]:
    """Stamp 1-2 random metal ellipses into a copy of ``values``.

    Ellipse semi-axes are drawn from ``axis_fraction`` of the image width;
    placement keeps implants disjoint (>=2 px apart) and inside the central
    field of view. Raises if the image is too small to place them.
    """
    size = values.shape[0]
    if values.shape[0] != values.shape[1]:
        raise ValueError("expected a square image")
    if count is None:
        count = int(rng.integers(1, 3))
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = axis_fraction
    if not 0 < lo <= hi:
        raise ValueError("invalid axis_fraction range")
    if hi * size < 0.75:
        raise ValueError(f"image size {size} too small for metal axes >= {lo:.3f} of width")

    mask = np.zeros((size, size), dtype=bool)
    placed = 0
    attempts = 0
    while placed < count:
        if attempts >= max_attempts:
            raise RuntimeError(
                f"could not place {count} disjoint metal ellipses after {max_attempts} attempts"
            )
        attempts += 1
        # unit-square coords; keep the whole ellipse well inside the FOV circle
        axes = (rng.uniform(lo, hi) * 2.0, rng.uniform(lo, hi) * 2.0)
        reach = max(axes)
        r = math.sqrt(rng.uniform(0.0, 1.0)) * (0.55 - reach)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        center = (r * math.cos(phi), r * math.sin(phi))
        candidate = ellipse_mask(size, center, axes, rng.uniform(0.0, 180.0))
        if not candidate.any():
            continue
        grown = binary_dilation(candidate, iterations=2)
        if (grown & mask).any():
            continue
        mask |= candidate
        placed += 1

    components, num = label(mask)
    del components
    out = values.copy()
    out[mask] = metal_value
    return out, MetalMask(mask=mask, components=int(num))


def _material_line_integrals(
    materials: MaterialMap, geometry: ProjectionGeometry
) -> dict[str, np.ndarray]:
    integrals = {}
    for name in ("water", "bone", "metal"):
        frac = materials.fraction(name)
        if np.any(frac):
            integrals[name] = forward_project(frac, geometry).values
        else:
            integrals[name] = np.zeros((geometry.num_views, geometry.num_bins))
    return integrals


def polychromatic_project(
    materials: MaterialMap, spectrum: SpectrumModel, geometry: ProjectionGeometry
) -> Sinogram:
    """p = -ln( sum_k w_k exp(-sum_m mu_{m,k} * L_m) ) per ray."""
    integrals = _material_line_integrals(materials, geometry)
    total = np.zeros((geometry.num_views, geometry.num_bins))
    for w, *mus in zip(
        spectrum.weights, spectrum.water_mu, spectrum.bone_mu, spectrum.metal_mu
    ):
        exponent = (
            -mus[0] * integrals["water"] - mus[1] * integrals["bone"] - mus[2] * integrals["metal"]
        )
        total += w * np.exp(exponent)
    # total is a convex combination of exp(<=0) terms: in (0, 1]; the floor
    # only guards pathological inputs with enormous line integrals.
    values = -np.log(np.maximum(total, 1e-300))
    return Sinogram(values=values, geometry=geometry)


def mono_project(
    materials: MaterialMap, spectrum: SpectrumModel, geometry: ProjectionGeometry
) -> Sinogram:
    """Monochromatic projection at the spectrum-weighted mean attenuations."""
    integrals = _material_line_integrals(materials, geometry)
    values = sum(spectrum.mean_mu(name) * integrals[name] for name in ("water", "bone", "metal"))
    return Sinogram(values=values, geometry=geometry)


def add_poisson_noise(
    sino_values: np.ndarray, incident_photons: float, rng: np.random.Generator
) -> np.ndarray:
    """Counting noise: counts ~ Poisson(I0 exp(-p)), p_hat = -ln(max(counts,1)/I0)."""
    if incident_photons <= 0:
        raise ValueError("incident_photons must be positive")
    p = np.asarray(sino_values, dtype=np.float64)
    if p.min() < -1e-9:
        raise ValueError("line integrals must be non-negative before noise")
    expected = incident_photons * np.exp(-np.maximum(p, 0.0))
    counts = rng.poisson(expected).astype(np.float64)
    return -np.log(np.maximum(counts, 1.0) / incident_photons)


@dataclass
class SynthesisCase:
    """One simulated acquisition with its paired ground truth."""

    clean: np.ndarray
    ground_truth: np.ndarray
    artifact: np.ndarray
    metal: MetalMask
    artifact_sinogram: np.ndarray
    ideal_sinogram: np.ndarray
    geometry: ProjectionGeometry = field(repr=False)


def synthesize_case(
    clean_values: np.ndarray,
    spectrum: SpectrumModel,
    geometry: ProjectionGeometry,
    rng: np.random.Generator,
    incident_photons: float | None = 1e6,
    soft_threshold: float | None = None,
    bone_threshold: float | None = None,
    insert: bool = True,
    metal_count: int | None = None,
) -> SynthesisCase:
    """Run the full corruption pipeline on one clean slice."""
    clean = np.asarray(clean_values, dtype=np.float64)
    water_ref = spectrum.mean_mu("water")
    bone_ref = spectrum.mean_mu("bone")
    if soft_threshold is None:
        soft_threshold = water_ref + 0.3 * (bone_ref - water_ref)
    if bone_threshold is None:
        bone_threshold = water_ref + 0.75 * (bone_ref - water_ref)

    if insert:
        with_metal, metal = insert_metal(
            clean, rng, metal_value=spectrum.mean_mu("metal"), count=metal_count
        )
    else:
        with_metal = clean.copy()
        metal = MetalMask(mask=np.zeros(clean.shape, dtype=bool), components=0)

    materials = segment_materials(with_metal, soft_threshold, bone_threshold)
    if metal.mask.any():
        materials.water[metal.mask] = 0.0
        materials.bone[metal.mask] = 0.0
        materials.metal[metal.mask] = 1.0

    ideal = forward_project(with_metal, geometry).values
    if len(spectrum.energies_kev) > 1:
        poly = polychromatic_project(materials, spectrum, geometry).values
        mono = mono_project(materials, spectrum, geometry).values
        artifact_sino = np.maximum(ideal + (poly - mono), 0.0)
    else:
        # single-bin residual is identically zero; keep the ideal data bit-exact
        artifact_sino = ideal
    if incident_photons is not None and math.isfinite(incident_photons):
        artifact_sino = add_poisson_noise(artifact_sino, incident_photons, rng)
    artifact = fbp_reconstruct(artifact_sino, geometry).values

    ground_truth = fbp_reconstruct(forward_project(clean, geometry)).values

    return SynthesisCase(
        clean=clean,
        ground_truth=ground_truth,
        artifact=artifact,
        metal=metal,
        artifact_sinogram=artifact_sino,
        ideal_sinogram=ideal,
        geometry=geometry,
    )


def _reconstruct_clean_pool_image(
    clean: np.ndarray,
    geometry: ProjectionGeometry,
    incident_photons: float | None,
    rng: np.random.Generator,
) -> np.ndarray:
    """Clean-domain sample: scanner-like reconstruction without metal."""
    sino = forward_project(clean, geometry).values
    if incident_photons is not None and math.isfinite(incident_photons):
        sino = add_poisson_noise(sino, incident_photons, rng)
    return fbp_reconstruct(sino, geometry).values


def build_dataset(
    out_dir: str | Path,
    image_size: int = 64,
    num_views: int = 160,
    train_artifact: int = 200,
    train_clean: int = 100,
    test_cases: int = 25,
    test_clean: int = 25,
    seed: int = 0,
    incident_photons: float | None = 1e6,
    intensity_window: tuple[float, float] = (0.0, 0.08),
    spectrum: SpectrumModel | None = None,
) -> dict:
    """Write an unpaired training corpus + paired test split; returns the manifest.

    Train/test artifact:clean counts default to the 2:1 ratio of the
    reference corpus. All randomness derives from ``seed`` via spawned
    child sequences, so reruns are byte-identical.
    """
    if spectrum is None:
        spectrum = default_spectrum()
    out = Path(out_dir)
    geometry = default_geometry(image_size, num_views=num_views)
    water_ref = spectrum.mean_mu("water")
    bone_ref = spectrum.mean_mu("bone")

    root_seq = np.random.SeedSequence(seed)
    seq_artifact, seq_clean, seq_test, seq_test_clean = root_seq.spawn(4)

    manifest: dict = {
        "kind": "ctmar-dataset",
        "seed": seed,
        "image_size": image_size,
        "geometry": {
            "num_views": geometry.num_views,
            "num_bins": geometry.num_bins,
            "pixel_spacing": geometry.pixel_spacing,
            "detector_spacing": geometry.detector_spacing,
        },
        "incident_photons": incident_photons,
        "intensity_window": list(intensity_window),
        "spectrum": {
            "energies_kev": list(spectrum.energies_kev),
            "weights": list(spectrum.weights),
            "water_mu": list(spectrum.water_mu),
            "bone_mu": list(spectrum.bone_mu),
            "metal_mu": list(spectrum.metal_mu),
        },
        "counts": {
            "train_artifact": train_artifact,
            "train_clean": train_clean,
            "test_cases": test_cases,
            "test_clean": test_clean,
        },
        "splits": {},
    }

    def _register(split: str, stem: Path) -> None:
        rel = stem.relative_to(out).as_posix()
        manifest["splits"].setdefault(split, []).append(
            {"file": rel, "header_sha256": fileio.header_digest(stem)}
        )

    common_meta = {
        "pixel_spacing": geometry.pixel_spacing,
        "intensity_window": list(intensity_window),
    }

    for i, child in enumerate(seq_artifact.spawn(train_artifact)):
        rng = np.random.default_rng(child)
        clean = random_phantom(image_size, rng, water=water_ref, bone=bone_ref)
        case = synthesize_case(clean, spectrum, geometry, rng, incident_photons)
        stem = fileio.write_array(
            out / "train_artifact" / f"case_{i:04d}",
            case.artifact.astype(np.float32),
            {**common_meta, "role": "train_artifact"},
        )
        _register("train_artifact", stem)

    for i, child in enumerate(seq_clean.spawn(train_clean)):
        rng = np.random.default_rng(child)
        clean = random_phantom(image_size, rng, water=water_ref, bone=bone_ref)
        image = _reconstruct_clean_pool_image(clean, geometry, incident_photons, rng)
        stem = fileio.write_array(
            out / "train_clean" / f"clean_{i:04d}",
            image.astype(np.float32),
            {**common_meta, "role": "train_clean"},
        )
        _register("train_clean", stem)

    for i, child in enumerate(seq_test.spawn(test_cases)):
        rng = np.random.default_rng(child)
        clean = random_phantom(image_size, rng, water=water_ref, bone=bone_ref)
        case = synthesize_case(clean, spectrum, geometry, rng, incident_photons)
        stem = fileio.write_array(
            out / "test_artifact" / f"case_{i:04d}",
            case.artifact.astype(np.float32),
            {**common_meta, "role": "test_artifact"},
        )
        _register("test_artifact", stem)
        stem = fileio.write_array(
            out / "test_gt" / f"case_{i:04d}",
            case.ground_truth.astype(np.float32),
            {**common_meta, "role": "test_gt"},
        )
        _register("test_gt", stem)
        stem = fileio.write_array(
            out / "test_mask" / f"case_{i:04d}",
            case.metal.mask.astype(np.float32),
            {**common_meta, "role": "test_mask", "components": case.metal.components},
        )
        _register("test_mask", stem)

    for i, child in enumerate(seq_test_clean.spawn(test_clean)):
        rng = np.random.default_rng(child)
        clean = random_phantom(image_size, rng, water=water_ref, bone=bone_ref)
        image = _reconstruct_clean_pool_image(clean, geometry, incident_photons, rng)
        stem = fileio.write_array(
            out / "test_clean" / f"clean_{i:04d}",
            image.astype(np.float32),
            {**common_meta, "role": "test_clean"},
        )
        _register("test_clean", stem)

    fileio.write_manifest(out / "manifest.json", manifest)
    return manifest


def load_dataset_manifest(root: str | Path) -> dict:
    path = Path(root) / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"dataset manifest not found: {path}")
    manifest = fileio.read_manifest(path)
    if manifest.get("kind") != "ctmar-dataset":
        raise ValueError(f"{path} is not a dataset manifest")
    return manifest


def load_dataset_split(root: str | Path, split: str) -> list[np.ndarray]:
    """Read every image of one split, in manifest order, as float64."""
    manifest = load_dataset_manifest(root)
    entries = manifest["splits"].get(split)
    if entries is None:
        raise KeyError(
            f"split {split!r} not in dataset (has {sorted(manifest['splits'])})"
        )
    images = []
    for entry in entries:
        values, _ = fileio.read_array(Path(root) / entry["file"])
        images.append(values.astype(np.float64))
    return images


def dataset_geometry(manifest: dict) -> ProjectionGeometry:
    geo = manifest["geometry"]
    built = default_geometry(
        manifest["image_size"],
        num_views=geo["num_views"],
        pixel_spacing=geo["pixel_spacing"],
    )
    if built.num_bins != geo["num_bins"]:
        raise ValueError(
            f"manifest detector has {geo['num_bins']} bins, expected {built.num_bins}"
        )
    return built
