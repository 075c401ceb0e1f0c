"""Command-line pipeline: synthesize data, train, infer, and verify.

Every subcommand writes into its own run directory: the resolved config,
the outputs, and a machine-readable summary. Reruns with the same config
and seed are byte-identical, so run directories double as fixtures.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration,
3 missing input (dataset, manifest, or checkpoint).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fileio
from .classical import run_baseline
from .config import (
    ConfigError,
    RunConfig,
    config_to_dict,
    load_config,
    resolve_data_root,
    train_config_from,
)
from .metrics import evaluate_methods, metrics_csv, summary_text
from .networks import UNetGenerator, load_model
from .ot import random_instance, verify_sandwich
from .synthesis import (
    SpectrumModel,
    build_dataset,
    dataset_geometry,
    default_spectrum,
    load_dataset_manifest,
    load_dataset_split,
)
from .training import TrainingDivergedError, infer_images, train

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3

ABLATION_GRID = (
    ("cbam-on-beta1", True, 1.0),
    ("cbam-on-beta10", True, 10.0),
    ("cbam-off-beta1", False, 1.0),
    ("cbam-off-beta10", False, 10.0),
)


def _echo_config(out_dir: Path, config: RunConfig) -> None:
    fileio.write_manifest(out_dir / "resolved_config.json", config_to_dict(config))


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    return load_config(
        config_path=args.config, preset=args.preset, seed=args.seed
    )


def _spectrum_for(config: RunConfig) -> SpectrumModel:
    if config.dataset.spectrum == "monochromatic":
        # single 80 keV bin: the beam-hardening residual vanishes exactly
        return SpectrumModel(
            energies_kev=(80.0,),
            weights=(1.0,),
            water_mu=(0.0184,),
            bone_mu=(0.0428,),
            metal_mu=(0.368,),
        )
    return default_spectrum()


def _spectrum_from_manifest(manifest: dict) -> SpectrumModel:
    s = manifest["spectrum"]
    return SpectrumModel(
        energies_kev=tuple(s["energies_kev"]),
        weights=tuple(s["weights"]),
        water_mu=tuple(s["water_mu"]),
        bone_mu=tuple(s["bone_mu"]),
        metal_mu=tuple(s["metal_mu"]),
    )


def _dataset_for(config: RunConfig) -> tuple[Path, dict]:
    root = resolve_data_root(config)
    manifest = load_dataset_manifest(root)
    if manifest["image_size"] != config.geometry.image_size:
        raise ConfigError(
            f"geometry.image_size: config says {config.geometry.image_size} but "
            f"dataset at {root} holds {manifest['image_size']}-px images"
        )
    return root, manifest


def _load_generator(path: str | Path) -> UNetGenerator:
    ckpt = Path(path)
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    model = load_model(ckpt)
    if not isinstance(model, UNetGenerator):
        raise ValueError(f"{ckpt} does not hold a generator checkpoint")
    return model


def _write_image_set(
    out_dir: Path, name: str, images: list[np.ndarray], window: tuple[float, float]
) -> list[dict]:
    entries = []
    for i, image in enumerate(images):
        stem = fileio.write_array(
            out_dir / name / f"case_{i:04d}",
            image.astype(np.float32),
            {"role": name, "intensity_window": list(window)},
        )
        entries.append(
            {
                "file": stem.relative_to(out_dir).as_posix(),
                "header_sha256": fileio.header_digest(stem),
            }
        )
    return entries


def cmd_synth(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    out = Path(args.out)
    manifest = build_dataset(
        out,
        image_size=config.geometry.image_size,
        num_views=config.geometry.num_views,
        train_artifact=config.dataset.train_artifact,
        train_clean=config.dataset.train_clean,
        test_cases=config.dataset.test_cases,
        test_clean=config.dataset.test_clean,
        seed=config.seed,
        incident_photons=config.dataset.incident_photons,
        intensity_window=config.intensity_window,
        spectrum=_spectrum_for(config),
    )
    _echo_config(out, config)
    counts = {split: len(v) for split, v in manifest["splits"].items()}
    print(f"dataset written to {out}: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    root, _ = _dataset_for(config)
    artifacts = load_dataset_split(root, "train_artifact")
    cleans = load_dataset_split(root, "train_clean")
    out = Path(args.out)

    def progress(row: dict) -> None:
        if row["step"] % 500 == 0:
            print(
                f"step {row['step']:>6d} epoch {row['epoch']:>3d} "
                f"total_G {row['total_G']:.4f} total_D {row['total_D']:.4f}"
            )

    result = train(artifacts, cleans, train_config_from(config), out_dir=out, progress=progress)
    _echo_config(out, config)
    last = result.history[-1]
    print(
        f"trained {config.training.epochs} epochs "
        f"({len(result.history)} steps); final total_G {last['total_G']:.4f}"
    )
    print(f"checkpoints in {out}")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    root, _ = _dataset_for(config)
    model = _load_generator(args.checkpoint)
    images = load_dataset_split(root, "test_artifact")
    corrected = infer_images(model, images, config.intensity_window)
    out = Path(args.out)
    entries = _write_image_set(out, "corrected", corrected, config.intensity_window)
    fileio.write_manifest(
        out / "infer_manifest.json",
        {
            "kind": "ctmar-infer",
            "checkpoint": str(args.checkpoint),
            "cases": len(corrected),
            "outputs": entries,
        },
    )
    _echo_config(out, config)
    print(f"corrected {len(corrected)} cases into {out}")
    return EXIT_OK


def _baseline_sets(
    root: Path, manifest: dict
) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    geometry = dataset_geometry(manifest)
    water = _spectrum_from_manifest(manifest).mean_mu("water")
    artifacts = load_dataset_split(root, "test_artifact")
    masks = [m > 0.5 for m in load_dataset_split(root, "test_mask")]
    li = [
        run_baseline(img, mask, geometry, method="li", water_value=water)
        for img, mask in zip(artifacts, masks)
    ]
    nmar = [
        run_baseline(img, mask, geometry, method="nmar", water_value=water)
        for img, mask in zip(artifacts, masks)
    ]
    return artifacts, masks, li, nmar


def cmd_baseline(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    root, manifest = _dataset_for(config)
    _, _, li, nmar = _baseline_sets(root, manifest)
    out = Path(args.out)
    summary = {
        "kind": "ctmar-baseline",
        "cases": len(li),
        "outputs": {
            "li": _write_image_set(out, "li", li, config.intensity_window),
            "nmar": _write_image_set(out, "nmar", nmar, config.intensity_window),
        },
    }
    fileio.write_manifest(out / "baseline_manifest.json", summary)
    _echo_config(out, config)
    print(f"repaired {len(li)} cases with li and nmar into {out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    root, manifest = _dataset_for(config)
    geometry = dataset_geometry(manifest)
    water = _spectrum_from_manifest(manifest).mean_mu("water")
    ground_truth = load_dataset_split(root, "test_gt")

    methods: dict[str, list[np.ndarray]] = {}
    artifacts, _, li, nmar = _baseline_sets(root, manifest)
    methods["input"] = artifacts
    if config.evaluation.include_baselines:
        methods["li"] = li
        methods["nmar"] = nmar
    model = None
    if args.checkpoint:
        model = _load_generator(args.checkpoint)
        methods["proposed"] = infer_images(model, artifacts, config.intensity_window)

    results = evaluate_methods(ground_truth, methods, config.intensity_window)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(results))
    table = summary_text(results)
    (out / "summary.txt").write_text(table)
    print("artifact test split:")
    print(table, end="")

    # identity protocol: methods applied to already-clean inputs, scored
    # against those same inputs. The sinogram methods still get a metal
    # trace (reusing the paired test masks), measuring how much anatomy
    # they discard when there is no artifact to fix; the generator sees
    # the image alone.
    cleans = load_dataset_split(root, "test_clean")
    masks = [m > 0.5 for m in load_dataset_split(root, "test_mask")]
    id_methods: dict[str, list[np.ndarray]] = {
        "li": [
            run_baseline(img, masks[i % len(masks)], geometry, method="li", water_value=water)
            for i, img in enumerate(cleans)
        ],
        "nmar": [
            run_baseline(img, masks[i % len(masks)], geometry, method="nmar", water_value=water)
            for i, img in enumerate(cleans)
        ],
    }
    if model is not None:
        id_methods["proposed"] = infer_images(model, cleans, config.intensity_window)
    id_results = evaluate_methods(cleans, id_methods, config.intensity_window)
    (out / "identity_metrics.csv").write_text(metrics_csv(id_results))
    id_table = summary_text(id_results)
    (out / "identity_summary.txt").write_text(id_table)
    print("clean test split (identity):")
    print(id_table, end="")

    _echo_config(out, config)
    return EXIT_OK


def cmd_duality_check(args: argparse.Namespace) -> int:
    betas = (0.5, 1.0, 2.0, 10.0)
    rng = np.random.default_rng(args.seed)
    instance_seeds = rng.integers(0, 2**31 - 1, size=args.trials)
    rows = ["trial,instance_seed,beta,support_mu,support_nu,primal,potential_x,potential_y,lower,upper,cycle,generic,passed"]
    failures = 0
    for k in range(args.trials):
        beta = betas[k % len(betas)]
        inst = random_instance(
            int(instance_seeds[k]),
            max_support=8,
            beta=beta,
            force_coincidence=k % 5 == 0,
        )
        rep = verify_sandwich(
            inst.mu, inst.nu, inst.map_g, inst.map_f, inst.beta, tolerance=args.tolerance
        )
        failures += 0 if rep.passed else 1
        rows.append(
            f"{k},{int(instance_seeds[k])},{beta!r},{inst.mu.size},{inst.nu.size},"
            f"{rep.primal_value!r},{rep.potential_x!r},{rep.potential_y!r},"
            f"{rep.lower_bound!r},{rep.upper_bound!r},{rep.cycle!r},"
            f"{int(rep.generic)},{int(rep.passed)}"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "duality.csv").write_text("\n".join(rows) + "\n")
    fileio.write_manifest(
        out / "duality_summary.json",
        {
            "kind": "ctmar-duality",
            "trials": args.trials,
            "seed": args.seed,
            "tolerance": args.tolerance,
            "failures": failures,
        },
    )
    print(f"duality sandwich: {args.trials - failures}/{args.trials} instances passed")
    if failures:
        print("error: sandwich violated; see duality.csv", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _read_metrics_csv(path: Path) -> dict[str, tuple[list[float], list[float]]]:
    if not path.is_file():
        raise FileNotFoundError(f"metrics csv not found: {path}")
    table: dict[str, tuple[list[float], list[float]]] = {}
    with io.StringIO(path.read_text()) as handle:
        reader = csv.DictReader(handle)
        required = {"method", "case", "psnr_db", "ssim"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path} is not a metrics csv (header {reader.fieldnames})")
        for row in reader:
            psnrs, ssims = table.setdefault(row["method"], ([], []))
            psnrs.append(float(row["psnr_db"]))
            ssims.append(float(row["ssim"]))
    return table


def cmd_report(args: argparse.Namespace) -> int:
    sections = []
    for raw in args.csvs:
        path = Path(raw)
        table = _read_metrics_csv(path)
        lines = [
            f"## {path.as_posix()}",
            "",
            "| method | PSNR (dB) | SSIM | cases |",
            "|---|---|---|---|",
        ]
        for method in sorted(table):
            psnrs, ssims = table[method]
            lines.append(
                f"| {method} | {np.mean(psnrs):.3f} ± {np.std(psnrs):.3f} "
                f"| {np.mean(ssims):.4f} ± {np.std(ssims):.4f} | {len(psnrs)} |"
            )
        sections.append("\n".join(lines))
    report = "# Evaluation report\n\n" + "\n\n".join(sections) + "\n"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.md").write_text(report)
    print(report, end="")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    root, manifest = _dataset_for(config)
    artifacts = load_dataset_split(root, "train_artifact")
    cleans = load_dataset_split(root, "train_clean")
    test_artifacts = load_dataset_split(root, "test_artifact")
    ground_truth = load_dataset_split(root, "test_gt")
    out = Path(args.out)

    base_tc = train_config_from(config)
    rows = ["arm,use_attention,beta,mean_psnr_db,mean_ssim"]
    for name, attention, beta in ABLATION_GRID:
        tc = replace(base_tc, use_attention=attention, beta_override=beta)
        print(f"[{name}] training...")
        result = train(artifacts, cleans, tc, out_dir=out / name)
        corrected = infer_images(
            result.artifact_to_clean, test_artifacts, config.intensity_window
        )
        scored = evaluate_methods(
            ground_truth, {name: corrected}, config.intensity_window
        )[name]
        rows.append(
            f"{name},{int(attention)},{beta!r},{scored.mean_psnr_db!r},{scored.mean_ssim!r}"
        )
        print(f"[{name}] psnr {scored.mean_psnr_db:.3f} dB ssim {scored.mean_ssim:.4f}")
    (out / "grid_summary.csv").write_text("\n".join(rows) + "\n")
    _echo_config(out, config)
    print(f"ablation grid written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctmar",
        description="unpaired CT metal-artifact reduction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
        p.add_argument("--config", help="JSON config overriding preset defaults")
        p.add_argument(
            "--preset", choices=["real", "synthetic", "toy"], help="named hyperparameter regime"
        )
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", required=out_required, help="run directory")

    p = sub.add_parser("synth", help="write a synthetic unpaired corpus")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the translator pair")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run a trained generator over the test split")
    common(p)
    p.add_argument("--checkpoint", required=True, help="generator checkpoint bundle")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("baseline", help="classical sinogram repair on the test split")
    common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="score methods against ground truth")
    common(p)
    p.add_argument("--checkpoint", help="optional generator to score as 'proposed'")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("duality-check", help="verify the transport duality sandwich")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_duality_check)

    p = sub.add_parser("report", help="compile metrics CSVs into markdown tables")
    p.add_argument("csvs", nargs="+", help="metrics.csv files from eval runs")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ablate", help="train the attention/beta ablation grid")
    common(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, KeyError) as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (TrainingDivergedError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
