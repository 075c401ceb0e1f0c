"""Unpaired adversarial training of the artifact-removal pair.

One step consumes one artifact image ``x`` and one uniformly sampled
clean image ``y`` (batch size 1). Both discriminators update first on
detached fakes, then both translators update on the weighted objective.
An epoch is one shuffled pass over the artifact pool, so clean images
may repeat within an epoch (2:1 pools make that the common case).

Images enter the networks window-normalized to [-1, 1]; everything the
package reports (metrics, saved images) lives back in attenuation units.
Any non-finite loss aborts the run with a diagnostic checkpoint instead
of silently training on garbage.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from . import fileio
from .autodiff import Tensor
from .losses import PRESETS, LossWeights, discriminator_objective, generator_objective
from .networks import (
    PatchDiscriminator,
    UNetGenerator,
    init_discriminator,
    init_generator,
    save_model,
)

__all__ = [
    "Adam",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "window_normalize",
    "window_denormalize",
    "train",
    "infer_images",
    "history_to_csv",
]

LOG_COLUMNS = (
    "step",
    "epoch",
    "cycle_x",
    "cycle_y",
    "identity",
    "adv_G",
    "adv_F",
    "disc_X",
    "disc_Y",
    "total_G",
    "total_D",
)


class TrainingDivergedError(RuntimeError):
    pass


class Adam:
    """Adam with bias correction; GAN-style default beta1."""

    def __init__(
        self,
        params: dict[str, Tensor],
        learning_rate: float,
        beta1: float = 0.5,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.params = params
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.value) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for key, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self._m[key] = self.beta1 * self._m[key] + (1.0 - self.beta1) * g
            self._v[key] = self.beta2 * self._v[key] + (1.0 - self.beta2) * g * g
            m_hat = self._m[key] / correction1
            v_hat = self._v[key] / correction2
            p.value = p.value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def window_normalize(values: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    """Map the intensity window onto [-1, 1], clipping outside values."""
    lo, hi = window
    if not hi > lo:
        raise ValueError("window must satisfy hi > lo")
    scaled = 2.0 * (np.asarray(values, dtype=np.float64) - lo) / (hi - lo) - 1.0
    return np.clip(scaled, -1.0, 1.0)


def window_denormalize(values: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    return lo + (np.asarray(values, dtype=np.float64) + 1.0) * 0.5 * (hi - lo)


@dataclass(frozen=True)
class TrainConfig:
    preset: str = "synthetic"
    epochs: int = 50
    learning_rate: float = 2e-3
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    generator_depth: int = 4
    generator_base: int = 32
    use_attention: bool = True
    attention_reduction: int = 8
    discriminator_base: int = 64
    discriminator_layers: int = 4
    intensity_window: tuple[float, float] = (0.0, 0.08)
    seed: int = 0
    beta_override: float | None = None  # ablation grids vary beta off-preset

    def weights(self) -> LossWeights:
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        base = PRESETS[self.preset]
        if self.beta_override is None:
            return base
        return LossWeights(
            cycle=base.cycle, beta=self.beta_override, identity=base.identity
        )


@dataclass
class TrainResult:
    artifact_to_clean: UNetGenerator
    clean_to_artifact: UNetGenerator
    disc_artifact: PatchDiscriminator
    disc_clean: PatchDiscriminator
    history: list[dict[str, float]]
    config: TrainConfig
    checkpoint_dir: Path | None = field(default=None)


def _as_batch(image: np.ndarray) -> Tensor:
    return Tensor(image[None, None, :, :])


def _check_finite(step: int, values: dict[str, float]) -> None:
    bad = {k: v for k, v in values.items() if not math.isfinite(v)}
    if bad:
        raise TrainingDivergedError(f"non-finite losses at step {step}: {bad}")


def history_to_csv(history: Sequence[dict[str, float]]) -> str:
    """Deterministic CSV text (repr-precision floats) of the loss log."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    for row in history:
        writer.writerow(
            [int(row["step"]), int(row["epoch"])]
            + [repr(float(row[k])) for k in LOG_COLUMNS[2:]]
        )
    return buf.getvalue()


def _save_run(out_dir: Path, result: TrainResult, diagnostic: bool = False) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    names = {
        "generator_artifact_to_clean": result.artifact_to_clean,
        "generator_clean_to_artifact": result.clean_to_artifact,
        "discriminator_artifact": result.disc_artifact,
        "discriminator_clean": result.disc_clean,
    }
    files = {}
    for name, model in names.items():
        stem = save_model(out_dir / name, model)
        files[name] = stem.with_suffix(".bin").name
    (out_dir / "losses.csv").write_text(history_to_csv(result.history))
    cfg = result.config
    fileio.write_manifest(
        out_dir / "run_manifest.json",
        {
            "kind": "ctmar-training-run",
            "diagnostic": diagnostic,
            "config": {
                "preset": cfg.preset,
                "epochs": cfg.epochs,
                "learning_rate": cfg.learning_rate,
                "adam_beta1": cfg.adam_beta1,
                "adam_beta2": cfg.adam_beta2,
                "adam_eps": cfg.adam_eps,
                "generator_depth": cfg.generator_depth,
                "generator_base": cfg.generator_base,
                "use_attention": cfg.use_attention,
                "attention_reduction": cfg.attention_reduction,
                "discriminator_base": cfg.discriminator_base,
                "discriminator_layers": cfg.discriminator_layers,
                "intensity_window": list(cfg.intensity_window),
                "seed": cfg.seed,
            },
            "models": files,
            "steps": len(result.history),
        },
    )


def train(
    artifact_images: Sequence[np.ndarray],
    clean_images: Sequence[np.ndarray],
    config: TrainConfig,
    out_dir: str | Path | None = None,
    progress: Callable[[dict[str, float]], None] | None = None,
) -> TrainResult:
    """Run the full unpaired schedule; optionally checkpoint into ``out_dir``."""
    if not artifact_images or not clean_images:
        raise ValueError("both image pools must be non-empty")
    weights = config.weights()
    window = config.intensity_window

    x_pool = [window_normalize(img, window) for img in artifact_images]
    y_pool = [window_normalize(img, window) for img in clean_images]

    root = np.random.SeedSequence(config.seed)
    seq_g, seq_f, seq_dx, seq_dy, seq_order = root.spawn(5)
    gen_g = init_generator(
        np.random.default_rng(seq_g),
        depth=config.generator_depth,
        base_channels=config.generator_base,
        use_attention=config.use_attention,
        attention_reduction=config.attention_reduction,
    )
    gen_f = init_generator(
        np.random.default_rng(seq_f),
        depth=config.generator_depth,
        base_channels=config.generator_base,
        use_attention=config.use_attention,
        attention_reduction=config.attention_reduction,
    )
    disc_x = init_discriminator(
        np.random.default_rng(seq_dx),
        base_channels=config.discriminator_base,
        num_layers=config.discriminator_layers,
    )
    disc_y = init_discriminator(
        np.random.default_rng(seq_dy),
        base_channels=config.discriminator_base,
        num_layers=config.discriminator_layers,
    )
    order_rng = np.random.default_rng(seq_order)

    translator_params = {
        **{f"G.{k}": v for k, v in gen_g.parameters().items()},
        **{f"F.{k}": v for k, v in gen_f.parameters().items()},
    }
    opt_g = Adam(
        translator_params,
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    )
    opt_dx = Adam(
        disc_x.parameters(),
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    )
    opt_dy = Adam(
        disc_y.parameters(),
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    )

    result = TrainResult(
        artifact_to_clean=gen_g,
        clean_to_artifact=gen_f,
        disc_artifact=disc_x,
        disc_clean=disc_y,
        history=[],
        config=config,
        checkpoint_dir=Path(out_dir) if out_dir is not None else None,
    )

    step = 0
    try:
        for epoch in range(config.epochs):
            for x_idx in order_rng.permutation(len(x_pool)):
                y_idx = int(order_rng.integers(len(y_pool)))
                x = _as_batch(x_pool[int(x_idx)])
                y = _as_batch(y_pool[y_idx])

                fake_y = gen_g(x, training=True)
                fake_x = gen_f(y, training=True)
                cycled_x = gen_f(fake_y, training=True)
                cycled_y = gen_g(fake_x, training=True)
                id_x = gen_f(x, training=True)
                id_y = gen_g(y, training=True)

                opt_dx.zero_grad()
                dx_parts = discriminator_objective(
                    disc_x(x, training=True),
                    disc_x(Tensor(fake_x.value), training=True),
                )
                dx_parts["total"].backward()
                opt_dx.step()

                opt_dy.zero_grad()
                dy_parts = discriminator_objective(
                    disc_y(y, training=True),
                    disc_y(Tensor(fake_y.value), training=True),
                )
                dy_parts["total"].backward()
                opt_dy.step()

                opt_g.zero_grad()
                opt_dx.zero_grad()
                opt_dy.zero_grad()
                g_parts = generator_objective(
                    x,
                    y,
                    cycled_x,
                    cycled_y,
                    id_x,
                    id_y,
                    disc_y(fake_y, training=True),
                    disc_x(fake_x, training=True),
                    weights,
                )
                g_parts["total"].backward()
                opt_g.step()
                opt_dx.zero_grad()
                opt_dy.zero_grad()

                step += 1
                row = {
                    "step": float(step),
                    "epoch": float(epoch),
                    "cycle_x": float(g_parts["cycle_x"].value),
                    "cycle_y": float(g_parts["cycle_y"].value),
                    "identity": float(g_parts["identity"].value),
                    "adv_G": float(g_parts["adv_G"].value),
                    "adv_F": float(g_parts["adv_F"].value),
                    "disc_X": float(dx_parts["total"].value),
                    "disc_Y": float(dy_parts["total"].value),
                    "total_G": float(g_parts["total"].value),
                    "total_D": float(dx_parts["total"].value + dy_parts["total"].value),
                }
                result.history.append(row)
                _check_finite(step, row)
                if progress is not None:
                    progress(row)
    except TrainingDivergedError:
        if out_dir is not None:
            _save_run(Path(out_dir), result, diagnostic=True)
        raise

    if out_dir is not None:
        _save_run(Path(out_dir), result)
    return result


def infer_images(
    model: UNetGenerator,
    images: Sequence[np.ndarray],
    intensity_window: tuple[float, float],
) -> list[np.ndarray]:
    """Eval-mode translation of attenuation images, back in attenuation units."""
    outputs = []
    with ad.no_grad():
        for img in images:
            x = _as_batch(window_normalize(img, intensity_window))
            y = model(x, training=False)
            outputs.append(window_denormalize(y.value[0, 0], intensity_window))
    return outputs
