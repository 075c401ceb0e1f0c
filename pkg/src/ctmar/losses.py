"""Training objectives for the unpaired translation pair.

G maps artifact images toward the clean domain, F maps clean images
toward the artifact domain. The cycle penalty is asymmetric: the
artifact-side reconstruction ``|x - F(G(x))|`` carries full weight while
the clean-side one is scaled by ``1/beta``, so large ``beta`` spends the
cycle budget on preserving artifact-image content. Adversarial terms use
the least-squares form on patch score maps.

``generator_objective`` / ``discriminator_objective`` return every
component plus the weighted total, so the training loop can log each
term and step on the total.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "LossWeights",
    "PRESETS",
    "l1_mean",
    "lsgan_generator",
    "lsgan_discriminator",
    "cycle_loss",
    "identity_loss",
    "generator_objective",
    "discriminator_objective",
]


@dataclass(frozen=True)
class LossWeights:
    """cycle = lambda weight, beta = cycle asymmetry, identity = gamma weight."""

    cycle: float
    beta: float
    identity: float

    def __post_init__(self) -> None:
        if self.cycle < 0 or self.identity < 0:
            raise ValueError("loss weights must be non-negative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")


PRESETS: dict[str, LossWeights] = {
    # measured clinical data: strong asymmetry, light identity anchor
    "real": LossWeights(cycle=10.0, beta=10.0, identity=1.0),
    # simulated corpus: symmetric cycle, heavy identity anchor
    "synthetic": LossWeights(cycle=10.0, beta=1.0, identity=5.0),
}


def l1_mean(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference over all elements."""
    return ad.mean_all(ad.abs_(ad.sub(a, b)))


def lsgan_generator(fake_scores: Tensor) -> Tensor:
    """mean((D(fake) - 1)^2): the generator wants fakes scored as real."""
    return ad.mean_all(ad.pow_int(ad.sub(fake_scores, Tensor(1.0)), 2))


def lsgan_discriminator(real_scores: Tensor, fake_scores: Tensor) -> Tensor:
    """0.5 mean((D(real) - 1)^2) + 0.5 mean(D(fake)^2)."""
    real_term = ad.mean_all(ad.pow_int(ad.sub(real_scores, Tensor(1.0)), 2))
    fake_term = ad.mean_all(ad.pow_int(fake_scores, 2))
    return ad.mul(ad.add(real_term, fake_term), 0.5)


def cycle_loss(
    x: Tensor, x_cycled: Tensor, y: Tensor, y_cycled: Tensor, beta: float
) -> tuple[Tensor, Tensor, Tensor]:
    """Returns (weighted total, artifact-side term, clean-side term)."""
    term_x = l1_mean(x, x_cycled)
    term_y = l1_mean(y, y_cycled)
    return ad.add(term_x, ad.mul(term_y, 1.0 / beta)), term_x, term_y


def identity_loss(x: Tensor, x_identity: Tensor, y: Tensor, y_identity: Tensor) -> Tensor:
    """mean|F(x) - x| + mean|G(y) - y|: each net fixes its target domain."""
    return ad.add(l1_mean(x_identity, x), l1_mean(y_identity, y))


def generator_objective(
    x: Tensor,
    y: Tensor,
    x_cycled: Tensor,
    y_cycled: Tensor,
    x_identity: Tensor,
    y_identity: Tensor,
    fake_y_scores: Tensor,
    fake_x_scores: Tensor,
    weights: LossWeights,
) -> dict[str, Tensor]:
    cycle_total, cycle_x, cycle_y = cycle_loss(x, x_cycled, y, y_cycled, weights.beta)
    identity = identity_loss(x, x_identity, y, y_identity)
    adv_g = lsgan_generator(fake_y_scores)
    adv_f = lsgan_generator(fake_x_scores)
    total = ad.add(
        ad.add(ad.mul(cycle_total, weights.cycle), ad.mul(identity, weights.identity)),
        ad.add(adv_g, adv_f),
    )
    return {
        "cycle_x": cycle_x,
        "cycle_y": cycle_y,
        "identity": identity,
        "adv_G": adv_g,
        "adv_F": adv_f,
        "total": total,
    }


def discriminator_objective(
    real_scores: Tensor, fake_scores: Tensor
) -> dict[str, Tensor]:
    total = lsgan_discriminator(real_scores, fake_scores)
    return {"total": total}
