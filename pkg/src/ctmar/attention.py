"""Convolutional block attention: channel gate then spatial gate.

The channel gate squeezes the map with both average and max pooling,
pushes the two descriptors through one shared two-layer bottleneck, and
sigmoids their sum plus a per-channel bias. The spatial gate stacks
channel-wise mean and max planes and convolves them with a single 7x7
kernel (plus bias). Both gates multiply into the feature map, so
attention can only attenuate: |output| <= |input| everywhere.

Both biases initialise at ``GATE_OPEN_BIAS`` so fresh gates sit near 1
(sigmoid(2) ~ 0.88) instead of 0.5. A gated network then starts as an
almost-transparent copy of its ungated counterpart and learns where to
attenuate, rather than starting with half-strength features and halved
gradients on every gated path.

``channel_override`` / ``spatial_override`` replace a computed gate with
a fixed array, which makes the two stages separable in tests and
ablations (an override of ones disables that stage exactly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "CbamParams",
    "GATE_OPEN_BIAS",
    "init_cbam",
    "channel_gate",
    "spatial_gate",
    "apply_cbam",
]

SPATIAL_KERNEL = 7
GATE_OPEN_BIAS = 2.0


@dataclass
class CbamParams:
    """Learnable state for one attention block."""

    w_reduce: Tensor  # (C/r, C)
    w_expand: Tensor  # (C, C/r)
    b_channel: Tensor  # (C,)
    w_spatial: Tensor  # (1, 2, 7, 7)
    b_spatial: Tensor  # (1,)

    @property
    def channels(self) -> int:
        return self.w_expand.value.shape[0]

    def tensors(self) -> dict[str, Tensor]:
        return {
            "w_reduce": self.w_reduce,
            "w_expand": self.w_expand,
            "b_channel": self.b_channel,
            "w_spatial": self.w_spatial,
            "b_spatial": self.b_spatial,
        }


def _xavier(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_cbam(
    channels: int, rng: np.random.Generator, reduction: int = 8, trainable: bool = True
) -> CbamParams:
    if channels % reduction:
        raise ValueError(f"channels {channels} not divisible by reduction {reduction}")
    hidden = channels // reduction
    k = SPATIAL_KERNEL
    return CbamParams(
        w_reduce=Tensor(_xavier(rng, (hidden, channels), channels, hidden), trainable),
        w_expand=Tensor(_xavier(rng, (channels, hidden), hidden, channels), trainable),
        b_channel=Tensor(np.full(channels, GATE_OPEN_BIAS), trainable),
        w_spatial=Tensor(_xavier(rng, (1, 2, k, k), 2 * k * k, k * k), trainable),
        b_spatial=Tensor(np.full(1, GATE_OPEN_BIAS), trainable),
    )


def channel_gate(x: Tensor, params: CbamParams) -> Tensor:
    """Per-channel sigmoid gate of shape (N, C, 1, 1)."""
    n, c = x.value.shape[:2]

    def bottleneck(pooled: Tensor) -> Tensor:
        return ad.linear(ad.relu(ad.linear(pooled, params.w_reduce)), params.w_expand)

    summed = ad.add(bottleneck(ad.spatial_mean(x)), bottleneck(ad.spatial_max(x)))
    return ad.reshape(ad.sigmoid(ad.add(summed, params.b_channel)), (n, c, 1, 1))


def spatial_gate(x: Tensor, params: CbamParams) -> Tensor:
    """Per-pixel sigmoid gate of shape (N, 1, H, W)."""
    stacked = ad.concat([ad.channel_mean(x), ad.channel_max(x)], axis=1)
    logits = ad.conv2d(
        stacked, params.w_spatial, params.b_spatial, stride=1, padding=SPATIAL_KERNEL // 2
    )
    return ad.sigmoid(logits)


def apply_cbam(
    x: Tensor,
    params: CbamParams,
    channel_override: np.ndarray | None = None,
    spatial_override: np.ndarray | None = None,
) -> Tensor:
    if x.value.shape[1] != params.channels:
        raise ValueError(f"feature map has {x.value.shape[1]} channels, params expect {params.channels}")
    cg = Tensor(channel_override) if channel_override is not None else channel_gate(x, params)
    refined = ad.mul(x, cg)
    sg = (
        Tensor(spatial_override)
        if spatial_override is not None
        else spatial_gate(refined, params)
    )
    return ad.mul(refined, sg)
