"""Image translation networks built on the numpy autodiff engine.

``UNetGenerator``: encoder/decoder with skip connections; each skip is
refined by a convolutional attention block before concatenation (can be
disabled for the plain variant). ``PatchDiscriminator``: stacked 4x4
stride-2 convolutions emitting a patch score map, so realism is judged
locally rather than with one global logit.

Parameters are ``Tensor`` leaves exposed through ``parameters()`` (flat
name -> Tensor) for the optimizer; batch-norm running statistics travel
separately through ``state_arrays()``. Checkpoints are float64 bundles,
so a reloaded model reproduces the in-memory one bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import autodiff as ad
from . import fileio
from .attention import CbamParams, apply_cbam, init_cbam
from .autodiff import Tensor

__all__ = [
    "BatchNorm2d",
    "ConvBlock",
    "UNetGenerator",
    "PatchDiscriminator",
    "init_generator",
    "init_discriminator",
    "save_model",
    "load_model",
]


def _xavier_conv(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    # conv (O, I, kh, kw) and transpose-conv (I, O, kh, kw) share this:
    # receptive field size multiplies both fan terms
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    fan_out = shape[0] * receptive
    fan_in = shape[1] * receptive
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class BatchNorm2d:
    """Per-channel affine normalization with running statistics."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1

    @classmethod
    def create(cls, channels: int, trainable: bool = True) -> "BatchNorm2d":
        return cls(
            gamma=Tensor(np.ones(channels), trainable),
            beta=Tensor(np.zeros(channels), trainable),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
        )

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        # normalization is per batch in BOTH modes: networks train at batch
        # size 1, so the features are standardized per image, and inference
        # has to reproduce that to see the distribution it was trained on.
        # `training` only controls whether the running diagnostics update.
        c = self.gamma.value.shape[0]
        mean, var = ad.moments_per_channel(x)
        if training:
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mean.value.reshape(c)
            self.running_var = (1 - m) * self.running_var + m * var.value.reshape(c)
        xhat = ad.mul(ad.sub(x, mean), ad.rsqrt(var, self.eps))
        scaled = ad.mul(xhat, ad.reshape(self.gamma, (1, c, 1, 1)))
        return ad.add(scaled, ad.reshape(self.beta, (1, c, 1, 1)))

    def tensors(self) -> dict[str, Tensor]:
        return {"gamma": self.gamma, "beta": self.beta}

    def state(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        self.running_mean = state["running_mean"].copy()
        self.running_var = state["running_var"].copy()


@dataclass
class ConvBlock:
    """Two 3x3 conv -> batch norm -> ReLU stages at constant resolution."""

    w1: Tensor
    b1: Tensor
    bn1: BatchNorm2d
    w2: Tensor
    b2: Tensor
    bn2: BatchNorm2d

    @classmethod
    def create(
        cls, rng: np.random.Generator, cin: int, cout: int, trainable: bool = True
    ) -> "ConvBlock":
        return cls(
            w1=Tensor(_xavier_conv(rng, (cout, cin, 3, 3)), trainable),
            b1=Tensor(np.zeros(cout), trainable),
            bn1=BatchNorm2d.create(cout, trainable),
            w2=Tensor(_xavier_conv(rng, (cout, cout, 3, 3)), trainable),
            b2=Tensor(np.zeros(cout), trainable),
            bn2=BatchNorm2d.create(cout, trainable),
        )

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        h = ad.relu(self.bn1(ad.conv2d(x, self.w1, self.b1, stride=1, padding=1), training))
        return ad.relu(self.bn2(ad.conv2d(h, self.w2, self.b2, stride=1, padding=1), training))

    def tensors(self) -> dict[str, Tensor]:
        out = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
        out.update({f"bn1.{k}": v for k, v in self.bn1.tensors().items()})
        out.update({f"bn2.{k}": v for k, v in self.bn2.tensors().items()})
        return out

    def state(self) -> dict[str, np.ndarray]:
        out = {f"bn1.{k}": v for k, v in self.bn1.state().items()}
        out.update({f"bn2.{k}": v for k, v in self.bn2.state().items()})
        return out


def _prefixed(prefix: str, mapping: dict[str, Any]) -> dict[str, Any]:
    return {f"{prefix}.{k}": v for k, v in mapping.items()}


@dataclass
class UNetGenerator:
    """Encoder/decoder translator with attention-refined skip connections."""

    depth: int
    base_channels: int
    use_attention: bool
    encoders: list[ConvBlock]
    bottleneck: ConvBlock
    up_weights: list[Tensor]
    up_biases: list[Tensor]
    attentions: list[CbamParams | None]
    decoders: list[ConvBlock]
    final_w: Tensor
    final_b: Tensor
    config: dict[str, Any] = field(default_factory=dict)

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        size = x.value.shape[2]
        if size % (1 << self.depth) or x.value.shape[3] % (1 << self.depth):
            raise ValueError(
                f"input {x.value.shape[2:]} not divisible by 2^{self.depth}"
            )
        skips: list[Tensor] = []
        h = x
        for block in self.encoders:
            h = block(h, training)
            skips.append(h)
            h = ad.avg_pool2d(h, 2)
        h = self.bottleneck(h, training)
        for level in reversed(range(self.depth)):
            skip = skips[level]
            out_hw = skip.value.shape[2:]
            h = ad.conv2d_transpose(
                h,
                self.up_weights[level],
                self.up_biases[level],
                stride=2,
                padding=1,
                output_shape=out_hw,
            )
            if self.attentions[level] is not None:
                skip = apply_cbam(skip, self.attentions[level])
            h = self.decoders[level](ad.concat([skip, h], axis=1), training)
        return ad.conv2d(h, self.final_w, self.final_b, stride=1, padding=0)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, block in enumerate(self.encoders):
            out.update(_prefixed(f"enc{i}", block.tensors()))
        out.update(_prefixed("bottleneck", self.bottleneck.tensors()))
        for i in range(self.depth):
            out[f"up{i}.weight"] = self.up_weights[i]
            out[f"up{i}.bias"] = self.up_biases[i]
            if self.attentions[i] is not None:
                out.update(_prefixed(f"attn{i}", self.attentions[i].tensors()))
            out.update(_prefixed(f"dec{i}", self.decoders[i].tensors()))
        out["final.weight"] = self.final_w
        out["final.bias"] = self.final_b
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, block in enumerate(self.encoders):
            out.update(_prefixed(f"enc{i}", block.state()))
        out.update(_prefixed("bottleneck", self.bottleneck.state()))
        for i in range(self.depth):
            out.update(_prefixed(f"dec{i}", self.decoders[i].state()))
        return out


@dataclass
class PatchDiscriminator:
    """4x4 stride-2 conv stack ending in a 1x1 patch-score head."""

    base_channels: int
    weights: list[Tensor]
    biases: list[Tensor]
    norms: list[BatchNorm2d | None]
    head_w: Tensor
    head_b: Tensor
    negative_slope: float = 0.2
    config: dict[str, Any] = field(default_factory=dict)

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        h = x
        for w, b, norm in zip(self.weights, self.biases, self.norms):
            h = ad.conv2d(h, w, b, stride=2, padding=1)
            if norm is not None:
                h = norm(h, training)
            h = ad.leaky_relu(h, self.negative_slope)
        return ad.conv2d(h, self.head_w, self.head_b, stride=1, padding=0)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, (w, b, norm) in enumerate(zip(self.weights, self.biases, self.norms)):
            out[f"conv{i}.weight"] = w
            out[f"conv{i}.bias"] = b
            if norm is not None:
                out.update(_prefixed(f"conv{i}.bn", norm.tensors()))
        out["head.weight"] = self.head_w
        out["head.bias"] = self.head_b
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, norm in enumerate(self.norms):
            if norm is not None:
                out.update(_prefixed(f"conv{i}.bn", norm.state()))
        return out


def init_generator(
    rng: np.random.Generator,
    depth: int = 4,
    base_channels: int = 32,
    use_attention: bool = True,
    attention_reduction: int = 8,
    trainable: bool = True,
) -> UNetGenerator:
    if depth < 1:
        raise ValueError("depth must be >= 1")
    enc_channels = [base_channels * (1 << i) for i in range(depth)]
    encoders = []
    cin = 1
    for cout in enc_channels:
        encoders.append(ConvBlock.create(rng, cin, cout, trainable))
        cin = cout
    bottleneck_c = base_channels * (1 << depth)
    bottleneck = ConvBlock.create(rng, enc_channels[-1], bottleneck_c, trainable)
    up_weights: list[Tensor] = []
    up_biases: list[Tensor] = []
    attentions: list[CbamParams | None] = []
    decoders: list[ConvBlock] = []
    for level in range(depth):
        c_skip = enc_channels[level]
        c_above = bottleneck_c if level == depth - 1 else enc_channels[level + 1]
        up_weights.append(Tensor(_xavier_conv(rng, (c_above, c_skip, 3, 3)), trainable))
        up_biases.append(Tensor(np.zeros(c_skip), trainable))
        attentions.append(
            init_cbam(c_skip, rng, reduction=attention_reduction, trainable=trainable)
            if use_attention
            else None
        )
        decoders.append(ConvBlock.create(rng, 2 * c_skip, c_skip, trainable))
    final_w = Tensor(_xavier_conv(rng, (1, base_channels, 1, 1)), trainable)
    final_b = Tensor(np.zeros(1), trainable)
    config = {
        "kind": "unet_generator",
        "depth": depth,
        "base_channels": base_channels,
        "use_attention": use_attention,
        "attention_reduction": attention_reduction,
    }
    return UNetGenerator(
        depth=depth,
        base_channels=base_channels,
        use_attention=use_attention,
        encoders=encoders,
        bottleneck=bottleneck,
        up_weights=up_weights,
        up_biases=up_biases,
        attentions=attentions,
        decoders=decoders,
        final_w=final_w,
        final_b=final_b,
        config=config,
    )


def init_discriminator(
    rng: np.random.Generator, base_channels: int = 64, num_layers: int = 4, trainable: bool = True
) -> PatchDiscriminator:
    if num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    weights, biases, norms = [], [], []
    cin = 1
    for i in range(num_layers):
        cout = base_channels * (1 << i)
        weights.append(Tensor(_xavier_conv(rng, (cout, cin, 4, 4)), trainable))
        biases.append(Tensor(np.zeros(cout), trainable))
        norms.append(None if i == 0 else BatchNorm2d.create(cout, trainable))
        cin = cout
    head_w = Tensor(_xavier_conv(rng, (1, cin, 1, 1)), trainable)
    head_b = Tensor(np.zeros(1), trainable)
    config = {
        "kind": "patch_discriminator",
        "base_channels": base_channels,
        "num_layers": num_layers,
    }
    return PatchDiscriminator(
        base_channels=base_channels,
        weights=weights,
        biases=biases,
        norms=norms,
        head_w=head_w,
        head_b=head_b,
        config=config,
    )


def save_model(path: str | Path, model: UNetGenerator | PatchDiscriminator) -> Path:
    arrays = {f"param.{k}": t.value for k, t in model.parameters().items()}
    arrays.update({f"state.{k}": v for k, v in model.state_arrays().items()})
    return fileio.write_bundle(path, arrays, metadata=model.config)


def _assign(model: UNetGenerator | PatchDiscriminator, arrays: dict[str, np.ndarray]) -> None:
    params = model.parameters()
    expected = {f"param.{k}" for k in params} | {f"state.{k}" for k in model.state_arrays()}
    if expected != set(arrays):
        missing = sorted(expected - set(arrays))[:3]
        extra = sorted(set(arrays) - expected)[:3]
        raise ValueError(f"checkpoint mismatch; missing {missing}, unexpected {extra}")
    for name, tensor in params.items():
        stored = arrays[f"param.{name}"]
        if stored.shape != tensor.value.shape:
            raise ValueError(f"shape mismatch for {name}")
        tensor.value = stored.copy()
    state_targets: list[tuple[str, BatchNorm2d]] = []
    if isinstance(model, UNetGenerator):
        for i, block in enumerate(model.encoders):
            state_targets += [(f"enc{i}.bn1", block.bn1), (f"enc{i}.bn2", block.bn2)]
        state_targets += [
            ("bottleneck.bn1", model.bottleneck.bn1),
            ("bottleneck.bn2", model.bottleneck.bn2),
        ]
        for i, block in enumerate(model.decoders):
            state_targets += [(f"dec{i}.bn1", block.bn1), (f"dec{i}.bn2", block.bn2)]
    else:
        for i, norm in enumerate(model.norms):
            if norm is not None:
                state_targets.append((f"conv{i}.bn", norm))
    for prefix, norm in state_targets:
        norm.load_state(
            {
                "running_mean": arrays[f"state.{prefix}.running_mean"],
                "running_var": arrays[f"state.{prefix}.running_var"],
            }
        )


def load_model(path: str | Path) -> UNetGenerator | PatchDiscriminator:
    arrays, header = fileio.read_bundle(path)
    config = header.get("metadata", {})
    kind = config.get("kind")
    rng = np.random.default_rng(0)  # placeholder values, overwritten below
    if kind == "unet_generator":
        model: UNetGenerator | PatchDiscriminator = init_generator(
            rng,
            depth=config["depth"],
            base_channels=config["base_channels"],
            use_attention=config["use_attention"],
            attention_reduction=config["attention_reduction"],
        )
    elif kind == "patch_discriminator":
        model = init_discriminator(
            rng, base_channels=config["base_channels"], num_layers=config["num_layers"]
        )
    else:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    _assign(model, arrays)
    return model
