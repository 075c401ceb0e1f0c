"""Unpaired CT metal artifact reduction toolkit.

Library layout:

- :mod:`ctmar.tomo` -- 2D parallel-beam projector, exact adjoint, filtered
  backprojection.
- :mod:`ctmar.phantoms` -- deterministic test phantoms and randomized
  anatomy-like phantoms.
- :mod:`ctmar.synthesis` -- polychromatic beam-hardening + Poisson-noise
  corpus generation.
- :mod:`ctmar.classical` -- sinogram-repair baselines (linear interpolation
  and normalized interpolation).
- :mod:`ctmar.autodiff` -- minimal reverse-mode engine over numpy arrays.
- :mod:`ctmar.attention` -- channel/spatial attention gates (CBAM).
- :mod:`ctmar.networks` -- U-Net style generator and patch discriminator.
- :mod:`ctmar.losses` -- asymmetric cycle, identity and least-squares
  adversarial losses.
- :mod:`ctmar.training` -- unpaired training loop, Adam, checkpoints,
  inference.
- :mod:`ctmar.ot` -- desk-scale transport-duality bound verification.
- :mod:`ctmar.metrics` -- PSNR/SSIM and the evaluation protocol.
- :mod:`ctmar.fileio` -- bit-exact array files, manifests, PNG import.
- :mod:`ctmar.config` -- run configuration schema and presets.
- :mod:`ctmar.cli` -- command line entry points.
"""

__version__ = "0.1.0"

from .tomo import (  # noqa: F401
    ImageGrid,
    ProjectionGeometry,
    Sinogram,
    back_project,
    default_geometry,
    fbp_reconstruct,
    forward_project,
)
