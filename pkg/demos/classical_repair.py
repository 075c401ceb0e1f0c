"""Repair one corrupted case with linear interpolation and the prior-guided
variant, then score both against the metal-free ground truth.

Run: python3 demos/classical_repair.py
"""

import numpy as np

from ctmar.classical import metal_trace, run_baseline
from ctmar.metrics import psnr, ssim
from ctmar.phantoms import random_phantom
from ctmar.synthesis import default_spectrum, synthesize_case
from ctmar.tomo import default_geometry

rng = np.random.default_rng(21)
spectrum = default_spectrum()
geom = default_geometry(64, num_views=160)
clean = random_phantom(64, rng, water=spectrum.mean_mu("water"), bone=spectrum.mean_mu("bone"))
case = synthesize_case(clean, spectrum, geom, rng, incident_photons=1e6)

trace = metal_trace(case.metal.mask, geom)
frac = trace.mean()
print(f"metal trace covers {100 * frac:.1f}% of all sinogram samples")

width = 0.08
water = spectrum.mean_mu("water")
scores = {"input": case.artifact}
scores["li"] = run_baseline(case.artifact, case.metal.mask, geom, method="li", water_value=water)
scores["nmar"] = run_baseline(case.artifact, case.metal.mask, geom, method="nmar", water_value=water)

print(f"{'method':8s} {'psnr_db':>8s} {'ssim':>7s}")
for name, img in scores.items():
    print(f"{name:8s} {psnr(case.ground_truth, img, width):8.2f} "
          f"{ssim(case.ground_truth, img, width):7.4f}")
print("interpolation removes the streaks; the normalized variant keeps more")
print("bone/soft-tissue contrast by flattening the sinogram with a prior first")
