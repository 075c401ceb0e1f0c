"""Channel and spatial attention gates on a synthetic feature map.

Fresh gates have no preferences. A few dozen gradient steps against a
denoising target teach the channel gate to keep the one informative
channel and the spatial gate to follow the feature energy.

Run: python3 demos/attention_gates.py
"""

import numpy as np

from ctmar import autodiff as ad
from ctmar.attention import apply_cbam, channel_gate, init_cbam, spatial_gate
from ctmar.autodiff import Tensor
from ctmar.training import Adam

rng = np.random.default_rng(3)
params = init_cbam(8, rng, reduction=4)

# channel 2 carries signal, the rest noise; the energy sits top-left
x = 0.3 * rng.normal(size=(1, 8, 16, 16))
bump = np.zeros((16, 16))
bump[:8, :8] = 1.0
x[0, 2] = 3.0 * bump + 0.05 * rng.normal(size=(16, 16))
target = np.zeros_like(x)
target[0, 2] = x[0, 2]

t = Tensor(x)
before = channel_gate(t, params).value[0, :, 0, 0].copy()

tensors = {
    "w_reduce": params.w_reduce, "w_expand": params.w_expand,
    "w_spatial": params.w_spatial, "b_spatial": params.b_spatial,
}
opt = Adam(tensors, learning_rate=0.05)
for step in range(80):
    opt.zero_grad()
    loss = ad.mean_all(ad.pow_int(ad.sub(apply_cbam(t, params), Tensor(target)), 2))
    loss.backward()
    opt.step()

after = channel_gate(t, params).value[0, :, 0, 0]
print("channel gate, untrained :", " ".join(f"{v:.2f}" for v in before))
print("channel gate, 80 steps  :", " ".join(f"{v:.2f}" for v in after))
print(f"(channel 2 ends at {after[2]:.2f}; noise channels get squeezed)")

sg = spatial_gate(t, params).value[0, 0]
print(f"spatial gate follows the bump: top-left mean {sg[:8, :8].mean():.2f} "
      f"vs bottom-right {sg[8:, 8:].mean():.2f}")

refined = apply_cbam(t, params).value
err0 = float(np.mean((x - target) ** 2))
err1 = float(np.mean((refined - target) ** 2))
print(f"denoising MSE: raw {err0:.4f} -> gated {err1:.4f}")
