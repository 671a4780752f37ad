# The two models side by side: the compact encoder-decoder segmentation net
# (depth 2, 8 initial filters, 128x128x25 patches) and the per-pixel
# spectral MLP (25-25-100-100-c with tanh).
#
# The complexity report uses a documented 2-FLOPs-per-MAC convention over
# kernel layers only; both the MAC and FLOP figures are printed because
# published numbers for small nets mix the two conventions.

import numpy as np

from specdrive.complexity import count_flops, count_params
from specdrive.model import UNetConfig, build_mlp, build_unet, forward
from specdrive.weights import generate_weights

unet = build_unet(UNetConfig(patch_size=128, encoder_depth=2, initial_filters=8,
                             in_channels=25, classes=3))
mlp = build_mlp(25, 3)

print(f"{'':<24}{'segnet':>16}{'mlp':>16}")
u = count_flops(unet, patches_per_image=18)
m = count_flops(mlp, patches_per_image=216 * 409)  # one application per pixel
print(f"{'parameters':<24}{u.np_total:>16,}{m.np_total:>16,}")
print(f"{'  non-trainable':<24}{u.non_trainable:>16,}{m.non_trainable:>16,}")
print(f"{'MACs per patch/pixel':<24}{u.macs_per_patch:>16,}{m.macs_per_patch:>16,}")
print(f"{'FLOPs per patch/pixel':<24}{u.flops_per_patch:>16,}{m.flops_per_patch:>16,}")
print(f"{'FLOPs per image':<24}{u.flops_per_image:>16,}{m.flops_per_image:>16,}")

# layer census of the segmentation net
kinds = {}
for layer in unet.layers:
    kinds[layer.kind] = kinds.get(layer.kind, 0) + 1
print("\nsegnet layers:", ", ".join(f"{k} x{v}" for k, v in sorted(kinds.items())))

# a forward pass restores the input resolution exactly
w = generate_weights(unet, seed=0)
x = np.random.default_rng(1).uniform(0, 1, (128, 128, 25)).astype(np.float32)
y = forward(unet, x, w)
print(f"\nforward: {x.shape} -> {y.shape}, "
      f"softmax channel sums within {np.abs(y.sum(-1) - 1).max():.1e} of 1")

# growing the class count only touches the 1x1 classifier head
five = count_params(build_unet(UNetConfig(classes=5)))
print(f"5-class head: {five.np_total:,} parameters "
      f"(+{five.np_total - u.np_total} over 3-class)")
