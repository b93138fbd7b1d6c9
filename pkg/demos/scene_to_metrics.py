"""Simulate one interfered frame, mitigate it classically and score the result.

    python demos/scene_to_metrics.py [seed]
"""

import sys

import numpy as np

from cvrd.classical import detect_interference, mitigate_pipeline
from cvrd.metrics import ca_cfar, evaluate_sample
from cvrd.radar import RadarParams, SceneDistribution, crop_rd, range_doppler_map, sample_seeds, simulate_frames

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
params = RadarParams()
scene, clean, interfered = simulate_frames(params, SceneDistribution(), sample_seeds(seed, 1)[0])
print(f"{len(scene.objects)} objects, {len(scene.interferers)} interferers, noise std {scene.noise_std}")

reference = crop_rd(range_doppler_map(clean).data, 96, 96)
print(f"clean-map CFAR peaks: {len(ca_cfar(np.abs(reference) ** 2))}")

mask = detect_interference(clean, interfered, accuracy=0.9, seed=seed)
print(f"detector flags {mask.mask.mean():.1%} of IF samples")
print(f"{'method':8s} {'F1':>6s} {'EVM':>7s} {'PPMSE':>7s}")
for method in ("none", "zeroing", "imat", "rfmin"):
    rd = mitigate_pipeline(method, interfered, mask if method in ("zeroing", "imat") else None)
    f1, e, ph = evaluate_sample(crop_rd(rd.data, 96, 96), reference)
    print(f"{method:8s} {f1:6.3f} {e:7.3f} {ph:7.4f}")
