"""Fit the hand model to one synthetic sample and look at every loss term.

Run:  python3 demos/03_fit_synthetic_hand.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from handfit.dataset import synth_samples
from handfit.imaging import draw_overlay, save_image
from handfit.metrics import epe
from handfit.objectives import LossWeights
from handfit.optim import FitProblem, OptimizerConfig, fit, init_heuristic
from handfit.renderer import RasterConfig
from handfit.scene import Observations, predict
from handfit.template import make_toy_template

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/fit")
out.mkdir(parents=True, exist_ok=True)
tpl = make_toy_template()

smp = synth_samples(tpl, 1, seed=3)[0]
obs = Observations(smp.record.keypoints_2d, smp.mask, smp.record.keypoints_3d)

# Start from the rest pose, scaled and placed from the 2D keypoints alone.
init = init_heuristic(obs.keypoints_2d, tpl)
print(f"init: s = {init.view.s:.3f} (true {smp.params.view.s:.3f}), t = {init.view.t.round(2)}")
print(f"initial 3D EPE {epe(predict(init, tpl).keypoints_3d, smp.record.keypoints_3d):.2f} mm")

# The first 100 iterations move only the camera, then everything is free.
result = fit(FitProblem(tpl, obs, init, LossWeights()), OptimizerConfig())
print(f"stopped after {result.iterations} iterations ({result.stop_reason})")
for name, value in result.breakdown.terms.items():
    print(f"  L_{name:<4s} = {value:.6f} {result.breakdown.units[name]}")

trace = np.array(result.trace)
for i in range(0, len(trace), 50):
    print(f"  iteration {i:3d}: total loss {trace[i]:.4f}")

pred = predict(result.params, tpl, RasterConfig())
print(f"final 3D EPE {epe(pred.keypoints_3d, smp.record.keypoints_3d):.3f} mm")
print(f"silhouette pixels wrong: {int(np.abs(pred.silhouette - smp.mask).sum())}")

save_image(out / "observed.png", draw_overlay(smp.image, smp.record.keypoints_2d))
save_image(out / "fitted.png", draw_overlay(smp.image, pred.keypoints_2d, pred.silhouette, smp.record.keypoints_2d))
print("overlays in", out)
