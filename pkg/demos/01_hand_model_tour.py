"""A walk through the toy hand: template, shape, pose and silhouettes.

Run from the repository root:  python3 demos/01_hand_model_tour.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from handfit.camera import FullParams, ViewParams
from handfit.hand_model import hand_forward, rest_keypoints
from handfit.imaging import colorize_silhouette, draw_overlay, save_image
from handfit.renderer import RasterConfig
from handfit.scene import predict
from handfit.template import make_toy_template

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/tour")
out.mkdir(parents=True, exist_ok=True)

# The procedural template: a box palm with five tube fingers, 15 articulations.
tpl = make_toy_template()
print(f"{tpl.n_vertices} vertices, {tpl.n_faces} faces, K = {tpl.k}, {tpl.n_keypoints} keypoints")

# At rest the model returns the template unchanged.
rest = hand_forward(np.zeros(10), tpl.rest_pose, tpl)
print("rest mesh equals template:", np.array_equal(rest.vertices, tpl.mean_vertices))

# Shape mode 0 is a global scale, mode 1 finger length.
for mode in range(3):
    beta = np.zeros(10)
    beta[mode] = 1.0
    kp = rest_keypoints(tpl, beta)
    span = np.ptp(kp, axis=0)
    print(f"beta[{mode}] = 1: keypoint extent x {span[0]:.1f} mm, y {span[1]:.1f} mm")

# Curl the index finger: rotate its three joints about x.
theta = np.zeros(3 * tpl.k)
for joint in (4, 5, 6):
    theta[3 * (joint - 1)] = 0.5
curled = hand_forward(np.zeros(10), theta, tpl)
moved = np.linalg.norm(curled.keypoints - rest.keypoints, axis=1)
print("keypoints moved by the curl:", np.flatnonzero(moved > 1e-9).tolist())

# Render a few views at 128 x 128.
raster = RasterConfig(128, 128)
views = {
    "front": ViewParams([64.0, 100.0], 0.45, [0.0, 0.0, 0.0]),
    "tilted": ViewParams([64.0, 100.0], 0.45, [0.4, 0.3, 0.2]),
    "curled": ViewParams([64.0, 100.0], 0.45, [0.0, 0.0, 0.0]),
}
for name, view in views.items():
    params = FullParams(view, theta if name == "curled" else tpl.rest_pose, np.zeros(10))
    pred = predict(params, tpl, raster)
    image = draw_overlay(colorize_silhouette(pred.silhouette), pred.keypoints_2d)
    save_image(out / f"{name}.png", image)
    print(f"{name}: {int(pred.silhouette.sum())} pixels lit, wrist at {pred.keypoints_2d[0].round(1)}")
print("images in", out)
