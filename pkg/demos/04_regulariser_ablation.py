"""Silhouette-only fitting with and without the pose/shape regulariser.

A silhouette says little about the hand's depth or finger articulation,
so an unregularised fit is free to push the shape coefficients wherever
the outline happens to match a little better. The regulariser keeps
them near the mean hand.

Run:  python3 demos/04_regulariser_ablation.py [n_samples]
"""
import sys

import numpy as np

from handfit.dataset import synth_samples
from handfit.metrics import epe
from handfit.objectives import LossWeights
from handfit.optim import OptimizerConfig, fit_sample
from handfit.scene import Observations, predict
from handfit.template import make_toy_template

n = int(sys.argv[1]) if len(sys.argv) > 1 else 5
tpl = make_toy_template()
rows = []
for smp in synth_samples(tpl, n, seed=100):
    obs = Observations(mask=smp.mask)
    row = []
    for w_reg in (0.0, 1.0):
        result = fit_sample(tpl, obs, LossWeights(reg=w_reg), OptimizerConfig(max_iters=200))
        err = epe(predict(result.params, tpl).keypoints_3d, smp.record.keypoints_3d)
        row += [np.linalg.norm(result.params.beta), err, result.breakdown.terms["mask"]]
    rows.append(row)
    print("sample {}: |beta| {:.3f} vs {:.3f}, EPE {:.1f} vs {:.1f} mm".format(smp.record.sample_id, *row[0::3],
                                                                                *row[1::3]))

rows = np.array(rows)
print(f"median |beta| without regulariser {np.median(rows[:, 0]):.3f}, with {np.median(rows[:, 3]):.3f}")
print(f"mean mask loss without {rows[:, 2].mean():.5f}, with {rows[:, 5].mean():.5f}")
