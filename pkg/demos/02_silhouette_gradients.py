"""How the rasterizer produces gradients, and a triangle that slides home.

The forward pass is a hard 0/1 coverage test, so its true derivative is
zero almost everywhere. The backward pass instead asks, per vertex and
axis, how far the vertex would have to move for a pixel to flip, and
uses that step as a finite-difference slope when the flip helps.

Run:  python3 demos/02_silhouette_gradients.py
"""
import numpy as np

from handfit.optim import AdamState, OptimizerConfig, adam_step
from handfit.renderer import EdgeCrossing, RasterConfig, backward_outside, rasterize_forward, vertex_gradients

# A pixel outside the face turns on (+1) if the vertex moves 4 px; the loss
# wants it brighter (upstream -1), so the slope flows.
print("outside crossing:", backward_outside(EdgeCrossing(0.0, 4.0, 1.0, -1.0)))
# The same move when the loss wants it darker: gated to zero.
print("gated crossing:  ", backward_outside(EdgeCrossing(0.0, 4.0, 1.0, 1.0)))

cfg = RasterConfig()
face = [[0, 1, 2]]
target = np.array([[26.0, 24.0], [42.0, 30.0], [30.0, 41.0]])
start = target + [5.0, -4.0]
goal = rasterize_forward(target, face, cfg).pixels

state = AdamState.init(start.reshape(-1))
adam = OptimizerConfig(lr=0.1)
for step in range(201):
    verts = state.params.reshape(3, 2)
    pixels = rasterize_forward(verts, face, cfg).pixels
    loss = np.mean((pixels - goal) ** 2)
    if step % 25 == 0:
        err = np.abs(verts - target).max()
        print(f"step {step:3d}  mask loss {loss:.5f}  worst vertex error {err:.2f} px")
    grad = vertex_gradients(verts, face, 2 * (pixels - goal) / goal.size, cfg)
    state = adam_step(state, grad.reshape(-1), adam)
