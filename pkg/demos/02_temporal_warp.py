"""Differentiable affine time warps: zoom, pan, clamping, gradients.

Walks through the warp on a sequence whose feature value equals its frame
index, so the interpolation arithmetic is visible by eye.
"""

import numpy as np

from tsamlt.alignment import time_warp
from tsamlt.tensor import Tape, Tensor

m = 8
ramp = Tensor(np.arange(m, dtype=float)[:, None], requires_grad=True)
print("input frame values:", ramp.data.ravel())

for zoom, pan, label in [
    (1.0, 0.0, "identity (bit-exact copy)"),
    (0.5, 0.0, "zoom in on the center (borders trimmed)"),
    (2.0, 0.0, "zoom out (border frames repeat via clamping)"),
    (1.0, 0.5, "pan right"),
    (1.0, 2.0, "pan past the end (all rows clamp to the last frame)"),
]:
    out = time_warp(ramp, Tensor([zoom]), Tensor([pan]))
    print(f"zoom={zoom:4} pan={pan:4}: {np.round(out.data.ravel(), 3)}   <- {label}")

# Gradients flow to the warp parameters: make the warped mean frame value
# larger and the pan parameter receives positive pressure.
zoom_p = Tensor([0.8], requires_grad=True)
pan_p = Tensor([0.1], requires_grad=True)
with Tape() as tape:
    out = time_warp(ramp, zoom_p, pan_p)
    tape.backward(out.mean())
print(f"\nd mean(warped) / d zoom = {zoom_p.grad[0]:+.4f}")
print(f"d mean(warped) / d pan  = {pan_p.grad[0]:+.4f}  (positive: panning right"
      " samples later, larger frames)")
