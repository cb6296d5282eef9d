"""Tour of the grid primitives: Gaussian scribble encodings, exact
Manhattan distance transforms, signed distances and the near/far split.

Run:  python demos/01_grid_primitives.py
"""

import numpy as np

from voxeledit import (
    GridMeta,
    VoxelSet,
    complement_map,
    make_gaussian_map,
    manhattan_distance_transform,
    percentile,
    signed_distance,
    threshold_map,
)
from voxeledit.grids import BinaryMask

meta = GridMeta((48, 48, 48), spacing_mm=1.1024)
print(f"grid: {meta.dims}, spacing {meta.spacing_mm} mm, {meta.n_voxels} voxels")

# a short synthetic "scribble" along one axis
scribble = VoxelSet(meta, [[24, j, 24] for j in range(18, 31)])
u = make_gaussian_map(scribble, sigma=7.5)
print(f"\ninteraction heatmap u: peak {u.data.max():.3f} on the scribble, "
      f"min {u.data.min():.2e} at the far corner")

a = u  # with equal sigmas the vicinity map coincides with the encoding
a_bar = complement_map(a)
near = threshold_map(a, 0.5)
print(f"near region (A >= 0.5): {near.count()} voxels "
      f"({100 * near.count() / meta.n_voxels:.1f}% of the grid)")
print(f"A + (1 - A) everywhere 1: {np.allclose(a.data + a_bar.data, 1.0)}")

# exact Manhattan distance transform from the scribble
dt = manhattan_distance_transform(scribble)
print(f"\ndistance transform: 0 on the scribble, "
      f"max {dt.data.max():.0f} voxel steps, "
      f"p95 {percentile(dt.data.ravel(), 95):.0f}")

# signed distance of a ball: negative inside, zero on boundary, positive outside
grid = np.stack(np.meshgrid(*[np.arange(48)] * 3, indexing="ij"), -1)
ball = BinaryMask(meta, ((grid - 23.5) ** 2).sum(-1) <= 12**2)
sd = signed_distance(ball)
print(f"\nsigned distance of a radius-12 ball: "
      f"range [{sd.data.min():.0f}, {sd.data.max():.0f}] voxels")
print(f"sign reconstructs the mask: {bool(((sd.data <= 0) == ball.as_bool()).all())}")
