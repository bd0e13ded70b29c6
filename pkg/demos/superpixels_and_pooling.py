"""Superpixel counts per scale, and log-sum-exp pooling between mean and max.

A scale is the average number of pixels per region, so a 64x64 image at
scale 32 should split into about 128 connected regions.  LSE pooling then
summarises each region: small smoothness values approach the mean, large
ones approach the max.
"""
import math

import numpy as np

from hlstm.dataio import render_scene, random_scene_spec
from hlstm.mslstm import lse_fuse
from hlstm.superpixel import adjacency, is_partition_connected, oversegment

rng = np.random.default_rng(3)
image, labels = render_scene(random_scene_spec(rng, size=64))

print("scale  target K  actual K  edges  connected")
for scale in (16, 32, 48, 64, 128):
    sp = oversegment(image, scale)
    target = math.ceil(64 * 64 / scale)
    print(f"{scale:5d}  {target:8d}  {sp.K:8d}  {len(adjacency(sp).edges):5d}  "
          f"{is_partition_connected(sp)}")

region = rng.normal(size=(40, 1))
print(f"\nregion of 40 values: mean {region.mean():+.4f}, max {region.max():+.4f}")
for pi in (0.01, 0.5, 1.0, 2.0, 8.0, 32.0, 1000.0):
    print(f"  pi = {pi:7g}  LSE = {lse_fuse(region, pi)[0]:+.4f}")
