"""
Generating a room and rendering depth
=====================================

The simulator builds a rectangular room with boxes on the floor, walks
a robot through it, and ray-casts a depth image at every step. Depth
and per-pixel object ownership are all the detector ever sees.

Writes depth.pgm next to this script so you can look at one frame.
"""

import os

import numpy as np

from groundmem import generate_episodes, generate_scene

scene = generate_scene(seed=4, extent=(0.0, 0.0, 12.0, 12.0), n_objects=8, n_classes=5)
print(f"room {scene.extent}, {len(scene.objects)} objects:")
for k, obj in enumerate(scene.objects):
    x0, y0, x1, y1 = (round(v, 2) for v in obj.footprint)
    print(f"  {k}: class {obj.class_id}  footprint ({x0}, {y0})..({x1}, {y1})  height {obj.hi[2]:.2f}")

episodes = generate_episodes(scene, count=2, length=15, seed=4)
frame = episodes[0].frames[7]
print(f"\nframe 7 of episode 0, robot at ({frame.pose.x:.2f}, {frame.pose.y:.2f}), "
      f"heading {frame.pose.theta:.2f} rad")
print("visible objects:", [(g.object_index, g.class_id, g.pixel_count) for g in frame.gt])

depth = frame.depth
finite = np.isfinite(depth)
print(f"depth range {depth[finite].min():.2f}..{depth[finite].max():.2f} m, "
      f"{(~finite).sum()} sky pixels (rays that left the room over the walls)")

# Render the depth as an 8-bit PGM: near = bright, far = dark, sky = 0.
shade = np.zeros(depth.shape, dtype=np.uint8)
d = depth[finite]
shade[finite] = np.clip(255 * (1 - (d - d.min()) / (d.max() - d.min() + 1e-9)), 1, 255).astype(np.uint8)
out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "depth.pgm")
h, w = shade.shape
with open(out, "wb") as fh:
    fh.write(b"P5\n%d %d\n255\n" % (w, h))
    fh.write(shade.tobytes())
print("wrote", out)
