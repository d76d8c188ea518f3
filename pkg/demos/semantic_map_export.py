"""
From memory grid to floor-plan images
=====================================

The explicit baseline decodes the feature grid into an occupancy map
and a per-cell class map. Both have natural image forms, which is also
what `groundmem export-map` emits. This script builds a memory from a
few walks and writes occupancy.pgm / semantic.ppm next to itself.
"""

import os

import numpy as np

from groundmem import (
    CorruptionConfig,
    GridSpec,
    PixelFeatureSpace,
    decode_semantic_map,
    generate_episodes,
    generate_scene,
    make_backend,
    make_embedding_table,
    occupancy,
    occupancy_to_pgm,
    run_experiment,
    semantic_to_ppm,
    snapshot_load,
)
from groundmem.simulator import DEFAULT_INTRINSICS

scene = generate_scene(seed=9, extent=(0.0, 0.0, 10.0, 10.0), n_objects=7, n_classes=5)
episodes = generate_episodes(scene, count=8, length=15, seed=9)
table = make_embedding_table(5, 48, seed=0)
space = PixelFeatureSpace(48, 24, seed=0)
spec = GridSpec.from_extent(0.0, 0.0, 10.0, 10.0, 0.2)

# A clean detector fills the memory; the snapshot is what export-map reads.
backend = make_backend("implicit-object", spec, table, space)
result = run_experiment(
    scene, episodes, table, space, backend,
    intrinsics=DEFAULT_INTRINSICS, corruption=CorruptionConfig(objectness_range=(1.0, 1.0)),
)
grid = snapshot_load(result.snapshot)

occ = occupancy(grid, tau_o=0.4)
semantic = decode_semantic_map(grid, occ, table)
n_occ = int(occ.o.sum())
print(f"grid {occ.o.shape}: {n_occ} occupied cells, "
      f"classes present: {sorted(set(int(c) - 1 for c in np.unique(semantic.s) if c > 0))}")
print("true object classes:", sorted(set(o.class_id for o in scene.objects)))

here = os.path.dirname(os.path.abspath(__file__))
for name, payload in (("occupancy.pgm", occupancy_to_pgm(occ)),
                      ("semantic.ppm", semantic_to_ppm(semantic))):
    with open(os.path.join(here, name), "wb") as fh:
        fh.write(payload)
    print("wrote", os.path.join(here, name))
