"""
How much pose noise can the memory take?
========================================

Sensor noise corrupts the projection path: writes land in the wrong
cells and reads sample the wrong cells. This script sweeps the noise
multiplier and prints the AP curve for the implicit object memory next
to the no-memory floor, which ignores the projection path entirely.

The same sweep is available from the command line:
    groundmem sweep --config cfg.json --data DIR --out OUT
with {"sweep": {"parameter": "noise-scale", "values": [0, 1, 2, 5]}}.
"""

from groundmem import (
    CorruptionConfig,
    GridSpec,
    NoiseConfig,
    PixelFeatureSpace,
    generate_episodes,
    generate_scene,
    make_backend,
    make_embedding_table,
    run_experiment,
)
from groundmem.pipeline import calibrate_object_projection
from groundmem.simulator import DEFAULT_INTRINSICS, survey_episode

scene = generate_scene(seed=6, extent=(0.0, 0.0, 12.0, 12.0), n_objects=8, n_classes=5)
episodes = generate_episodes(scene, count=6, length=15, seed=6)
table = make_embedding_table(5, 48, seed=0)
space = PixelFeatureSpace(48, 24, seed=0)
spec = GridSpec.from_extent(0.0, 0.0, 12.0, 12.0, 0.2)
corruption = CorruptionConfig(feature_noise_sigma=0.5, dropout_prob=0.2, seed=0)
w_obj = calibrate_object_projection(scene, [survey_episode(scene)], table, space,
                                    intrinsics=DEFAULT_INTRINSICS)

def run(variant, scale, **kwargs):
    backend = make_backend(variant, spec, table, space, **kwargs)
    result = run_experiment(
        scene, episodes, table, space, backend,
        intrinsics=DEFAULT_INTRINSICS, corruption=corruption,
        noise=NoiseConfig(scale=scale, seed=0),
    )
    return result.report.mean_ap

# The no-memory arm never projects anything, so noise cannot touch it.
floor = run("none", 0.0)
print(f"no memory (any noise): {floor:.4f}\n")
print("scale  pos sigma  implicit AP50")
for scale in (0.0, 1.0, 2.0, 5.0, 10.0):
    ap = run("implicit-object", scale, lam=5.0, reader_weights=w_obj)
    bar = "#" * int(40 * ap)
    print(f"{scale:5.0f}  {0.1 * scale:8.2f}  {ap:.4f}  {bar}")
