"""
Four detectors walk into a room
===============================

Same scene, same walks, same corrupted detector; the only difference is
what kind of spatial memory (if any) feeds the enhancement. Prints a
small AP table like the ones the evaluation module produces for the
robustness figures.
"""

from groundmem import (
    CorruptionConfig,
    GridSpec,
    PixelFeatureSpace,
    VARIANTS,
    generate_episodes,
    generate_scene,
    make_backend,
    make_embedding_table,
    run_experiment,
)
from groundmem.pipeline import calibrate_object_projection, calibrate_pixel_projection
from groundmem.simulator import DEFAULT_INTRINSICS, survey_episode

scene = generate_scene(seed=3, extent=(0.0, 0.0, 12.0, 12.0), n_objects=8, n_classes=5)
episodes = generate_episodes(scene, count=6, length=15, seed=3)
table = make_embedding_table(5, 48, seed=0)
space = PixelFeatureSpace(48, 24, seed=0)
spec = GridSpec.from_extent(0.0, 0.0, 12.0, 12.0, 0.2)
corruption = CorruptionConfig(feature_noise_sigma=0.5, dropout_prob=0.2, seed=0)

# Readers are fitted from one deterministic survey of the scene; the
# object memories and the pixel memory need different regressions
# because their cells hold different things.
survey = [survey_episode(scene)]
w_obj = calibrate_object_projection(scene, survey, table, space,
                                    intrinsics=DEFAULT_INTRINSICS)

print(f"{'variant':18s} {'mean AP50':>9s}   per-class")
for variant in VARIANTS:
    kwargs = {}
    if variant in ("implicit-object", "explicit-object"):
        kwargs["reader_weights"] = w_obj
    elif variant == "implicit-pixel":
        from groundmem import make_gru_weights
        weights = make_gru_weights(space.pixel_dim, 64, seed=0)
        kwargs["reader_weights"] = calibrate_pixel_projection(
            scene, survey, table, space, weights, spec, intrinsics=DEFAULT_INTRINSICS
        )
        kwargs["hidden_dim"] = 64
    backend = make_backend(variant, spec, table, space, **kwargs)
    result = run_experiment(
        scene, episodes, table, space, backend,
        intrinsics=DEFAULT_INTRINSICS, corruption=corruption,
    )
    rep = result.report
    per_class = " ".join(f"{c}:{ap:.2f}" for c, ap in sorted(rep.per_class_ap.items()))
    print(f"{variant:18s} {rep.mean_ap:9.4f}   {per_class}")
