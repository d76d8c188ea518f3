"""Command-line entry points: generate, run, sweep, export-map.

Every command resolves one JSON config (defaults, then file, then
flags), writes its outputs plus a manifest of sha256 hashes into --out,
and is byte-deterministic for a fixed config and seed. Exit codes: 0
success, 2 config error, 3 data error.
"""

import argparse
import copy
import hashlib
import json
import sys
from pathlib import Path
from types import SimpleNamespace

from .baselines import (
    decode_semantic_map,
    make_gru_weights,
    occupancy,
    occupancy_to_pgm,
    semantic_to_ppm,
)
from .detector import (
    CorruptionConfig,
    PixelFeatureSpace,
    load_embedding_table,
    make_embedding_table,
    save_embedding_table,
)
from .errors import (
    ConfigError,
    DataError,
    DimensionMismatchError,
    MalformedSnapshotError,
    MalformedStreamError,
    MalformedTableError,
    PlacementFailureError,
)
from .evaluation import RecallTaskConfig
from .geometry import CameraIntrinsics, GridSpec
from .memory import snapshot_load
from .pipeline import (
    VARIANTS,
    calibrate_object_projection,
    calibrate_pixel_projection,
    make_backend,
    run_experiment,
)
from .simulator import (
    NoiseConfig,
    generate_episodes,
    generate_scene,
    load_episode_pack,
    save_episode_pack,
    scene_from_json,
    scene_to_json,
    survey_episode,
)

DEFAULT_CONFIG = {
    "seed": 0,
    "scene": {"extent": [0.0, 0.0, 20.0, 20.0], "n_objects": 12, "n_classes": 8},
    "episodes": {"count": 50, "length": 20},
    "calibration": {"distances": [1.5, 2.5]},
    "camera": {
        "fx": 100.0,
        "fy": 100.0,
        "cx": 80.0,
        "cy": 60.0,
        "width": 160,
        "height": 120,
        "stride": 4,
        "min_pixels": 16,
        "camera_height": 1.25,
        "camera_pitch": 0.0,
    },
    "features": {"object_dim": 64, "pixel_dim": 32, "table_file": None},
    "grid": {"cell_size": 0.2, "pad_cells": 1},
    "corruption": {
        "feature_noise_sigma": 0.0,
        "dropout_prob": 0.0,
        "misclass_prob": 0.0,
        "objectness_range": [0.5, 1.0],
    },
    "noise": {
        "depth_sigma": 0.1,
        "position_sigma": 0.1,
        "heading_sigma": 0.01,
        "scale": 0.0,
    },
    "memory": {
        "variant": "none",
        "lambda": None,
        "tau_s": 0.3,
        "tau_o": 0.4,
        "hidden_dim": 64,
        "persist": True,
        "fit_reader": True,
        "norm_of_mean": False,
    },
    "recall": {
        "enabled": True,
        "score_threshold": 0.3,
        "consecutive_frames": 5,
        "association_iou": 0.6,
        "verify_iou": 0.5,
    },
    "sweep": {"parameter": "lambda", "values": [], "variants": ["implicit-object"]},
}

SWEEP_PARAMETERS = ("lambda", "noise-scale", "tau-s", "tau-o", "persist")


def _merge(base: dict, override: dict, path: str = "") -> None:
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path}{key!r} must be an object")
            _merge(base[key], value, f"{path}{key}.")
        else:
            base[key] = value


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _validate(doc: dict) -> None:
    _require(isinstance(doc["seed"], int), "seed must be an integer")
    sc = doc["scene"]
    ext = sc["extent"]
    _require(
        isinstance(ext, list) and len(ext) == 4,
        "scene.extent must be [xmin, ymin, xmax, ymax]",
    )
    _require(ext[2] > ext[0] and ext[3] > ext[1], "scene.extent must have positive area")
    _require(sc["n_objects"] >= 1, "scene.n_objects must be at least 1")
    _require(sc["n_classes"] >= 1, "scene.n_classes must be at least 1")
    _require(doc["episodes"]["count"] >= 1, "episodes.count must be at least 1")
    _require(doc["episodes"]["length"] >= 1, "episodes.length must be at least 1")
    distances = doc["calibration"]["distances"]
    _require(
        isinstance(distances, list) and all(d > 0 for d in distances),
        "calibration.distances must be a list of positive viewing distances",
    )
    cam = doc["camera"]
    _require(cam["fx"] > 0 and cam["fy"] > 0, "camera focal lengths must be positive")
    _require(cam["stride"] >= 1, "camera.stride must be at least 1")
    _require(
        cam["width"] >= cam["stride"] and cam["height"] >= cam["stride"],
        "camera image must be at least one stride wide",
    )
    _require(cam["min_pixels"] >= 1, "camera.min_pixels must be at least 1")
    feat = doc["features"]
    _require(
        1 <= feat["pixel_dim"] <= feat["object_dim"],
        "features.pixel_dim must be in [1, features.object_dim]",
    )
    _require(doc["grid"]["cell_size"] > 0, "grid.cell_size must be positive")
    _require(doc["grid"]["pad_cells"] >= 0, "grid.pad_cells must be nonnegative")
    cor = doc["corruption"]
    for key in ("feature_noise_sigma",):
        _require(cor[key] >= 0, f"corruption.{key} must be nonnegative")
    for key in ("dropout_prob", "misclass_prob"):
        _require(0 <= cor[key] <= 1, f"corruption.{key} must be in [0, 1]")
    rng = cor["objectness_range"]
    _require(
        isinstance(rng, list) and len(rng) == 2 and 0 <= rng[0] <= rng[1] <= 1,
        "corruption.objectness_range must be [lo, hi] within [0, 1]",
    )
    for key in ("depth_sigma", "position_sigma", "heading_sigma", "scale"):
        _require(doc["noise"][key] >= 0, f"noise.{key} must be nonnegative")
    mem = doc["memory"]
    _require(
        mem["variant"] in VARIANTS,
        f"memory.variant must be one of {', '.join(VARIANTS)}",
    )
    if mem["lambda"] is not None:
        _require(mem["lambda"] >= 0, "memory.lambda must be nonnegative")
    _require(mem["tau_s"] >= 0, "memory.tau_s must be nonnegative")
    _require(mem["tau_o"] >= 0, "memory.tau_o must be nonnegative")
    _require(mem["hidden_dim"] >= 1, "memory.hidden_dim must be at least 1")
    if mem["variant"] != "none" and mem["fit_reader"]:
        _require(
            len(distances) >= 1,
            "memory.fit_reader needs at least one calibration distance",
        )
    rc = doc["recall"]
    if rc["enabled"]:
        for key in ("score_threshold", "association_iou", "verify_iou"):
            _require(0 < rc[key] <= 1, f"recall.{key} must be in (0, 1]")
        _require(rc["consecutive_frames"] >= 1, "recall.consecutive_frames must be at least 1")
    sw = doc["sweep"]
    _require(
        sw["parameter"] in SWEEP_PARAMETERS,
        f"sweep.parameter must be one of {', '.join(SWEEP_PARAMETERS)}",
    )
    _require(isinstance(sw["values"], list), "sweep.values must be a list")
    _require(
        sw["variants"] and all(v in VARIANTS for v in sw["variants"]),
        "sweep.variants must be a nonempty list of memory variants",
    )


def _resolve(args) -> dict:
    doc = copy.deepcopy(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config root must be a JSON object")
        _merge(doc, loaded)
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "variant", None):
        doc["memory"]["variant"] = args.variant
        doc["sweep"]["variants"] = [args.variant]
    if getattr(args, "lam", None) is not None:
        doc["memory"]["lambda"] = args.lam
    if getattr(args, "tau_s", None) is not None:
        doc["memory"]["tau_s"] = args.tau_s
    if getattr(args, "tau_o", None) is not None:
        doc["memory"]["tau_o"] = args.tau_o
    if getattr(args, "noise_scale", None) is not None:
        doc["noise"]["scale"] = args.noise_scale
    if getattr(args, "persist", None) is not None:
        doc["memory"]["persist"] = args.persist
    _validate(doc)
    return doc


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def _write_outputs(out_dir: Path, command: str, doc: dict, files: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for name in sorted(files):
        (out_dir / name).write_bytes(files[name])
        hashes[name] = hashlib.sha256(files[name]).hexdigest()
    manifest = {"command": command, "config": doc, "files": hashes}
    (out_dir / "manifest.json").write_bytes(_json_bytes(manifest))


def _intrinsics(doc: dict) -> CameraIntrinsics:
    cam = doc["camera"]
    return CameraIntrinsics(
        fx=cam["fx"],
        fy=cam["fy"],
        cx=cam["cx"],
        cy=cam["cy"],
        width=cam["width"],
        height=cam["height"],
    )


def _render_kwargs(doc: dict) -> dict:
    cam = doc["camera"]
    return dict(
        intrinsics=_intrinsics(doc),
        stride=cam["stride"],
        min_pixels=cam["min_pixels"],
        camera_height=cam["camera_height"],
        camera_pitch=cam["camera_pitch"],
    )


def cmd_generate(args) -> int:
    doc = _resolve(args)
    out_dir = Path(args.out)
    sc = doc["scene"]
    scene = generate_scene(
        doc["seed"],
        extent=tuple(sc["extent"]),
        n_objects=sc["n_objects"],
        n_classes=sc["n_classes"],
    )
    kwargs = _render_kwargs(doc)
    intrinsics = kwargs.pop("intrinsics")
    stride = kwargs.pop("stride")
    episodes = generate_episodes(
        scene,
        count=doc["episodes"]["count"],
        length=doc["episodes"]["length"],
        seed=doc["seed"],
        intrinsics=intrinsics,
        stride=stride,
        **kwargs,
    )
    calibration = [
        survey_episode(
            scene,
            intrinsics=intrinsics,
            stride=stride,
            distances=tuple(doc["calibration"]["distances"]),
            **kwargs,
        )
    ]
    table_file = doc["features"]["table_file"]
    if table_file is not None:
        table = load_embedding_table(table_file)
        if table.n_classes != sc["n_classes"]:
            raise DataError(
                f"table file holds {table.n_classes} classes, scene has {sc['n_classes']}"
            )
        if table.dim != doc["features"]["object_dim"]:
            raise DataError(
                f"table dim {table.dim} does not match features.object_dim"
            )
    else:
        table = make_embedding_table(
            sc["n_classes"], doc["features"]["object_dim"], seed=doc["seed"]
        )
    files = {
        "scene.json": _json_bytes(scene_to_json(scene)),
        "episodes.gmep": save_episode_pack(episodes, intrinsics, stride),
        "calibration.gmep": save_episode_pack(calibration, intrinsics, stride),
        "table.gmet": save_embedding_table(table),
    }
    _write_outputs(out_dir, "generate", doc, files)
    print(
        f"generated {len(episodes)} episodes x {doc['episodes']['length']} steps "
        f"({sc['n_objects']} objects, {sc['n_classes']} classes) into {out_dir}"
    )
    return 0


def _load_data(doc: dict, data_dir: str):
    d = Path(data_dir)
    for name in ("scene.json", "episodes.gmep", "calibration.gmep", "table.gmet"):
        if not (d / name).exists():
            raise ConfigError(f"data directory {d} is missing {name}; run generate first")
    try:
        scene_doc = json.loads((d / "scene.json").read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"scene.json: invalid JSON ({exc})") from exc
    scene = scene_from_json(scene_doc)
    episodes, stride = load_episode_pack((d / "episodes.gmep").read_bytes())
    calibration, calib_stride = load_episode_pack((d / "calibration.gmep").read_bytes())
    table = load_embedding_table(d / "table.gmet")
    cam = doc["camera"]
    if stride != cam["stride"] or calib_stride != cam["stride"]:
        raise DataError(
            f"episode packs use stride {stride}, config camera.stride is {cam['stride']}"
        )
    if not episodes:
        raise DataError("episode pack holds no episodes")
    shape = episodes[0].frames[0].depth.shape
    if shape != (cam["height"], cam["width"]):
        raise DataError(
            f"episode depth maps are {shape[1]}x{shape[0]}, config camera is "
            f"{cam['width']}x{cam['height']}"
        )
    if table.n_classes != doc["scene"]["n_classes"]:
        raise DataError(
            f"table holds {table.n_classes} classes, config scene.n_classes is "
            f"{doc['scene']['n_classes']}"
        )
    if table.dim != doc["features"]["object_dim"]:
        raise DataError(
            f"table dim {table.dim} does not match features.object_dim "
            f"{doc['features']['object_dim']}"
        )
    return SimpleNamespace(scene=scene, episodes=episodes, calibration=calibration, table=table)


def _experiment(doc: dict, data):
    mem = doc["memory"]
    feat = doc["features"]
    space = PixelFeatureSpace(feat["object_dim"], feat["pixel_dim"], seed=doc["seed"])
    ext = doc["scene"]["extent"]
    grid_spec = GridSpec.from_extent(
        ext[0], ext[1], ext[2], ext[3],
        cell_size=doc["grid"]["cell_size"],
        pad_cells=doc["grid"]["pad_cells"],
    )
    kwargs = _render_kwargs(doc)
    variant = mem["variant"]
    reader_weights = None
    if variant != "none" and mem["fit_reader"]:
        if variant == "implicit-pixel":
            weights = make_gru_weights(
                space.pixel_dim, mem["hidden_dim"], seed=doc["seed"]
            )
            reader_weights = calibrate_pixel_projection(
                data.scene, data.calibration, data.table, space, weights, grid_spec,
                **kwargs,
            )
        else:
            reader_weights = calibrate_object_projection(
                data.scene, data.calibration, data.table, space,
                tau_s=mem["tau_s"], **kwargs,
            )
    backend = make_backend(
        variant,
        grid_spec,
        data.table,
        space,
        lam=mem["lambda"],
        tau_s=mem["tau_s"],
        tau_o=mem["tau_o"],
        norm_of_mean=mem["norm_of_mean"],
        hidden_dim=mem["hidden_dim"],
        weight_seed=doc["seed"],
        reader_weights=reader_weights,
    )
    cor = doc["corruption"]
    corruption = CorruptionConfig(
        feature_noise_sigma=cor["feature_noise_sigma"],
        dropout_prob=cor["dropout_prob"],
        misclass_prob=cor["misclass_prob"],
        objectness_range=tuple(cor["objectness_range"]),
        seed=doc["seed"],
    )
    noi = doc["noise"]
    noise = NoiseConfig(
        depth_sigma=noi["depth_sigma"],
        position_sigma=noi["position_sigma"],
        heading_sigma=noi["heading_sigma"],
        scale=noi["scale"],
        seed=doc["seed"],
    )
    recall_config = None
    rc = doc["recall"]
    if rc["enabled"]:
        recall_config = RecallTaskConfig(
            episode_len=len(data.episodes[0].frames),
            score_threshold=rc["score_threshold"],
            consecutive_frames=rc["consecutive_frames"],
            association_iou=rc["association_iou"],
            verify_iou=rc["verify_iou"],
        )
    result = run_experiment(
        data.scene, data.episodes, data.table, space, backend,
        corruption=corruption,
        noise=noise,
        persist_memory=mem["persist"],
        recall_config=recall_config,
        **kwargs,
    )
    return result, backend


def _detections_csv(det_frames) -> bytes:
    lines = ["frame,class_id,score,x1,y1,x2,y2"]
    for f_idx, dets in enumerate(det_frames):
        for d in dets:
            lines.append(
                f"{f_idx},{d.class_id},{d.score!r},"
                f"{d.box[0]!r},{d.box[1]!r},{d.box[2]!r},{d.box[3]!r}"
            )
    return ("\n".join(lines) + "\n").encode()


def _metrics_csv(per_class_ap: dict) -> bytes:
    lines = ["class_id,ap50"]
    for class_id, ap in sorted(per_class_ap.items()):
        lines.append(f"{class_id},{ap!r}")
    return ("\n".join(lines) + "\n").encode()


def cmd_run(args) -> int:
    doc = _resolve(args)
    data = _load_data(doc, args.data)
    result, backend = _experiment(doc, data)
    report = result.report
    summary = {
        "seed": doc["seed"],
        "variant": doc["memory"]["variant"],
        "lambda": None if backend.variant == "none" else backend.params.lam,
        "persist_memory": doc["memory"]["persist"],
        "report": report.to_json(),
    }
    files = {
        "summary.json": _json_bytes(summary),
        "detections.csv": _detections_csv(result.det_frames),
        "metrics.csv": _metrics_csv(report.per_class_ap),
    }
    if result.snapshot is not None:
        suffix = "gmpx" if backend.variant == "implicit-pixel" else "gmsn"
        files[f"memory.{suffix}"] = result.snapshot
    _write_outputs(Path(args.out), "run", doc, files)
    ap = "n/a" if report.mean_ap is None else f"{report.mean_ap:.4f}"
    print(
        f"{doc['memory']['variant']}: mean AP50 {ap} over {report.n_frames} frames "
        f"({report.n_detections} detections), outputs in {args.out}"
    )
    return 0


def _apply_sweep_value(doc: dict, parameter: str, value) -> dict:
    out = copy.deepcopy(doc)
    if parameter == "lambda":
        out["memory"]["lambda"] = float(value)
    elif parameter == "noise-scale":
        out["noise"]["scale"] = float(value)
    elif parameter == "tau-s":
        out["memory"]["tau_s"] = float(value)
    elif parameter == "tau-o":
        out["memory"]["tau_o"] = float(value)
    elif parameter == "persist":
        out["memory"]["persist"] = bool(value)
    else:
        raise ConfigError(f"unknown sweep parameter {parameter!r}")
    return out


def _curve_csv(parameter: str, rows) -> bytes:
    lines = [f"variant,{parameter},mean_ap,recall,precision,accuracy"]
    for variant, value, report in rows:
        cells = [variant, f"{value!r}"]
        cells.append("" if report.mean_ap is None else f"{report.mean_ap!r}")
        for name in ("recall", "precision", "accuracy"):
            field = None if report.recall is None else getattr(report.recall, name)
            cells.append("" if field is None else f"{field!r}")
        lines.append(",".join(cells))
    return ("\n".join(lines) + "\n").encode()


_SVG_COLORS = ("#1b6ca8", "#d1495b", "#2e933c", "#8c5383")


def _curve_svg(parameter: str, series, csv_text: str) -> bytes:
    """Standalone line chart of mean AP50 per arm, data embedded twice:
    as a visible table and as CSV inside a metadata block."""
    left, right, top, bottom = 64.0, 24.0, 28.0, 48.0
    plot_w, plot_h = 520.0, 280.0
    values = sorted({float(v) for _, pts in series for v, _ in pts})
    table_rows = [("%s" % parameter, *[name for name, _ in series])]
    by_arm = [dict((float(v), ap) for v, ap in pts) for _, pts in series]
    for v in values:
        row = [f"{v:g}"]
        for arm in by_arm:
            ap = arm.get(v)
            row.append("" if ap is None else f"{ap:.4f}")
        table_rows.append(tuple(row))
    table_top = top + plot_h + bottom
    height = table_top + 18.0 * len(table_rows) + 16.0
    width = left + plot_w + right

    def x_of(v: float) -> float:
        if len(values) < 2 or values[-1] == values[0]:
            return left + plot_w / 2.0
        return left + (v - values[0]) / (values[-1] - values[0]) * plot_w

    def y_of(ap: float) -> float:
        return top + (1.0 - ap) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        f"<metadata><![CDATA[\n{csv_text}]]></metadata>",
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<text x="{left + plot_w / 2:.1f}" y="16" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">mean AP50 vs {parameter}</text>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y_of(tick)
        parts.append(
            f'<line x1="{left:.1f}" y1="{y:.1f}" x2="{left + plot_w:.1f}" '
            f'y2="{y:.1f}" stroke="#ddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{left - 8:.1f}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{tick:g}</text>'
        )
    for v in values:
        x = x_of(v)
        parts.append(
            f'<line x1="{x:.1f}" y1="{top + plot_h:.1f}" x2="{x:.1f}" '
            f'y2="{top + plot_h + 5:.1f}" stroke="#444" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{top + plot_h + 20:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{v:g}</text>'
        )
    parts.append(
        f'<rect x="{left:.1f}" y="{top:.1f}" width="{plot_w:.1f}" '
        f'height="{plot_h:.1f}" fill="none" stroke="#444" stroke-width="1"/>'
    )
    for idx, (name, pts) in enumerate(series):
        color = _SVG_COLORS[idx % len(_SVG_COLORS)]
        drawn = [(x_of(float(v)), y_of(ap)) for v, ap in pts if ap is not None]
        if len(drawn) >= 2:
            coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in drawn)
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" '
                f'stroke-width="2"/>'
            )
        for x, y in drawn:
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
        legend_y = top + 14.0 + 16.0 * idx
        parts.append(
            f'<line x1="{left + plot_w - 120:.1f}" y1="{legend_y - 4:.1f}" '
            f'x2="{left + plot_w - 100:.1f}" y2="{legend_y - 4:.1f}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{left + plot_w - 94:.1f}" y="{legend_y:.1f}" '
            f'font-family="sans-serif" font-size="11">{name}</text>'
        )
    for r_idx, row in enumerate(table_rows):
        y = table_top + 18.0 * (r_idx + 1)
        weight = ' font-weight="bold"' if r_idx == 0 else ""
        for c_idx, cell in enumerate(row):
            parts.append(
                f'<text x="{left + 90.0 * c_idx:.1f}" y="{y:.1f}" '
                f'font-family="monospace" font-size="11"{weight}>{cell}</text>'
            )
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode()


def cmd_sweep(args) -> int:
    doc = _resolve(args)
    sw = doc["sweep"]
    parameter, values, variants = sw["parameter"], sw["values"], sw["variants"]
    rows = []
    series = []
    if values:
        data = _load_data(doc, args.data)
        for variant in variants:
            points = []
            for value in values:
                arm_doc = _apply_sweep_value(doc, parameter, value)
                arm_doc["memory"]["variant"] = variant
                result, _ = _experiment(arm_doc, data)
                rows.append((variant, value, result.report))
                points.append((value, result.report.mean_ap))
            series.append((variant, points))
    csv_blob = _curve_csv(parameter, rows)
    files = {
        "curve.csv": csv_blob,
        "curve.svg": _curve_svg(parameter, series, csv_blob.decode()),
    }
    _write_outputs(Path(args.out), "sweep", doc, files)
    print(
        f"swept {parameter} over {len(values)} values x {len(variants)} variants, "
        f"outputs in {args.out}"
    )
    return 0


def cmd_export_map(args) -> int:
    snapshot_path = Path(args.snapshot)
    table_path = Path(args.table)
    for path in (snapshot_path, table_path):
        if not path.exists():
            raise ConfigError(f"file {path} does not exist")
    grid = snapshot_load(snapshot_path.read_bytes())
    table = load_embedding_table(table_path)
    tau_o = DEFAULT_CONFIG["memory"]["tau_o"] if args.tau_o is None else args.tau_o
    occ = occupancy(grid, tau_o, norm_of_mean=args.norm_of_mean)
    semantic = decode_semantic_map(grid, occ, table)
    doc = {
        "snapshot": str(snapshot_path),
        "table": str(table_path),
        "tau_o": tau_o,
        "norm_of_mean": args.norm_of_mean,
        "grid_cells": [grid.breadth, grid.length],
    }
    files = {
        "occupancy.pgm": occupancy_to_pgm(occ),
        "semantic.ppm": semantic_to_ppm(semantic),
    }
    _write_outputs(Path(args.out), "export-map", doc, files)
    print(
        f"exported {grid.breadth}x{grid.length} occupancy and semantic maps "
        f"({int(occ.o.sum())} occupied cells) into {args.out}"
    )
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", required=True, help="output directory")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="directory written by generate")
    parser.add_argument("--variant", choices=VARIANTS, help="memory variant override")
    parser.add_argument("--lambda", dest="lam", type=float, help="enhancement weight")
    parser.add_argument("--tau-s", dest="tau_s", type=float, help="confidence threshold")
    parser.add_argument("--tau-o", dest="tau_o", type=float, help="occupancy threshold")
    parser.add_argument(
        "--noise-scale", dest="noise_scale", type=float, help="sensor noise multiplier"
    )
    group = parser.add_mutually_exclusive_group()
    group.add_argument(
        "--persist-memory", dest="persist", action="store_true", default=None,
        help="carry memory across episodes",
    )
    group.add_argument(
        "--reset-per-episode", dest="persist", action="store_false", default=None,
        help="clear memory at every episode start",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groundmem",
        description="Desk-scale embodied detection experiments with spatial memory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write scene, episodes, and table files")
    _add_common(p_gen)
    p_gen.set_defaults(func=cmd_generate)

    p_run = sub.add_parser("run", help="run one experiment arm and write its report")
    _add_common(p_run)
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter grid and plot the curves")
    _add_common(p_sweep)
    _add_run_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_map = sub.add_parser("export-map", help="render a memory snapshot as map images")
    p_map.add_argument("--snapshot", required=True, help="memory snapshot file (.gmsn)")
    p_map.add_argument("--table", required=True, help="class embedding table (.gmet)")
    p_map.add_argument("--tau-o", dest="tau_o", type=float, help="occupancy threshold")
    p_map.add_argument(
        "--norm-of-mean", action="store_true",
        help="threshold the norm of the mean feature instead of the detection rate",
    )
    p_map.add_argument("--out", required=True, help="output directory")
    p_map.set_defaults(func=cmd_export_map)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: missing file: {exc}", file=sys.stderr)
        return 2
    except (
        DataError,
        DimensionMismatchError,
        MalformedSnapshotError,
        MalformedStreamError,
        MalformedTableError,
        PlacementFailureError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
