"""Command-line entry points: ``enhance``, ``eval``, and ``bench``.

Configuration is a flat ``key = value`` text file; every key can also be
given as ``--key value`` on the command line, and the ``SRD_BACKEND``
environment variable overrides the detector backend URI.  Precedence:
command-line flag > environment > config file > built-in default.

Exit codes: 0 success, 1 when one or more frames failed mid-run,
2 for configuration or input-parsing problems.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from srdet.dedup import MergePolicy
from srdet.denoise import NlmParams
from srdet.detector import DetectorConfig, WireDetectorBackend
from srdet.evalmap import (
    EvalError,
    EvalSpec,
    GroundTruth,
    compare_reports,
    evaluate,
    load_ground_truth,
    load_predictions,
    save_ground_truth,
    save_predictions,
)
from srdet.imagebuf import ImageDecodeError, draw_box, load_png, save_png
from srdet.pipeline import (
    FrameError,
    PipelineConfig,
    enhance_sequence,
)
from srdet.superres import UpscaleMethod
from srdet.synthdet import (
    OracleBackend,
    RecallModel,
    SceneParams,
    generate_scene,
    load_scene,
    scene_to_ground_truth,
    save_scene,
)

__all__ = ["main", "ConfigError", "cmd_enhance", "cmd_eval", "cmd_bench"]

BASE_BOX_COLOR = (66, 135, 245)
MERGED_BOX_COLOR = (60, 200, 80)


class ConfigError(Exception):
    """Bad configuration: unknown key, missing path, unparsable value."""


@dataclass(frozen=True)
class ConfigKey:
    kind: str  # int | float | bool | str
    default: object
    help: str


# The documented key list.  One flat namespace shared by all commands;
# each command reads the subset it needs.
CONFIG_SCHEMA: dict[str, ConfigKey] = {
    "frames_dir": ConfigKey("str", "", "directory of input PNG frames (enhance)"),
    "gt_file": ConfigKey("str", "", "ground-truth JSON file (eval)"),
    "out_dir": ConfigKey("str", "", "output directory (all commands)"),
    "backend": ConfigKey(
        "str",
        "oracle",
        "detector backend: 'oracle' (scene JSON next to each frame) or an "
        "exec:/tcp: URI",
    ),
    "sr_backend": ConfigKey("str", "", "upscaler URI when method = external"),
    "oracle_min_area": ConfigKey(
        "float", 100.0, "oracle visibility threshold in apparent px^2"
    ),
    "oracle_jitter": ConfigKey("float", 0.0, "oracle box corner jitter in px"),
    "zoom": ConfigKey("int", 2, "integer super-resolution factor Z >= 2"),
    "method": ConfigKey("str", "bicubic", "upscaler: nearest | bicubic | external"),
    "denoise": ConfigKey("bool", True, "run the NLM denoiser on the upscaled frame"),
    "nlm_h": ConfigKey("float", 10.0, "NLM filtering strength h"),
    "nlm_patch_radius": ConfigKey("int", 3, "NLM patch radius"),
    "nlm_search_radius": ConfigKey("int", 10, "NLM search window radius"),
    "merge_theta": ConfigKey("float", 0.1, "IoU duplicate threshold theta"),
    "merge_class_aware": ConfigKey(
        "bool", True, "only same-class pairs count as duplicates"
    ),
    "merge_keep": ConfigKey("str", "higher_score", "duplicate resolution rule"),
    "min_score": ConfigKey("float", 0.3, "detector confidence floor"),
    "max_detections": ConfigKey("int", 100, "detector per-image cap"),
    "parallel_windows": ConfigKey(
        "int", 0, "window re-detection workers (0 = one per core)"
    ),
    "record_timings": ConfigKey(
        "bool",
        False,
        "write measured stage times into summary.csv (reruns then differ)",
    ),
    "classes": ConfigKey(
        "str", "", "comma-separated category ids to evaluate (empty = all)"
    ),
    "base_preds": ConfigKey("str", "", "baseline predictions file or dir (eval)"),
    "enhanced_preds": ConfigKey("str", "", "enhanced predictions file or dir (eval)"),
    "seed": ConfigKey("int", 1, "benchmark RNG seed"),
    "frames": ConfigKey("int", 100, "benchmark frame count"),
    "frame_w": ConfigKey("int", 144, "benchmark frame width"),
    "frame_h": ConfigKey("int", 108, "benchmark frame height"),
}

# bench trades denoiser reach for runtime; everything is still overridable.
BENCH_DEFAULTS = {"nlm_patch_radius": 2, "nlm_search_radius": 4}


def _parse_value(key: str, raw: str):
    kind = CONFIG_SCHEMA[key].kind
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def parse_config_file(path) -> dict:
    """Read a flat ``key = value`` file; '#' lines and blanks are skipped."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def resolve_config(args: argparse.Namespace, command_defaults=None) -> dict:
    """Merge defaults, config file, environment, and command-line flags."""
    cfg = {key: spec.default for key, spec in CONFIG_SCHEMA.items()}
    cfg.update(command_defaults or {})
    if args.config:
        cfg.update(parse_config_file(args.config))
    env_backend = os.environ.get("SRD_BACKEND")
    if env_backend:
        cfg["backend"] = env_backend
    for key in CONFIG_SCHEMA:
        raw = getattr(args, key, None)
        if raw is not None:
            cfg[key] = _parse_value(key, raw)
    return cfg


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if not cfg[k]]
    if missing:
        raise ConfigError(f"missing required config keys: {', '.join(missing)}")


def _pipeline_config(cfg: dict) -> PipelineConfig:
    try:
        return PipelineConfig(
            detector=DetectorConfig(
                max_detections=cfg["max_detections"], min_score=cfg["min_score"]
            ),
            zoom=cfg["zoom"],
            method=UpscaleMethod(cfg["method"], cfg["sr_backend"] or None),
            nlm=NlmParams(
                h=cfg["nlm_h"],
                patch_radius=cfg["nlm_patch_radius"],
                search_radius=cfg["nlm_search_radius"],
            ),
            nlm_enabled=cfg["denoise"],
            merge=MergePolicy(
                theta=cfg["merge_theta"],
                class_aware=cfg["merge_class_aware"],
                keep=cfg["merge_keep"],
            ),
            parallel_windows=cfg["parallel_windows"],
            record_timings=cfg["record_timings"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _class_filter(cfg: dict) -> tuple[int, ...] | None:
    raw = cfg["classes"].strip()
    if not raw:
        return None
    try:
        return tuple(int(part) for part in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad classes list {raw!r}") from exc


def _frame_image_id(stem: str, index: int) -> int:
    return int(stem) if stem.isdigit() else index + 1


def _oracle_factory(cfg: dict):
    model = RecallModel(min_area=cfg["oracle_min_area"], jitter=cfg["oracle_jitter"])

    def make(path: Path):
        scene_path = path.with_suffix(".json")
        try:
            scene = load_scene(scene_path)
        except (OSError, ValueError, KeyError) as exc:
            raise OSError(f"cannot load scene file {scene_path}: {exc}") from exc
        return OracleBackend(scene, model)

    return make


def _write_frame_outputs(out_dir: Path, stem: str, image_id: int, img, result):
    preds_dir = out_dir / "preds"
    annotated_dir = out_dir / "annotated"
    preds_dir.mkdir(parents=True, exist_ok=True)
    annotated_dir.mkdir(parents=True, exist_ok=True)

    save_predictions({image_id: result.base}, preds_dir / f"{stem}.base.json")
    save_predictions({image_id: result.merged}, preds_dir / f"{stem}.merged.json")

    for suffix, dets, color in (
        ("base", result.base, BASE_BOX_COLOR),
        ("merged", result.merged, MERGED_BOX_COLOR),
    ):
        annotated = img
        for det in dets:
            annotated = draw_box(
                annotated, det, color, label=f"{det.class_id}:{det.score:.2f}"
            )
        save_png(annotated, annotated_dir / f"{stem}.{suffix}.png")


def cmd_enhance(cfg: dict) -> int:
    """Run the enhancement pipeline over a directory of frames."""
    _require(cfg, "frames_dir", "out_dir", "backend")
    frames_dir = Path(cfg["frames_dir"])
    if not frames_dir.is_dir():
        raise ConfigError(f"frames_dir {frames_dir} is not a directory")
    frames = sorted(frames_dir.glob("*.png"))
    if not frames:
        raise ConfigError(f"no .png frames found in {frames_dir}")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    pipeline_cfg = _pipeline_config(cfg)

    wire_backend = None
    if cfg["backend"] == "oracle":
        backend = _oracle_factory(cfg)
    else:
        wire_backend = WireDetectorBackend(
            cfg["backend"], pool_size=pipeline_cfg.workers
        )
        backend = wire_backend

    try:
        results, summary = enhance_sequence(frames, pipeline_cfg, backend)
    finally:
        if wire_backend is not None:
            wire_backend.close()

    (out_dir / "summary.csv").write_text(summary, encoding="utf-8")
    failures = 0
    for index, (path, result) in enumerate(zip(frames, results)):
        if isinstance(result, FrameError):
            failures += 1
            print(f"frame {path.name}: {result}", file=sys.stderr)
            continue
        image_id = _frame_image_id(path.stem, index)
        _write_frame_outputs(out_dir, path.stem, image_id, load_png(path), result)
    return 1 if failures else 0


def _load_predictions_any(path_str: str) -> dict:
    """Accept a predictions file, or a directory of per-frame files."""
    path = Path(path_str)
    if not path.is_dir():
        return load_predictions(path)
    merged: dict = {}
    for child in sorted(path.glob("*.json")):
        for image_id, dets in load_predictions(child).items():
            if image_id in merged:
                merged[image_id].items.extend(dets.items)
            else:
                merged[image_id] = dets
    return merged


def _write_comparison(out_dir: Path, base_report, enhanced_report) -> str:
    table, series = compare_reports(base_report, enhanced_report)
    (out_dir / "comparison.csv").write_text(table, encoding="utf-8")
    (out_dir / "counts.csv").write_text(series, encoding="utf-8")
    _plot_counts(series, out_dir / "counts.png")
    return table


def _plot_counts(series_csv: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [line.split(",") for line in series_csv.splitlines()[1:]]
    x = range(1, len(rows) + 1)
    n_base = [int(r[1]) for r in rows]
    n_enhanced = [int(r[2]) for r in rows]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(x, n_base, marker="o", markersize=3, linewidth=1, label="base")
    ax.plot(x, n_enhanced, marker="s", markersize=3, linewidth=1, label="enhanced")
    ax.set_xlabel("frame")
    ax.set_ylabel("detections")
    ax.set_title("Detections per frame")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def cmd_eval(cfg: dict) -> int:
    """Compare baseline and enhanced predictions against ground truth."""
    _require(cfg, "gt_file", "base_preds", "enhanced_preds", "out_dir")
    for key in ("gt_file", "base_preds", "enhanced_preds"):
        if not Path(cfg[key]).exists():
            raise ConfigError(f"{key} path {cfg[key]} does not exist")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    gt = load_ground_truth(cfg["gt_file"])
    base = _load_predictions_any(cfg["base_preds"])
    enhanced = _load_predictions_any(cfg["enhanced_preds"])
    spec = EvalSpec(class_filter=_class_filter(cfg))
    table = _write_comparison(
        out_dir, evaluate(gt, base, spec), evaluate(gt, enhanced, spec)
    )
    print(table, end="")
    return 0


def cmd_bench(cfg: dict) -> int:
    """Generate a synthetic benchmark, run the pipeline, and evaluate it."""
    _require(cfg, "out_dir")
    out_dir = Path(cfg["out_dir"])
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    pipeline_cfg = _pipeline_config(cfg)
    min_area = cfg["oracle_min_area"]
    params = SceneParams(
        n_objects=(5, 15),
        area_range=(min_area / 4.0, 4.0 * min_area),
        classes=(3,),
        frame_w=cfg["frame_w"],
        frame_h=cfg["frame_h"],
        max_attempts=500,
    )

    scenes = {}
    paths = []
    gt_payload = {"images": [], "annotations": []}
    for i in range(1, cfg["frames"] + 1):
        scene, img = generate_scene(seed=cfg["seed"] * 1_000_003 + i, params=params)
        stem = f"{i:04d}"
        path = frames_dir / f"{stem}.png"
        save_png(img, path)
        save_scene(scene, frames_dir / f"{stem}.json")
        scenes[path] = scene
        paths.append(path)
        part = scene_to_ground_truth(
            scene,
            image_id=i,
            file_name=path.name,
            ann_id_start=len(gt_payload["annotations"]) + 1,
        )
        gt_payload["images"].extend(part["images"])
        gt_payload["annotations"].extend(part["annotations"])

    gt = GroundTruth.from_dict(gt_payload)
    save_ground_truth(gt, out_dir / "gt.json")

    model = RecallModel(min_area=min_area, jitter=cfg["oracle_jitter"])
    results, summary = enhance_sequence(
        paths, pipeline_cfg, lambda path: OracleBackend(scenes[path], model)
    )
    failures = [r for r in results if isinstance(r, FrameError)]
    denoise_note = "on" if cfg["denoise"] else "off"
    (out_dir / "summary.csv").write_text(
        f"# denoise = {denoise_note}\n{summary}", encoding="utf-8"
    )

    base_preds = {}
    merged_preds = {}
    for i, result in enumerate(results, start=1):
        if isinstance(result, FrameError):
            continue
        base_preds[i] = result.base
        merged_preds[i] = result.merged
    save_predictions(base_preds, out_dir / "preds_base.json")
    save_predictions(merged_preds, out_dir / "preds_merged.json")

    spec = EvalSpec(class_filter=_class_filter(cfg) or (3,))
    table = _write_comparison(
        out_dir, evaluate(gt, base_preds, spec), evaluate(gt, merged_preds, spec)
    )
    print(table, end="")
    for failure in failures:
        print(f"frame {failure.frame_id}: {failure}", file=sys.stderr)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srdet",
        description=(
            "Small-object detection enhancement: re-detect on super-resolved, "
            "denoised windows and merge with IoU filtering."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, summary in (
        ("enhance", "run the pipeline over a directory of frames"),
        ("eval", "compare baseline and enhanced predictions against GT"),
        ("bench", "synthetic end-to-end benchmark with the oracle detector"),
    ):
        cmd = sub.add_parser(name, help=summary)
        cmd.add_argument("--config", help="flat 'key = value' config file")
        if name == "bench":
            cmd.add_argument(
                "--no-denoise",
                action="store_true",
                help="skip the NLM stage (recorded in the summary.csv header)",
            )
        for key, spec in CONFIG_SCHEMA.items():
            cmd.add_argument(
                f"--{key.replace('_', '-')}",
                dest=key,
                default=None,
                metavar=spec.kind.upper(),
                help=f"{spec.help} (default: {spec.default!r})",
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        defaults = BENCH_DEFAULTS if args.command == "bench" else {}
        cfg = resolve_config(args, defaults)
        if getattr(args, "no_denoise", False):
            cfg["denoise"] = False
        if args.command == "enhance":
            return cmd_enhance(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        return cmd_bench(cfg)
    except (ConfigError, EvalError, ImageDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
