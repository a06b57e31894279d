"""Command-line interface.

Subcommands: extract, train, predict, evaluate, experiment. Scene-driven
commands read a plain-text config (``key = value`` lines grouped by
``[section]`` headers); flags override config values. Exit codes: 0 success,
2 configuration errors, 3 I/O errors, 4 degenerate data (single class),
5 feature-dimension mismatch.

Config example::

    [run]
    technique = glcm
    seed = 0
    out = out/
    jobs = 1

    [glcm]
    levels = 32
    window = 19
    directions = 0,45,90,135
    bands = B2,B3,B4,B8
    measures = second_moment,contrast,correlation,homogeneity,entropy,mean,variance

    [forest]
    n_trees = 10
    min_node_size = 2
    n_candidate_features = auto

    [scene]
    location = medellin
    image = scenes/medellin.hdr
    mask = scenes/medellin_mask.hdr

``[scene]`` may repeat; the experiment report gets one row per scene.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .ccf import DegenerateDataError, ModelFormatError
from .experiment import (
    CSV_HEADER,
    Pipeline,
    evaluate,
    extract_features,
    load_pipeline,
    predict_scene,
    report_csv_row,
    report_to_dict,
    result_to_dict,
    run_experiment,
    save_pipeline,
)
from .raster import (
    RasterFormatError,
    ensure_aligned,
    load_band_stack,
    load_label_mask,
    load_prediction_map,
    save_feature_raster,
    save_prediction_map,
)
from .texture import GlcmParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4
EXIT_DIMENSION = 5


class ConfigError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


@dataclass
class SceneConfig:
    location: str
    image: Path
    mask: Path


@dataclass
class RunConfig:
    scenes: list[SceneConfig] = field(default_factory=list)
    technique: str = "glcm"
    seed: int = 0
    out: Path = Path("out")
    jobs: int = 1
    glcm: GlcmParams = field(default_factory=GlcmParams)
    n_trees: int = 10
    min_node_size: int = 2
    n_candidate_features: int | None = None


_RUN_KEYS = {"technique", "seed", "out", "jobs"}
_FOREST_KEYS = {"n_trees", "min_node_size", "n_candidate_features"}
_GLCM_KEYS = {"levels", "window", "directions", "bands", "measures"}
_SCENE_KEYS = {"location", "image", "mask"}


def _parse_sections(text: str, source: str) -> list[tuple[str, dict[str, str]]]:
    sections: list[tuple[str, dict[str, str]]] = []
    current: dict[str, str] | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            current = {}
            sections.append((name, current))
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value' or '[section]'")
        if current is None:
            raise ConfigError(f"{source}:{lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        current[key.strip()] = value.strip()
    return sections


def _check_keys(section: str, fields: dict[str, str], allowed: set[str], source: str) -> None:
    unknown = sorted(set(fields) - allowed)
    if unknown:
        raise ConfigError(f"{source}: unknown key {unknown[0]!r} in [{section}]")


def _parse_int(fields: dict[str, str], key: str, source: str) -> int:
    try:
        return int(fields[key])
    except ValueError:
        raise ConfigError(f"{source}: {key} must be an integer, got {fields[key]!r}") from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    sections = _parse_sections(path.read_text(encoding="utf-8"), str(path))
    config = RunConfig()
    glcm_fields: dict[str, str] = {}
    seen: set[str] = set()
    for name, fields in sections:
        if name == "run":
            _check_keys(name, fields, _RUN_KEYS, str(path))
            if "technique" in fields:
                config.technique = fields["technique"]
            if "seed" in fields:
                config.seed = _parse_int(fields, "seed", str(path))
            if "out" in fields:
                config.out = Path(fields["out"])
            if "jobs" in fields:
                config.jobs = _parse_int(fields, "jobs", str(path))
        elif name == "glcm":
            _check_keys(name, fields, _GLCM_KEYS, str(path))
            glcm_fields = fields
        elif name == "forest":
            _check_keys(name, fields, _FOREST_KEYS, str(path))
            if "n_trees" in fields:
                config.n_trees = _parse_int(fields, "n_trees", str(path))
            if "min_node_size" in fields:
                config.min_node_size = _parse_int(fields, "min_node_size", str(path))
            if "n_candidate_features" in fields and fields["n_candidate_features"] != "auto":
                config.n_candidate_features = _parse_int(fields, "n_candidate_features", str(path))
        elif name == "scene":
            _check_keys(name, fields, _SCENE_KEYS, str(path))
            for key in ("location", "image", "mask"):
                if key not in fields:
                    raise ConfigError(f"{path}: [scene] is missing the key {key!r}")
            config.scenes.append(
                SceneConfig(
                    location=fields["location"],
                    image=Path(fields["image"]),
                    mask=Path(fields["mask"]),
                )
            )
        else:
            raise ConfigError(f"{path}: unknown section [{name}]")
        if name != "scene" and name in seen:
            raise ConfigError(f"{path}: duplicate section [{name}]")
        seen.add(name)

    defaults = GlcmParams()
    try:
        config.glcm = GlcmParams(
            levels=int(glcm_fields.get("levels", defaults.levels)),
            window=int(glcm_fields.get("window", defaults.window)),
            directions=tuple(
                int(d) for d in glcm_fields["directions"].split(",")
            )
            if "directions" in glcm_fields
            else defaults.directions,
            bands=tuple(b.strip() for b in glcm_fields["bands"].split(","))
            if "bands" in glcm_fields
            else defaults.bands,
            measures=tuple(m.strip() for m in glcm_fields["measures"].split(","))
            if "measures" in glcm_fields
            else defaults.measures,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: bad [glcm] section: {exc}") from None
    return config


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "technique", None):
        config.technique = args.technique
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "out", None):
        config.out = Path(args.out)
    if getattr(args, "jobs", None) is not None:
        config.jobs = args.jobs
    return config


def validate_config(config: RunConfig, need_scenes: bool = True) -> None:
    if config.technique not in ("spectral", "glcm"):
        raise ConfigError(
            f"technique must be 'spectral' or 'glcm', got {config.technique!r}"
        )
    if config.seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    if config.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if need_scenes and not config.scenes:
        raise ConfigError("config declares no [scene] section")
    for scene in config.scenes:
        if not scene.image.exists():
            raise ConfigError(f"scene {scene.location!r}: image path not found: {scene.image}")
        if not scene.mask.exists():
            raise ConfigError(f"scene {scene.location!r}: mask path not found: {scene.mask}")


def echo_config(config: RunConfig) -> str:
    lines = [
        "[run]",
        f"technique = {config.technique}",
        f"seed = {config.seed}",
        f"out = {config.out.resolve()}",
        f"jobs = {config.jobs}",
        "",
        "[glcm]",
        f"levels = {config.glcm.levels}",
        f"window = {config.glcm.window}",
        f"directions = {','.join(str(d) for d in config.glcm.directions)}",
        f"bands = {','.join(config.glcm.bands)}",
        f"measures = {','.join(config.glcm.measures)}",
        "",
        "[forest]",
        f"n_trees = {config.n_trees}",
        f"min_node_size = {config.min_node_size}",
        f"n_candidate_features = {config.n_candidate_features or 'auto'}",
    ]
    for scene in config.scenes:
        lines += [
            "",
            "[scene]",
            f"location = {scene.location}",
            f"image = {scene.image.resolve()}",
            f"mask = {scene.mask.resolve()}",
        ]
    return "\n".join(lines) + "\n"


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _prefix(scene: SceneConfig, technique: str) -> str:
    return f"{scene.location}_{technique}"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_extract(config: RunConfig) -> int:
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    for scene in config.scenes:
        stack = load_band_stack(scene.image)
        mask = load_label_mask(scene.mask)
        ensure_aligned(stack, mask)
        t0 = time.perf_counter()
        features = extract_features(stack, config.technique, config.glcm, jobs=config.jobs)
        elapsed = time.perf_counter() - t0
        target = out / f"{_prefix(scene, config.technique)}_features.hdr"
        save_feature_raster(features, target)
        print(
            f"{scene.location}: wrote {len(features.feature_names)} features "
            f"({int(features.valid.sum())} valid pixels) to {target} in {elapsed:.2f}s"
        )
    (out / "config.used").write_text(echo_config(config), encoding="utf-8")
    return EXIT_OK


def _train_pipeline(config: RunConfig, scene: SceneConfig):
    """The shared extract->...->train path used by both train and experiment."""
    result = run_experiment(
        load_band_stack(scene.image),
        load_label_mask(scene.mask),
        technique=config.technique,
        glcm_params=config.glcm,
        n_trees=config.n_trees,
        min_node_size=config.min_node_size,
        n_candidate_features=config.n_candidate_features,
        master_seed=config.seed,
        jobs=config.jobs,
        location=scene.location,
    )
    pipeline = Pipeline(
        technique=config.technique,
        glcm_params=config.glcm if config.technique == "glcm" else None,
        scaler=result.scaler,
        model=result.model,
    )
    return result, pipeline


def cmd_train(config: RunConfig) -> int:
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    for scene in config.scenes:
        result, pipeline = _train_pipeline(config, scene)
        target = out / f"{_prefix(scene, config.technique)}_model.json"
        save_pipeline(pipeline, target)
        print(
            f"{scene.location}: trained {len(result.model.trees)} trees on "
            f"{result.train_size} rows -> {target}"
        )
    (out / "config.used").write_text(echo_config(config), encoding="utf-8")
    return EXIT_OK


def cmd_experiment(config: RunConfig) -> int:
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    csv_rows = [CSV_HEADER]
    for scene in config.scenes:
        result, pipeline = _train_pipeline(config, scene)
        prefix = _prefix(scene, config.technique)
        save_pipeline(pipeline, out / f"{prefix}_model.json")
        save_prediction_map(result.prediction, out / f"{prefix}_map.pgm")
        _write_json(out / f"{prefix}_report.json", result_to_dict(result))
        _write_json(
            out / f"{prefix}_timings.json",
            {stage: round(seconds, 6) for stage, seconds in result.timings.items()},
        )
        csv_rows.append(report_csv_row(scene.location, config.technique, result.report))
        miou = result_to_dict(result)["test_split"]["percent"]["miou"]
        print(
            f"{scene.location} ({config.technique}): mean IoU {miou}%, "
            f"{result.report.seconds:.1f}s"
        )
    (out / "report.csv").write_text("\n".join(csv_rows) + "\n", encoding="utf-8")
    (out / "config.used").write_text(echo_config(config), encoding="utf-8")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    pipeline = load_pipeline(args.model)
    technique = args.technique or pipeline.technique
    stack = load_band_stack(args.image)
    features = extract_features(stack, technique, pipeline.glcm_params, jobs=args.jobs)
    if len(features.feature_names) != pipeline.model.n_features:
        raise DimensionMismatchError(
            f"model expects {pipeline.model.n_features} features but "
            f"{technique!r} extraction produced {len(features.feature_names)}"
        )
    prediction, _ = predict_scene(features, None, pipeline.model, pipeline.scaler)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "map.pgm"
    save_prediction_map(prediction, target)
    print(f"wrote {target} ({int(prediction.valid.sum())} predicted pixels)")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    prediction = load_prediction_map(args.pred)
    truth = load_label_mask(args.truth)
    if (prediction.height, prediction.width) != (truth.height, truth.width):
        raise DimensionMismatchError(
            f"prediction map is {prediction.width}x{prediction.height} but truth is "
            f"{truth.width}x{truth.height}"
        )
    scorable = prediction.valid & truth.valid
    if not scorable.any():
        raise DegenerateDataError("no pixel is valid in both prediction and truth")
    report = evaluate(prediction.labels[scorable], truth.labels[scorable])
    report.seconds = time.perf_counter() - t0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(
        CSV_HEADER + "\n" + report_csv_row(args.location, "map", report) + "\n",
        encoding="utf-8",
    )
    _write_json(out / "report.json", report_to_dict(report))
    print(f"mean IoU {report_to_dict(report)['percent']['miou']}% -> {out / 'report.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing / dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slummap",
        description="Compare spectral and GLCM texture features for slum detection "
        "with a canonical correlation forest.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="path to the run config file")
        p.add_argument("--technique", choices=("spectral", "glcm"))
        p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, default=None, help="worker cap (default 1)")

    add_config_flags(sub.add_parser("extract", help="write feature rasters per scene"))
    add_config_flags(sub.add_parser("train", help="train and persist one model per scene"))
    add_config_flags(
        sub.add_parser("experiment", help="full protocol: metrics, map and model per scene")
    )

    p_predict = sub.add_parser("predict", help="predict a scene with a persisted model")
    p_predict.add_argument("--model", required=True, help="pipeline model file")
    p_predict.add_argument("--image", required=True, help="scene image header")
    p_predict.add_argument("--out", required=True, help="output directory")
    p_predict.add_argument("--technique", choices=("spectral", "glcm"), default=None)
    p_predict.add_argument("--jobs", type=int, default=1)

    p_eval = sub.add_parser("evaluate", help="score a prediction map against ground truth")
    p_eval.add_argument("--pred", required=True, help="prediction map (P5 greymap)")
    p_eval.add_argument("--truth", required=True, help="ground-truth mask header")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument("--location", default="scene", help="label for the report row")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("extract", "train", "experiment"):
            config = apply_overrides(load_config(args.config), args)
            validate_config(config)
            handler = {
                "extract": cmd_extract,
                "train": cmd_train,
                "experiment": cmd_experiment,
            }[args.command]
            return handler(config)
        if args.command == "predict":
            return cmd_predict(args)
        return cmd_evaluate(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionMismatchError as exc:
        print(f"dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except DegenerateDataError as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (FileNotFoundError, RasterFormatError, ModelFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
