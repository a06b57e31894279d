"""The comparison protocol: sample, balance, split, scale, train, score.

One experiment takes an aligned scene (imagery + binary ground truth), one
feature technique (raw spectral values or windowed GLCM texture), and a
master seed, and produces per-class accuracy (recall), per-class IoU, mean
IoU, a trained forest and a full-scene prediction map. Stage order is fixed:
extract -> assemble -> balance -> split -> scale -> train -> predict ->
evaluate. The primary metrics come from the balanced held-out split;
full-image metrics over every scorable pixel are reported separately.

All randomness derives from the master seed through the documented
sub-streams (see :mod:`slummap.rng`): balancing uses BALANCE_STREAM, the
partition SPLIT_STREAM and tree induction FOREST_STREAM.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .ccf import (
    CcfModel,
    DegenerateDataError,
    ModelFormatError,
    model_from_dict,
    model_to_dict,
    predict,
    train_forest,
)
from .raster import BandStack, FeatureRaster, LabelMask, ensure_aligned
from .rng import BALANCE_STREAM, SPLIT_STREAM, stream
from .texture import GlcmParams, extract_spectral, extract_texture

TECHNIQUES = ("spectral", "glcm")

CSV_HEADER = "location,technique,acc_slum,acc_non,iou_slum,iou_non,miou,seconds"


@dataclass
class FeatureTable:
    """N pixel samples with D features, labels and pixel provenance."""

    features: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) uint8
    provenance: np.ndarray  # (N, 2) int64 pixel (row, col)
    feature_names: list[str]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.uint8).ravel()
        self.provenance = np.asarray(self.provenance, dtype=np.int64)
        n = self.features.shape[0]
        if self.labels.shape[0] != n or self.provenance.shape != (n, 2):
            raise ValueError("features, labels and provenance lengths disagree")
        if len(self.feature_names) != self.features.shape[1]:
            raise ValueError("feature_names length must match feature count")
        if not np.isfinite(self.features).all():
            raise ValueError("features must be finite")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    def take(self, indices: np.ndarray) -> "FeatureTable":
        return FeatureTable(
            features=self.features[indices],
            labels=self.labels[indices],
            provenance=self.provenance[indices],
            feature_names=self.feature_names,
        )

    def class_counts(self) -> tuple[int, int]:
        ones = int(self.labels.sum())
        return self.n_rows - ones, ones


@dataclass
class ScalerStats:
    """Per-column mean and sample standard deviation (divisor N-1)."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)
        if (self.stds < 0).any():
            raise ValueError("standard deviations cannot be negative")

    @property
    def constant_columns(self) -> np.ndarray:
        return self.stds == 0


@dataclass
class MetricsReport:
    """Confusion counts and derived metrics; slum (1) is the positive class.

    Per-class accuracy is recall. Metrics of a class absent from the truth
    are None (absent), never zero. Fractions are kept at full precision;
    rounding to one decimal happens only when formatting.
    """

    true_positive: int
    false_positive: int
    false_negative: int
    true_negative: int
    slum_accuracy: float | None
    non_slum_accuracy: float | None
    slum_iou: float | None
    non_slum_iou: float | None
    mean_iou: float | None
    seconds: float = 0.0

    def counts(self) -> dict[str, int]:
        return {
            "true_positive": self.true_positive,
            "false_positive": self.false_positive,
            "false_negative": self.false_negative,
            "true_negative": self.true_negative,
        }


def format_percent(fraction: float | None) -> str:
    """Fraction -> percentage with one decimal, round half up; None -> ''."""
    if fraction is None:
        return ""
    quantized = Decimal(repr(fraction * 100.0)).quantize(
        Decimal("0.1"), rounding=ROUND_HALF_UP
    )
    return str(quantized)


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------


def assemble_table(features: FeatureRaster, mask: LabelMask) -> FeatureTable:
    """One row per pixel valid in both inputs, in row-major order."""
    if (features.height, features.width) != (mask.height, mask.width):
        raise ValueError(
            f"feature raster is {features.width}x{features.height} but mask is "
            f"{mask.width}x{mask.height}"
        )
    usable = features.valid & mask.valid
    if not usable.any():
        raise ValueError("no usable pixels: every pixel is invalid in one input")
    rows, cols = np.nonzero(usable)
    return FeatureTable(
        features=features.values[:, rows, cols].T,
        labels=mask.labels[rows, cols],
        provenance=np.stack([rows, cols], axis=1),
        feature_names=list(features.feature_names),
    )


def undersample_balance(table: FeatureTable, seed: int = 0) -> FeatureTable:
    """Trim the majority class to the minority count by seeded sampling.

    The minority class is kept whole; majority rows are drawn without
    replacement from the BALANCE_STREAM of ``seed``. Kept rows stay in their
    original relative order.
    """
    n0, n1 = table.class_counts()
    if n0 == 0 or n1 == 0:
        raise DegenerateDataError("both classes must be present to balance")
    if n0 == n1:
        return table
    majority = 0 if n0 > n1 else 1
    minority_count = min(n0, n1)
    majority_positions = np.nonzero(table.labels == majority)[0]
    rng = stream(seed, BALANCE_STREAM)
    chosen = rng.sample_without_replacement(majority_positions.shape[0], minority_count)
    keep = np.zeros(table.n_rows, dtype=bool)
    keep[table.labels != majority] = True
    keep[majority_positions[np.array(sorted(chosen), dtype=np.int64)]] = True
    return table.take(np.nonzero(keep)[0])


def split_train_test(
    table: FeatureTable, train_fraction: float = 0.8, seed: int = 0
) -> tuple[FeatureTable, FeatureTable]:
    """Disjoint, exhaustive random partition with round(N * fraction) train rows."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = table.n_rows
    if n < 2:
        raise ValueError("need at least two rows to split")
    n_train = int(n * train_fraction + 0.5)
    n_train = max(1, min(n_train, n - 1))  # both parts stay non-empty
    perm = list(range(n))
    stream(seed, SPLIT_STREAM).shuffle(perm)
    train_idx = np.array(sorted(perm[:n_train]), dtype=np.int64)
    test_idx = np.array(sorted(perm[n_train:]), dtype=np.int64)
    return table.take(train_idx), table.take(test_idx)


def fit_scaler(train: FeatureTable) -> ScalerStats:
    if train.n_rows < 1:
        raise ValueError("cannot fit a scaler on an empty table")
    means = train.features.mean(axis=0)
    if train.n_rows == 1:
        stds = np.zeros_like(means)
    else:
        stds = train.features.std(axis=0, ddof=1)
    return ScalerStats(means=means, stds=stds)


def apply_scaler(stats: ScalerStats, table: FeatureTable) -> FeatureTable:
    scaled = scale_matrix(stats, table.features)
    return FeatureTable(
        features=scaled,
        labels=table.labels,
        provenance=table.provenance,
        feature_names=table.feature_names,
    )


def scale_matrix(stats: ScalerStats, features: np.ndarray) -> np.ndarray:
    """(v - mean) / std per column; constant columns (std 0) map to 0."""
    divisor = np.where(stats.stds > 0, stats.stds, 1.0)
    scaled = (features - stats.means) / divisor
    scaled[:, stats.constant_columns] = 0.0
    return scaled


def evaluate(pred: np.ndarray, truth: np.ndarray) -> MetricsReport:
    """Per-class recall and IoU plus mean IoU from binary label vectors."""
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth lengths disagree")
    if pred.size == 0:
        raise ValueError("nothing to evaluate")
    for arr, name in ((pred, "prediction"), (truth, "truth")):
        values = np.unique(arr)
        if not np.isin(values, (0, 1)).all():
            raise ValueError(f"{name} labels must be binary")
    pred = pred.astype(np.int64)
    truth = truth.astype(np.int64)
    tp = int(((pred == 1) & (truth == 1)).sum())
    fp = int(((pred == 1) & (truth == 0)).sum())
    fn = int(((pred == 0) & (truth == 1)).sum())
    tn = int(((pred == 0) & (truth == 0)).sum())

    slum_present = tp + fn > 0
    non_present = tn + fp > 0
    slum_accuracy = tp / (tp + fn) if slum_present else None
    slum_iou = tp / (tp + fp + fn) if slum_present else None
    non_slum_accuracy = tn / (tn + fp) if non_present else None
    non_slum_iou = tn / (tn + fn + fp) if non_present else None
    defined = [v for v in (slum_iou, non_slum_iou) if v is not None]
    mean_iou = sum(defined) / len(defined) if defined else None
    return MetricsReport(
        true_positive=tp,
        false_positive=fp,
        false_negative=fn,
        true_negative=tn,
        slum_accuracy=slum_accuracy,
        non_slum_accuracy=non_slum_accuracy,
        slum_iou=slum_iou,
        non_slum_iou=non_slum_iou,
        mean_iou=mean_iou,
    )


# ---------------------------------------------------------------------------
# end-to-end experiment
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    location: str
    technique: str
    report: MetricsReport  # balanced held-out split (headline comparison)
    full_report: MetricsReport  # every scorable pixel of the scene
    prediction: LabelMask
    model: CcfModel
    scaler: ScalerStats
    timings: dict[str, float]
    train_size: int
    test_size: int


def extract_features(
    stack: BandStack,
    technique: str,
    glcm_params: GlcmParams | None = None,
    jobs: int = 1,
) -> FeatureRaster:
    if technique == "spectral":
        return extract_spectral(stack)
    if technique == "glcm":
        return extract_texture(stack, glcm_params, jobs=jobs)
    raise ValueError(f"unknown technique {technique!r}; choose from {TECHNIQUES}")


def run_experiment(
    stack: BandStack,
    mask: LabelMask,
    technique: str = "glcm",
    glcm_params: GlcmParams | None = None,
    n_trees: int = 10,
    min_node_size: int = 2,
    n_candidate_features: int | None = None,
    train_fraction: float = 0.8,
    master_seed: int = 0,
    jobs: int = 1,
    location: str = "scene",
) -> ExperimentResult:
    """Run the full protocol on one scene and one technique."""
    ensure_aligned(stack, mask)
    timings: dict[str, float] = {}
    t_start = time.perf_counter()

    t0 = time.perf_counter()
    features = extract_features(stack, technique, glcm_params, jobs=jobs)
    timings["extract"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    table = assemble_table(features, mask)
    timings["assemble"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    balanced = undersample_balance(table, seed=master_seed)
    timings["balance"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    train, test = split_train_test(balanced, train_fraction, seed=master_seed)
    timings["split"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    scaler = fit_scaler(train)
    train_scaled = apply_scaler(scaler, train)
    test_scaled = apply_scaler(scaler, test)
    timings["scale"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    model = train_forest(
        train_scaled.features,
        train_scaled.labels,
        n_trees=n_trees,
        master_seed=master_seed,
        min_node_size=min_node_size,
        n_candidate_features=n_candidate_features,
        feature_names=train_scaled.feature_names,
    )
    timings["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    test_labels, _ = predict(model, test_scaled.features)
    report = evaluate(test_labels, test_scaled.labels)
    timings["predict"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    prediction, full_report = predict_scene(features, mask, model, scaler)
    timings["map"] = time.perf_counter() - t0

    report.seconds = time.perf_counter() - t_start
    timings["total"] = report.seconds
    return ExperimentResult(
        location=location,
        technique=technique,
        report=report,
        full_report=full_report,
        prediction=prediction,
        model=model,
        scaler=scaler,
        timings=timings,
        train_size=train.n_rows,
        test_size=test.n_rows,
    )


def predict_scene(
    features: FeatureRaster,
    mask: LabelMask | None,
    model: CcfModel,
    scaler: ScalerStats,
) -> tuple[LabelMask, MetricsReport | None]:
    """Predict every feature-valid pixel; score against the mask if given."""
    rows, cols = np.nonzero(features.valid)
    labels_grid = np.zeros((features.height, features.width), dtype=np.uint8)
    if rows.size:
        matrix = scale_matrix(scaler, features.values[:, rows, cols].T.astype(np.float64))
        labels, _ = predict(model, matrix)
        labels_grid[rows, cols] = labels
    prediction = LabelMask(labels=labels_grid, valid=features.valid.copy())
    full_report = None
    if mask is not None:
        scorable = features.valid & mask.valid
        if scorable.any():
            full_report = evaluate(labels_grid[scorable], mask.labels[scorable])
    return prediction, full_report


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------


def report_csv_row(location: str, technique: str, report: MetricsReport) -> str:
    """One row of the comparison table (columns as in CSV_HEADER)."""
    cells = [
        location,
        technique,
        format_percent(report.slum_accuracy),
        format_percent(report.non_slum_accuracy),
        format_percent(report.slum_iou),
        format_percent(report.non_slum_iou),
        format_percent(report.mean_iou),
        f"{report.seconds:.1f}",
    ]
    return ",".join(cells)


def report_to_dict(report: MetricsReport) -> dict:
    """Deterministic structured form of a report (no timing fields)."""
    return {
        "confusion": report.counts(),
        "slum": {
            "accuracy": report.slum_accuracy,
            "iou": report.slum_iou,
        },
        "non_slum": {
            "accuracy": report.non_slum_accuracy,
            "iou": report.non_slum_iou,
        },
        "mean_iou": report.mean_iou,
        "percent": {
            "acc_slum": format_percent(report.slum_accuracy),
            "acc_non": format_percent(report.non_slum_accuracy),
            "iou_slum": format_percent(report.slum_iou),
            "iou_non": format_percent(report.non_slum_iou),
            "miou": format_percent(report.mean_iou),
        },
    }


def result_to_dict(result: ExperimentResult) -> dict:
    """Deterministic structured report for one experiment run."""
    return {
        "location": result.location,
        "technique": result.technique,
        "train_size": result.train_size,
        "test_size": result.test_size,
        "feature_count": result.model.n_features,
        "training_params": result.model.training_params,
        "test_split": report_to_dict(result.report),
        "full_image": report_to_dict(result.full_report)
        if result.full_report is not None
        else None,
    }


# ---------------------------------------------------------------------------
# pipeline persistence (model + scaler + feature recipe)
# ---------------------------------------------------------------------------

PIPELINE_FORMAT = "slummap-pipeline"
PIPELINE_VERSION = 1


@dataclass
class Pipeline:
    """Everything needed to reproduce predictions on a fresh scene."""

    technique: str
    glcm_params: GlcmParams | None
    scaler: ScalerStats
    model: CcfModel


def save_pipeline(pipeline: Pipeline, path: str | Path) -> None:
    doc = {
        "format": PIPELINE_FORMAT,
        "version": PIPELINE_VERSION,
        "technique": pipeline.technique,
        "glcm_params": pipeline.glcm_params.to_dict() if pipeline.glcm_params else None,
        "scaler": {
            "means": [float(v) for v in pipeline.scaler.means],
            "stds": [float(v) for v in pipeline.scaler.stds],
        },
        "model": model_to_dict(pipeline.model),
    }
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


def load_pipeline(path: str | Path) -> Pipeline:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a valid pipeline document: {exc}") from exc
    try:
        if doc.get("format") != PIPELINE_FORMAT:
            raise ModelFormatError(f"{path}: not a {PIPELINE_FORMAT} document")
        if doc.get("version") != PIPELINE_VERSION:
            raise ModelFormatError(f"{path}: unsupported version {doc.get('version')!r}")
        glcm_doc = doc.get("glcm_params")
        return Pipeline(
            technique=str(doc["technique"]),
            glcm_params=GlcmParams.from_dict(glcm_doc) if glcm_doc else None,
            scaler=ScalerStats(
                means=np.array(doc["scaler"]["means"], dtype=np.float64),
                stds=np.array(doc["scaler"]["stds"], dtype=np.float64),
            ),
            model=model_from_dict(doc["model"]),
        )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: malformed pipeline document: {exc}") from exc
