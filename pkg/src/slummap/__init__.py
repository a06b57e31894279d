"""Slum detection on medium-resolution multi-band imagery.

Compares two per-pixel feature techniques, raw multi-spectral values and
windowed grey-level co-occurrence (GLCM) texture measures, under one
classifier: a canonical correlation forest trained on balanced, seeded,
standardized samples. Reports per-class accuracy, IoU and mean IoU, and
renders full-scene prediction maps.
"""

from .ccf import CcfModel, cca_fit, load_model, predict, save_model, train_forest
from .experiment import (
    FeatureTable,
    MetricsReport,
    assemble_table,
    evaluate,
    fit_scaler,
    run_experiment,
    split_train_test,
    undersample_balance,
)
from .raster import (
    SENTINEL2_BANDS,
    BandStack,
    FeatureRaster,
    LabelMask,
    load_band_stack,
    load_label_mask,
    save_prediction_map,
)
from .texture import GlcmParams, cooccurrence, extract_spectral, extract_texture, haralick, quantize

__version__ = "0.1.0"

__all__ = [
    "BandStack",
    "CcfModel",
    "FeatureRaster",
    "FeatureTable",
    "GlcmParams",
    "LabelMask",
    "MetricsReport",
    "SENTINEL2_BANDS",
    "assemble_table",
    "cca_fit",
    "cooccurrence",
    "evaluate",
    "extract_spectral",
    "extract_texture",
    "fit_scaler",
    "haralick",
    "load_band_stack",
    "load_label_mask",
    "load_model",
    "predict",
    "quantize",
    "run_experiment",
    "save_model",
    "save_prediction_map",
    "split_train_test",
    "train_forest",
    "undersample_balance",
    "__version__",
]
