"""Flame segmentation, compression and measurement."""

from ._core import (
    CalibrationStats,
    Error,
    Model,
    characterize,
    class_weight,
    connected_components,
    dice,
    dice_per_class,
    generate_scene,
    jaccard,
    mape,
    postprocess,
    preprocess,
    rmspe,
    run_pipeline,
    write_dataset,
)

__all__ = [
    "CalibrationStats",
    "Error",
    "Model",
    "characterize",
    "class_weight",
    "connected_components",
    "dice",
    "dice_per_class",
    "generate_scene",
    "jaccard",
    "mape",
    "postprocess",
    "preprocess",
    "rmspe",
    "run_pipeline",
    "write_dataset",
]
