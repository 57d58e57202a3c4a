"""Learned temporal regularity in video: convolutional and feature autoencoders,
regularity scores and persistence-based event detection."""

from ._core import (
    Model,
    TraeError,
    build_events,
    cli,
    dense_flow,
    grid_descriptors,
    load_frames,
    match_events,
    persistent_minima,
    pixel_regularity_map,
    predict_past_future,
    regular_frame,
    regularity_scores,
    regularity_series,
    roc_auc_eer,
    sample_cuboids,
    synth_video,
)

__all__ = [
    "Model",
    "TraeError",
    "build_events",
    "cli",
    "dense_flow",
    "grid_descriptors",
    "load_frames",
    "match_events",
    "persistent_minima",
    "pixel_regularity_map",
    "predict_past_future",
    "regular_frame",
    "regularity_scores",
    "regularity_series",
    "roc_auc_eer",
    "sample_cuboids",
    "synth_video",
]
