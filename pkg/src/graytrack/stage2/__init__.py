"""Windowed tracking from per-node frame sizes and blue-node features."""

from .area import (AreaConfig, AreaRegressor, AreaSamples, area_from_frame_sizes, area_samples,
                   geometric_track, span_mean, train_area_regressor)
from .labels import (ENCODER_PRESETS, GrayNormalizer, Stage2Config, TokenStream, TrackWindowLabel,
                     WindowLabels, build_stream, desk_config, frame_size_matrix, make_labels)
from .losses import stage2_losses
from .model import Tracker, tracker_forward
from .train import (Stage2Result, Stage2Sequence, TrackPredictions, make_sequence, read_predictions,
                    stage2_infer, stage2_train, unlabeled_sequence, write_predictions)

__all__ = [
    "AreaConfig", "AreaRegressor", "AreaSamples", "area_from_frame_sizes", "area_samples",
    "geometric_track", "span_mean", "train_area_regressor",
    "ENCODER_PRESETS", "GrayNormalizer", "Stage2Config", "TokenStream", "TrackWindowLabel",
    "WindowLabels", "build_stream", "desk_config", "frame_size_matrix", "make_labels",
    "stage2_losses", "Tracker", "tracker_forward",
    "Stage2Result", "Stage2Sequence", "TrackPredictions", "make_sequence", "read_predictions",
    "stage2_infer", "stage2_train", "unlabeled_sequence", "write_predictions",
]
