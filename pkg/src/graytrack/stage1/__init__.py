from .framing import (boundary_error, dtw_distance, dtw_raw, reconstruct_frame_sizes,
                      timewindow_grouping)
from .losses import stage1_losses
from .model import (BoundaryDetector, Stage1Config, make_windows, packet_features,
                    stage1_forward, window_starts)
from .train import (BoundaryPrediction, Stage1Result, average_windows, stage1_infer,
                    stage1_train)

__all__ = [
    "BoundaryDetector", "BoundaryPrediction", "Stage1Config", "Stage1Result", "average_windows",
    "boundary_error", "dtw_distance", "dtw_raw", "make_windows", "packet_features",
    "reconstruct_frame_sizes", "stage1_forward", "stage1_infer", "stage1_losses",
    "stage1_train", "timewindow_grouping", "window_starts",
]
