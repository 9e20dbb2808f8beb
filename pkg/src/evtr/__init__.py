"""Event-camera visual teach and repeat with FFT frame matching.

The bit-packed frame kernels come from a compiled extension when it is
available; ``evtr.kernels.BACKEND`` says which implementation is active.
"""

from evtr.controller import CorrectionGains, MotionParams, RepeatController
from evtr.correlation import (
    CorrelationEngine,
    CorrelationResult,
    correlate_horizontal,
    correlate_search_space,
    pixel_offset_to_angle,
)
from evtr.events import Event, EventFrame, EventStream, accumulate, compress, downsample
from evtr.geometry import Pose2D
from evtr.kernels import BACKEND
from evtr.topomap import TopometricMap, should_record

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CorrectionGains", "CorrelationEngine", "CorrelationResult", "Event",
    "EventFrame", "EventStream", "MotionParams", "Pose2D", "RepeatController",
    "TopometricMap", "accumulate", "compress", "correlate_horizontal",
    "correlate_search_space", "downsample", "pixel_offset_to_angle", "should_record",
]
