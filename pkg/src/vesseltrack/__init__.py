"""Vessel lumen segmentation and tracking for ultrasound B-scan sequences.

Typical use::

    from vesseltrack import run_sequence, preset
    results = run_sequence(frames, seed=(416, 220), config=preset("uhfus"))
"""

from .config import DrlseParams, EkfParams, SequenceConfig, load_config, preset
from .core import ContourResult, EllipseParams
from .errors import TrackingLost, VesselTrackError
from .pipeline import SequenceTracker, run_sequence

__all__ = [
    "ContourResult",
    "DrlseParams",
    "EkfParams",
    "EllipseParams",
    "SequenceConfig",
    "SequenceTracker",
    "TrackingLost",
    "VesselTrackError",
    "load_config",
    "preset",
    "run_sequence",
]
__version__ = "0.1.0"
