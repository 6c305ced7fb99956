"""Hydraulics-aware excavator grading control.

Joint-velocity feed-forward models for Load Sensing (LS) and Negative Flow
Control (NFC) machines, a delay-aware nonlinear MPC path tracker, the
calibration procedures that identify both from logged data, and a
deterministic hydraulic plant simulator used as the test bed.
"""

__version__ = "0.1.0"

from .errors import (
    HydrogradeError,
    ConfigError,
    CalibrationError,
    DegenerateLinkageError,
    FitDivergenceError,
    MissingProbeError,
)

__all__ = [
    "HydrogradeError",
    "ConfigError",
    "CalibrationError",
    "DegenerateLinkageError",
    "FitDivergenceError",
    "MissingProbeError",
]
