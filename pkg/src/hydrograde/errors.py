"""Exception hierarchy shared by all modules."""


class HydrogradeError(Exception):
    """Base class for controlled failures (CLI exit code 1)."""


class ConfigError(HydrogradeError):
    """Bad or unresolvable configuration (CLI exit code 2)."""


class CalibrationError(HydrogradeError):
    """Calibration input data cannot support the requested fit."""


class UnderdeterminedError(CalibrationError):
    """Too few distinct test commands to constrain the model."""


class DataQualityError(CalibrationError):
    """Estimates from the data are physically inadmissible."""


class MissingProbeError(CalibrationError):
    """No stalled segment found for a requested command."""


class FitDivergenceError(CalibrationError):
    """Step response never settles; transfer-function fit rejected."""


class DegenerateLinkageError(HydrogradeError):
    """Cylinder attachment triangle collapsed (zero moment arm)."""


class StaleSensorFault(HydrogradeError):
    """Sensor frame older than the controller tolerates."""
