"""Grading log: one row per plant step, fixed column schema.

The same CSV schema is shared by the simulator, the calibration loaders
and the evaluation harness. Column order is stable; floats are written
with repr precision so a round trip through disk is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COLUMNS = [
    "t",
    "cab_pitch",
    "cmd_boom", "cmd_stick", "cmd_bucket",
    "rate_cmd_boom", "rate_cmd_stick", "rate_cmd_bucket",
    "ff_boom", "ff_stick", "ff_bucket",
    "pid_boom", "pid_stick", "pid_bucket",
    "theta_boom", "theta_stick", "theta_bucket",
    "thetadot_boom", "thetadot_stick", "thetadot_bucket",
    "pa_boom", "pa_stick", "pa_bucket",
    "pb_boom", "pb_stick", "pb_bucket",
    "pfunc_boom", "pfunc_stick", "pfunc_bucket",
    "ee_x", "ee_z", "ee_vx", "ee_vz", "ee_phi",
    "soil_h", "cut_depth",
    "stall",
]


@dataclass
class GradingLog:
    """Column store over the fixed schema. `data` maps column name to a
    1-d float array; all columns share one length."""

    data: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        if not self.data:
            return 0
        return len(next(iter(self.data.values())))

    def __getitem__(self, col: str) -> np.ndarray:
        return self.data[col]

    def triplet(self, prefix: str) -> np.ndarray:
        """Stack per-joint columns `prefix_boom/stick/bucket` as (n, 3)."""
        return np.column_stack(
            [self.data[f"{prefix}_boom"], self.data[f"{prefix}_stick"], self.data[f"{prefix}_bucket"]]
        )

    def to_csv(self, path) -> None:
        arr = np.column_stack([self.data[c] for c in COLUMNS])
        header = ",".join(COLUMNS)
        np.savetxt(path, arr, fmt="%.17g", delimiter=",", header=header, comments="")

    @classmethod
    def from_csv(cls, path) -> "GradingLog":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        if header != COLUMNS:
            raise ValueError(f"unexpected log schema in {path}")
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data={c: arr[:, i].copy() for i, c in enumerate(COLUMNS)})

    def equals(self, other: "GradingLog") -> bool:
        return set(self.data) == set(other.data) and all(
            np.array_equal(self.data[c], other.data[c]) for c in self.data
        )


class LogBuilder:
    """Row-wise accumulator used by the simulator loop."""

    def __init__(self):
        self._rows = []

    def append(self, **cols):
        self._rows.append([float(cols.get(c, np.nan)) for c in COLUMNS])

    def finish(self, **meta) -> GradingLog:
        arr = np.array(self._rows, dtype=float).reshape(len(self._rows), len(COLUMNS))
        return GradingLog(data={c: arr[:, i].copy() for i, c in enumerate(COLUMNS)}, meta=dict(meta))
