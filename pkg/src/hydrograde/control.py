"""Hydraulics-aware joint velocity loop: calibrated FF element plus a
parallel PID per joint.

The FF element carries the load-aware part: target joint rates are
converted to cylinder speeds through the linkage sensitivity, then mapped
to a valve command by the calibrated table (1-D for LS, 2-D against the
inertia-compensated pseudo back pressure for NFC). The PID only cleans up
unmodeled effects; its integrator freezes while the summed command
saturates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError, StaleSensorFault
from .feedforward import KIND_LS, KIND_NFC, HydraulicFeedForward
from .hydraulics import EXTEND, RETRACT
from .kinematics import cylinder_force, sensitivity
from .machine import JOINTS, MachineModel, resolve_fixture
from .plant import SensorFrame


@dataclass
class PidParams:
    kp: np.ndarray
    ki: np.ndarray
    kd: np.ndarray
    integrator_limit: float = 0.3
    output_limit: float = 1.0

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float)
        self.ki = np.asarray(self.ki, dtype=float)
        self.kd = np.asarray(self.kd, dtype=float)
        if np.any(self.kp < 0) or np.any(self.ki < 0) or np.any(self.kd < 0):
            raise ConfigError("PID gains must be non-negative")
        if self.output_limit > 1.0:
            raise ConfigError("PID output limit cannot exceed valve headroom")

    @classmethod
    def disabled(cls) -> "PidParams":
        return cls(kp=np.zeros(3), ki=np.zeros(3), kd=np.zeros(3))

    @classmethod
    def from_dict(cls, node: dict) -> "PidParams":
        return cls(
            kp=np.array([float(node["kp"][j]) for j in JOINTS]),
            ki=np.array([float(node["ki"][j]) for j in JOINTS]),
            kd=np.array([float(node["kd"][j]) for j in JOINTS]),
            integrator_limit=float(node.get("integrator_limit", 0.3)),
            output_limit=float(node.get("output_limit", 1.0)),
        )


class JointVelocityController:
    """Tracks target joint rates by FF + parallel PID valve commands.

    Stateful: PID integrators, the causal acceleration estimate used for
    inertia compensation, and the stale-frame fault latch live here.
    """

    def __init__(
        self,
        machine: MachineModel,
        ff: HydraulicFeedForward,
        pid: PidParams,
        dt: float = 0.01,
        accel_filter: float = 0.15,
    ):
        self.machine = machine
        self.ff = ff
        self.pid = pid
        self.dt = dt
        self._integ = np.zeros(3)
        self._prev_err = np.zeros(3)
        self._prev_rate = None
        self._accel = np.zeros(3)
        self._accel_alpha = min(dt / accel_filter, 1.0)
        self._last_cmd = np.zeros(3)
        self._last_ff = np.zeros(3)
        self._last_pid = np.zeros(3)
        self._last_t = None
        self.fault = False

    def reset(self):
        self._integ[:] = 0.0
        self._prev_err[:] = 0.0
        self._prev_rate = None
        self._accel[:] = 0.0
        self._last_cmd[:] = 0.0
        self._last_t = None
        self.fault = False

    @property
    def last_split(self):
        """(ff, pid) contributions of the last update, for diagnostics."""
        return self._last_ff.copy(), self._last_pid.copy()

    def _update_accel(self, frame: SensorFrame):
        if self._prev_rate is not None:
            raw = (frame.theta_dot - self._prev_rate) / self.dt
            self._accel += self._accel_alpha * (raw - self._accel)
        self._prev_rate = frame.theta_dot.copy()

    def feedforward(self, target_rates, frame: SensorFrame) -> np.ndarray:
        """FF valve commands alone (PID excluded)."""
        m = self.machine
        gamma = sensitivity(m, frame.theta)
        v_des = np.asarray(target_rates, dtype=float) / gamma
        out = np.zeros(3)
        if self.ff.kind == KIND_LS:
            for i in range(3):
                out[i] = 0.0 if v_des[i] == 0.0 else self.ff.ls_command(i, v_des[i])
            return out
        if self.ff.kind != KIND_NFC:
            raise ConfigError(f"unknown FF kind {self.ff.kind!r}")
        f_m = cylinder_force(frame.p_a, frame.p_b, m.plunger_area_a, m.plunger_area_b)
        f_inertia = gamma * m.joint_inertia * self._accel
        f_comp = f_m - f_inertia
        for i in range(3):
            if v_des[i] == 0.0:
                continue
            direction = EXTEND if v_des[i] > 0 else RETRACT
            area = m.plunger_area_a[i] if direction == EXTEND else m.plunger_area_b[i]
            p_f = direction * f_comp[i] / area
            q = abs(v_des[i]) * area
            out[i] = self.ff.nfc_command(i, direction * q, p_f)
        return out

    def update(self, target_rates, frame: SensorFrame) -> np.ndarray:
        """One control tick: returns per-joint valve commands in [-1, 1]."""
        if self._last_t is not None and frame.t - self._last_t > 2.0 * self.dt + 1e-9:
            self.fault = True
            return self._last_cmd.copy()
        self._last_t = frame.t
        self._update_accel(frame)

        ff_cmd = self.feedforward(target_rates, frame)
        err = np.asarray(target_rates, dtype=float) - frame.theta_dot
        d_err = (err - self._prev_err) / self.dt
        self._prev_err = err
        pid_cmd = self.pid.kp * err + self.pid.ki * self._integ + self.pid.kd * d_err
        pid_cmd = np.clip(pid_cmd, -self.pid.output_limit, self.pid.output_limit)

        cmd = np.clip(ff_cmd + pid_cmd, -1.0, 1.0)

        # anti-windup: integrate only where the summed command is not clamped
        free = np.abs(ff_cmd + pid_cmd) < 1.0 - 1e-12
        self._integ = np.where(
            free,
            np.clip(
                self._integ + err * self.dt,
                -self.pid.integrator_limit,
                self.pid.integrator_limit,
            ),
            self._integ,
        )

        self._last_cmd = cmd
        self._last_ff = ff_cmd
        self._last_pid = pid_cmd
        return cmd


def load_controller_params(ref: str) -> dict:
    """Controller parameter file: PID gains, MPC weights and limits."""
    with open(resolve_fixture(ref), "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if doc.get("schema") != "hydrograde-controller/1":
        raise ConfigError(f"controller schema mismatch in {ref}")
    return doc
