"""Deterministic closed-loop plant: joint dynamics driven by the hydraulic
circuit models, actuation dead time, soil reaction and sensor synthesis.

Per step (fixed 100 Hz):

1. pop the dead-time buffer to get the valve command acting now;
2. quasi-static cylinder load from gravity, viscous friction and the
   previous-step inertia reaction;
3. attempted blade motion ignoring soil, which fixes the direction the
   soil reaction opposes (this avoids stall chatter: the reaction does
   not vanish when the blade actually stops);
4. hydraulic velocity under the full load through the LS or NFC circuit,
   with the function pressure capped by the pump setpoint (NFC) or
   relief (LS) so a stalled function reads the pump map exactly;
5. first-order actuator lag, integration, soil carving.

Everything is seeded and free of wall-clock access, so identical
(config, seed, command sequence) yields bit-identical logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError
from .hydraulics import (
    EXTEND,
    RETRACT,
    TANK_PRESSURE,
    LsCircuitModel,
    NfcCircuitModel,
)
from .kinematics import jacobian, link_pitches, link_tip, sensitivity, stroke
from .machine import CylinderState, JointConfiguration, MachineModel, resolve_fixture
from .soil import Soil, SoilModel

G = 9.81

PLANT_DT = 0.01  # fixed plant step [s]


@dataclass
class PlantParams:
    """Plant-side ground truth not derivable from the machine sheet.

    Dead times and lags are invented but sized to the machine class; the
    identification procedures must recover their closed-loop effect, not
    these numbers directly.
    """

    dead_time: np.ndarray  # per joint [s]
    lag: np.ndarray  # first-order actuator lag per joint [s]
    payload_mass: float = 0.0  # point mass at the blade tip [kg]
    angle_noise: float = 0.0  # additive [rad]
    rate_noise: float = 0.0  # relative
    pressure_noise: float = 0.0  # relative
    soil_grid_res: float = 0.02


@dataclass
class SensorFrame:
    t: float
    cabin_pitch: float
    theta: np.ndarray
    theta_dot: np.ndarray
    p_a: np.ndarray
    p_b: np.ndarray


@dataclass
class PlantState:
    joints: JointConfiguration
    cylinders: list
    delayed_commands: list  # per-joint ring buffer arrays
    buffer_pos: list
    soil: Soil
    clock: float = 0.0
    pfunc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    stalled: bool = False


def gravity_load_torque(model: MachineModel, theta, cabin_pitch=None, payload_mass=0.0):
    """Holding torque per joint: tau_i = d(potential)/d(theta_i).

    Positive boom torque means the actuator pushes against gravity, which
    loads the piston side of the boom cylinder.
    """
    from .machine import AXIS_SIGN

    psi = link_pitches(model, theta, cabin_pitch)
    L = model.effective_links
    C = L * np.cos(psi)
    tau = np.zeros(3)
    for i in range(3):
        acc = 0.0
        for k in range(3):
            if k < i:
                continue
            # d z_com_k / d theta_i: full links between i and k, COM fraction on k
            inner = model.com_fraction[k] * C[k]
            for j in range(i, k):
                inner += C[j]
            acc += model.link_masses[k] * inner
        # payload is a point mass at the blade tip
        acc += payload_mass * np.sum(C[i:])
        tau[i] = AXIS_SIGN[i] * G * acc
    return tau


class Plant:
    """One simulated excavator standing in soil."""

    def __init__(
        self,
        machine: MachineModel,
        circuit,
        soil_model: SoilModel,
        params: PlantParams,
        theta0,
        seed: int = 0,
    ):
        self.machine = machine
        self.circuit = circuit
        self.params = params
        self.dt = PLANT_DT
        self.rng = np.random.default_rng(seed)
        self._disturbances = []  # (t0, t1, joint, cylinder-velocity offset)

        nbuf = [max(0, int(round(t / self.dt))) for t in np.asarray(params.dead_time, float)]
        buffers = [np.zeros(max(n, 0)) for n in nbuf]
        joints = JointConfiguration(theta=np.asarray(theta0, dtype=float))
        soil = Soil(soil_model, params.soil_grid_res)
        strokes = stroke(machine, joints.theta)
        cylinders = [CylinderState(stroke=float(strokes[i]), velocity=0.0, p_a=TANK_PRESSURE, p_b=TANK_PRESSURE) for i in range(3)]
        self.state = PlantState(
            joints=joints,
            cylinders=cylinders,
            delayed_commands=buffers,
            buffer_pos=[0, 0, 0],
            soil=soil,
        )
        self._sync_pressures(np.zeros(3))

    # -- disturbance hook (bounded flow offsets, used for PID robustness) --

    def add_flow_disturbance(self, joint: int, t0: float, t1: float, cyl_vel_offset: float):
        self._disturbances.append((float(t0), float(t1), int(joint), float(cyl_vel_offset)))

    def _disturbance(self, joint: int, t: float) -> float:
        return sum(d for (t0, t1, j, d) in self._disturbances if j == joint and t0 <= t < t1)

    # -- hydraulic primitives ------------------------------------------------

    def _required_pressure(self, joint: int, direction: int, f_load: float) -> float:
        a_d = self.circuit.articulation_area(joint, direction)
        a_o = self.circuit.articulation_area(joint, -direction)
        return (direction * f_load + TANK_PRESSURE * a_o) / a_d

    def _hydraulic_velocity(self, joint: int, x: float, f_load: float):
        """Cylinder velocity and function pressure under the given load.

        Returns (v_cyl, p_func, direction). Direction 0 means the valve is
        inside the deadband; the function then holds the load.
        """
        circuit = self.circuit
        mag = abs(x)
        if mag <= circuit.deadband:
            hold_dir = EXTEND if f_load >= 0 else RETRACT
            p_hold = np.clip(
                self._required_pressure(joint, hold_dir, f_load), 0.0, circuit.relief_pressure
            )
            return 0.0, float(p_hold), 0
        direction = EXTEND if x > 0 else RETRACT
        req = self._required_pressure(joint, direction, f_load)
        if isinstance(circuit, NfcCircuitModel):
            p_p = float(circuit.pump_map(min(mag, 1.0)))
            p_func = float(np.clip(req, 0.0, p_p))
            r = float(circuit.orifice(joint, direction).resistance(min(mag, 1.0)))
            q = np.sqrt(max(p_p - p_func, 0.0) / r)
            v = direction * q / circuit.articulation_area(joint, direction)
            return float(v), p_func, direction
        if isinstance(circuit, LsCircuitModel):
            p_func = float(np.clip(req, 0.0, circuit.relief_pressure))
            if req >= circuit.relief_pressure:
                return 0.0, float(circuit.relief_pressure), direction
            v = float(circuit.command_to_flow(joint, x))
            return v, p_func, direction
        raise ConfigError("unknown circuit type")

    def _sync_pressures(self, f_load):
        """Chamber pressures consistent with the current function pressures."""
        st = self.state
        m = self.machine
        for i in range(3):
            f = f_load[i]
            direction = EXTEND if f >= 0 else RETRACT
            p_hold = np.clip(
                self._required_pressure(i, direction, f), 0.0, self.circuit.relief_pressure
            )
            if direction == EXTEND:
                st.cylinders[i].p_a, st.cylinders[i].p_b = float(p_hold), TANK_PRESSURE
            else:
                st.cylinders[i].p_a, st.cylinders[i].p_b = TANK_PRESSURE, float(p_hold)
            st.pfunc[i] = float(p_hold)

    # -- main loop ------------------------------------------------------------

    def step(self, commands) -> PlantState:
        """Advance one plant step under the given valve commands."""
        cmds = np.asarray(commands, dtype=float)
        if not np.all(np.isfinite(cmds)):
            raise ValueError("non-finite valve command")
        cmds = np.clip(cmds, -1.0, 1.0)
        st = self.state
        m = self.machine
        dt = self.dt

        # dead time: pop the oldest buffered command, push the new one
        delayed = np.empty(3)
        for i in range(3):
            buf = st.delayed_commands[i]
            if buf.size == 0:
                delayed[i] = cmds[i]
            else:
                p = st.buffer_pos[i]
                delayed[i] = buf[p]
                buf[p] = cmds[i]
                st.buffer_pos[i] = (p + 1) % buf.size

        theta = st.joints.theta
        theta_dot = st.joints.theta_dot
        gamma = sensitivity(m, theta)
        J = jacobian(m, theta)
        tip = link_tip(m, theta)

        tau_static = (
            gravity_load_torque(m, theta, payload_mass=self.params.payload_mass)
            + m.joint_friction * theta_dot
            + m.joint_inertia * st.joints.theta_ddot
        )
        f_static = gamma * tau_static

        # attempted blade motion without soil fixes the reaction direction
        v_att = np.array(
            [self._hydraulic_velocity(i, delayed[i], f_static[i])[0] for i in range(3)]
        )
        rate_att = gamma * v_att
        blade_v_att = J @ rate_att

        depth = max(st.soil.height(tip[0]) - tip[1], 0.0)
        tau_load = tau_static.copy()
        speed_att = float(np.hypot(blade_v_att[0], blade_v_att[1]))
        if depth > 0.0 and speed_att > 1e-9:
            f_cap = st.soil.reaction_capacity(tip[0], depth)
            f_soil = -f_cap * blade_v_att / speed_att
            tau_load -= J.T @ f_soil  # load = minus external torque
        f_load = gamma * tau_load

        v_new = np.empty(3)
        for i in range(3):
            v, p_func, direction = self._hydraulic_velocity(i, delayed[i], f_load[i])
            v += self._disturbance(i, st.clock)
            st.pfunc[i] = p_func
            if direction == EXTEND:
                st.cylinders[i].p_a, st.cylinders[i].p_b = p_func, TANK_PRESSURE
            elif direction == RETRACT:
                st.cylinders[i].p_a, st.cylinders[i].p_b = TANK_PRESSURE, p_func
            else:
                hold_dir = EXTEND if f_load[i] >= 0 else RETRACT
                if hold_dir == EXTEND:
                    st.cylinders[i].p_a, st.cylinders[i].p_b = p_func, TANK_PRESSURE
                else:
                    st.cylinders[i].p_a, st.cylinders[i].p_b = TANK_PRESSURE, p_func
            v_new[i] = v

        rate_target = gamma * v_new
        lag = np.asarray(self.params.lag, dtype=float)
        alpha = np.clip(dt / lag, 0.0, 1.0)
        rate = theta_dot + alpha * (rate_target - theta_dot)
        accel = (rate - theta_dot) / dt
        theta_next = theta + rate * dt

        # hard mechanical stops
        low, high = m.joint_limits_min, m.joint_limits_max
        clipped = np.clip(theta_next, low, high)
        at_stop = clipped != theta_next
        rate = np.where(at_stop, 0.0, rate)
        accel = np.where(at_stop, 0.0, accel)
        theta_next = clipped

        tip_next = link_tip(m, theta_next)
        if depth > 0.0 or st.soil.height(tip_next[0]) > tip_next[1]:
            st.soil.carve(tip[0], tip[1], tip_next[0], tip_next[1])

        st.joints.theta = theta_next
        st.joints.theta_dot = rate
        st.joints.theta_ddot = accel
        gamma_next = sensitivity(m, theta_next)
        strokes = stroke(m, theta_next)
        for i in range(3):
            st.cylinders[i].stroke = float(strokes[i])
            st.cylinders[i].velocity = float(rate[i] / gamma_next[i])
        st.clock += dt
        return st

    # -- sensing ----------------------------------------------------------------

    def measure(self) -> SensorFrame:
        """Sensor frame for the current state; noise is reproducible from
        the plant seed and zero by default (oracle mode)."""
        st = self.state
        p = self.params
        theta = st.joints.theta.copy()
        theta_dot = st.joints.theta_dot.copy()
        p_a = np.array([c.p_a for c in st.cylinders])
        p_b = np.array([c.p_b for c in st.cylinders])
        if p.angle_noise > 0:
            theta = theta + p.angle_noise * self.rng.standard_normal(3)
        if p.rate_noise > 0:
            theta_dot = theta_dot * (1.0 + p.rate_noise * self.rng.standard_normal(3))
        if p.pressure_noise > 0:
            p_a = p_a * (1.0 + p.pressure_noise * self.rng.standard_normal(3))
            p_b = p_b * (1.0 + p.pressure_noise * self.rng.standard_normal(3))
        return SensorFrame(
            t=st.clock,
            cabin_pitch=self.machine.cabin_pitch,
            theta=theta,
            theta_dot=theta_dot,
            p_a=p_a,
            p_b=p_b,
        )

    def scan_surface(self, resolution: float):
        return self.state.soil.scan(resolution)

    def blade_tip(self):
        return link_tip(self.machine, self.state.joints.theta)


def plant_params_from_dict(cfg: dict) -> PlantParams:
    try:
        return PlantParams(
            dead_time=np.array([float(cfg["dead_time"][j]) for j in ("boom", "stick", "bucket")]),
            lag=np.array([float(cfg["lag"][j]) for j in ("boom", "stick", "bucket")]),
        )
    except KeyError as exc:
        raise ConfigError(f"plant params missing field {exc}") from exc


def load_plant_params(machine_ref: str) -> PlantParams:
    """Plant actuation constants live in the machine fixture's `plant:`
    section (they are machine properties, just not controller-visible)."""
    with open(resolve_fixture(machine_ref), "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if "plant" not in cfg:
        raise ConfigError(f"machine fixture {machine_ref!r} has no plant section")
    return plant_params_from_dict(cfg["plant"])
