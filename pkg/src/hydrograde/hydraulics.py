"""Hydraulic circuit models shared by the plant simulator and calibration.

Two architectures:

* Load Sensing (LS): the pump holds a constant margin across the control
  valve, so cylinder velocity is a function of valve command alone until
  the load pressure hits relief (stall).
* Negative Flow Control (NFC): pump pressure follows a setpoint map
  P_p(x) of the valve command; flow into the function is set by the
  pressure difference to the back pressure across the variable function
  orifice, Q = sqrt(max(P_p(x) - P_f, 0) / R(x)).

Each travel direction carries its own orifice fit. The R1/R2 bypass
galleries and the pump pressure loop are not simulated component-wise;
the pump map absorbs their steady-state effect (including the ECU
feedback line, whose quantitative effect is not separable anyway).
Internally Pa and m^3/s; config files may use bar and L/min.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ConfigError
from .machine import JOINTS, MachineModel, resolve_fixture
from .units import quantity

EXTEND, RETRACT = 1, -1
TANK_PRESSURE = 2e5  # return-line pressure [Pa], plumbing constant


@dataclass(frozen=True)
class OrificeModel:
    """Variable in-line orifice of the DCV: R(x) = a / (b (x + c)^2).

    Only the ratio a/b is identifiable; both are kept for conditioning of
    the fit. Valid for command magnitudes in [x_min, x_max].
    """

    a: float
    b: float
    c: float
    x_min: float = 0.0
    x_max: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ConfigError("orifice parameters a, b must be positive")
        if self.x_min + self.c <= 0:
            raise ConfigError("orifice must satisfy b (x + c)^2 > 0 on valid range")

    def resistance(self, x):
        x = np.asarray(x, dtype=float)
        return self.a / (self.b * (x + self.c) ** 2)


@dataclass(frozen=True)
class PumpPressureMap:
    """Pump pressure-loop setpoint vs command magnitude, piecewise linear."""

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if x.ndim != 1 or x.shape != p.shape or x.size < 2:
            raise ConfigError("pump map needs matching 1-d breakpoint arrays")
        if np.any(np.diff(x) <= 0):
            raise ConfigError("pump map commands must be strictly increasing")
        if np.any(np.diff(p) < 0):
            raise ConfigError("pump map pressure must be non-decreasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.x, self.p)

    def onset_command(self, p_f: float) -> float:
        """Smallest command with P_p(x) > p_f; x_max if unreachable."""
        if p_f >= self.p[-1]:
            return float(self.x[-1])
        if p_f < self.p[0]:
            return float(self.x[0])
        return float(np.interp(p_f, self.p, self.x))


@dataclass(frozen=True)
class NfcCircuitModel:
    """Per-machine NFC ground truth: pump map plus per-joint, per-direction
    orifices. Directions are independent fits (retraction is plumbed
    faster on the fixtures)."""

    pump_map: PumpPressureMap
    orifices: dict  # (joint_index, direction) -> OrificeModel
    relief_pressure: float
    deadband: float
    area_a: np.ndarray
    area_b: np.ndarray

    def orifice(self, joint: int, direction: int) -> OrificeModel:
        return self.orifices[(joint, direction)]

    def articulation_area(self, joint: int, direction: int) -> float:
        """Effective active-side plunger area for the travel direction."""
        return float(self.area_a[joint] if direction == EXTEND else self.area_b[joint])


@dataclass(frozen=True)
class LsCircuitModel:
    """Per-machine LS ground truth: monotone command-to-velocity map per
    joint (signed command covers both directions), load independent up to
    relief."""

    x_bp: dict  # joint_index -> breakpoints
    v_bp: dict  # joint_index -> cylinder velocity at breakpoints
    deadband: float
    relief_pressure: float
    area_a: np.ndarray
    area_b: np.ndarray

    def command_to_flow(self, joint: int, x):
        return np.interp(np.asarray(x, dtype=float), self.x_bp[joint], self.v_bp[joint])

    def articulation_area(self, joint: int, direction: int) -> float:
        return float(self.area_a[joint] if direction == EXTEND else self.area_b[joint])


def orifice_drop(resistance, flow):
    """Turbulent orifice pressure drop, sign following the flow:
    dP = R Q |Q|."""
    r = np.asarray(resistance, dtype=float)
    q = np.asarray(flow, dtype=float)
    if np.any(r <= 0):
        raise ValueError("orifice resistance must be positive")
    return r * q * np.abs(q)


def nfc_flow(circuit: NfcCircuitModel, joint: int, x: float, p_f: float) -> float:
    """Flow into the function [m^3/s] for signed command `x` and pseudo
    back pressure `p_f` (may be negative). Zero whenever the pump setpoint
    does not exceed the back pressure."""
    mag = abs(float(x))
    if mag <= circuit.deadband:
        return 0.0
    direction = EXTEND if x > 0 else RETRACT
    mag = min(mag, 1.0)
    p_p = float(circuit.pump_map(mag))
    drive = p_p - float(p_f)
    if drive <= 0.0:
        return 0.0
    r = float(circuit.orifice(joint, direction).resistance(mag))
    return float(np.sqrt(drive / r))


def ls_flow(circuit: LsCircuitModel, joint: int, x: float, load_force: float) -> float:
    """Signed cylinder velocity [m/s] for an LS function.

    Load independent by construction; the only load effect is the stall
    clamp when the implied function pressure reaches relief.
    """
    x = float(np.clip(x, -1.0, 1.0))
    if abs(x) <= circuit.deadband:
        return 0.0
    direction = EXTEND if x > 0 else RETRACT
    area = circuit.articulation_area(joint, direction)
    implied = float(load_force) * direction / area
    if implied >= circuit.relief_pressure:
        return 0.0
    return float(circuit.command_to_flow(joint, x))


# --- fixture loading -------------------------------------------------------


def circuit_from_dict(cfg: dict, machine: MachineModel):
    relief = quantity(cfg["relief_pressure"])
    if relief > machine.max_function_pressure + 1e-6:
        raise ConfigError("relief pressure above machine max function pressure")
    arch = str(cfg["architecture"]).upper()
    if arch == "NFC":
        pump = PumpPressureMap(
            x=np.array([quantity(v) for v in cfg["pump_map"]["x"]]),
            p=np.array([quantity(v) for v in cfg["pump_map"]["p"]]),
        )
        if pump.p[-1] > relief + 1e-6:
            raise ConfigError("pump map exceeds relief pressure")
        orifices = {}
        for i, j in enumerate(JOINTS):
            node = cfg["orifices"][j]
            for key, direction in (("extend", EXTEND), ("retract", RETRACT)):
                o = node[key]
                orifices[(i, direction)] = OrificeModel(
                    a=float(o["a"]),
                    b=float(o["b"]),
                    c=float(o["c"]),
                    x_min=float(cfg.get("deadband", 0.05)),
                )
        return NfcCircuitModel(
            pump_map=pump,
            orifices=orifices,
            relief_pressure=relief,
            deadband=float(cfg.get("deadband", 0.05)),
            area_a=machine.plunger_area_a,
            area_b=machine.plunger_area_b,
        )
    if arch == "LS":
        x_bp, v_bp = {}, {}
        for i, j in enumerate(JOINTS):
            node = cfg["command_to_flow"][j]
            x = np.array([float(v) for v in node["x"]])
            v = np.array([quantity(s) for s in node["v"]])
            if np.any(np.diff(x) <= 0) or np.any(np.diff(v) < 0):
                raise ConfigError(f"LS map for {j} must be monotone")
            x_bp[i], v_bp[i] = x, v
        return LsCircuitModel(
            x_bp=x_bp,
            v_bp=v_bp,
            deadband=float(cfg.get("deadband", 0.05)),
            relief_pressure=relief,
            area_a=machine.plunger_area_a,
            area_b=machine.plunger_area_b,
        )
    raise ConfigError(f"unknown circuit architecture {arch!r}")


def load_circuit(ref: str, machine: MachineModel):
    with open(resolve_fixture(ref), "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    circuit = circuit_from_dict(cfg, machine)
    want = machine.architecture
    have = "NFC" if isinstance(circuit, NfcCircuitModel) else "LS"
    if want != have:
        raise ConfigError(f"circuit {ref!r} is {have} but machine {machine.name} is {want}")
    return circuit
