"""Calibrated hydraulic feed-forward tables.

LS machines use a 1-D monotone map from desired cylinder velocity to
valve command. NFC machines use one 2-D grid per travel direction that
maps (desired function flow, pseudo back pressure) to the command, built
by inverting the identified pump and orifice models. Tables are immutable
after construction and serialized to a versioned YAML file with embedded
provenance.
"""

from __future__ import annotations

import datetime
import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError
from .hydraulics import EXTEND, RETRACT
from .machine import JOINTS

log = logging.getLogger(__name__)

FF_SCHEMA = "hydrograde-ff/1"
KIND_LS = "ls_1d"
KIND_NFC = "nfc_2d"

_DIR_NAMES = {EXTEND: "extend", RETRACT: "retract"}


@dataclass(frozen=True)
class LsTable:
    """Monotone cylinder velocity -> command breakpoints (signed range)."""

    velocity: np.ndarray
    command: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.velocity, dtype=float)
        x = np.asarray(self.command, dtype=float)
        if np.any(np.diff(v) <= 0):
            raise ConfigError("LS table velocities must be strictly increasing")
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "command", x)

    def query(self, v) -> float:
        return float(np.clip(np.interp(v, self.velocity, self.command), -1.0, 1.0))


@dataclass(frozen=True)
class NfcDirectionTable:
    """Bilinear (flow, back pressure) -> command grid for one direction.

    Saturated cells mark (flow, P_f) combinations unreachable even at
    full command; queries there return the full command.
    """

    flow: np.ndarray  # (nf,) non-negative, increasing
    pf: np.ndarray  # (np,) increasing, may span negative values
    command: np.ndarray  # (nf, np)
    saturated: np.ndarray  # (nf, np) bool

    _warned: list = field(default_factory=list, compare=False, repr=False)

    def query(self, flow: float, p_f: float) -> float:
        f = float(flow)
        p = float(p_f)
        if (
            f < self.flow[0] - 1e-12
            or f > self.flow[-1] + 1e-12
            or p < self.pf[0] - 1e-9
            or p > self.pf[-1] + 1e-9
        ) and not self._warned:
            self._warned.append(True)
            log.warning(
                "feed-forward query outside table range (flow=%.3g, pf=%.3g); clamping", f, p
            )
        f = float(np.clip(f, self.flow[0], self.flow[-1]))
        p = float(np.clip(p, self.pf[0], self.pf[-1]))
        i = int(np.clip(np.searchsorted(self.flow, f) - 1, 0, len(self.flow) - 2))
        j = int(np.clip(np.searchsorted(self.pf, p) - 1, 0, len(self.pf) - 2))
        tf = (f - self.flow[i]) / (self.flow[i + 1] - self.flow[i])
        tp = (p - self.pf[j]) / (self.pf[j + 1] - self.pf[j])
        c = self.command
        x = (
            c[i, j] * (1 - tf) * (1 - tp)
            + c[i + 1, j] * tf * (1 - tp)
            + c[i, j + 1] * (1 - tf) * tp
            + c[i + 1, j + 1] * tf * tp
        )
        return float(np.clip(x, 0.0, 1.0))


@dataclass
class HydraulicFeedForward:
    """Calibrated FF element for one machine (all three joints)."""

    kind: str
    machine: str
    ls_tables: dict = field(default_factory=dict)  # joint -> LsTable
    nfc_tables: dict = field(default_factory=dict)  # (joint, dir) -> NfcDirectionTable
    identified: dict = field(default_factory=dict)  # pump/orifice fits, provenance detail
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (KIND_LS, KIND_NFC):
            raise ConfigError(f"unknown feed-forward kind {self.kind!r}")

    def ls_command(self, joint: int, v_des: float) -> float:
        return self.ls_tables[joint].query(v_des)

    def nfc_command(self, joint: int, q_signed: float, p_f: float) -> float:
        """Signed command for a signed desired flow at back pressure p_f."""
        direction = EXTEND if q_signed >= 0 else RETRACT
        table = self.nfc_tables[(joint, direction)]
        return direction * table.query(abs(q_signed), p_f)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        doc = {
            "schema": FF_SCHEMA,
            "kind": self.kind,
            "machine": self.machine,
            "provenance": dict(self.provenance),
            "identified": self.identified,
            "joints": {},
        }
        for i, name in enumerate(JOINTS):
            if self.kind == KIND_LS:
                t = self.ls_tables[i]
                doc["joints"][name] = {
                    "velocity": t.velocity.tolist(),
                    "command": t.command.tolist(),
                }
            else:
                node = {}
                for d, dname in _DIR_NAMES.items():
                    t = self.nfc_tables[(i, d)]
                    node[dname] = {
                        "flow": t.flow.tolist(),
                        "pf": t.pf.tolist(),
                        "command": t.command.tolist(),
                        "saturated": t.saturated.astype(int).tolist(),
                    }
                doc["joints"][name] = node
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "HydraulicFeedForward":
        if doc.get("schema") != FF_SCHEMA:
            raise ConfigError(
                f"feed-forward schema mismatch: {doc.get('schema')!r} != {FF_SCHEMA!r}"
            )
        ff = cls(
            kind=doc["kind"],
            machine=doc.get("machine", ""),
            identified=doc.get("identified", {}),
            provenance=doc.get("provenance", {}),
        )
        for i, name in enumerate(JOINTS):
            node = doc["joints"][name]
            if ff.kind == KIND_LS:
                ff.ls_tables[i] = LsTable(
                    velocity=np.array(node["velocity"], dtype=float),
                    command=np.array(node["command"], dtype=float),
                )
            else:
                for d, dname in _DIR_NAMES.items():
                    sub = node[dname]
                    ff.nfc_tables[(i, d)] = NfcDirectionTable(
                        flow=np.array(sub["flow"], dtype=float),
                        pf=np.array(sub["pf"], dtype=float),
                        command=np.array(sub["command"], dtype=float),
                        saturated=np.array(sub["saturated"], dtype=bool),
                    )
        return ff

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)

    @classmethod
    def load(cls, path) -> "HydraulicFeedForward":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def equals(self, other: "HydraulicFeedForward") -> bool:
        if (self.kind, self.machine) != (other.kind, other.machine):
            return False
        if set(self.ls_tables) != set(other.ls_tables):
            return False
        for k, t in self.ls_tables.items():
            o = other.ls_tables[k]
            if not (np.array_equal(t.velocity, o.velocity) and np.array_equal(t.command, o.command)):
                return False
        if set(self.nfc_tables) != set(other.nfc_tables):
            return False
        for k, t in self.nfc_tables.items():
            o = other.nfc_tables[k]
            if not (
                np.array_equal(t.flow, o.flow)
                and np.array_equal(t.pf, o.pf)
                and np.array_equal(t.command, o.command)
                and np.array_equal(t.saturated, o.saturated)
            ):
                return False
        return True


def provenance_stamp(payload: bytes | str, created: str | None = None) -> dict:
    if isinstance(payload, str):
        payload = payload.encode()
    return {
        "dataset_sha256": hashlib.sha256(payload).hexdigest(),
        "created": created or datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
