"""Identified per-joint closed-loop dynamics used by the path tracker.

Each joint's commanded-rate-to-rate transfer is a second-order system
with static gain K, damping ratio zeta, natural frequency omega_n and a
dead time tau:

    a' = -2 zeta omega_n a - omega_n^2 v + K omega_n^2 u(t - tau)

with v the joint rate and a its derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ConfigError
from .machine import JOINTS

DYN_SCHEMA = "hydrograde-dyn/1"


@dataclass(frozen=True)
class JointDynamicsFit:
    K: float
    zeta: float
    omega_n: float
    tau: float
    fit_residual: float = 0.0

    def __post_init__(self):
        if self.K <= 0 or self.zeta <= 0 or self.omega_n <= 0 or self.tau < 0:
            raise ConfigError("joint dynamics parameters out of range")


def step_response(t, K, zeta, omega_n, tau=0.0, u=1.0):
    """Rate response to a command step of size `u` at t = 0 (closed form,
    valid for any damping ratio via the complex root formula)."""
    t = np.asarray(t, dtype=float)
    ts = np.maximum(t - tau, 0.0)
    z = complex(zeta)
    w = omega_n
    root = np.sqrt(z * z - 1.0 + 0j)
    if abs(root) < 1e-9:
        z = complex(zeta + 1e-7)
        root = np.sqrt(z * z - 1.0)
    s1 = (-z + root) * w
    s2 = (-z - root) * w
    resp = 1.0 - (s2 * np.exp(s1 * ts) - s1 * np.exp(s2 * ts)) / (s2 - s1)
    return K * u * np.where(t >= tau, resp.real, 0.0)


def save_dynamics(path, fits: dict, machine: str = "", extra: dict | None = None) -> None:
    doc = {
        "schema": DYN_SCHEMA,
        "machine": machine,
        "joints": {
            JOINTS[i]: {
                "K": float(f.K),
                "zeta": float(f.zeta),
                "omega_n": float(f.omega_n),
                "tau": float(f.tau),
                "fit_residual": float(f.fit_residual),
            }
            for i, f in fits.items()
        },
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_dynamics(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if doc.get("schema") != DYN_SCHEMA:
        raise ConfigError(f"dynamics schema mismatch in {path}")
    fits = {}
    for i, name in enumerate(JOINTS):
        node = doc["joints"][name]
        fits[i] = JointDynamicsFit(
            K=float(node["K"]),
            zeta=float(node["zeta"]),
            omega_n=float(node["omega_n"]),
            tau=float(node["tau"]),
            fit_residual=float(node.get("fit_residual", 0.0)),
        )
    return fits
