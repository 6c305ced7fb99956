"""Machine description: kinematic chain, cylinder linkages, limits.

Frame and sign conventions (fixed once, asserted in tests):

* Planar model in the vertical boom plane. The machine frame has its
  origin at the boom pivot, x pointing away from the cabin (toward the
  blade), z up, gravity along -z. Cabin pitch rotates the whole chain
  about the lateral axis.
* Joint order is always (boom, stick, bucket).
* Positive joint rate means boom-up, stick-in, bucket-curl. Positive
  cylinder extension produces positive joint rate on every joint, so the
  sensitivity factor is positive throughout the working range.
* The geometric link pitch accumulates with per-joint axis signs
  ``AXIS_SIGN = (+1, -1, -1)``: stick-in and bucket-curl fold the chain.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .errors import ConfigError
from .units import quantity

JOINTS = ("boom", "stick", "bucket")
AXIS_SIGN = np.array([1.0, -1.0, -1.0])

FIXTURE_PATH_ENV = "HYDROGRADE_FIXTURE_PATH"


@dataclass(frozen=True)
class CylinderLinkage:
    """Closed two-bar triangle coupling one cylinder to one joint.

    The cylinder spans two eyes at distances `r_base` and `r_rod` from the
    joint pivot; the angle enclosed between the two rays is
    ``alpha = offset + theta``. Stroke follows from the law of cosines.
    These parameters are not published for real machines; fixture values
    are invented to give realistic sensitivity ranges.
    """

    r_base: float
    r_rod: float
    offset: float

    def included_angle(self, theta):
        return self.offset + np.asarray(theta, dtype=float)


@dataclass(frozen=True)
class MachineModel:
    name: str
    architecture: str  # "LS" | "NFC"
    link_lengths: np.ndarray  # boom, stick, bucket [m]
    cabin_pitch: float  # [rad]
    tele_extension: float  # [m], constant per run, added to the stick
    joint_limits_min: np.ndarray  # [rad]
    joint_limits_max: np.ndarray  # [rad]
    rate_limits: np.ndarray  # symmetric [rad/s]
    linkages: tuple[CylinderLinkage, ...]
    plunger_area_a: np.ndarray  # piston side [m^2]
    plunger_area_b: np.ndarray  # rod side [m^2]
    max_function_pressure: float  # [Pa]
    link_masses: np.ndarray  # lumped link masses [kg] (invented)
    com_fraction: np.ndarray  # COM position along each link [0..1]
    joint_inertia: np.ndarray  # lumped inertia about each joint [kg m^2]
    joint_friction: np.ndarray  # viscous joint friction [N m s/rad]

    def __post_init__(self):
        if self.architecture not in ("LS", "NFC"):
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if np.any(self.link_lengths <= 0):
            raise ConfigError("link lengths must be strictly positive")
        if np.any(self.joint_limits_min >= self.joint_limits_max):
            raise ConfigError("joint limit min must be below max")
        if not np.all(np.isfinite(self.rate_limits)) or np.any(self.rate_limits <= 0):
            raise ConfigError("rate limits must be finite and positive")
        if np.any(self.plunger_area_a <= 0) or np.any(self.plunger_area_b <= 0):
            raise ConfigError("plunger areas must be strictly positive")
        if np.any(self.plunger_area_a <= self.plunger_area_b):
            raise ConfigError("piston-side area A_a must exceed rod-side A_b")
        if self.max_function_pressure <= 0:
            raise ConfigError("max function pressure must be positive")

    @property
    def effective_links(self) -> np.ndarray:
        """Link lengths with the telescopic extension folded into the stick."""
        L = self.link_lengths.copy()
        L[1] += self.tele_extension
        return L


@dataclass
class JointConfiguration:
    """Joint-space state of the three controlled joints."""

    theta: np.ndarray
    theta_dot: np.ndarray = field(default=None)  # type: ignore[assignment]
    theta_ddot: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.theta_dot = (
            np.zeros(3) if self.theta_dot is None else np.asarray(self.theta_dot, dtype=float)
        )
        self.theta_ddot = (
            np.zeros(3) if self.theta_ddot is None else np.asarray(self.theta_ddot, dtype=float)
        )


@dataclass(frozen=True)
class EndEffectorState:
    """Blade-tip state in the gravity-aligned machine frame."""

    p: np.ndarray  # (x, z) [m]
    v: np.ndarray  # (vx, vz) [m/s]
    omega_y: float  # pitch rate [rad/s]
    phi: float  # bucket pitch [rad], wrapped to (-pi, pi]


@dataclass
class CylinderState:
    """One cylinder: stroke, speed and chamber pressures.

    The measured force is always recomputed from the pressures, never
    stored, so it cannot drift out of sync.
    """

    stroke: float
    velocity: float
    p_a: float
    p_b: float

    def force(self, area_a: float, area_b: float) -> float:
        return self.p_a * area_a - self.p_b * area_b


def _triplet(node, unit=None):
    return np.array([quantity(node[j], unit) for j in JOINTS], dtype=float)


def machine_from_dict(cfg: dict) -> MachineModel:
    try:
        linkages = tuple(
            CylinderLinkage(
                r_base=quantity(cfg["cylinder_geometry"][j]["r_base"]),
                r_rod=quantity(cfg["cylinder_geometry"][j]["r_rod"]),
                offset=quantity(cfg["cylinder_geometry"][j]["offset"]),
            )
            for j in JOINTS
        )
        return MachineModel(
            name=str(cfg["name"]),
            architecture=str(cfg["architecture"]).upper(),
            link_lengths=_triplet(cfg["link_lengths"]),
            cabin_pitch=quantity(cfg.get("cabin_pitch", 0.0)),
            tele_extension=quantity(cfg.get("tele_extension", 0.0)),
            joint_limits_min=_triplet(cfg["joint_limits"]["min"]),
            joint_limits_max=_triplet(cfg["joint_limits"]["max"]),
            rate_limits=_triplet(cfg["joint_limits"]["rate"]),
            linkages=linkages,
            plunger_area_a=_triplet(cfg["plunger_areas"]["a"]),
            plunger_area_b=_triplet(cfg["plunger_areas"]["b"]),
            max_function_pressure=quantity(cfg["max_function_pressure"]),
            link_masses=_triplet(cfg["link_masses"]),
            com_fraction=_triplet(cfg["com_fraction"]),
            joint_inertia=_triplet(cfg["joint_inertia"]),
            joint_friction=_triplet(cfg.get("joint_friction", dict.fromkeys(JOINTS, 0.0))),
        )
    except KeyError as exc:
        raise ConfigError(f"machine config missing field {exc}") from exc


def fixture_dirs() -> list[str]:
    """Search path for fixture files: env override first, then bundled."""
    dirs = []
    env = os.environ.get(FIXTURE_PATH_ENV)
    if env:
        dirs.extend(p for p in env.split(os.pathsep) if p)
    dirs.append(str(resources.files("hydrograde") / "fixtures"))
    return dirs


def resolve_fixture(name: str) -> str:
    """Resolve a fixture reference: a literal path, or a bundled name."""
    if os.path.isfile(name):
        return name
    candidates = [name, name + ".yaml"]
    for d in fixture_dirs():
        for c in candidates:
            path = os.path.join(d, c)
            if os.path.isfile(path):
                return path
    raise ConfigError(f"fixture {name!r} not found (searched {fixture_dirs()})")


def load_machine(ref: str) -> MachineModel:
    with open(resolve_fixture(ref), "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    return machine_from_dict(cfg)
