"""Soil stand-in for the plant simulator.

The paper's test campaigns run in real compacted material; nothing about
the soil itself is modeled there, so this is deliberately the simplest
model that produces depth-dependent load and stall: a height field that
can only be cut down, and a reaction force

    F = gain(x) * depth ** exponent * blade_width

opposing the attempted blade motion. Hard patches scale the gain over an
x-interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SoilModel:
    profile_x: np.ndarray  # piecewise-linear surface breakpoints [m]
    profile_h: np.ndarray
    resistance_gain: float  # [N/m^2] force per unit cut cross-section
    depth_exponent: float = 1.2
    blade_width: float = 1.0  # [m]
    hard_patches: list = field(default_factory=list)  # (x0, x1, gain multiplier)
    noise_seed: int = 0
    roughness: float = 0.0  # optional surface roughness amplitude [m]

    def __post_init__(self):
        self.profile_x = np.asarray(self.profile_x, dtype=float)
        self.profile_h = np.asarray(self.profile_h, dtype=float)
        if np.any(np.diff(self.profile_x) <= 0):
            raise ValueError("soil profile x must be strictly increasing")


class Soil:
    """Mutable soil surface on a uniform grid, carved by the blade."""

    def __init__(self, model: SoilModel, grid_res: float = 0.02):
        self.model = model
        x0, x1 = model.profile_x[0], model.profile_x[-1]
        n = max(2, int(round((x1 - x0) / grid_res)) + 1)
        self.xs = np.linspace(x0, x1, n)
        self.hs = np.interp(self.xs, model.profile_x, model.profile_h)
        if model.roughness > 0.0:
            rng = np.random.default_rng(model.noise_seed)
            self.hs = self.hs + model.roughness * rng.standard_normal(n)

    def height(self, x: float) -> float:
        return float(np.interp(x, self.xs, self.hs))

    def gain_at(self, x: float) -> float:
        g = self.model.resistance_gain
        for x0, x1, mult in self.model.hard_patches:
            if x0 <= x <= x1:
                g *= mult
        return g

    def reaction_capacity(self, x: float, depth: float) -> float:
        """Maximum reaction force the soil exerts at this cut depth [N]."""
        if depth <= 0.0:
            return 0.0
        return self.gain_at(x) * depth**self.model.depth_exponent * self.model.blade_width

    def carve(self, x0: float, z0: float, x1: float, z1: float) -> None:
        """Cut the surface down to the segment swept by the blade edge.

        Cutting only: grid heights never increase (no spill modeling).
        """
        lo, hi = (x0, x1) if x0 <= x1 else (x1, x0)
        mask = (self.xs >= lo) & (self.xs <= hi)
        if not np.any(mask):
            # sub-grid motion: clip the single nearest node
            i = int(np.argmin(np.abs(self.xs - 0.5 * (x0 + x1))))
            self.hs[i] = min(self.hs[i], max(z0, z1))
            return
        if abs(x1 - x0) < 1e-12:
            z_line = np.full(mask.sum(), min(z0, z1))
        else:
            z_line = z0 + (self.xs[mask] - x0) * (z1 - z0) / (x1 - x0)
        self.hs[mask] = np.minimum(self.hs[mask], z_line)

    def scan(self, resolution: float):
        """Sample the current surface at uniform cell centers."""
        if resolution <= 0:
            raise ValueError("scan resolution must be positive")
        x0, x1 = self.xs[0], self.xs[-1]
        n = max(1, int(round((x1 - x0) / resolution)))
        xs = x0 + (np.arange(n) + 0.5) * resolution
        return xs, np.interp(xs, self.xs, self.hs)
