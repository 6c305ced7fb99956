"""Planar chain kinematics and the cylinder-joint conversion layer.

Angles follow the conventions documented in :mod:`hydrograde.machine`.
All functions are pure and operate on immutable model data, so they are
safe to call concurrently.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateLinkageError
from .machine import AXIS_SIGN, EndEffectorState, JointConfiguration, MachineModel

_MIN_MOMENT_ARM_SIN = 1e-9


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    w = np.asarray((np.asarray(x) + np.pi) % (2.0 * np.pi) - np.pi)
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    return float(w) if w.ndim == 0 else w


def link_pitches(model: MachineModel, theta, cabin_pitch=None):
    """Absolute pitch of each link for joint angles `theta` (batched ok).

    theta may be shape (3,) or (N, 3); returns matching (…, 3).
    """
    delta = model.cabin_pitch if cabin_pitch is None else cabin_pitch
    th = np.asarray(theta, dtype=float)
    return delta + np.cumsum(AXIS_SIGN * th, axis=-1)


def link_tip(model: MachineModel, theta, n_links: int = 3, cabin_pitch=None):
    """Position of the tip of link `n_links` (1 boom, 2 stick, 3 bucket)."""
    psi = link_pitches(model, theta, cabin_pitch)[..., :n_links]
    L = model.effective_links[:n_links]
    x = np.sum(L * np.cos(psi), axis=-1)
    z = np.sum(L * np.sin(psi), axis=-1)
    return np.stack([x, z], axis=-1)


def jacobian(model: MachineModel, theta, cabin_pitch=None) -> np.ndarray:
    """Analytic blade-tip Jacobian d(p)/d(theta), shape (…, 2, 3)."""
    psi = link_pitches(model, theta, cabin_pitch)
    L = model.effective_links
    C = L * np.cos(psi)
    S = L * np.sin(psi)
    # suffix sums over links k >= j
    Ssuf = np.flip(np.cumsum(np.flip(S, axis=-1), axis=-1), axis=-1)
    Csuf = np.flip(np.cumsum(np.flip(C, axis=-1), axis=-1), axis=-1)
    Jx = -AXIS_SIGN * Ssuf
    Jz = AXIS_SIGN * Csuf
    return np.stack([Jx, Jz], axis=-2)


def velocity_jacobian_theta_grad(model: MachineModel, theta, theta_dot, cabin_pitch=None):
    """d(v_EE)/d(theta) for v_EE = J(theta) theta_dot, shape (…, 2, 3).

    Needed by the MPC for analytic cost gradients; obtained from the
    second derivative of the chain position terms.
    """
    psi = link_pitches(model, theta, cabin_pitch)
    L = model.effective_links
    C = L * np.cos(psi)
    S = L * np.sin(psi)
    Ssuf = np.flip(np.cumsum(np.flip(S, axis=-1), axis=-1), axis=-1)
    Csuf = np.flip(np.cumsum(np.flip(C, axis=-1), axis=-1), axis=-1)
    td = np.asarray(theta_dot, dtype=float)
    out = np.zeros(np.broadcast_shapes(psi.shape, td.shape)[:-1] + (2, 3))
    # dJ_xj/dtheta_m = -s_j s_m Csuf[max(j,m)];  dJ_zj/dtheta_m = -s_j s_m Ssuf[max(j,m)]
    for m in range(3):
        gx = np.zeros(out.shape[:-2])
        gz = np.zeros(out.shape[:-2])
        for j in range(3):
            k = max(j, m)
            coeff = AXIS_SIGN[j] * AXIS_SIGN[m] * td[..., j]
            gx = gx - coeff * Csuf[..., k]
            gz = gz - coeff * Ssuf[..., k]
        out[..., 0, m] = gx
        out[..., 1, m] = gz
    return out


def forward_kinematics(
    model: MachineModel, joints: JointConfiguration, cabin_pitch=None
) -> EndEffectorState:
    """Blade-tip pose and twist in the gravity-aligned machine frame.

    Total over finite inputs. The bucket pitch is the absolute pitch of
    the bucket link about the lateral axis (our resolution of the frame
    convention left open for the rotation-matrix extraction).
    """
    theta = joints.theta
    p = link_tip(model, theta, 3, cabin_pitch)
    J = jacobian(model, theta, cabin_pitch)
    v = J @ joints.theta_dot
    psi = link_pitches(model, theta, cabin_pitch)
    phi = wrap_angle(psi[..., 2])
    omega_y = float(np.dot(AXIS_SIGN, joints.theta_dot))
    return EndEffectorState(p=p, v=v, omega_y=omega_y, phi=float(phi))


# --- cylinder linkage ------------------------------------------------------


def stroke(model: MachineModel, theta) -> np.ndarray:
    """Cylinder length per joint from the closed-triangle linkage (law of
    cosines), shape (…, 3)."""
    th = np.asarray(theta, dtype=float)
    out = np.empty(th.shape)
    for i, lk in enumerate(model.linkages):
        alpha = lk.included_angle(th[..., i])
        c2 = lk.r_base**2 + lk.r_rod**2 - 2.0 * lk.r_base * lk.r_rod * np.cos(alpha)
        out[..., i] = np.sqrt(np.maximum(c2, 0.0))
    return out


def sensitivity(model: MachineModel, theta) -> np.ndarray:
    """Position-dependent factor mapping cylinder speed to joint rate.

    theta_dot_i = gamma_i * v_i. By virtual work the same factor maps
    joint torque to cylinder force: f_i = gamma_i * tau_i (equivalently
    tau = f / gamma). gamma = 1 / (d stroke / d theta) and is positive
    over every joint's working range.
    """
    th = np.asarray(theta, dtype=float)
    out = np.empty(th.shape)
    for i, lk in enumerate(model.linkages):
        alpha = lk.included_angle(th[..., i])
        sin_a = np.sin(alpha)
        if np.any(np.abs(sin_a) < _MIN_MOMENT_ARM_SIN):
            raise DegenerateLinkageError(
                f"linkage triangle of joint {i} collapsed (sin alpha ~ 0)"
            )
        c2 = lk.r_base**2 + lk.r_rod**2 - 2.0 * lk.r_base * lk.r_rod * np.cos(alpha)
        c = np.sqrt(np.maximum(c2, 1e-12))
        out[..., i] = c / (lk.r_base * lk.r_rod * sin_a)
    return out


def cyl_vel_to_joint_rate(model: MachineModel, theta, cyl_vel) -> np.ndarray:
    return sensitivity(model, theta) * np.asarray(cyl_vel, dtype=float)


def joint_rate_to_cyl_vel(model: MachineModel, theta, rates) -> np.ndarray:
    return np.asarray(rates, dtype=float) / sensitivity(model, theta)


def torque_to_cyl_force(model: MachineModel, theta, torque) -> np.ndarray:
    """Cylinder force equivalent to a joint torque: f = gamma * tau."""
    return sensitivity(model, theta) * np.asarray(torque, dtype=float)


def cylinder_force(p_a, p_b, area_a, area_b):
    """Pressure-derived cylinder force f = p_a A_a - p_b A_b."""
    return np.asarray(p_a, dtype=float) * area_a - np.asarray(p_b, dtype=float) * area_b
