"""Delay-aware nonlinear MPC path tracker.

Joint transients are linear second-order models with a shared discrete
input-delay buffer, so the prediction is an exact linear map from the
initial state and the input sequence (precomputed once per problem). The
only nonlinearity is the forward kinematics inside the task-space cost.
The program is solved by single shooting with analytic gradients through
the chain kinematics (L-BFGS-B with input bounds, fixed iteration
budget, warm started from the shifted previous solution).

Joint position limits are soft-penalized with a heavy weight instead of
hard NLP constraints; the returned first input is always hard-clamped.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from .errors import ConfigError
from .kinematics import (
    jacobian,
    link_pitches,
    link_tip,
    velocity_jacobian_theta_grad,
    wrap_angle,
)
from .machine import AXIS_SIGN, MachineModel

MPC_DT = 0.1
MPC_HORIZON = 20


@dataclass(frozen=True)
class TargetSurface:
    """Design surface: height h at x = 0, inclination alpha (slope), the
    desired forward blade speed and blade pitch."""

    h: float
    alpha: float
    v_x: float
    phi: float = 0.0


@dataclass(frozen=True)
class MpcWeights:
    w_vx: float = 1.0
    w_vz: float = 20.0
    w_omega: float = 0.5
    w_phi: float = 5.0
    w_h: float = 150.0
    w_du: float = 0.02
    w_h_terminal: float = 600.0
    w_limits: float = 1e4

    def __post_init__(self):
        for name in ("w_vx", "w_vz", "w_omega", "w_phi", "w_h", "w_du", "w_h_terminal", "w_limits"):
            if getattr(self, name) < 0:
                raise ConfigError(f"MPC weight {name} must be non-negative")

    @classmethod
    def from_dict(cls, node: dict) -> "MpcWeights":
        return cls(**{k: float(v) for k, v in node.items()})


class ChainTaskMap:
    """Task quantities and their joint-space gradients for the real chain."""

    def __init__(self, machine: MachineModel, cabin_pitch=None):
        self.machine = machine
        self.cabin_pitch = machine.cabin_pitch if cabin_pitch is None else cabin_pitch

    def evaluate(self, theta, theta_dot):
        m = self.machine
        p = link_tip(m, theta, 3, self.cabin_pitch)
        J = jacobian(m, theta, self.cabin_pitch)
        v = np.einsum("kij,kj->ki", J, theta_dot)
        dv = velocity_jacobian_theta_grad(m, theta, theta_dot, self.cabin_pitch)
        psi = link_pitches(m, theta, self.cabin_pitch)
        return {
            "px": p[:, 0],
            "pz": p[:, 1],
            "vx": v[:, 0],
            "vz": v[:, 1],
            "phi": psi[:, 2],
            "omega": theta_dot @ AXIS_SIGN,
            "dpx": J[:, 0, :],
            "dpz": J[:, 1, :],
            "dvx_dth": dv[:, 0, :],
            "dvz_dth": dv[:, 1, :],
            "dvx_dthd": J[:, 0, :],
            "dvz_dthd": J[:, 1, :],
            "dphi": np.broadcast_to(AXIS_SIGN, theta.shape),
            "domega": np.broadcast_to(AXIS_SIGN, theta.shape),
        }


class LinearTaskMap:
    """Affine task map (p = P theta + p0); turns the program into a convex
    QP. Used to validate the solver against an independent least-squares
    solution."""

    def __init__(self, P: np.ndarray, p0: np.ndarray, phi_coeff=None):
        self.P = np.asarray(P, dtype=float)  # (2, 3)
        self.p0 = np.asarray(p0, dtype=float)  # (2,)
        self.phi_coeff = AXIS_SIGN if phi_coeff is None else np.asarray(phi_coeff, float)

    def evaluate(self, theta, theta_dot):
        p = theta @ self.P.T + self.p0
        v = theta_dot @ self.P.T
        n = theta.shape[0]
        return {
            "px": p[:, 0],
            "pz": p[:, 1],
            "vx": v[:, 0],
            "vz": v[:, 1],
            "phi": theta @ self.phi_coeff,
            "omega": theta_dot @ self.phi_coeff,
            "dpx": np.broadcast_to(self.P[0], (n, 3)),
            "dpz": np.broadcast_to(self.P[1], (n, 3)),
            "dvx_dth": np.zeros((n, 3)),
            "dvz_dth": np.zeros((n, 3)),
            "dvx_dthd": np.broadcast_to(self.P[0], (n, 3)),
            "dvz_dthd": np.broadcast_to(self.P[1], (n, 3)),
            "dphi": np.broadcast_to(self.phi_coeff, (n, 3)),
            "domega": np.broadcast_to(self.phi_coeff, (n, 3)),
        }


@dataclass
class MpcState:
    """Joint states plus the delayed-input buffer (newest slot first)."""

    theta: np.ndarray
    theta_dot: np.ndarray
    theta_ddot: np.ndarray
    buffer: np.ndarray  # (N_d, 3)

    @classmethod
    def at_rest(cls, theta, n_delay: int) -> "MpcState":
        return cls(
            theta=np.asarray(theta, dtype=float),
            theta_dot=np.zeros(3),
            theta_ddot=np.zeros(3),
            buffer=np.zeros((n_delay, 3)),
        )

    def shifted_buffer(self, u) -> np.ndarray:
        """Buffer after applying input u: one slot shift, newest first."""
        out = np.roll(self.buffer, 1, axis=0)
        out[0] = u
        return out


class MpcProblem:
    """Problem data plus the cached exact-discretization prediction maps."""

    def __init__(
        self,
        dynamics: dict,
        weights: MpcWeights,
        targets: TargetSurface,
        task_map,
        u_min,
        u_max,
        theta_min,
        theta_max,
        horizon: int = MPC_HORIZON,
        dt: float = MPC_DT,
        n_delay: int | None = None,
        bucket_enabled: bool = True,
        max_iter: int = 80,
    ):
        self.dynamics = dynamics
        self.targets = targets
        self.task_map = task_map
        self.horizon = int(horizon)
        self.dt = float(dt)
        self.u_min = np.asarray(u_min, dtype=float)
        self.u_max = np.asarray(u_max, dtype=float)
        self.theta_min = np.asarray(theta_min, dtype=float)
        self.theta_max = np.asarray(theta_max, dtype=float)
        self.bucket_enabled = bool(bucket_enabled)
        self.max_iter = int(max_iter)
        if np.any(self.u_min >= self.u_max) or np.any(self.theta_min >= self.theta_max):
            raise ConfigError("infeasible MPC bounds")
        # the bucket pitch weight is forced to zero when the joint is locked
        if not self.bucket_enabled and weights.w_phi != 0.0:
            weights = MpcWeights(
                **{**weights.__dict__, "w_phi": 0.0}
            )
        self.weights = weights

        taus = np.array([dynamics[i].tau for i in range(3)])
        need = max(1, int(np.max(np.floor(taus / self.dt + 1e-9))))
        self.n_delay = int(n_delay) if n_delay is not None else need
        if self.n_delay < 1:
            raise ConfigError("delay buffer length must be at least 1")
        self.delay_steps = np.clip(
            np.floor(taus / self.dt + 1e-9).astype(int), 1, self.n_delay
        )

        self._build_prediction_maps()

    # -- linear prediction machinery ---------------------------------------

    def _build_prediction_maps(self):
        nd, N = self.n_delay, self.horizon
        nz = 9 + 3 * nd
        A = np.zeros((nz, nz))
        B = np.zeros((nz, 3))
        for i in range(3):
            f = self.dynamics[i]
            w, z, K = f.omega_n, f.zeta, f.K
            Ac = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, -w * w, -2.0 * z * w]])
            Bc = np.array([0.0, 0.0, K * w * w])
            M = np.zeros((4, 4))
            M[:3, :3] = Ac
            M[:3, 3] = Bc
            Md = expm(M * self.dt)
            Ad, Bd = Md[:3, :3], Md[:3, 3]
            s = 3 * i
            A[s : s + 3, s : s + 3] = Ad
            col = 9 + 3 * (self.delay_steps[i] - 1) + i
            A[s : s + 3, col] += Bd
        for j in range(1, nd):
            for i in range(3):
                A[9 + 3 * j + i, 9 + 3 * (j - 1) + i] = 1.0
        for i in range(3):
            B[9 + i, i] = 1.0

        self.nz = nz
        self.A, self.B = A, B
        # z_k = Phi[k] z0 + G[k] @ U,  U = (u_0 .. u_{N-1}) flattened
        Phi = np.zeros((N + 1, nz, nz))
        Gm = np.zeros((N + 1, nz, 3 * N))
        Phi[0] = np.eye(nz)
        for k in range(1, N + 1):
            Phi[k] = A @ Phi[k - 1]
            Gm[k] = A @ Gm[k - 1]
            Gm[k][:, 3 * (k - 1) : 3 * k] = B
        self.Phi, self.G = Phi, Gm
        self.idx_theta = np.array([0, 3, 6])
        self.idx_vel = np.array([1, 4, 7])

    def state_vector(self, state: MpcState) -> np.ndarray:
        z = np.zeros(self.nz)
        for i in range(3):
            z[3 * i] = state.theta[i]
            z[3 * i + 1] = state.theta_dot[i]
            z[3 * i + 2] = state.theta_ddot[i]
        buf = state.buffer
        for j in range(self.n_delay):
            row = buf[j] if j < buf.shape[0] else buf[-1] if buf.size else np.zeros(3)
            z[9 + 3 * j : 9 + 3 * j + 3] = row
        return z

    def input_bounds(self, measured_theta=None):
        lo = np.tile(self.u_min, self.horizon).astype(float)
        hi = np.tile(self.u_max, self.horizon).astype(float)
        if not self.bucket_enabled:
            lo[2::3] = 0.0
            hi[2::3] = 0.0
        return lo, hi


def mpc_predict(state: MpcState, inputs, problem: MpcProblem):
    """Roll the exact discrete model over the horizon.

    `inputs` is (N, 3). Returns dict with theta, theta_dot, theta_ddot of
    shape (N+1, 3) including the initial state.
    """
    U = np.asarray(inputs, dtype=float).reshape(-1)
    if U.size != 3 * problem.horizon:
        raise ValueError("input sequence length must match the horizon")
    z0 = problem.state_vector(state)
    Z = np.einsum("kij,j->ki", problem.Phi, z0) + np.einsum("kiu,u->ki", problem.G, U)
    return {
        "theta": Z[:, problem.idx_theta],
        "theta_dot": Z[:, problem.idx_vel],
        "theta_ddot": Z[:, problem.idx_vel + 1],
    }


def _cost_and_grad(U, problem: MpcProblem, z_base, u_prev):
    N = problem.horizon
    w = problem.weights
    tg = problem.targets
    Z = z_base + np.einsum("kiu,u->ki", problem.G, U)
    theta = Z[1:, problem.idx_theta]
    thd = Z[1:, problem.idx_vel]
    task = problem.task_map.evaluate(theta, thd)

    # stage task terms for k = 1..N-1, terminal height at k = N
    st = slice(0, N - 1)
    e_vx = task["vx"][st] - tg.v_x
    e_vz = task["vz"][st]
    e_om = task["omega"][st]
    e_phi = wrap_angle(task["phi"][st] - tg.phi) if w.w_phi > 0 else np.zeros(N - 1)
    e_h = task["pz"] - (tg.h + tg.alpha * task["px"])  # all k = 1..N

    J = (
        w.w_vx * np.sum(e_vx**2)
        + w.w_vz * np.sum(e_vz**2)
        + w.w_omega * np.sum(e_om**2)
        + w.w_phi * np.sum(e_phi**2)
        + w.w_h * np.sum(e_h[st] ** 2)
        + w.w_h_terminal * e_h[N - 1] ** 2
    )

    g_th = np.zeros((N, 3))
    g_thd = np.zeros((N, 3))
    dh = task["dpz"] - tg.alpha * task["dpx"]
    g_th[st] += 2.0 * w.w_vx * e_vx[:, None] * task["dvx_dth"][st]
    g_thd[st] += 2.0 * w.w_vx * e_vx[:, None] * task["dvx_dthd"][st]
    g_th[st] += 2.0 * w.w_vz * e_vz[:, None] * task["dvz_dth"][st]
    g_thd[st] += 2.0 * w.w_vz * e_vz[:, None] * task["dvz_dthd"][st]
    g_thd[st] += 2.0 * w.w_omega * e_om[:, None] * task["domega"][st]
    if w.w_phi > 0:
        g_th[st] += 2.0 * w.w_phi * e_phi[:, None] * task["dphi"][st]
    g_th[st] += 2.0 * w.w_h * e_h[st][:, None] * dh[st]
    g_th[N - 1] += 2.0 * w.w_h_terminal * e_h[N - 1] * dh[N - 1]

    # soft joint-limit penalty over the predicted trajectory
    over = np.maximum(theta - problem.theta_max, 0.0)
    under = np.maximum(problem.theta_min - theta, 0.0)
    J += w.w_limits * (np.sum(over**2) + np.sum(under**2))
    g_th += 2.0 * w.w_limits * (over - under)

    # input increment penalty
    Um = U.reshape(N, 3)
    D = np.diff(np.vstack([u_prev, Um]), axis=0)
    J += w.w_du * np.sum(D**2)
    gU = np.zeros((N, 3))
    gU += 2.0 * w.w_du * D
    gU[:-1] -= 2.0 * w.w_du * D[1:]

    gz = np.zeros((N + 1, problem.nz))
    gz[1:, problem.idx_theta] = g_th
    gz[1:, problem.idx_vel] = g_thd
    grad = np.einsum("ki,kiu->u", gz, problem.G) + gU.reshape(-1)
    return float(J), grad


@dataclass
class MpcDiagnostics:
    cost: float
    iterations: int
    converged: bool
    degraded: bool
    active_input_bounds: int
    solve_time: float
    theta_violation: float


def mpc_solve(
    state: MpcState,
    problem: MpcProblem,
    u_prev=None,
    warm_start=None,
):
    """Solve the receding-horizon program; returns (u0, diagnostics, U).

    Only the first input is meant to be applied. Deterministic: fixed
    iteration budget, no time-based cutoffs (solve time is reported but
    never used for decisions).
    """
    t0 = time.perf_counter()
    N = problem.horizon
    u_prev = np.zeros(3) if u_prev is None else np.asarray(u_prev, dtype=float)
    z0 = problem.state_vector(state)
    z_base = np.einsum("kij,j->ki", problem.Phi, z0)
    lo, hi = problem.input_bounds()
    if warm_start is not None and np.size(warm_start) == 3 * N:
        U0 = np.clip(np.asarray(warm_start, dtype=float).reshape(-1), lo, hi)
    else:
        U0 = np.clip(np.tile(u_prev, N), lo, hi)

    res = minimize(
        _cost_and_grad,
        U0,
        args=(problem, z_base, u_prev),
        jac=True,
        method="L-BFGS-B",
        bounds=list(zip(lo, hi)),
        options={"maxiter": problem.max_iter, "maxfun": 4 * problem.max_iter, "ftol": 1e-12, "gtol": 1e-10},
    )
    U = np.clip(res.x, lo, hi)
    u0 = np.clip(U[:3], problem.u_min, problem.u_max)
    if not problem.bucket_enabled:
        u0[2] = 0.0

    pred = mpc_predict(state, U.reshape(N, 3), problem)
    viol = float(
        np.max(
            np.maximum(pred["theta"] - problem.theta_max, 0.0)
            + np.maximum(problem.theta_min - pred["theta"], 0.0)
        )
    )
    diag = MpcDiagnostics(
        cost=float(res.fun),
        iterations=int(res.nit),
        converged=bool(res.success),
        degraded=not bool(res.success),
        active_input_bounds=int(np.sum((U <= lo + 1e-12) | (U >= hi - 1e-12))),
        solve_time=time.perf_counter() - t0,
        theta_violation=viol,
    )
    return u0, diag, U.reshape(N, 3)


class MpcTracker:
    """Receding-horizon driver: warm starts, applied-command history and
    the delayed-input buffer kept in sync with what was actually sent."""

    def __init__(self, problem: MpcProblem):
        self.problem = problem
        self._warm = None
        self._u_prev = np.zeros(3)
        self._buffer = np.zeros((problem.n_delay, 3))
        self.last_diag = None

    def reset(self):
        self._warm = None
        self._u_prev = np.zeros(3)
        self._buffer = np.zeros((self.problem.n_delay, 3))
        self.last_diag = None

    def tick(self, theta, theta_dot, theta_ddot):
        state = MpcState(
            theta=np.asarray(theta, dtype=float),
            theta_dot=np.asarray(theta_dot, dtype=float),
            theta_ddot=np.asarray(theta_ddot, dtype=float),
            buffer=self._buffer.copy(),
        )
        u0, diag, U = mpc_solve(state, self.problem, u_prev=self._u_prev, warm_start=self._warm)
        self._warm = np.vstack([U[1:], U[-1]]).reshape(-1)
        self._u_prev = u0
        self._buffer = state.shifted_buffer(u0)
        self.last_diag = diag
        return u0
