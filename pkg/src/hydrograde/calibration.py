"""Calibration against logged data: LS table sampling, NFC pump/orifice
identification with inertia compensation, 2-D table construction and MPC
step-response fitting.

The maneuver drivers mirror what an operator does on the real machine:
constant-command steps in the air for LS tables, stall probes and
progressive press-into-soil trajectories for the NFC orifices, and three
payload configurations for the boom lifting direction (progressive
stalling is not feasible against gravity).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit, minimize
from scipy.signal import savgol_filter

from .dynamics import JointDynamicsFit, step_response
from .errors import (
    CalibrationError,
    DataQualityError,
    FitDivergenceError,
    MissingProbeError,
    UnderdeterminedError,
)
from .feedforward import (
    KIND_LS,
    KIND_NFC,
    HydraulicFeedForward,
    LsTable,
    NfcDirectionTable,
    provenance_stamp,
)
from .hydraulics import EXTEND, RETRACT, NfcCircuitModel, OrificeModel, PumpPressureMap
from .kinematics import cylinder_force, sensitivity
from .logs import GradingLog, LogBuilder
from .machine import JOINTS, MachineModel
from .plant import PLANT_DT, Plant, PlantParams
from .soil import SoilModel

log = logging.getLogger(__name__)

STEADY_WINDOW = (2.0, 3.0)  # steady state = mean over the third second
ACCEL_SMOOTH_WINDOW = 0.15  # [s] polynomial smoothing for accelerations


@dataclass
class CalibrationRun:
    """One constant-command maneuver."""

    log: GradingLog
    joint: int
    command: float
    kind: str  # "step" | "stall" | "press" | "load"
    onset: float = 0.0
    payload: float = 0.0

    def __post_init__(self):
        cmd = self.log.triplet("cmd")[:, self.joint]
        active = self.log["t"] >= self.onset
        if np.any(np.abs(cmd[active] - self.command) > 1e-9):
            raise CalibrationError(
                f"run for joint {self.joint} does not hold command {self.command}"
            )
        if np.any(np.diff(self.log["t"]) <= 0):
            raise CalibrationError("run timestamps must be strictly increasing")


@dataclass
class CalibrationDataset:
    machine: MachineModel
    runs: list = field(default_factory=list)

    def select(self, joint=None, kind=None, direction=None):
        out = []
        for r in self.runs:
            if joint is not None and r.joint != joint:
                continue
            if kind is not None and r.kind != kind:
                continue
            if direction is not None and np.sign(r.command) != direction:
                continue
            out.append(r)
        return out

    def fingerprint(self) -> bytes:
        h = []
        for r in self.runs:
            h.append(f"{r.joint}:{r.command}:{r.kind}:{len(r.log)}")
        return "|".join(h).encode()


# --------------------------------------------------------------------------
# log-derived series
# --------------------------------------------------------------------------


def smoothed_acceleration(log: GradingLog, joint: int) -> np.ndarray:
    """Joint acceleration by polynomial-smoothed differentiation of the
    logged rate (0.15 s window)."""
    t = log["t"]
    rate = log.triplet("thetadot")[:, joint]
    if len(t) < 5:
        return np.gradient(rate, t)
    dt = float(np.median(np.diff(t)))
    win = max(5, int(round(ACCEL_SMOOTH_WINDOW / dt)) | 1)
    if win >= len(rate):
        win = (len(rate) - 1) | 1
    return savgol_filter(rate, win, polyorder=2, deriv=1, delta=dt)


def compensate_inertia(log: GradingLog, machine: MachineModel, joint: int) -> np.ndarray:
    """Measured cylinder force minus the lumped-inertia reaction.

    Breaks the positive feedback between commanded acceleration and the
    perceived load; without it transient spikes feed straight back into
    the load-dependent FF element.
    """
    theta = log.triplet("theta")
    gamma = sensitivity(machine, theta)[:, joint]
    f_m = cylinder_force(
        log.triplet("pa")[:, joint],
        log.triplet("pb")[:, joint],
        machine.plunger_area_a[joint],
        machine.plunger_area_b[joint],
    )
    accel = smoothed_acceleration(log, joint)
    f_inertia = gamma * machine.joint_inertia[joint] * accel
    return f_m - f_inertia


def _flow_and_backpressure(run: CalibrationRun, machine: MachineModel):
    """(Q, P_f) sample series for one run, in the run's travel direction."""
    lg = run.log
    i = run.joint
    direction = EXTEND if run.command > 0 else RETRACT
    area = machine.plunger_area_a[i] if direction == EXTEND else machine.plunger_area_b[i]
    theta = lg.triplet("theta")
    gamma = sensitivity(machine, theta)[:, i]
    v_cyl = lg.triplet("thetadot")[:, i] / gamma
    q = direction * v_cyl * area
    p_f = direction * compensate_inertia(lg, machine, i) / area
    return q, p_f


# --------------------------------------------------------------------------
# maneuver drivers (simulated analogs of the field procedures)
# --------------------------------------------------------------------------

AIR_SOIL = SoilModel(
    profile_x=np.array([-50.0, 50.0]), profile_h=np.array([-100.0, -100.0]), resistance_gain=0.0
)


def _simulate_constant(plant: Plant, joint: int, command: float, duration: float) -> GradingLog:
    builder = LogBuilder()
    cmds = np.zeros(3)
    cmds[joint] = command
    n = int(round(duration / plant.dt))
    for _ in range(n):
        _log_plant_row(builder, plant, cmds, np.full(3, np.nan))
        plant.step(cmds)
    return builder.finish(machine=plant.machine.name)


def _log_plant_row(builder: LogBuilder, plant: Plant, cmds, rate_cmd, ff=None, pid=None, stall=0.0):
    st = plant.state
    tip = plant.blade_tip()
    from .kinematics import forward_kinematics

    ee = forward_kinematics(plant.machine, st.joints)
    row = {
        "t": st.clock,
        "cab_pitch": plant.machine.cabin_pitch,
        "ee_x": ee.p[0],
        "ee_z": ee.p[1],
        "ee_vx": ee.v[0],
        "ee_vz": ee.v[1],
        "ee_phi": ee.phi,
        "soil_h": st.soil.height(tip[0]),
        "cut_depth": max(st.soil.height(tip[0]) - tip[1], 0.0),
        "stall": stall,
    }
    for k, name in enumerate(JOINTS):
        row[f"cmd_{name}"] = cmds[k]
        row[f"rate_cmd_{name}"] = rate_cmd[k]
        row[f"ff_{name}"] = ff[k] if ff is not None else np.nan
        row[f"pid_{name}"] = pid[k] if pid is not None else np.nan
        row[f"theta_{name}"] = st.joints.theta[k]
        row[f"thetadot_{name}"] = st.joints.theta_dot[k]
        row[f"pa_{name}"] = st.cylinders[k].p_a
        row[f"pb_{name}"] = st.cylinders[k].p_b
        row[f"pfunc_{name}"] = st.pfunc[k]
    builder.append(**row)


def _sweep_start_pose(machine: MachineModel, joint: int, command: float, duration: float):
    """Start pose leaving room for the whole constant-command sweep."""
    lo = machine.joint_limits_min.copy()
    hi = machine.joint_limits_max.copy()
    theta = 0.5 * (lo + hi)
    margin = 0.08 * (hi - lo)
    if command > 0:
        theta[joint] = lo[joint] + margin[joint]
    elif command < 0:
        theta[joint] = hi[joint] - margin[joint]
    return theta


def collect_step_runs(
    machine: MachineModel,
    circuit,
    params: PlantParams,
    commands,
    joints=(0, 1, 2),
    duration: float = 3.5,
    seed: int = 0,
) -> CalibrationDataset:
    """Constant-command steps in the air, spanning the command range."""
    ds = CalibrationDataset(machine=machine)
    for joint in joints:
        for x in commands:
            plant = Plant(
                machine, circuit, AIR_SOIL, params, _sweep_start_pose(machine, joint, x, duration), seed
            )
            lg = _simulate_constant(plant, joint, float(x), duration)
            ds.runs.append(CalibrationRun(log=lg, joint=joint, command=float(x), kind="step"))
    return ds


def _press_soil_profile(machine, circuit, params, joint, command, duration, depth_ramp, seed):
    """Soil profile that makes a constant-command run press progressively
    deeper: simulate the blade path in the air, then put the surface on
    that path with a linearly growing burial depth."""
    probe = Plant(
        machine, circuit, AIR_SOIL, params, _sweep_start_pose(machine, joint, command, duration), seed
    )
    lg = _simulate_constant(probe, joint, command, duration)
    xs = lg["ee_x"]
    zs = lg["ee_z"]
    dx = np.diff(xs)
    if np.all(dx >= -1e-12):
        n_mono = len(xs)
    elif np.all(dx <= 1e-12):
        n_mono = len(xs)
    else:
        flips = np.where(np.sign(dx[1:]) * np.sign(dx[:-1]) < 0)[0]
        n_mono = int(flips[0]) + 1 if flips.size else len(xs)
    xs, zs = xs[:n_mono], zs[:n_mono]
    ramp = depth_ramp * np.linspace(0.0, 1.0, len(xs))
    order = np.argsort(xs)
    px, ph = xs[order], (zs + ramp)[order]
    keep = np.concatenate([[True], np.diff(px) > 1e-6])
    px, ph = px[keep], ph[keep]
    if len(px) < 2:
        raise CalibrationError("press maneuver sweeps no horizontal distance")
    pad = 0.5
    px = np.concatenate([[px[0] - pad], px, [px[-1] + pad]])
    ph = np.concatenate([[ph[0]], ph, [ph[-1]]])
    span = px[-1] - px[0]
    return SoilModel(
        profile_x=px,
        profile_h=ph,
        resistance_gain=3e5,
        depth_exponent=1.0,
        blade_width=1.0,
    ), min(0.02, span / 200.0), duration * n_mono / len(lg["t"])


def collect_press_runs(
    machine: MachineModel,
    circuit,
    params: PlantParams,
    joint: int,
    commands,
    duration: float = 6.0,
    depth_ramp: float = 0.6,
    seed: int = 0,
) -> list:
    """Progressive-stall trajectories for one joint: increasing back
    pressure and decreasing flow at constant command."""
    runs = []
    for x in commands:
        soil, grid_res, dur = _press_soil_profile(
            machine, circuit, params, joint, float(x), duration, depth_ramp, seed
        )
        p = PlantParams(
            dead_time=params.dead_time,
            lag=params.lag,
            payload_mass=params.payload_mass,
            soil_grid_res=grid_res,
        )
        plant = Plant(
            machine, circuit, soil, p, _sweep_start_pose(machine, joint, float(x), duration), seed
        )
        lg = _simulate_constant(plant, joint, float(x), dur)
        runs.append(CalibrationRun(log=lg, joint=joint, command=float(x), kind="press"))
    return runs


def collect_load_runs(
    machine: MachineModel,
    circuit,
    params: PlantParams,
    joint: int,
    commands,
    payloads=(0.0, 600.0, 1200.0),
    duration: float = 3.5,
    seed: int = 0,
) -> list:
    """Lifting runs under different payloads (boom direction where
    progressive stalling is not feasible); each run yields quasi-steady
    (Q, P_f) points."""
    runs = []
    for x in commands:
        for m_p in payloads:
            p = PlantParams(
                dead_time=params.dead_time,
                lag=params.lag,
                payload_mass=float(m_p),
                soil_grid_res=params.soil_grid_res,
            )
            plant = Plant(
                machine, circuit, AIR_SOIL, p, _sweep_start_pose(machine, joint, float(x), duration), seed
            )
            lg = _simulate_constant(plant, joint, float(x), duration)
            runs.append(
                CalibrationRun(
                    log=lg, joint=joint, command=float(x), kind="load", payload=float(m_p)
                )
            )
    return runs


def collect_stall_probes(
    machine: MachineModel,
    circuit,
    params: PlantParams,
    commands,
    joint: int = 1,
    duration: float = 2.5,
    seed: int = 0,
) -> list:
    """Stall the function against an effectively rigid face and record the
    function pressure; with zero flow it equals the pump setpoint."""
    runs = []
    for x in commands:
        soil, grid_res, dur = _press_soil_profile(
            machine, circuit, params, joint, float(x), duration, 0.05, seed
        )
        hard = SoilModel(
            profile_x=soil.profile_x,
            profile_h=soil.profile_h,
            resistance_gain=soil.resistance_gain,
            depth_exponent=soil.depth_exponent,
            blade_width=soil.blade_width,
            hard_patches=[(-1e9, 1e9, 1e6)],
        )
        plant = Plant(
            machine, circuit, hard, PlantParams(
                dead_time=params.dead_time, lag=params.lag, soil_grid_res=grid_res
            ),
            _sweep_start_pose(machine, joint, float(x), duration), seed,
        )
        lg = _simulate_constant(plant, joint, float(x), duration)
        runs.append(CalibrationRun(log=lg, joint=joint, command=float(x), kind="stall"))
    return runs


# --------------------------------------------------------------------------
# LS calibration
# --------------------------------------------------------------------------


def _steady_cylinder_velocity(run: CalibrationRun, machine: MachineModel) -> float:
    t = run.log["t"] - run.onset
    if t[-1] < STEADY_WINDOW[1] - 1e-9:
        raise CalibrationError(
            f"run at command {run.command} too short for the steady window "
            f"({t[-1]:.2f} s < {STEADY_WINDOW[1]} s)"
        )
    sel = (t >= STEADY_WINDOW[0]) & (t <= STEADY_WINDOW[1])
    theta = run.log.triplet("theta")[sel]
    gamma = sensitivity(machine, theta)[:, run.joint]
    v = run.log.triplet("thetadot")[sel, run.joint] / gamma
    return float(np.mean(v))


def calibrate_ls(dataset: CalibrationDataset) -> HydraulicFeedForward:
    """Invert steady-state velocity samples into a velocity-to-command
    table per joint (piecewise linear between sampled points)."""
    machine = dataset.machine
    ff = HydraulicFeedForward(kind=KIND_LS, machine=machine.name)
    for joint in range(3):
        runs = sorted(dataset.select(joint=joint, kind="step"), key=lambda r: r.command)
        if not runs:
            raise CalibrationError(f"no step runs for joint {JOINTS[joint]}")
        xs = np.array([r.command for r in runs])
        vs = np.array([_steady_cylinder_velocity(r, machine) for r in runs])
        # the deadband plateau measures exactly zero; collapse it to one node
        zero = np.abs(vs) < 1e-9
        for a, b in zip(range(len(xs) - 1), range(1, len(xs))):
            if not (zero[a] or zero[b]) and vs[b] - vs[a] <= 0:
                raise CalibrationError(
                    f"non-monotone samples for {JOINTS[joint]}: command {xs[a]:+.2f} "
                    f"-> {vs[a]:.4f} m/s but {xs[b]:+.2f} -> {vs[b]:.4f} m/s"
                )
        keep_x = np.concatenate([xs[~zero], [0.0]])
        keep_v = np.concatenate([vs[~zero], [0.0]])
        order = np.argsort(keep_v)
        ff.ls_tables[joint] = LsTable(velocity=keep_v[order], command=keep_x[order])
    ff.provenance = provenance_stamp(dataset.fingerprint())
    return ff


# --------------------------------------------------------------------------
# NFC calibration
# --------------------------------------------------------------------------


def probe_pump_map(dataset: CalibrationDataset, commands=None) -> PumpPressureMap:
    """Pump setpoint map from stalled segments (Q = 0 so the function
    pressure reads the pump pressure directly)."""
    runs = dataset.select(kind="stall")
    if not runs:
        raise MissingProbeError("dataset contains no stall probes")
    by_cmd: dict[float, list[float]] = {}
    for run in runs:
        t = run.log["t"] - run.onset
        sel = t >= t[-1] - 0.5
        theta_dot = run.log.triplet("thetadot")[sel, run.joint]
        if np.max(np.abs(theta_dot)) > 1e-3:
            raise MissingProbeError(
                f"probe at command {run.command} never stalled (joint still moving)"
            )
        p = float(np.mean(run.log.triplet("pfunc")[sel, run.joint]))
        by_cmd.setdefault(abs(run.command), []).append(p)
    if commands is not None:
        missing = [x for x in commands if abs(x) not in by_cmd]
        if missing:
            raise MissingProbeError(f"no stalled segment for commands {missing}")
    xs = np.array(sorted(by_cmd))
    ps = np.array([np.mean(by_cmd[x]) for x in xs])
    iso = np.maximum.accumulate(ps)
    if np.any(iso != ps):
        warnings.warn("pump map probes were not monotone; clamped isotonically")
    return PumpPressureMap(x=xs, p=iso)


def estimate_resistance(run: CalibrationRun, machine: MachineModel, pump: PumpPressureMap) -> float:
    """Least-squares R for dP = R Q^2 over one run's (Q, P_f) samples."""
    q, p_f = _flow_and_backpressure(run, machine)
    t = run.log["t"] - run.onset
    p_p = float(pump(abs(run.command)))
    dp = p_p - p_f
    q_floor = 0.03 * max(np.max(q), 1e-9)
    sel = (t >= 0.8) & (q > q_floor) & (dp > 0)
    if np.count_nonzero(sel) < 3:
        raise DataQualityError(
            f"run at command {run.command} has too few usable (Q, P_f) samples"
        )
    qq = q[sel] ** 2
    r = float(np.sum(dp[sel] * qq) / np.sum(qq * qq))
    if r <= 0:
        raise DataQualityError(f"negative resistance estimate at command {run.command}")
    return r


def fit_orifice(
    dataset: CalibrationDataset,
    pump: PumpPressureMap,
    joint: int,
    direction: int,
    n_starts: int = 16,
    seed: int = 7,
):
    """Fit R(x) = a / (b (x + c)^2) to per-command resistance estimates
    with an L1 cost in log space (small resistances matter most: they
    carry the high-flow end). Bounded derivative-free search with
    multi-start; the best iterate is kept, so the objective is monotone
    across accepted candidates.

    Returns (OrificeModel, info dict).
    """
    runs = [
        r
        for r in dataset.select(joint=joint, direction=direction)
        if r.kind in ("press", "load")
    ]
    by_cmd: dict[float, list[CalibrationRun]] = {}
    for r in runs:
        by_cmd.setdefault(abs(r.command), []).append(r)
    if len(by_cmd) < 3:
        raise UnderdeterminedError(
            f"orifice fit for {JOINTS[joint]} needs >= 3 distinct commands, got {len(by_cmd)}"
        )
    xs = np.array(sorted(by_cmd))
    r_test = np.empty_like(xs)
    for k, x in enumerate(xs):
        group = by_cmd[x]
        if len(group) == 1:
            r_test[k] = estimate_resistance(group[0], dataset.machine, pump)
        else:
            # several load configurations at one command: pool their samples
            num, den = 0.0, 0.0
            for run in group:
                q, p_f = _flow_and_backpressure(run, dataset.machine)
                t = run.log["t"] - run.onset
                p_p = float(pump(abs(run.command)))
                sel = (t >= STEADY_WINDOW[0]) & (t <= STEADY_WINDOW[1])
                qm = float(np.mean(q[sel]))
                pm = float(np.mean(p_f[sel]))
                if qm <= 0 or p_p - pm <= 0:
                    continue
                num += (p_p - pm) * qm**2
                den += qm**4
            if den <= 0:
                raise DataQualityError(f"no usable load points at command {x}")
            r_test[k] = num / den
    if np.any(r_test <= 0):
        raise DataQualityError("negative resistance estimate")

    return fit_orifice_to_points(xs, r_test, n_starts=n_starts, seed=seed)


def fit_orifice_to_points(xs, r_test, n_starts: int = 16, seed: int = 7):
    """Inner solver for the log-L1 orifice regression on (x, R) points."""
    xs = np.asarray(xs, dtype=float)
    log_rt = np.log(np.asarray(r_test, dtype=float))

    def objective(p):
        la, lb, c = p
        if xs[0] + c <= 1e-6:
            return 1e12
        model = la - lb - 2.0 * np.log(xs + c)
        return float(np.sum(np.abs(model - log_rt)))

    rng = np.random.default_rng(seed)
    x_med = float(np.median(xs))
    best = None
    history = []
    c_grid = np.concatenate([[0.02, 0.05, 0.1, 0.3, 0.6], rng.uniform(0.01, 1.0, max(0, n_starts - 5))])
    for c0 in c_grid[:n_starts]:
        la0 = float(np.median(log_rt + 2.0 * np.log(xs + c0)))
        p0 = np.array([la0, 0.0, c0])
        res = minimize(
            objective,
            p0,
            method="Nelder-Mead",
            bounds=[(-40.0, 60.0), (-10.0, 10.0), (1e-3, 3.0)],
            options={"xatol": 1e-12, "fatol": 1e-12, "maxiter": 4000},
        )
        res = minimize(
            objective,
            res.x,
            method="Nelder-Mead",
            bounds=[(-40.0, 60.0), (-10.0, 10.0), (1e-3, 3.0)],
            options={"xatol": 1e-13, "fatol": 1e-13, "maxiter": 4000},
        )
        if best is None or res.fun < best.fun:
            best = res
        history.append(float(best.fun))
    a = float(np.exp(best.x[0]))
    b = float(np.exp(best.x[1]))
    model = OrificeModel(a=a, b=b, c=float(best.x[2]), x_min=float(xs[0]), x_max=float(xs[-1]))
    info = {
        "objective": float(best.fun),
        "history": history,
        "r_test": np.asarray(r_test, dtype=float),
        "commands": xs,
    }
    return model, info


def build_nfc_lut(
    orifice: OrificeModel,
    pump: PumpPressureMap,
    flow_grid,
    pf_grid,
    x_max: float = 1.0,
    tol: float = 1e-10,
) -> NfcDirectionTable:
    """Invert the identified models on a (flow, back pressure) grid by
    monotone bisection. Unreachable cells are marked saturated and hold
    the full command; the zero-flow row stores the flow-onset command."""
    flow_grid = np.asarray(flow_grid, dtype=float)
    pf_grid = np.asarray(pf_grid, dtype=float)
    x_lo = max(orifice.x_min, float(pump.x[0]))
    nf, npf = len(flow_grid), len(pf_grid)
    cmd = np.empty((nf, npf))
    sat = np.zeros((nf, npf), dtype=bool)

    def q_of(x, pf):
        drive = float(pump(x)) - pf
        if drive <= 0:
            return 0.0
        return float(np.sqrt(drive / orifice.resistance(x)))

    for j, pf in enumerate(pf_grid):
        onset = max(x_lo, pump.onset_command(pf))
        for i, q_des in enumerate(flow_grid):
            if q_des <= 0.0:
                cmd[i, j] = onset
                sat[i, j] = onset >= x_max and q_of(x_max, pf) <= 0.0
                continue
            if q_of(x_max, pf) < q_des:
                cmd[i, j] = x_max
                sat[i, j] = True
                continue
            lo, hi = onset, x_max
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if q_of(mid, pf) < q_des:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < tol:
                    break
            cmd[i, j] = 0.5 * (lo + hi)
    return NfcDirectionTable(flow=flow_grid, pf=pf_grid, command=cmd, saturated=sat)


def default_nfc_grids(circuit_like, relief: float, q_max: float, n_flow: int = 25, n_pf: int = 21):
    flow = np.linspace(0.0, q_max, n_flow)
    pf = np.linspace(-0.5 * relief, 1.0 * relief, n_pf)
    return flow, pf


def calibrate_nfc(
    dataset: CalibrationDataset,
    relief_pressure: float,
    n_flow: int = 25,
    n_pf: int = 21,
) -> HydraulicFeedForward:
    """Full NFC pipeline: pump probe, per-joint per-direction orifice fits
    and table inversion."""
    machine = dataset.machine
    pump = probe_pump_map(dataset)
    ff = HydraulicFeedForward(kind=KIND_NFC, machine=machine.name)
    ff.identified = {
        "pump_map": {"x": pump.x.tolist(), "p": pump.p.tolist()},
        "orifices": {},
    }
    for joint in range(3):
        for direction, dname in ((EXTEND, "extend"), (RETRACT, "retract")):
            orifice, info = fit_orifice(dataset, pump, joint, direction)
            area = (
                machine.plunger_area_a[joint]
                if direction == EXTEND
                else machine.plunger_area_b[joint]
            )
            q_cap = np.sqrt(float(pump.p[-1]) / float(orifice.resistance(1.0)))
            flow_grid, pf_grid = default_nfc_grids(None, relief_pressure, 1.1 * q_cap, n_flow, n_pf)
            ff.nfc_tables[(joint, direction)] = build_nfc_lut(orifice, pump, flow_grid, pf_grid)
            ff.identified["orifices"][f"{JOINTS[joint]}_{dname}"] = {
                "a": orifice.a,
                "b": orifice.b,
                "c": orifice.c,
                "objective": info["objective"],
            }
    ff.provenance = provenance_stamp(dataset.fingerprint())
    return ff


# --------------------------------------------------------------------------
# MPC model identification
# --------------------------------------------------------------------------


def fit_step_response(
    log: GradingLog, joint: int, step_rate: float, onset: float = 0.0
) -> JointDynamicsFit:
    """Fit (K, zeta, omega_n, tau) of the second-order rate model to a
    commanded-rate step. The dead time is seeded by threshold crossing and
    refined jointly with the least-squares fit."""
    t = log["t"] - onset
    y = log.triplet("thetadot")[:, joint]
    sel = t >= 0.0
    t, y = t[sel], y[sel]
    if t[-1] < 3.0:
        raise FitDivergenceError("step log must cover at least 3 s of settling")
    tail = y[t >= t[-1] - 1.0]
    y_ss = float(np.mean(tail))
    if abs(y_ss) < 1e-6 or np.std(tail) > 0.2 * abs(y_ss):
        raise FitDivergenceError("response does not settle")
    crossings = np.where(np.abs(y) >= 0.02 * abs(y_ss))[0]
    tau0 = float(t[crossings[0]]) if crossings.size else 0.0

    def model(tt, K, zeta, omega, tau):
        return step_response(tt, K, zeta, omega, tau, u=step_rate)

    p0 = (max(abs(y_ss / step_rate), 1e-3), 1.0, 5.0, max(tau0 - 0.02, 0.0))
    bounds = ([1e-4, 0.05, 0.1, 0.0], [1e3, 10.0, 200.0, max(1.0, 2 * tau0 + 0.2)])
    try:
        popt, _ = curve_fit(model, t, y, p0=p0, bounds=bounds, maxfev=20000)
    except RuntimeError as exc:
        raise FitDivergenceError(f"step-response fit did not converge: {exc}") from exc
    K, zeta, omega, tau = (float(v) for v in popt)
    resid = float(np.sqrt(np.mean((model(t, *popt) - y) ** 2)))
    return JointDynamicsFit(K=K, zeta=zeta, omega_n=omega, tau=tau, fit_residual=resid)
