"""Platoon simulation, continuous reference closed loops and response metrics."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from predcacc import _backend
from predcacc.controller import (
    Measurement,
    conventional_control,
    make_predictor_state,
    predictor_control,
    predictor_weights,
)
from predcacc.core import (
    ErrorState,
    GainSet,
    LeaderProfile,
    ScenarioConfig,
    ScenarioValidationError,
    Timing,
    VehicleParams,
    VehicleState,
    make_timing,
    validate_params,
)
from predcacc.numerics import NumericalError
from predcacc.plant import DelayBuffer, make_propagator, step_vehicle
from predcacc.stability import build_error_system, delay_free_matrix


def error_terms(q_lead, v_lead, q_ego, v_ego, a_ego, length, headway, gap):
    """``(x1, x2, x3)`` from raw states; the expression order is shared with
    the compiled loop."""
    x1 = (q_lead - q_ego - length) - headway * v_ego - gap
    x2 = v_lead - v_ego - headway * a_ego
    x3 = v_lead - v_ego
    return x1, x2, x3


def error_transform(lead: VehicleState, ego: VehicleState, params: VehicleParams) -> ErrorState:
    return ErrorState(*error_terms(lead.q, lead.v, ego.q, ego.v, ego.a,
                                   params.length, params.headway, params.standstill_gap))


class TimeSeriesLog:
    """Uniformly sampled trajectory record: a time vector plus named columns."""

    def __init__(self, t, columns: dict, dt: float) -> None:
        self.t = np.asarray(t, dtype=float)
        self.columns = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        self.dt = dt
        for name, col in self.columns.items():
            if col.shape != self.t.shape:
                raise ValueError(f"column {name!r} has length {col.shape}, expected {self.t.shape}")

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def followers(self) -> list[int]:
        return sorted(int(k[3:-3]) for k in self.columns if k.startswith("veh") and k.endswith("_x1"))

    def errors(self, i: int) -> np.ndarray:
        """(len, 3) array of follower ``i``'s error states."""
        return np.column_stack([self[f"veh{i}_x{j}"] for j in (1, 2, 3)])

    def decimated(self, every: int) -> TimeSeriesLog:
        if every == 1:
            return self
        return TimeSeriesLog(self.t[::every], {k: v[::every] for k, v in self.columns.items()},
                             self.dt * every)

    def to_csv(self, fh=None) -> str | None:
        """Write CSV (15 significant digits) to ``fh``, or return it as a string."""
        target = fh if fh is not None else io.StringIO()
        writer = csv.writer(target, lineterminator="\n")
        names = list(self.columns)
        writer.writerow(["t", *names])
        cols = [self.t, *(self.columns[n] for n in names)]
        for row in zip(*cols):
            writer.writerow([f"{x:.15g}" for x in row])
        return target.getvalue() if fh is None else None

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            self.to_csv(fh)

    @classmethod
    def read_csv(cls, path) -> TimeSeriesLog:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], np.array(rows[1:], dtype=float)
        t = data[:, 0]
        dt = float(t[1] - t[0]) if t.size > 1 else 0.0
        return cls(t, {name: data[:, j] for j, name in enumerate(header[1:], start=1)}, dt)


# -- platoon simulation -----------------------------------------------------


@dataclass
class PlatoonInputs:
    """Packed per-vehicle arrays consumed by ``_backend.platoon_loop``.

    Index 0 is the leader; its entries other than the initial state are unused.
    """

    ts: float
    n_steps: int
    a_leader: np.ndarray
    gap: np.ndarray
    tau: np.ndarray
    headway: np.ndarray
    length: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    kind: np.ndarray
    d: np.ndarray
    coeffs: np.ndarray
    alpha: np.ndarray
    horizon: np.ndarray
    beta: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    q0: np.ndarray
    v0: np.ndarray
    a0: np.ndarray


def leader_samples(profile: LeaderProfile, ts: float, n_steps: int) -> np.ndarray:
    """Leader acceleration held on each sample (ZOH)."""
    return np.array([profile.accel(k * ts) for k in range(n_steps + 1)])


def gap_schedule(cfg: ScenarioConfig) -> np.ndarray:
    N = cfg.n_steps
    gap = np.tile([p.standstill_gap for p in cfg.vehicles], (N + 1, 1))
    for ev in cfg.events:
        k0 = int(math.ceil(ev.t / cfg.ts - 1e-9))
        gap[k0:, ev.vehicle] = ev.standstill_gap
    return gap


def build_platoon_inputs(cfg: ScenarioConfig) -> PlatoonInputs:
    n = len(cfg.vehicles)
    ts = cfg.ts
    timings = [Timing(ts, 0)] + [cfg.timing(i) for i in range(1, n)]
    dmax = max(t.d for t in timings)
    coeffs = np.zeros((n, 3, 4))
    alpha = np.ones(n)
    horizon = np.zeros(n)
    beta, g1, g2 = (np.zeros((n, max(dmax, 1))) for _ in range(3))
    for i in range(1, n):
        coeffs[i] = make_propagator(cfg.vehicles[i].tau, ts).as_array()
        w = predictor_weights(cfg.vehicles[i].tau, timings[i])
        alpha[i], horizon[i] = w.alpha, w.horizon
        beta[i, : w.d], g1[i, : w.d], g2[i, : w.d] = w.beta, w.g1, w.g2
    gains = [GainSet(0.0, 0.0), *cfg.gains]
    gap = gap_schedule(cfg)
    q0 = np.zeros(n)
    for i in range(1, n):
        p = cfg.vehicles[i]
        q0[i] = q0[i - 1] - p.length - gap[0, i] - cfg.initial_errors[i - 1]
    return PlatoonInputs(
        ts=ts,
        n_steps=cfg.n_steps,
        a_leader=leader_samples(cfg.leader_profile, ts, cfg.n_steps),
        gap=gap,
        tau=np.array([p.tau for p in cfg.vehicles]),
        headway=np.array([p.headway for p in cfg.vehicles]),
        length=np.array([p.length for p in cfg.vehicles]),
        kp=np.array([g.kp for g in gains]),
        kd=np.array([g.kd for g in gains]),
        kind=np.array([0] + [0 if c == "predictor" else 1 for c in cfg.controllers], dtype=np.int_),
        d=np.array([t.d for t in timings], dtype=np.int_),
        coeffs=coeffs,
        alpha=alpha,
        horizon=horizon,
        beta=beta,
        g1=g1,
        g2=g2,
        q0=q0,
        v0=np.zeros(n),
        a0=np.zeros(n),
    )


def _platoon_log(raw: dict, ts: float, n: int) -> TimeSeriesLog:
    N = raw["q"].shape[0]
    cols = {}
    for i in range(n):
        cols[f"veh{i}_q"] = raw["q"][:, i]
        cols[f"veh{i}_v"] = raw["v"][:, i]
        cols[f"veh{i}_a"] = raw["a"][:, i]
        cols[f"veh{i}_u_cmd"] = raw["u_cmd"][:, i]
        cols[f"veh{i}_u_applied"] = raw["u_app"][:, i]
        if i > 0:
            for name in ("x1", "x2", "x3", "ahat", "ubar"):
                cols[f"veh{i}_{name}"] = raw[name][:, i]
    return TimeSeriesLog(np.arange(N) * ts, cols, ts)


def run_platoon_sim(cfg: ScenarioConfig, backend: str | None = None) -> TimeSeriesLog:
    """Simulate the platoon sample by sample.

    Each follower starts at rest with error state ``[e0, 0, 0]`` and empty
    (zero) input histories. ``backend`` selects ``"python"`` or
    ``"compiled"`` kernels; default is the import-time choice.
    """
    violations = validate_params(cfg)
    if violations:
        raise ScenarioValidationError(violations)
    loop = _backend.platoon_loop if backend is None else _backend.available()[backend].platoon_loop
    with np.errstate(over="ignore", invalid="ignore"):
        raw = loop(build_platoon_inputs(cfg))
    bad = ~np.all(np.isfinite(np.stack(list(raw.values()))), axis=(0, 2))
    if bad.any():
        k = int(np.argmax(bad))
        raise NumericalError(f"simulation overflow at t={k * cfg.ts:.6g} s (sample {k})")
    return _platoon_log(raw, cfg.ts, len(cfg.vehicles)).decimated(cfg.decimate)


def replay_follower(cfg: ScenarioConfig, i: int, log: TimeSeriesLog) -> TimeSeriesLog:
    """Re-run follower ``i`` alone against the predecessor samples in ``log``.

    Only the recorded predecessor signals are used, never its parameters.
    """
    p = cfg.vehicles[i]
    gains = cfg.gains[i - 1]
    timing = cfg.timing(i)
    prop = make_propagator(p.tau, cfg.ts)
    buf = DelayBuffer(timing.d)
    ps = make_predictor_state(gains, timing, p.tau, p.headway)
    predictor = cfg.controllers[i - 1] == "predictor"
    gap = gap_schedule(cfg)[:, i]
    pq, pv, pa = (log[f"veh{i - 1}_{c}"].tolist() for c in ("q", "v", "a"))
    ego = VehicleState(float(log[f"veh{i}_q"][0]), float(log[f"veh{i}_v"][0]), float(log[f"veh{i}_a"][0]))
    names = ("q", "v", "a", "u_cmd", "u_applied", "x1", "x2", "x3", "ahat", "ubar")
    rows = {name: [] for name in names}
    for k in range(len(log)):
        x1, x2, x3 = error_terms(pq[k], pv[k], ego.q, ego.v, ego.a, p.length, p.headway, gap[k])
        m = Measurement(x1=x1, x2=x2, a_self=ego.a, a_lead=pa[k])
        if predictor:
            u, _ = predictor_control(ps, m)
            ahat, ubar = ps.last_ahat, ps.last_ubar
        else:
            u = conventional_control(gains, p.tau, p.headway, m)
            ahat, ubar = ego.a, -(gains.kp * x1 + gains.kd * x2)
        ua = buf.push(u)
        for name, val in zip(names, (ego.q, ego.v, ego.a, u, ua, x1, x2, x3, ahat, ubar)):
            rows[name].append(val)
        ego = step_vehicle(prop, ego, ua)
    return TimeSeriesLog(log.t, {f"veh{i}_{k}": v for k, v in rows.items()}, log.dt)


# -- continuous reference closed loops ---------------------------------------


def _check_fine_step(phi: float, ts_fine: float) -> int:
    if not ts_fine > 0:
        raise ValueError("ts_fine must be positive")
    try:
        return make_timing(phi, ts_fine).d
    except ValueError:
        raise ValueError(f"phi={phi} is not an integer multiple of ts_fine={ts_fine}") from None


def run_reference_closed_loop(
    kind: str,
    params: VehicleParams,
    gains: GainSet,
    e0: float,
    profile: LeaderProfile | None = None,
    ts_fine: float = 1e-3,
    duration: float = 20.0,
    log_every: int = 1,
) -> TimeSeriesLog:
    """Fixed-step RK4 simulation of a continuous closed loop of follower 1.

    ``kind="predicted"``: the delay-compensated loop
    ``xdot = A x + [0; a(t) - a(t-phi); a(t)]`` with ``A`` the delay-free
    pole placement. ``kind="delayed"``: the conventional law under the
    actuation delay, a delay-differential equation with zero pre-history;
    the delayed state is taken from a history buffer at ``ts_fine`` with
    cubic Hermite interpolation at RK4 half steps.
    """
    profile = profile or LeaderProfile()
    D = _check_fine_step(params.phi, ts_fine)
    h = params.headway
    N = int(round(duration / ts_fine))
    dt = ts_fine
    X = np.zeros((N + 1, 3))
    X[0] = (e0, 0.0, 0.0)

    # forcing g(t) = [0, a(t) - a(t - phi), a(t)] at the RK4 stage times
    def forcing(times):
        a = np.array([profile.accel(t) for t in times])
        ad = np.array([profile.accel(t - params.phi) for t in times])
        return np.column_stack([np.zeros_like(a), a - ad, a])

    grid = np.arange(N + 1) * dt
    g_knot = forcing(grid)
    g_mid = forcing(grid[:-1] + 0.5 * dt)

    if kind == "predicted":
        A = delay_free_matrix(gains.kp, gains.kd, h)
        A1 = None
    elif kind == "delayed":
        es = build_error_system(params.tau, h, gains.kp, gains.kd)
        # without delay the delayed state is the stage state itself
        A, A1 = (es.A0 + es.A1, None) if D == 0 else (es.A0, es.A1)
    else:
        raise ValueError(f"unknown reference kind {kind!r}")

    # One classical RK4 step of xdot = A x + u(t), expanded in closed form:
    # x+ = P x + Q1 u1 + Q23 u_mid + Q4 u4 (the two midpoint stages share u).
    I = np.eye(3)
    hA = dt * A
    hA2 = hA @ hA
    P = I + hA + hA2 / 2 + hA2 @ hA / 6 + hA2 @ hA2 / 24
    Q1 = dt / 6 * (I + hA + hA2 / 2 + hA2 @ hA / 4)
    Q23 = dt / 6 * (4 * I + 2 * hA + hA2 / 2)
    Q4 = dt / 6 * I

    if A1 is None:
        c = g_knot[:-1] @ Q1.T + g_mid @ Q23.T + g_knot[1:] @ Q4.T
        for k in range(N):
            X[k + 1] = P @ X[k] + c[k]
    else:
        # Delayed state from the history: knots exactly, half steps by cubic
        # Hermite interpolation using the stored derivatives F. Within a block
        # of D steps every delayed term refers to samples before the block,
        # so only x+ = P x + c is sequential.
        F = np.zeros((N + 1, 3))
        c_g = g_knot[:-1] @ Q1.T + g_mid @ Q23.T + g_knot[1:] @ Q4.T
        M1, M23, M4 = Q1 @ A1, Q23 @ A1, Q4 @ A1

        def hist(j):
            return np.where((j >= 0)[:, None], X[np.maximum(j, 0)], 0.0)

        for k0 in range(0, N, D):
            ks = np.arange(k0, min(k0 + D, N))
            js = ks - D
            xd0, xd1 = hist(js), hist(js + 1)
            F[k0] = A @ X[k0] + A1 @ xd0[0] + g_knot[k0]
            jm = np.maximum(js, 0)
            xdm = 0.5 * (X[jm] + X[jm + 1]) + dt / 8.0 * (F[jm] - F[jm + 1])
            xdm[js < 0] = 0.0
            c = c_g[ks] + xd0 @ M1.T + xdm @ M23.T + xd1 @ M4.T
            for k, ck in zip(ks, c):
                X[k + 1] = P @ X[k] + ck
            F[ks[1:]] = X[ks[1:]] @ A.T + xd0[1:] @ A1.T + g_knot[ks[1:]]

    cols = {
        "veh1_x1": X[:, 0],
        "veh1_x2": X[:, 1],
        "veh1_x3": X[:, 2],
        "veh1_a": (X[:, 2] - X[:, 1]) / h,
    }
    return TimeSeriesLog(np.arange(N + 1) * ts_fine, cols, ts_fine).decimated(log_every)


# -- metrics ------------------------------------------------------------------


def response_metrics(log: TimeSeriesLog) -> dict:
    """Per-follower peak/settling figures.

    ``settling_time_x1`` is the first time after which ``|x1|`` stays within
    2 % of its peak (None if it never does within the log).
    """
    if len(log) == 0:
        raise ValueError("empty log")
    out = {}
    for i in log.followers():
        x1 = np.abs(log[f"veh{i}_x1"])
        x3 = np.abs(log[f"veh{i}_x3"])
        k3 = int(np.argmax(x3))
        peak1 = float(x1.max())
        if peak1 == 0.0:
            settle = 0.0
        else:
            outside = np.nonzero(x1 > 0.02 * peak1)[0]
            last = int(outside[-1])
            settle = float(log.t[last + 1]) if last + 1 < len(log) else None
        ucol = f"veh{i}_u_cmd"
        out[f"veh{i}"] = {
            "peak_abs_x1": peak1,
            "peak_abs_x3": float(x3[k3]),
            "time_peak_abs_x3": float(log.t[k3]),
            "settling_time_x1": settle,
            "max_abs_u": float(np.abs(log[ucol]).max()) if ucol in log else None,
        }
    return out


# -- canned scenarios ---------------------------------------------------------

EXPERIMENT_TAU = 0.067
EXPERIMENT_PHI = 0.15
EXPERIMENT_HEADWAY = 0.5
EXPERIMENT_KP = 0.2


def experiment_vehicle() -> VehicleParams:
    return VehicleParams(tau=EXPERIMENT_TAU, phi=EXPERIMENT_PHI, headway=EXPERIMENT_HEADWAY)


def experiment_gains(tau: float = EXPERIMENT_TAU, kp: float = EXPERIMENT_KP) -> GainSet:
    """Gains of the experiment: ``kd = 0.7 - kp*tau``."""
    return GainSet(kp=kp, kd=0.7 - kp * tau)


def experiment_scenario(e0: float = 1.0, controller: str = "predictor", duration: float = 20.0,
                   ts: float = 0.01, phi: float = EXPERIMENT_PHI) -> ScenarioConfig:
    lead = VehicleParams(tau=EXPERIMENT_TAU, phi=0.0, headway=EXPERIMENT_HEADWAY)
    follower = replace(experiment_vehicle(), phi=phi)
    return ScenarioConfig(
        ts=ts,
        duration=duration,
        vehicles=(lead, follower),
        gains=(experiment_gains(),),
        controllers=(controller,),
        initial_errors=(e0,),
    )


def heterogeneous_scenario(
    taus=(0.067, 0.1, 0.3),
    phis=(0.15, 0.2, 0.1),
    headway: float = EXPERIMENT_HEADWAY,
    ts: float = 0.01,
    profile: LeaderProfile | None = None,
    settle_time: float = 20.0,
    initial_errors=None,
) -> ScenarioConfig:
    if len(taus) != len(phis) or len(taus) < 2:
        raise ValueError("need matching tau/phi sequences for at least 2 followers")
    profile = profile or LeaderProfile(
        "trapezoid", {"amplitude": 1.0, "t_start": 1.0, "t_rise": 1.0, "t_hold": 2.0, "t_fall": 1.0}
    )
    lead = VehicleParams(tau=taus[0], phi=0.0, headway=headway)
    followers = tuple(VehicleParams(tau=t, phi=p, headway=headway) for t, p in zip(taus, phis))
    nf = len(followers)
    return ScenarioConfig(
        ts=ts,
        duration=profile.end_time + settle_time + 1.0,
        vehicles=(lead, *followers),
        gains=tuple(experiment_gains(tau=t) for t in taus),
        controllers=("predictor",) * nf,
        initial_errors=tuple(initial_errors) if initial_errors is not None else (0.0,) * nf,
        leader_profile=profile,
    )


def heterogeneous_string_demo(cfg: ScenarioConfig | None = None, **kwargs):
    """Run a heterogeneous string under a leader maneuver; returns
    ``(log, metrics)``."""
    cfg = cfg or heterogeneous_scenario(**kwargs)
    if len(cfg.vehicles) < 3:
        raise ValueError("the string demo needs at least 3 vehicles")
    log = run_platoon_sim(cfg)
    return log, response_metrics(log)
