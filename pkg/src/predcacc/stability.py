"""Lifted closed-loop analysis of one follower under the discrete predictor.

State ordering of the lifted closed loop::

    x_cl = [x1, x2, x3, u(k-d), ..., u(k-1), ubar(k-d), ..., ubar(k-1)]

``x_cl(k+1) = Acl x_cl(k) + Bcl w_cl(k)`` with ``w_cl = [w(k); a_lead(k)]``
and, for a predecessor acceleration held over each sample,
``w(k) = Gamma_w a_lead(k)``.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from predcacc.controller import predictor_weights
from predcacc.core import GainSet, Timing, make_timing
from predcacc.numerics import NumericalError, eigenvalues, zoh_pair

STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class LoopParams:
    """Everything the closed loop of one follower depends on."""

    tau: float
    phi: float
    headway: float
    kp: float
    kd: float
    ts: float

    @property
    def gains(self) -> GainSet:
        return GainSet(self.kp, self.kd)

    @property
    def timing(self) -> Timing:
        return make_timing(self.phi, self.ts)


def experiment_params(kp: float = 0.2, ts: float = 0.01) -> LoopParams:
    """The experiment's vehicle and gains, with ``kd = 0.7 - kp*tau``."""
    tau = 0.067
    return LoopParams(tau=tau, phi=0.15, headway=0.5, kp=kp, kd=0.7 - kp * tau, ts=ts)


@dataclass(frozen=True)
class ErrorSystem:
    A0: np.ndarray
    A1: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    tau: float
    headway: float
    kp: float
    kd: float


def build_error_system(tau: float, h: float, kp: float, kd: float) -> ErrorSystem:
    """Continuous error dynamics ``xdot = A0 x + A1 x(t-phi) + ...`` (delayed
    conventional loop) and ``xdot = A0 x + B1 u(t-phi) + B2 a_lead``."""
    if not tau > 0 or not h > 0:
        raise ValueError("tau and h must be positive")
    c = (tau - h) / (tau * h)
    A0 = np.array([[0.0, 1.0, 0.0], [0.0, c, -c], [0.0, 1.0 / h, -1.0 / h]])
    A1 = np.array([[0.0, 0.0, 0.0], [-kp, -c - kd, c], [0.0, 0.0, 0.0]])
    B1 = np.array([[0.0], [-h / tau], [0.0]])
    B2 = np.array([[0.0], [1.0], [1.0]])
    return ErrorSystem(A0, A1, B1, B2, tau, h, kp, kd)


def delay_free_matrix(kp: float, kd: float, h: float) -> np.ndarray:
    """Closed loop of the conventional law without delay (also the predicted
    loop once the delay is compensated)."""
    return np.array([[0.0, 1.0, 0.0], [-kp, -kd, 0.0], [0.0, 1.0 / h, -1.0 / h]])


def discretize(es: ErrorSystem, ts: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Phi, Gamma = zoh_pair(es.A0, es.B1, ts)
    _, Gamma_w = zoh_pair(es.A0, es.B2, ts)
    return Phi, Gamma, Gamma_w


@dataclass(frozen=True)
class ControllerMatrices:
    Cx: np.ndarray  # (3+d,)
    Cz: np.ndarray  # (d,)
    Ca: float
    Ax: np.ndarray  # (d, 3+d)
    Az: np.ndarray  # (d, d)
    Ba: np.ndarray  # (d,)


def assemble_controller_matrices(tau: float, h: float, gains: GainSet, timing: Timing) -> ControllerMatrices:
    """Linear form ``u = Cx xbar + Cz z + Ca a_lead``,
    ``z+ = Ax xbar + Az z + Ba a_lead`` of the discrete predictor.

    The ego acceleration is eliminated with ``a = (x3 - x2)/h``.
    """
    d = timing.d
    w = predictor_weights(tau, timing)
    K = np.array([gains.kp, gains.kd])
    M = np.array([[1.0, w.horizon], [0.0, 1.0]])
    KM = K @ M
    ratio = tau / h
    Kg = np.array([gains.kp * w.g1[j] + gains.kd * w.g2[j] for j in range(d)])

    Cx = np.zeros(3 + d)
    Cx[:3] = (1.0 - ratio) * w.alpha * np.array([0.0, -1.0 / h, 1.0 / h])
    Cx[:2] += ratio * KM
    Cz = np.zeros(d)
    Ax = np.zeros((d, 3 + d))
    Az = np.eye(d, k=1)
    for j in range(1, d + 1):
        # slot of u(k-j) in xbar and of ubar(k-j) in z
        Cx[3 + d - j] = (1.0 - ratio) * w.beta[j - 1]
        Cz[d - j] = ratio * Kg[j - 1]
        Az[d - 1, d - j] = -Kg[j - 1]
    if d:
        Ax[d - 1, :2] = -KM
    return ControllerMatrices(Cx=Cx, Cz=Cz, Ca=ratio, Ax=Ax, Az=Az, Ba=np.zeros(d))


@dataclass(frozen=True)
class LiftedSystem:
    Phi: np.ndarray
    Gamma: np.ndarray
    Gamma_w: np.ndarray
    Abar: np.ndarray
    Bbar1: np.ndarray
    Bbar2: np.ndarray
    ctrl: ControllerMatrices
    Acl: np.ndarray
    Bcl: np.ndarray
    d: int

    @property
    def dim(self) -> int:
        return self.Acl.shape[0]


def lift_plant(Phi: np.ndarray, Gamma: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(Abar, Bbar1, Bbar2)`` of ``xbar = [x, u(k-d), ..., u(k-1)]``.

    For ``d = 0`` the current input acts directly, so ``Bbar1 = Gamma``.
    """
    n = 3 + d
    Abar = np.zeros((n, n))
    Abar[:3, :3] = Phi
    Bbar1 = np.zeros((n, 1))
    if d:
        Abar[:3, 3] = Gamma[:, 0]
        Abar[3:, 3:] = np.eye(d, k=1)
        Bbar1[-1, 0] = 1.0
    else:
        Bbar1[:, 0] = Gamma[:, 0]
    Bbar2 = np.zeros((n, 3))
    Bbar2[:3, :3] = np.eye(3)
    return Abar, Bbar1, Bbar2


def closed_loop_matrix(Abar, Bbar1, Bbar2, ctrl: ControllerMatrices) -> tuple[np.ndarray, np.ndarray]:
    """``(Acl, Bcl)`` of the lifted closed loop."""
    n = Abar.shape[0]
    d = ctrl.Az.shape[0]
    if Bbar1.shape != (n, 1) or ctrl.Cx.shape != (n,) or ctrl.Ax.shape != (d, n):
        raise ValueError("inconsistent lifted dimensions")
    Acl = np.zeros((n + d, n + d))
    Acl[:n, :n] = Abar + Bbar1 @ ctrl.Cx[None, :]
    Acl[:n, n:] = Bbar1 @ ctrl.Cz[None, :]
    Acl[n:, :n] = ctrl.Ax
    Acl[n:, n:] = ctrl.Az
    Bcl = np.zeros((n + d, 4))
    Bcl[:n, :3] = Bbar2
    Bcl[:n, 3] = Bbar1[:, 0] * ctrl.Ca
    Bcl[n:, 3] = ctrl.Ba
    return Acl, Bcl


def assemble_conventional_matrices(tau: float, h: float, gains: GainSet, timing: Timing) -> ControllerMatrices:
    """Linear form of the conventional law sampled under the same delay
    (no prediction, so the ``z`` chain is empty)."""
    ratio = tau / h
    Cx = np.zeros(3 + timing.d)
    Cx[:3] = (1.0 - ratio) * np.array([0.0, -1.0 / h, 1.0 / h])
    Cx[:2] += ratio * np.array([gains.kp, gains.kd])
    return ControllerMatrices(Cx=Cx, Cz=np.zeros(0), Ca=ratio, Ax=np.zeros((0, 3 + timing.d)),
                              Az=np.zeros((0, 0)), Ba=np.zeros(0))


def build_lifted_system(p: LoopParams, controller: str = "predictor") -> LiftedSystem:
    timing = p.timing
    es = build_error_system(p.tau, p.headway, p.kp, p.kd)
    Phi, Gamma, Gamma_w = discretize(es, p.ts)
    Abar, Bbar1, Bbar2 = lift_plant(Phi, Gamma, timing.d)
    if controller == "predictor":
        ctrl = assemble_controller_matrices(p.tau, p.headway, p.gains, timing)
    elif controller == "conventional":
        ctrl = assemble_conventional_matrices(p.tau, p.headway, p.gains, timing)
    else:
        raise ValueError(f"unknown controller {controller!r}")
    Acl, Bcl = closed_loop_matrix(Abar, Bbar1, Bbar2, ctrl)
    return LiftedSystem(Phi, Gamma, Gamma_w, Abar, Bbar1, Bbar2, ctrl, Acl, Bcl, timing.d)


def simulate_lifted(ls: LiftedSystem, x0, a_lead) -> np.ndarray:
    """Iterate the lifted loop from error state ``x0`` with zero histories.

    ``a_lead[k]`` is the predecessor acceleration held on sample ``k``.
    Returns the (len(a_lead), 3) array of sampled error states.
    """
    a_lead = np.asarray(a_lead, dtype=float)
    xcl = np.zeros(ls.dim)
    xcl[:3] = x0
    out = np.empty((a_lead.size, 3))
    gw = ls.Gamma_w[:, 0]
    wcl = np.zeros(4)
    for k, ak in enumerate(a_lead):
        out[k] = xcl[:3]
        wcl[:3] = gw * ak
        wcl[3] = ak
        xcl = ls.Acl @ xcl + ls.Bcl @ wcl
    return out


def stability_report(p: LoopParams, controller: str = "predictor") -> dict:
    """Unit-disk test of the lifted closed loop.

    ``verdict`` is ``"marginal"`` when the spectral radius lies within
    ``STABILITY_MARGIN`` of 1; only ``"stable"`` sets ``stable``.
    """
    ls = build_lifted_system(p, controller)
    ev = eigenvalues(ls.Acl)
    order = np.lexsort((ev.imag, ev.real, -np.abs(ev)))
    ev = ev[order]
    rho = float(np.abs(ev[0])) if ev.size else 0.0
    if rho < 1.0 - STABILITY_MARGIN:
        verdict = "stable"
    elif rho <= 1.0 + STABILITY_MARGIN:
        verdict = "marginal"
    else:
        verdict = "unstable"
    return {
        "spectral_radius": rho,
        "stable": verdict == "stable",
        "verdict": verdict,
        "eigenvalues": [[float(z.real), float(z.imag)] for z in ev],
        "dimension": ls.dim,
        "d": ls.d,
        "controller": controller,
        "params": asdict(p),
    }


SCAN_AXES = ("kp", "kd", "tau", "phi", "headway", "ts")


def _scan_point(base: LoopParams, names, values) -> dict:
    row = dict(zip(names, values))
    try:
        p = LoopParams(**{**asdict(base), **row})
        rep = stability_report(p)
    except NumericalError as exc:
        return {**row, "spectral_radius": float("nan"), "stable": False, "status": f"numerical failure: {exc}"}
    except ValueError as exc:
        return {**row, "spectral_radius": float("nan"), "stable": False, "status": f"invalid: {exc}"}
    return {**row, "spectral_radius": rep["spectral_radius"], "stable": rep["stable"], "status": rep["verdict"]}


def gain_scan(base: LoopParams, axes: dict, workers: int = 1) -> list[dict]:
    """Stability map over the Cartesian product of ``axes`` (name -> values).

    Rows come back in grid-index order (last axis fastest) regardless of
    ``workers``. Per-point failures are recorded in ``status``.
    """
    names = tuple(axes)
    for name in names:
        if name not in SCAN_AXES:
            raise ValueError(f"unknown scan axis {name!r}; choose from {SCAN_AXES}")
    points = list(itertools.product(*(list(axes[n]) for n in names)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda v: _scan_point(base, names, v), points))
    return [_scan_point(base, names, v) for v in points]
