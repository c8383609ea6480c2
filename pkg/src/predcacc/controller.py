"""Discrete predictor-feedback CACC law and the conventional delay-free law.

History convention (fixed project-wide): index ``j = 1`` is the most recent
past sample, so ``u_hist[0]`` is ``u(k - 1)`` and ``u_hist[d - 1]`` is
``u(k - d)``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from predcacc.core import GainSet, Timing


@dataclass(frozen=True)
class PredictorWeights:
    """Frozen prediction weights for one ``(tau, ts, d)``.

    ``alpha = exp(-d ts / tau)``; ``beta[j-1]`` weighs ``u(k-j)`` in the
    acceleration prediction; ``g1[j-1]``, ``g2[j-1]`` weigh ``ubar(k-j)`` in
    the (x1, x2) prediction.
    """

    d: int
    horizon: float
    alpha: float
    beta: tuple[float, ...]
    g1: tuple[float, ...]
    g2: tuple[float, ...]


def predictor_weights(tau: float, timing: Timing) -> PredictorWeights:
    ts, d = timing.ts, timing.d
    x = ts / tau
    one_m_e = -math.expm1(-x)
    beta = tuple(math.exp(-(j - 1) * x) * one_m_e for j in range(1, d + 1))
    g1 = tuple((0.5 + (j - 1)) * ts * ts for j in range(1, d + 1))
    return PredictorWeights(
        d=d,
        horizon=d * ts,
        alpha=math.exp(-d * x),
        beta=beta,
        g1=g1,
        g2=(ts,) * d,
    )


@dataclass(frozen=True)
class Measurement:
    x1: float
    x2: float
    a_self: float
    a_lead: float


@dataclass
class PredictorState:
    """Controller memory of one follower: gains, timing and input histories."""

    gains: GainSet
    timing: Timing
    tau: float
    headway: float
    weights: PredictorWeights
    u_hist: deque = field(repr=False)
    ubar_hist: deque = field(repr=False)
    # diagnostics of the most recent step
    last_ahat: float = 0.0
    last_ubar: float = 0.0


def make_predictor_state(
    gains: GainSet,
    timing: Timing,
    tau: float,
    headway: float,
    u_init: float = 0.0,
    ubar_init: float = 0.0,
) -> PredictorState:
    d = timing.d
    return PredictorState(
        gains=gains,
        timing=timing,
        tau=tau,
        headway=headway,
        weights=predictor_weights(tau, timing),
        u_hist=deque([float(u_init)] * d, maxlen=d),
        ubar_hist=deque([float(ubar_init)] * d, maxlen=d),
    )


def predict_acceleration(ps: PredictorState, a_self: float) -> float:
    """Ego acceleration ``d`` samples ahead from the stored inputs."""
    w = ps.weights
    acc = w.alpha * a_self
    for bj, uj in zip(w.beta, ps.u_hist):
        acc += bj * uj
    return acc


def predict_error_state(ps: PredictorState, x1: float, x2: float) -> tuple[float, float]:
    w = ps.weights
    x1h = x1 + w.horizon * x2
    x2h = x2
    for g1, g2, ub in zip(w.g1, w.g2, ps.ubar_hist):
        x1h += g1 * ub
        x2h += g2 * ub
    return x1h, x2h


def predictor_control(ps: PredictorState, m: Measurement) -> tuple[float, PredictorState]:
    """One controller sample. Updates the histories *after* computing ``u``:
    ``ubar(k)`` only enters the prediction from sample ``k + 1`` on."""
    kp, kd = ps.gains.kp, ps.gains.kd
    ratio = ps.tau / ps.headway
    x1h, x2h = predict_error_state(ps, m.x1, m.x2)
    ubar = -(kp * x1h + kd * x2h)
    ahat = predict_acceleration(ps, m.a_self)
    u = (1.0 - ratio) * ahat + ratio * m.a_lead - ratio * ubar
    if ps.timing.d:
        ps.u_hist.appendleft(u)
        ps.ubar_hist.appendleft(ubar)
    ps.last_ahat = ahat
    ps.last_ubar = ubar
    return u, ps


def conventional_control(gains: GainSet, tau: float, headway: float, m: Measurement) -> float:
    ratio = tau / headway
    return ratio * m.a_lead + (1.0 - ratio) * m.a_self + ratio * (gains.kp * m.x1 + gains.kd * m.x2)
