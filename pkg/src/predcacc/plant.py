"""Exact sampled propagation of the delayed first-order-lag vehicle model.

Between samples the (delayed) acceleration setpoint is held constant, so
the linear (q, v, a) dynamics are propagated exactly; there is no
integration error beyond floating point.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from predcacc.core import VehicleState
from predcacc.numerics import zoh_pair


@dataclass(frozen=True)
class PlantPropagator:
    """One-sample transition of (q, v, a) with held input u.

    ``coeffs[r]`` holds the coefficients of ``(q, v, a, u)`` for the new
    value of state ``r`` (0: q, 1: v, 2: a).
    """

    tau: float
    ts: float
    coeffs: tuple[tuple[float, float, float, float], ...]

    @property
    def decay(self) -> float:
        """``E = exp(-ts/tau)``."""
        return self.coeffs[2][2]

    def as_array(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=float)


def make_propagator(tau: float, ts: float) -> PlantPropagator:
    if not tau > 0:
        raise ValueError("tau must be positive")
    if not ts > 0:
        raise ValueError("ts must be positive")
    one_m_e = -math.expm1(-ts / tau)
    e = 1.0 - one_m_e
    cvu = ts - tau * one_m_e
    coeffs = (
        (1.0, ts, tau * cvu, 0.5 * ts * ts - tau * ts + tau * tau * one_m_e),
        (0.0, 1.0, tau * one_m_e, cvu),
        (0.0, 0.0, e, one_m_e),
    )
    return PlantPropagator(tau=tau, ts=ts, coeffs=coeffs)


def propagator_from_expm(tau: float, ts: float) -> np.ndarray:
    """Same 3x4 coefficient table via the augmented matrix exponential."""
    A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0 / tau]])
    B = np.array([[0.0], [0.0], [1.0 / tau]])
    Phi, Gamma = zoh_pair(A, B, ts)
    return np.hstack([Phi, Gamma])


def step_vehicle(p: PlantPropagator, s: VehicleState, u_delayed: float) -> VehicleState:
    cq, cv, ca = p.coeffs
    return VehicleState(
        q=s.q + cq[1] * s.v + cq[2] * s.a + cq[3] * u_delayed,
        v=s.v + cv[2] * s.a + cv[3] * u_delayed,
        a=ca[2] * s.a + ca[3] * u_delayed,
    )


class DelayBuffer:
    """FIFO realizing an actuation delay of ``depth`` samples."""

    def __init__(self, depth: int, fill: float = 0.0) -> None:
        if depth < 0:
            raise ValueError("depth must be nonnegative")
        self.depth = depth
        self.slots = deque([float(fill)] * depth, maxlen=depth or None)

    def push(self, u_now: float) -> float:
        """Enqueue ``u_now`` and return the value pushed ``depth`` samples ago."""
        if self.depth == 0:
            return u_now
        out = self.slots[0]
        self.slots.append(u_now)
        return out

    def __len__(self) -> int:
        return len(self.slots)


def delayed_input(buf: DelayBuffer, u_now: float) -> tuple[float, DelayBuffer]:
    return buf.push(u_now), buf
