"""Domain types, parameter validation and scenario documents.

Scenario documents are JSON objects with a versioned schema. Unknown and
duplicate keys are rejected so that a misspelled physics parameter can never
be silently ignored.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

SCHEMA_VERSION = 1
CONTROLLER_KINDS = ("predictor", "conventional")
PROFILE_KINDS = ("standstill", "step", "trapezoid", "sine")

# Arbitrary: both cancel out of the error dynamics.
DEFAULT_STANDSTILL_GAP = 2.0
DEFAULT_LENGTH = 4.0

# Placeholders for vehicle 0, which tracks the leader profile exactly.
_LEADER_DEFAULTS = {"tau": 0.1, "phi": 0.0, "headway": 1.0}

_DELAY_RTOL = 1e-12


class ScenarioError(ValueError):
    """Base class for scenario loading failures."""


class ScenarioParseError(ScenarioError):
    """The document is malformed (syntax, types, unknown or duplicate keys)."""

    def __init__(self, message: str, location: str = "") -> None:
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class ScenarioValidationError(ScenarioError):
    """The document parsed but violates parameter invariants."""

    def __init__(self, violations: list[str]) -> None:
        self.violations = list(violations)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants and spacing policy of one vehicle (SI units)."""

    tau: float
    phi: float
    length: float = DEFAULT_LENGTH
    headway: float = 0.5
    standstill_gap: float = DEFAULT_STANDSTILL_GAP


@dataclass(frozen=True)
class GainSet:
    kp: float
    kd: float


@dataclass(frozen=True)
class Timing:
    """Controller sampling time and actuation delay expressed in samples."""

    ts: float
    d: int

    @property
    def delay(self) -> float:
        return self.d * self.ts


@dataclass(frozen=True)
class VehicleState:
    q: float = 0.0
    v: float = 0.0
    a: float = 0.0


@dataclass(frozen=True)
class ErrorState:
    x1: float
    x2: float
    x3: float


@dataclass(frozen=True)
class LeaderProfile:
    """Named leader acceleration profile.

    ``params`` depends on ``kind``:

    * ``standstill``: none.
    * ``step``: ``amplitude`` (m/s^2), ``t_start``, optional ``t_end`` (s).
    * ``trapezoid``: ``amplitude``, ``t_start``, ``t_rise``, ``t_hold``,
      ``t_fall`` (s). Acceleration ramps 0 -> amplitude -> 0.
    * ``sine``: ``amplitude``, ``frequency`` (Hz), ``t_start``, optional
      ``t_end`` and ``phase`` (rad).
    """

    kind: str = "standstill"
    params: dict = field(default_factory=dict)

    def accel(self, t: float) -> float:
        p = self.params
        if t < 0.0 or self.kind == "standstill":
            return 0.0
        if self.kind == "step":
            if p.get("t_start", 0.0) <= t < p.get("t_end", math.inf):
                return float(p["amplitude"])
            return 0.0
        if self.kind == "trapezoid":
            amp = float(p["amplitude"])
            s = t - p.get("t_start", 0.0)
            rise, hold, fall = p["t_rise"], p["t_hold"], p["t_fall"]
            if s < 0.0:
                return 0.0
            if s < rise:
                return amp * s / rise
            s -= rise
            if s < hold:
                return amp
            s -= hold
            if s < fall:
                return amp * (1.0 - s / fall)
            return 0.0
        if self.kind == "sine":
            t0 = p.get("t_start", 0.0)
            if t0 <= t < p.get("t_end", math.inf):
                arg = 2.0 * math.pi * p["frequency"] * (t - t0) + p.get("phase", 0.0)
                return float(p["amplitude"]) * math.sin(arg)
            return 0.0
        raise ValueError(f"unknown leader profile kind {self.kind!r}")

    @property
    def end_time(self) -> float:
        """Time after which the profile is identically zero (inf if never)."""
        p = self.params
        if self.kind == "standstill":
            return 0.0
        if self.kind == "trapezoid":
            return p.get("t_start", 0.0) + p["t_rise"] + p["t_hold"] + p["t_fall"]
        return p.get("t_end", math.inf)


_PROFILE_PARAMS = {
    "standstill": ((), ()),
    "step": (("amplitude",), ("t_start", "t_end")),
    "trapezoid": (("amplitude", "t_rise", "t_hold", "t_fall"), ("t_start",)),
    "sine": (("amplitude", "frequency"), ("t_start", "t_end", "phase")),
}


@dataclass(frozen=True)
class GapEvent:
    """Change of a follower's standstill gap ``r`` at time ``t``."""

    t: float
    vehicle: int
    standstill_gap: float


@dataclass(frozen=True)
class ScenarioConfig:
    """Declarative platoon experiment. Index 0 of ``vehicles`` is the leader.

    ``gains``, ``controllers`` and ``initial_errors`` have one entry per
    follower (``len(vehicles) - 1``).
    """

    ts: float
    duration: float
    vehicles: tuple[VehicleParams, ...]
    gains: tuple[GainSet, ...]
    controllers: tuple[str, ...]
    initial_errors: tuple[float, ...]
    leader_profile: LeaderProfile = field(default_factory=LeaderProfile)
    events: tuple[GapEvent, ...] = ()
    decimate: int = 1

    @property
    def n_followers(self) -> int:
        return len(self.vehicles) - 1

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.ts))

    def timing(self, i: int) -> Timing:
        """Timing of follower ``i`` (1-based vehicle index)."""
        return make_timing(self.vehicles[i].phi, self.ts)

    def with_controllers(self, kind: str) -> ScenarioConfig:
        from dataclasses import replace

        return replace(self, controllers=(kind,) * self.n_followers)


def delay_samples(phi: float, ts: float) -> int | None:
    """Return ``d`` with ``d*ts == phi`` (to 1e-12 relative), else None."""
    d = int(round(phi / ts))
    if d < 0 or abs(d * ts - phi) > _DELAY_RTOL * max(phi, ts):
        return None
    return d


def make_timing(phi: float, ts: float) -> Timing:
    if not ts > 0:
        raise ValueError("ts must be positive")
    d = delay_samples(phi, ts)
    if d is None:
        raise ValueError(f"phi={phi!r} is not an integer multiple of ts={ts!r}")
    return Timing(ts=ts, d=d)


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def vehicle_violations(p: VehicleParams, ts: float | None, where: str) -> list[str]:
    out = []
    for name in ("tau", "phi", "length", "headway", "standstill_gap"):
        if not _finite(getattr(p, name)):
            out.append(f"{where}: {name} must be a finite number")
    if out:
        return out
    if not p.tau > 0:
        out.append(f"{where}: tau must be positive")
    if p.phi < 0:
        out.append(f"{where}: phi must be nonnegative")
    if not p.headway > 0:
        out.append(f"{where}: headway must be positive")
    if p.standstill_gap < 0:
        out.append(f"{where}: standstill_gap must be nonnegative")
    if p.length < 0:
        out.append(f"{where}: length must be nonnegative")
    if ts is not None and ts > 0 and p.phi >= 0 and delay_samples(p.phi, ts) is None:
        out.append(f"{where}: phi not an integer multiple of ts (phi={p.phi}, ts={ts})")
    return out


def validate_params(cfg: ScenarioConfig) -> list[str]:
    """Return every violated invariant of ``cfg`` (empty list when valid)."""
    out: list[str] = []
    ts_ok = _finite(cfg.ts) and cfg.ts > 0
    if not ts_ok:
        out.append("ts must be positive")
    if not (_finite(cfg.duration) and cfg.duration > 0):
        out.append("duration must be positive")
    if len(cfg.vehicles) < 2:
        out.append("at least 2 vehicles are required (leader and one follower)")
    nf = max(len(cfg.vehicles) - 1, 0)
    for name in ("gains", "controllers", "initial_errors"):
        if len(getattr(cfg, name)) != nf:
            out.append(f"{name} must have one entry per follower ({nf})")
    for i, p in enumerate(cfg.vehicles):
        # the leader's delay is never used, so only followers need d*ts == phi
        out += vehicle_violations(p, cfg.ts if ts_ok and i > 0 else None, f"vehicle {i}")
    for i, g in enumerate(cfg.gains, start=1):
        if not (_finite(g.kp) and g.kp > 0):
            out.append(f"vehicle {i}: kp must be positive")
        if not (_finite(g.kd) and g.kd > 0):
            out.append(f"vehicle {i}: kd must be positive")
    for i, kind in enumerate(cfg.controllers, start=1):
        if kind not in CONTROLLER_KINDS:
            out.append(f"vehicle {i}: controller must be one of {CONTROLLER_KINDS}")
    for i, e0 in enumerate(cfg.initial_errors, start=1):
        if not _finite(e0):
            out.append(f"vehicle {i}: initial_error must be finite")
    out += _profile_violations(cfg.leader_profile)
    for n, ev in enumerate(cfg.events):
        if not 1 <= ev.vehicle <= nf:
            out.append(f"events[{n}]: vehicle must be a follower index in 1..{nf}")
        if not (_finite(ev.t) and ev.t >= 0):
            out.append(f"events[{n}]: t must be nonnegative")
        if not (_finite(ev.standstill_gap) and ev.standstill_gap >= 0):
            out.append(f"events[{n}]: standstill_gap must be nonnegative")
    if not (isinstance(cfg.decimate, int) and cfg.decimate >= 1):
        out.append("output.decimate must be a positive integer")
    return out


def _profile_violations(lp: LeaderProfile) -> list[str]:
    if lp.kind not in PROFILE_KINDS:
        return [f"leader_profile: kind must be one of {PROFILE_KINDS}"]
    required, optional = _PROFILE_PARAMS[lp.kind]
    out = [f"leader_profile: missing parameter {k!r}" for k in required if k not in lp.params]
    for k, v in lp.params.items():
        if k not in required + optional:
            out.append(f"leader_profile: unknown parameter {k!r} for kind {lp.kind!r}")
        elif not (_finite(v) or (k == "t_end" and v == math.inf)):
            out.append(f"leader_profile: {k} must be a finite number")
    if out:
        return out
    for k in ("t_rise", "t_fall"):
        if k in lp.params and not lp.params[k] > 0:
            out.append(f"leader_profile: {k} must be positive")
    for k in ("t_hold", "t_start", "frequency"):
        if k in lp.params and lp.params[k] < 0:
            out.append(f"leader_profile: {k} must be nonnegative")
    return out


# -- document parsing -------------------------------------------------------

_TOP_REQUIRED = ("ts", "duration", "vehicles")
_TOP_OPTIONAL = ("schema_version", "leader_profile", "events", "output")
_VEH_PHYSICAL = ("tau", "phi", "length", "headway", "standstill_gap")
_VEH_CONTROL = ("kp", "kd", "controller", "initial_error")


def _reject_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ScenarioParseError(f"duplicate field {k!r}")
        seen[k] = v
    return seen


def _check_keys(obj, required, optional, where):
    if not isinstance(obj, dict):
        raise ScenarioParseError("expected an object", where)
    for k in obj:
        if k not in required and k not in optional:
            raise ScenarioParseError(f"unknown key {k!r}", where)
    for k in required:
        if k not in obj:
            raise ScenarioParseError(f"missing required key {k!r}", where)


def _num(obj, key, where, default=None):
    if key not in obj:
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioParseError(f"{key} must be a number", where)
    return float(v)


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse a scenario document without validating parameter domains."""
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    _check_keys(doc, _TOP_REQUIRED, _TOP_OPTIONAL, "$")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioParseError(f"unsupported schema_version {version!r}", "$.schema_version")
    ts = _num(doc, "ts", "$")
    duration = _num(doc, "duration", "$")

    vehicles_doc = doc["vehicles"]
    if not isinstance(vehicles_doc, list):
        raise ScenarioParseError("vehicles must be a list", "$.vehicles")
    vehicles, gains, kinds, errors = [], [], [], []
    for i, v in enumerate(vehicles_doc):
        where = f"$.vehicles[{i}]"
        if i == 0:
            _check_keys(v, (), _VEH_PHYSICAL + _VEH_CONTROL, where)
            phys = {k: _num(v, k, where, _LEADER_DEFAULTS.get(k)) for k in ("tau", "phi", "headway")}
        else:
            _check_keys(v, ("tau", "phi", "headway", "kp", "kd"), _VEH_PHYSICAL + _VEH_CONTROL, where)
            phys = {k: _num(v, k, where) for k in ("tau", "phi", "headway")}
            gains.append(GainSet(kp=_num(v, "kp", where), kd=_num(v, "kd", where)))
            kind = v.get("controller", "predictor")
            if not isinstance(kind, str):
                raise ScenarioParseError("controller must be a string", where)
            kinds.append(kind)
            errors.append(_num(v, "initial_error", where, 0.0))
        vehicles.append(
            VehicleParams(
                length=_num(v, "length", where, DEFAULT_LENGTH),
                standstill_gap=_num(v, "standstill_gap", where, DEFAULT_STANDSTILL_GAP),
                **phys,
            )
        )

    lp_doc = doc.get("leader_profile", {"kind": "standstill"})
    if not isinstance(lp_doc, dict) or "kind" not in lp_doc:
        raise ScenarioParseError("leader_profile must be an object with a 'kind'", "$.leader_profile")
    lp_params = {k: v for k, v in lp_doc.items() if k != "kind"}
    for k in lp_params:
        lp_params[k] = _num(lp_params, k, "$.leader_profile")
    profile = LeaderProfile(kind=lp_doc["kind"], params=lp_params)

    events = []
    ev_doc = doc.get("events", [])
    if not isinstance(ev_doc, list):
        raise ScenarioParseError("events must be a list", "$.events")
    for n, e in enumerate(ev_doc):
        where = f"$.events[{n}]"
        _check_keys(e, ("t", "vehicle", "standstill_gap"), (), where)
        if isinstance(e["vehicle"], bool) or not isinstance(e["vehicle"], int):
            raise ScenarioParseError("vehicle must be an integer", where)
        events.append(GapEvent(t=_num(e, "t", where), vehicle=e["vehicle"],
                               standstill_gap=_num(e, "standstill_gap", where)))

    out_doc = doc.get("output", {})
    _check_keys(out_doc, (), ("decimate",), "$.output")
    decimate = out_doc.get("decimate", 1)
    if isinstance(decimate, bool) or not isinstance(decimate, int):
        raise ScenarioParseError("decimate must be an integer", "$.output")

    return ScenarioConfig(
        ts=ts,
        duration=duration,
        vehicles=tuple(vehicles),
        gains=tuple(gains),
        controllers=tuple(kinds),
        initial_errors=tuple(errors),
        leader_profile=profile,
        events=tuple(sorted(events, key=lambda e: e.t)),
        decimate=decimate,
    )


def load_scenario(text: str) -> ScenarioConfig:
    """Parse and validate a scenario document.

    Raises :class:`ScenarioParseError` for malformed documents and
    :class:`ScenarioValidationError` listing every violated invariant.
    """
    cfg = parse_scenario(text)
    violations = validate_params(cfg)
    if violations:
        raise ScenarioValidationError(violations)
    return cfg


def load_scenario_file(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    vehicles = []
    for i, p in enumerate(cfg.vehicles):
        entry = {
            "tau": p.tau,
            "phi": p.phi,
            "length": p.length,
            "headway": p.headway,
            "standstill_gap": p.standstill_gap,
        }
        if i > 0:
            g = cfg.gains[i - 1]
            entry.update(
                kp=g.kp,
                kd=g.kd,
                controller=cfg.controllers[i - 1],
                initial_error=cfg.initial_errors[i - 1],
            )
        vehicles.append(entry)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "ts": cfg.ts,
        "duration": cfg.duration,
        "leader_profile": {"kind": cfg.leader_profile.kind, **cfg.leader_profile.params},
        "vehicles": vehicles,
    }
    if cfg.events:
        doc["events"] = [
            {"t": e.t, "vehicle": e.vehicle, "standstill_gap": e.standstill_gap} for e in cfg.events
        ]
    if cfg.decimate != 1:
        doc["output"] = {"decimate": cfg.decimate}
    return doc


def serialize_scenario(cfg: ScenarioConfig) -> str:
    return json.dumps(scenario_to_dict(cfg), indent=2) + "\n"
