import json
import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predcacc.core import (
    ScenarioParseError,
    ScenarioValidationError,
    load_scenario,
    make_timing,
    parse_scenario,
    serialize_scenario,
    validate_params,
)
from predcacc.simlab import experiment_scenario

MINIMAL = {
    "ts": 0.01,
    "duration": 20.0,
    "vehicles": [{}, {"tau": 0.067, "phi": 0.15, "headway": 0.5, "kp": 0.2, "kd": 0.6866}],
}


def doc(**overrides):
    d = json.loads(json.dumps(MINIMAL))
    d.update(overrides)
    return json.dumps(d)


def test_experiment_parameters_valid_with_d15():
    cfg = experiment_scenario()
    assert validate_params(cfg) == []
    assert cfg.timing(1).d == 15


def test_zero_tau_is_a_violation():
    cfg = experiment_scenario()
    bad = replace(cfg, vehicles=(cfg.vehicles[0], replace(cfg.vehicles[1], tau=0.0)))
    assert any("tau must be positive" in v for v in validate_params(bad))


def test_fractional_delay_is_a_violation():
    cfg = experiment_scenario()
    bad = replace(cfg, vehicles=(cfg.vehicles[0], replace(cfg.vehicles[1], phi=0.155)))
    assert any("phi not an integer multiple of ts" in v for v in validate_params(bad))


def test_violations_are_all_collected():
    cfg = experiment_scenario()
    bad = replace(
        cfg,
        duration=-1.0,
        vehicles=(cfg.vehicles[0], replace(cfg.vehicles[1], tau=-1.0, headway=0.0)),
        controllers=("smith",),
    )
    v = validate_params(bad)
    assert len(v) >= 4


def test_load_minimal_document_applies_defaults():
    cfg = load_scenario(doc())
    assert cfg.timing(1).d == 15
    assert cfg.vehicles[1].standstill_gap == 2.0
    assert cfg.vehicles[1].length == 4.0
    assert cfg.controllers == ("predictor",)
    assert cfg.initial_errors == (0.0,)
    assert cfg.leader_profile.kind == "standstill"


def test_empty_vehicle_list_is_validation_error():
    with pytest.raises(ScenarioValidationError):
        load_scenario(doc(vehicles=[]))


def test_duplicate_field_is_parse_error():
    text = '{"ts": 0.01, "ts": 0.02, "duration": 1, "vehicles": []}'
    with pytest.raises(ScenarioParseError, match="duplicate"):
        load_scenario(text)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ('{"ts": 0.01,', "line 1"),
        (doc(gravity=9.81), "unknown key 'gravity'"),
        (doc(schema_version=2), "schema_version"),
        (doc(ts="fast"), "ts must be a number"),
    ],
)
def test_malformed_documents(text, fragment):
    with pytest.raises(ScenarioParseError, match=fragment):
        load_scenario(text)


def test_unknown_vehicle_key_has_location():
    d = json.loads(doc())
    d["vehicles"][1]["mass"] = 1000
    with pytest.raises(ScenarioParseError) as exc:
        load_scenario(json.dumps(d))
    assert exc.value.location == "$.vehicles[1]"


def test_phi_off_grid_fails_load():
    d = json.loads(doc())
    d["vehicles"][1]["phi"] = 0.155
    with pytest.raises(ScenarioValidationError, match="integer multiple"):
        load_scenario(json.dumps(d))


def test_leader_profile_parameters_checked():
    with pytest.raises(ScenarioValidationError, match="missing parameter 'amplitude'"):
        load_scenario(doc(leader_profile={"kind": "step"}))
    with pytest.raises(ScenarioValidationError, match="unknown parameter"):
        load_scenario(doc(leader_profile={"kind": "step", "amplitude": 1, "omega": 2}))


def test_bundled_scenarios_load(scenario_dir):
    names = sorted(p.name for p in scenario_dir.glob("*.scenario"))
    assert "standstill_predictor.scenario" in names
    for path in scenario_dir.glob("*.scenario"):
        load_scenario(path.read_text())


@settings(max_examples=50, deadline=None)
@given(
    ts=st.sampled_from([0.001, 0.005, 0.01, 0.02]),
    d=st.integers(0, 40),
    tau=st.floats(0.01, 1.0),
    e0=st.floats(-20, 20),
    kind=st.sampled_from(["predictor", "conventional"]),
)
def test_round_trip_and_delay_invariant(ts, d, tau, e0, kind):
    cfg = replace(
        experiment_scenario(e0=e0, controller=kind, ts=ts),
        events=(),
    )
    cfg = replace(cfg, vehicles=(cfg.vehicles[0], replace(cfg.vehicles[1], tau=tau, phi=d * ts)))
    loaded = load_scenario(serialize_scenario(cfg))
    assert loaded == cfg
    again = parse_scenario(serialize_scenario(loaded))
    assert again == loaded
    timing = loaded.timing(1)
    phi = loaded.vehicles[1].phi
    assert timing.d == round(phi / ts)
    assert abs(timing.d * ts - phi) <= 1e-12 * max(phi, ts)


def test_round_trip_with_events_and_profile():
    d = json.loads(doc(
        leader_profile={"kind": "trapezoid", "amplitude": 1.0, "t_start": 1.0, "t_rise": 1.0,
                        "t_hold": 2.0, "t_fall": 1.0},
        events=[{"t": 2.0, "vehicle": 1, "standstill_gap": 3.0}],
        output={"decimate": 2},
    ))
    cfg = load_scenario(json.dumps(d))
    assert load_scenario(serialize_scenario(cfg)) == cfg


def test_make_timing_rejects_fraction():
    assert make_timing(0.15, 0.01).d == 15
    with pytest.raises(ValueError):
        make_timing(0.155, 0.01)


def test_leader_profiles():
    from predcacc.core import LeaderProfile

    trap = LeaderProfile("trapezoid", {"amplitude": 2.0, "t_start": 1.0, "t_rise": 1.0, "t_hold": 1.0, "t_fall": 2.0})
    assert [trap.accel(t) for t in (0.5, 1.5, 2.5, 4.0, 5.5)] == [0.0, 1.0, 2.0, 1.0, 0.0]
    assert trap.end_time == 5.0
    step = LeaderProfile("step", {"amplitude": -1.0, "t_start": 1.0, "t_end": 2.0})
    assert (step.accel(0.99), step.accel(1.0), step.accel(2.0)) == (0.0, -1.0, 0.0)
    sine = LeaderProfile("sine", {"amplitude": 1.0, "frequency": 0.25})
    assert math.isclose(sine.accel(1.0), 1.0)
    assert LeaderProfile().accel(3.0) == 0.0
    assert sine.accel(-1.0) == 0.0
