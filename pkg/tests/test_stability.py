from dataclasses import replace

import mpmath as mp
import numpy as np
import pytest

from predcacc.controller import (
    Measurement,
    conventional_control,
    make_predictor_state,
    predictor_control,
)
from predcacc.core import GainSet
from predcacc.numerics import eigenvalues, expm
from predcacc.stability import (
    LoopParams,
    assemble_controller_matrices,
    build_error_system,
    build_lifted_system,
    closed_loop_matrix,
    delay_free_matrix,
    discretize,
    experiment_params,
    gain_scan,
    stability_report,
)

P = experiment_params()


def test_error_system_structure():
    es = build_error_system(P.tau, P.headway, P.kp, P.kd)
    assert es.A0[1, 1] == pytest.approx((P.tau - P.headway) / (P.tau * P.headway), rel=1e-15)
    assert es.A0[1, 1] == pytest.approx(-12.9254, abs=5e-5)
    np.testing.assert_array_equal(es.A0[0], [0, 1, 0])
    assert es.A0[2, 2] == -1 / P.headway and es.A0[2, 1] == 1 / P.headway
    np.testing.assert_array_equal(es.B1[:, 0], [0, -P.headway / P.tau, 0])
    np.testing.assert_array_equal(es.B2[:, 0], [0, 1, 1])
    np.testing.assert_allclose(es.A0 + es.A1, delay_free_matrix(P.kp, P.kd, P.headway), atol=1e-14)


def test_error_system_tau_equals_h():
    assert build_error_system(0.5, 0.5, 0.2, 0.6).A0[1, 1] == 0.0


@pytest.mark.parametrize("tau, h", [(0.0, 0.5), (0.1, 0.0), (-1.0, 0.5)])
def test_error_system_rejects(tau, h):
    with pytest.raises(ValueError):
        build_error_system(tau, h, 0.2, 0.6)


def test_discretize_small_step():
    es = build_error_system(P.tau, P.headway, P.kp, P.kd)
    for ts in (1e-3, 1e-4, 1e-5):
        Phi, _, _ = discretize(es, ts)
        assert np.linalg.norm(Phi - np.eye(3), 2) <= 2 * np.linalg.norm(es.A0, 2) * ts


def test_discretize_gamma_against_quadrature():
    es = build_error_system(P.tau, P.headway, P.kp, P.kd)
    _, Gamma, Gamma_w = discretize(es, P.ts)
    # 10^6-point midpoint rule; A0 is defective, so exponentials are formed as
    # exp(A0 (m*1000 + k + 1/2) dt) = exp(A0 m*1000 dt) exp(A0 (k + 1/2) dt)
    dt = P.ts / 10**6
    inner = sum(expm(es.A0 * (k + 0.5) * dt) for k in range(1000))
    outer = sum(expm(es.A0 * m * 1000 * dt) for m in range(1000))
    integral = outer @ inner * dt
    np.testing.assert_allclose(Gamma, integral @ es.B1, rtol=0, atol=1e-6)
    np.testing.assert_allclose(Gamma_w, integral @ es.B2, rtol=0, atol=1e-6)


def test_lifted_structure():
    ls = build_lifted_system(P)
    d = 15
    assert ls.Abar.shape == (3 + d, 3 + d) and ls.dim == 3 + 2 * d == 33
    np.testing.assert_array_equal(ls.Abar[:3, :3], ls.Phi)
    np.testing.assert_array_equal(ls.Abar[:3, 3], ls.Gamma[:, 0])
    np.testing.assert_array_equal(ls.Abar[3:, 3:], np.eye(d, k=1))
    assert not ls.Abar[-1].any()
    assert not ls.ctrl.Ba.any()
    assert ls.ctrl.Ca == pytest.approx(P.tau / P.headway)


def test_zero_gain_matrices():
    c = assemble_controller_matrices(P.tau, P.headway, GainSet(0.0, 0.0), P.timing)
    assert not c.Cz.any() and not c.Ax.any()
    np.testing.assert_array_equal(c.Az, np.eye(15, k=1))


def test_zero_delay_matrices_match_conventional_law():
    p0 = replace(P, phi=0.0)
    ls = build_lifted_system(p0)
    assert ls.dim == 3
    r, h = P.tau / P.headway, P.headway
    expected = [r * P.kp, (1 - r) * (-1 / h) + r * P.kd, (1 - r) / h]
    np.testing.assert_allclose(ls.ctrl.Cx, expected, rtol=1e-15)
    np.testing.assert_allclose(ls.Acl, ls.Phi + ls.Gamma @ ls.ctrl.Cx[None, :], atol=1e-15)
    # numerically against conventional_control with a = (x3 - x2)/h
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, al = rng.standard_normal(3), rng.standard_normal()
        m = Measurement(x[0], x[1], (x[2] - x[1]) / h, al)
        u = conventional_control(P.gains, P.tau, h, m)
        assert ls.ctrl.Cx @ x + ls.ctrl.Ca * al == pytest.approx(u, abs=1e-14)


def test_zero_delay_eigenvalues():
    """Eigenvalues at d = 0 against an independently built sampled conventional loop."""
    p0 = replace(P, phi=0.0)
    es = build_error_system(P.tau, P.headway, P.kp, P.kd)
    Phi, Gamma, _ = discretize(es, P.ts)
    h = P.headway
    K = np.array([[
        conventional_control(P.gains, P.tau, h, Measurement(*e[:2], (e[2] - e[1]) / h, 0.0))
        for e in np.eye(3)
    ]])
    ref = np.sort_complex(np.linalg.eigvals(Phi + Gamma @ K))
    got = np.sort_complex(eigenvalues(build_lifted_system(p0).Acl))
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-10)
    # and the sampled-control gap to the continuous loop closes with ts
    gaps = []
    for ts in (0.01, 0.001, 0.0001):
        e_cl = np.sort_complex(eigenvalues(build_lifted_system(replace(p0, ts=ts)).Acl))
        e_ct = np.sort_complex(eigenvalues(expm(delay_free_matrix(P.kp, P.kd, h) * ts)))
        gaps.append(np.abs(e_cl - e_ct).max())
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-6


def test_closed_loop_dimension_mismatch():
    ls = build_lifted_system(P)
    with pytest.raises(ValueError):
        closed_loop_matrix(ls.Abar[:-1, :-1], ls.Bbar1[:-1], ls.Bbar2[:-1], ls.ctrl)


def test_lifted_recursion_matches_controller():
    """u and ubar of the lifted linear form equal predictor_control over random steps."""
    d = P.timing.d
    ls = build_lifted_system(P)
    c = ls.ctrl
    ps = make_predictor_state(P.gains, P.timing, P.tau, P.headway)
    rng = np.random.default_rng(42)
    uchain = np.zeros(d)  # u(k-d) ... u(k-1)
    z = np.zeros(d)  # ubar(k-d) ... ubar(k-1)
    for _ in range(100):
        x, al = rng.standard_normal(3), rng.standard_normal()
        xbar = np.concatenate([x, uchain])
        u_lin = c.Cx @ xbar + c.Cz @ z + c.Ca * al
        z_next = c.Ax @ xbar + c.Az @ z + c.Ba * al
        u, ps = predictor_control(ps, Measurement(x[0], x[1], (x[2] - x[1]) / P.headway, al))
        assert u_lin == pytest.approx(u, abs=1e-12)
        assert z_next[-1] == pytest.approx(ps.last_ubar, abs=1e-12)
        np.testing.assert_allclose(z_next[:-1], z[1:], atol=0)
        uchain = np.concatenate([uchain[1:], [u]])
        z = z_next


def test_experiment_report():
    rep = stability_report(P)
    assert rep["stable"] and rep["verdict"] == "stable"
    assert rep["dimension"] == 33 and rep["d"] == 15
    assert 1 - rep["spectral_radius"] > 1e-3
    mags = [abs(complex(*z)) for z in rep["eigenvalues"]]
    assert mags == sorted(mags, reverse=True)
    assert mags[0] == rep["spectral_radius"]
    assert rep["params"]["tau"] == P.tau


def test_dominant_eigenvalues_against_high_precision():
    A = build_lifted_system(P).Acl
    with mp.workdps(50):
        ev_ref, _ = mp.eig(mp.matrix(A.tolist()))
        ref = [complex(z) for z in ev_ref]
    dominant = [z for z in ref if abs(z) > 0.3]
    assert len(dominant) >= 3
    got = eigenvalues(A)
    for z in dominant:
        assert np.abs(got - z).min() <= 1e-9
    assert max(abs(z) for z in got) == pytest.approx(max(abs(z) for z in ref), abs=1e-9)


def test_zero_gains_marginal():
    rep = stability_report(replace(P, kp=0.0, kd=0.0))
    assert not rep["stable"]
    assert rep["verdict"] == "marginal"
    assert abs(complex(*rep["eigenvalues"][0]) - 1) <= 1e-9


def test_small_headway_regression():
    rep = stability_report(replace(P, headway=0.01))
    assert rep["verdict"] == "stable"
    assert rep["spectral_radius"] == pytest.approx(0.99657, abs=1e-5)


def test_conventional_with_delay_report():
    rep = stability_report(P, controller="conventional")
    assert rep["dimension"] == 18
    with pytest.raises(ValueError):
        build_lifted_system(P, controller="smith")


def test_scale_invariance():
    """Acl only depends on loop parameters; no e0, r or L enters."""
    assert set(LoopParams.__dataclass_fields__) == {"tau", "phi", "headway", "kp", "kd", "ts"}


def test_single_point_scan_matches_report():
    rows = gain_scan(P, {"kp": [P.kp]})
    assert len(rows) == 1
    assert rows[0]["spectral_radius"] == stability_report(P)["spectral_radius"]
    assert rows[0]["status"] == "stable"


def test_scan_cardinality_and_order():
    kp = np.linspace(0.0, 1.0, 5)
    kd = np.linspace(0.0, 1.5, 4)
    rows = gain_scan(P, {"kp": kp, "kd": kd})
    assert len(rows) == 20
    assert [(r["kp"], r["kd"]) for r in rows] == [(a, b) for a in kp for b in kd]
    assert rows[0]["status"] != "stable"  # kp = kd = 0
    threaded = gain_scan(P, {"kp": kp, "kd": kd}, workers=4)
    assert threaded == rows


def test_scan_records_bad_points():
    rows = gain_scan(P, {"phi": [0.15, 0.155], "headway": [0.5, -1.0]})
    status = [r["status"] for r in rows]
    assert status[0] == "stable"
    assert all(s.startswith("invalid") for s in status[1:])
    with pytest.raises(ValueError):
        gain_scan(P, {"mass": [1.0]})
