"""Pure-Python kernels, used when the compiled extension is unavailable.

``platoon_loop`` is composed from the object-level plant and controller
API, so it doubles as the reference path for the fused compiled loop.
"""
from __future__ import annotations

import math

import numpy as np


def hqr(H, max_iter):
    """Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR.

    Returns ``(wr, wi, status)``; ``status`` is 0 on success, otherwise
    1 + the index of the eigenvalue that failed to converge.
    """
    a = [list(map(float, row)) for row in H]
    n = len(a)
    wr = [0.0] * n
    wi = [0.0] * n
    anorm = 0.0
    for i in range(n):
        for j in range(max(i - 1, 0), n):
            anorm += abs(a[i][j])
    nn = n - 1
    t = 0.0
    x = y = z = p = q = r = s = w = 0.0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = abs(a[l - 1][l - 1]) + abs(a[l][l])
                if s == 0.0:
                    s = anorm
                if abs(a[l][l - 1]) + s == s:
                    a[l][l - 1] = 0.0
                    break
                l -= 1
            x = a[nn][nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
            else:
                y = a[nn - 1][nn - 1]
                w = a[nn][nn - 1] * a[nn - 1][nn]
                if l == nn - 1:
                    p = 0.5 * (y - x)
                    q = p * p + w
                    z = math.sqrt(abs(q))
                    x += t
                    if q >= 0.0:
                        z = p + math.copysign(z, p)
                        wr[nn - 1] = wr[nn] = x + z
                        if z != 0.0:
                            wr[nn] = x - w / z
                        wi[nn - 1] = wi[nn] = 0.0
                    else:
                        wr[nn - 1] = wr[nn] = x + p
                        wi[nn - 1] = -z
                        wi[nn] = z
                    nn -= 2
                else:
                    if its == max_iter:
                        return wr, wi, nn + 1
                    if its and its % 10 == 0:
                        # exceptional shift
                        t += x
                        for i in range(nn + 1):
                            a[i][i] -= x
                        s = abs(a[nn][nn - 1]) + abs(a[nn - 1][nn - 2])
                        x = y = 0.75 * s
                        w = -0.4375 * s * s
                    its += 1
                    m = nn - 2
                    while True:
                        z = a[m][m]
                        r = x - z
                        s = y - z
                        p = (r * s - w) / a[m + 1][m] + a[m][m + 1]
                        q = a[m + 1][m + 1] - z - r - s
                        r = a[m + 2][m + 1]
                        s = abs(p) + abs(q) + abs(r)
                        p /= s
                        q /= s
                        r /= s
                        if m == l:
                            break
                        u = abs(a[m][m - 1]) * (abs(q) + abs(r))
                        v = abs(p) * (abs(a[m - 1][m - 1]) + abs(z) + abs(a[m + 1][m + 1]))
                        if u + v == v:
                            break
                        m -= 1
                    for i in range(m + 2, nn + 1):
                        a[i][i - 2] = 0.0
                        if i != m + 2:
                            a[i][i - 3] = 0.0
                    k = m
                    while k <= nn - 1:
                        if k != m:
                            p = a[k][k - 1]
                            q = a[k + 1][k - 1]
                            r = a[k + 2][k - 1] if k != nn - 1 else 0.0
                            x = abs(p) + abs(q) + abs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                        if s != 0.0:
                            if k == m:
                                if l != m:
                                    a[k][k - 1] = -a[k][k - 1]
                            else:
                                a[k][k - 1] = -s * x
                            p += s
                            x = p / s
                            y = q / s
                            z = r / s
                            q /= p
                            r /= p
                            ak, ak1 = a[k], a[k + 1]
                            if k != nn - 1:
                                ak2 = a[k + 2]
                                for j in range(k, nn + 1):
                                    p = ak[j] + q * ak1[j] + r * ak2[j]
                                    ak2[j] -= p * z
                                    ak1[j] -= p * y
                                    ak[j] -= p * x
                            else:
                                for j in range(k, nn + 1):
                                    p = ak[j] + q * ak1[j]
                                    ak1[j] -= p * y
                                    ak[j] -= p * x
                            mmin = nn if nn < k + 3 else k + 3
                            for i in range(l, mmin + 1):
                                ai = a[i]
                                p = x * ai[k] + y * ai[k + 1]
                                if k != nn - 1:
                                    p += z * ai[k + 2]
                                    ai[k + 2] -= p * r
                                ai[k + 1] -= p * q
                                ai[k] -= p
                        k += 1
            if not l < nn - 1:
                break
    return wr, wi, 0


def platoon_loop(inp):
    """Step the whole platoon ``inp.n_steps`` samples (see ``simlab``)."""
    from predcacc.controller import (
        Measurement,
        conventional_control,
        make_predictor_state,
        predictor_control,
    )
    from predcacc.core import GainSet, Timing, VehicleState
    from predcacc.plant import DelayBuffer, make_propagator, step_vehicle
    from predcacc.simlab import error_terms

    ts = inp.ts
    n = inp.tau.shape[0]
    N = inp.n_steps
    out = {name: np.zeros((N + 1, n)) for name in
           ("q", "v", "a", "u_cmd", "u_app", "x1", "x2", "x3", "ahat", "ubar")}
    states = [VehicleState(float(inp.q0[i]), float(inp.v0[i]), float(inp.a0[i])) for i in range(n)]
    props = [None] + [make_propagator(float(inp.tau[i]), ts) for i in range(1, n)]
    bufs = [None] + [DelayBuffer(int(inp.d[i])) for i in range(1, n)]
    gains = [None] + [GainSet(float(inp.kp[i]), float(inp.kd[i])) for i in range(1, n)]
    ctrls = [None] + [
        make_predictor_state(gains[i], Timing(ts, int(inp.d[i])), float(inp.tau[i]), float(inp.headway[i]))
        for i in range(1, n)
    ]
    a_leader = inp.a_leader.tolist()
    gap = inp.gap.tolist()
    half_ts2 = 0.5 * ts * ts
    u_app = [0.0] * n
    for k in range(N + 1):
        aL = a_leader[k]
        lead = states[0]
        states[0] = VehicleState(lead.q, lead.v, aL)
        out["u_cmd"][k, 0] = out["u_app"][k, 0] = aL
        for i in range(1, n):
            ego = states[i]
            pred = states[i - 1]
            h = float(inp.headway[i])
            x1, x2, x3 = error_terms(pred.q, pred.v, ego.q, ego.v, ego.a,
                                     float(inp.length[i]), h, gap[k][i])
            m = Measurement(x1=x1, x2=x2, a_self=ego.a, a_lead=pred.a)
            if inp.kind[i] == 0:
                u, ps = predictor_control(ctrls[i], m)
                ahat, ubar = ps.last_ahat, ps.last_ubar
            else:
                u = conventional_control(gains[i], float(inp.tau[i]), h, m)
                ahat, ubar = ego.a, -(gains[i].kp * x1 + gains[i].kd * x2)
            u_app[i] = bufs[i].push(u)
            row = (u, u_app[i], x1, x2, x3, ahat, ubar)
            for name, val in zip(("u_cmd", "u_app", "x1", "x2", "x3", "ahat", "ubar"), row):
                out[name][k, i] = val
        for i, s in enumerate(states):
            out["q"][k, i] = s.q
            out["v"][k, i] = s.v
            out["a"][k, i] = s.a
        if k == N:
            break
        lead = states[0]
        states[0] = VehicleState(lead.q + ts * lead.v + half_ts2 * aL, lead.v + ts * aL, aL)
        for i in range(1, n):
            states[i] = step_vehicle(props[i], states[i], u_app[i])
    return out
