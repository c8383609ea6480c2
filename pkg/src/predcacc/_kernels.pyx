# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Must stay numerically identical to ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, copysign

cnp.import_array()


cdef int _hqr(double[:, ::1] a, double[::1] wr, double[::1] wi, int max_iter) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t nn, l, m, k, i, j, mmin
    cdef int its
    cdef double anorm = 0.0, t = 0.0
    cdef double x = 0, y = 0, z = 0, p = 0, q = 0, r = 0, s = 0, w = 0, u, v
    for i in range(n):
        for j in range(i - 1 if i > 0 else 0, n):
            anorm += fabs(a[i, j])
    nn = n - 1
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = fabs(a[l - 1, l - 1]) + fabs(a[l, l])
                if s == 0.0:
                    s = anorm
                if fabs(a[l, l - 1]) + s == s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
            else:
                y = a[nn - 1, nn - 1]
                w = a[nn, nn - 1] * a[nn - 1, nn]
                if l == nn - 1:
                    p = 0.5 * (y - x)
                    q = p * p + w
                    z = sqrt(fabs(q))
                    x += t
                    if q >= 0.0:
                        z = p + copysign(z, p)
                        wr[nn - 1] = x + z
                        wr[nn] = x + z
                        if z != 0.0:
                            wr[nn] = x - w / z
                        wi[nn - 1] = 0.0
                        wi[nn] = 0.0
                    else:
                        wr[nn - 1] = x + p
                        wr[nn] = x + p
                        wi[nn - 1] = -z
                        wi[nn] = z
                    nn -= 2
                else:
                    if its == max_iter:
                        return <int>(nn + 1)
                    if its != 0 and its % 10 == 0:
                        t += x
                        for i in range(nn + 1):
                            a[i, i] -= x
                        s = fabs(a[nn, nn - 1]) + fabs(a[nn - 1, nn - 2])
                        x = 0.75 * s
                        y = x
                        w = -0.4375 * s * s
                    its += 1
                    m = nn - 2
                    while True:
                        z = a[m, m]
                        r = x - z
                        s = y - z
                        p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                        q = a[m + 1, m + 1] - z - r - s
                        r = a[m + 2, m + 1]
                        s = fabs(p) + fabs(q) + fabs(r)
                        p /= s
                        q /= s
                        r /= s
                        if m == l:
                            break
                        u = fabs(a[m, m - 1]) * (fabs(q) + fabs(r))
                        v = fabs(p) * (fabs(a[m - 1, m - 1]) + fabs(z) + fabs(a[m + 1, m + 1]))
                        if u + v == v:
                            break
                        m -= 1
                    for i in range(m + 2, nn + 1):
                        a[i, i - 2] = 0.0
                        if i != m + 2:
                            a[i, i - 3] = 0.0
                    k = m
                    while k <= nn - 1:
                        if k != m:
                            p = a[k, k - 1]
                            q = a[k + 1, k - 1]
                            r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                            x = fabs(p) + fabs(q) + fabs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = copysign(sqrt(p * p + q * q + r * r), p)
                        if s != 0.0:
                            if k == m:
                                if l != m:
                                    a[k, k - 1] = -a[k, k - 1]
                            else:
                                a[k, k - 1] = -s * x
                            p += s
                            x = p / s
                            y = q / s
                            z = r / s
                            q /= p
                            r /= p
                            if k != nn - 1:
                                for j in range(k, nn + 1):
                                    p = a[k, j] + q * a[k + 1, j] + r * a[k + 2, j]
                                    a[k + 2, j] -= p * z
                                    a[k + 1, j] -= p * y
                                    a[k, j] -= p * x
                            else:
                                for j in range(k, nn + 1):
                                    p = a[k, j] + q * a[k + 1, j]
                                    a[k + 1, j] -= p * y
                                    a[k, j] -= p * x
                            mmin = nn if nn < k + 3 else k + 3
                            for i in range(l, mmin + 1):
                                p = x * a[i, k] + y * a[i, k + 1]
                                if k != nn - 1:
                                    p += z * a[i, k + 2]
                                    a[i, k + 2] -= p * r
                                a[i, k + 1] -= p * q
                                a[i, k] -= p
                        k += 1
            if not l < nn - 1:
                break
    return 0


def hqr(H, int max_iter):
    """Eigenvalues of an upper Hessenberg matrix; see ``_pykernels.hqr``."""
    cdef double[:, ::1] a = np.array(H, dtype=np.float64, order="C", copy=True)
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    cdef double[::1] wrv = wr
    cdef double[::1] wiv = wi
    cdef int status
    with nogil:
        status = _hqr(a, wrv, wiv, max_iter)
    return wr, wi, status


def platoon_loop(inp):
    """Fused platoon stepping loop; see ``_pykernels.platoon_loop``."""
    cdef double ts = inp.ts
    cdef Py_ssize_t N = inp.n_steps
    cdef double[::1] tau = np.ascontiguousarray(inp.tau, dtype=np.float64)
    cdef Py_ssize_t n = tau.shape[0]
    cdef double[::1] headway = np.ascontiguousarray(inp.headway, dtype=np.float64)
    cdef double[::1] length = np.ascontiguousarray(inp.length, dtype=np.float64)
    cdef double[::1] kp = np.ascontiguousarray(inp.kp, dtype=np.float64)
    cdef double[::1] kd = np.ascontiguousarray(inp.kd, dtype=np.float64)
    cdef long[::1] kind = np.ascontiguousarray(inp.kind, dtype=np.int_)
    cdef long[::1] dd = np.ascontiguousarray(inp.d, dtype=np.int_)
    cdef double[:, :, ::1] cf = np.ascontiguousarray(inp.coeffs, dtype=np.float64)
    cdef double[::1] alpha = np.ascontiguousarray(inp.alpha, dtype=np.float64)
    cdef double[::1] horizon = np.ascontiguousarray(inp.horizon, dtype=np.float64)
    cdef double[:, ::1] beta = np.ascontiguousarray(inp.beta, dtype=np.float64)
    cdef double[:, ::1] g1 = np.ascontiguousarray(inp.g1, dtype=np.float64)
    cdef double[:, ::1] g2 = np.ascontiguousarray(inp.g2, dtype=np.float64)
    cdef double[::1] aL = np.ascontiguousarray(inp.a_leader, dtype=np.float64)
    cdef double[:, ::1] gap = np.ascontiguousarray(inp.gap, dtype=np.float64)
    cdef Py_ssize_t dmax = beta.shape[1]

    names = ("q", "v", "a", "u_cmd", "u_app", "x1", "x2", "x3", "ahat", "ubar")
    out = {name: np.zeros((N + 1, n)) for name in names}
    cdef double[:, ::1] oq = out["q"], ov = out["v"], oa = out["a"]
    cdef double[:, ::1] ouc = out["u_cmd"], oua = out["u_app"]
    cdef double[:, ::1] ox1 = out["x1"], ox2 = out["x2"], ox3 = out["x3"]
    cdef double[:, ::1] oah = out["ahat"], oub = out["ubar"]

    cdef double[::1] q = np.array(inp.q0, dtype=np.float64)
    cdef double[::1] v = np.array(inp.v0, dtype=np.float64)
    cdef double[::1] a = np.array(inp.a0, dtype=np.float64)
    cdef double[:, ::1] ring_u = np.zeros((n, max(dmax, 1)))
    cdef double[:, ::1] ring_ub = np.zeros((n, max(dmax, 1)))
    cdef long[::1] pos = np.zeros(n, dtype=np.int_)
    cdef double[::1] uapp = np.zeros(n)

    cdef Py_ssize_t k, i, j, slot
    cdef long d
    cdef double x1, x2, x3, h, ratio, x1h, x2h, ub, ah, u, ucur, a_lead, half_ts2 = 0.5 * ts * ts
    cdef double qn, vn, an
    with nogil:
        for k in range(N + 1):
            a[0] = aL[k]
            ouc[k, 0] = aL[k]
            oua[k, 0] = aL[k]
            for i in range(1, n):
                h = headway[i]
                x1 = (q[i - 1] - q[i] - length[i]) - h * v[i] - gap[k, i]
                x2 = v[i - 1] - v[i] - h * a[i]
                x3 = v[i - 1] - v[i]
                a_lead = a[i - 1]
                ratio = tau[i] / h
                d = dd[i]
                if kind[i] == 0:
                    x1h = x1 + horizon[i] * x2
                    x2h = x2
                    for j in range(1, d + 1):
                        slot = (pos[i] - j + d) % d
                        x1h += g1[i, j - 1] * ring_ub[i, slot]
                        x2h += g2[i, j - 1] * ring_ub[i, slot]
                    ub = -(kp[i] * x1h + kd[i] * x2h)
                    ah = alpha[i] * a[i]
                    for j in range(1, d + 1):
                        slot = (pos[i] - j + d) % d
                        ah += beta[i, j - 1] * ring_u[i, slot]
                    u = (1.0 - ratio) * ah + ratio * a_lead - ratio * ub
                else:
                    u = ratio * a_lead + (1.0 - ratio) * a[i] + ratio * (kp[i] * x1 + kd[i] * x2)
                    ah = a[i]
                    ub = -(kp[i] * x1 + kd[i] * x2)
                if d > 0:
                    slot = pos[i]
                    ucur = ring_u[i, slot]
                    ring_u[i, slot] = u
                    ring_ub[i, slot] = ub
                    pos[i] = (slot + 1) % d
                else:
                    ucur = u
                uapp[i] = ucur
                ouc[k, i] = u
                oua[k, i] = ucur
                ox1[k, i] = x1
                ox2[k, i] = x2
                ox3[k, i] = x3
                oah[k, i] = ah
                oub[k, i] = ub
            for i in range(n):
                oq[k, i] = q[i]
                ov[k, i] = v[i]
                oa[k, i] = a[i]
            if k == N:
                break
            qn = q[0] + ts * v[0] + half_ts2 * a[0]
            v[0] = v[0] + ts * a[0]
            q[0] = qn
            for i in range(1, n):
                u = uapp[i]
                qn = q[i] + cf[i, 0, 1] * v[i] + cf[i, 0, 2] * a[i] + cf[i, 0, 3] * u
                vn = v[i] + cf[i, 1, 2] * a[i] + cf[i, 1, 3] * u
                an = cf[i, 2, 2] * a[i] + cf[i, 2, 3] * u
                q[i] = qn
                v[i] = vn
                a[i] = an
    return out
