"""Dense linear-algebra kernels: matrix exponential, ZOH discretization and
eigenvalues.

The eigenvalue path is balance -> Householder Hessenberg reduction (numpy)
-> Francis double-shift QR iteration (``_backend.hqr``, compiled when
available).
"""
from __future__ import annotations

import numpy as np

from predcacc import _backend


class DimensionError(ValueError):
    pass


class NumericalError(ArithmeticError):
    """An iterative kernel failed to converge. Never silently ignored."""


def _as_square(A, name="A") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


# Pade(13) coefficients and scaling threshold (Higham 2005).
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def expm(A) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a [13/13] Pade core."""
    A = _as_square(A)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    norm = np.linalg.norm(A, 1)
    s = 0
    if norm > _THETA13:
        s = int(np.ceil(np.log2(norm / _THETA13)))
        A = A / 2.0**s
    b = _PADE13
    ident = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident
    E = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        E = E @ E
    return E


def zoh_pair(A, B, ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization ``(Phi, Gamma)`` of ``(A, B)``.

    Uses the augmented exponential ``exp(ts*[[A, B], [0, 0]])``.
    """
    A = _as_square(A)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n = A.shape[0]
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionError(f"B must have {n} rows, got shape {B.shape}")
    if not ts > 0:
        raise ValueError("ts must be positive")
    m = B.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = expm(ts * M)
    return E[:n, :n].copy(), E[:n, n:].copy()


def balance(A) -> np.ndarray:
    """Diagonal similarity scaling by powers of two (Parlett-Reinsch)."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    radix = 2.0
    converged = False
    while not converged:
        converged = True
        for i in range(n):
            c = np.abs(A[:, i]).sum() - abs(A[i, i])
            r = np.abs(A[i, :]).sum() - abs(A[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g = r / radix
            f = 1.0
            s = c + r
            while c < g:
                f *= radix
                c *= radix * radix
            g = r * radix
            while c > g:
                f /= radix
                c /= radix * radix
            if (c + r) / f < 0.95 * s:
                converged = False
                A[i, :] /= f
                A[:, i] *= f
    return A


def hessenberg(A) -> np.ndarray:
    """Reduce to upper Hessenberg form by Householder similarity transforms."""
    H = np.array(A, dtype=float)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += np.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        H[k + 1:, k:] -= 2.0 * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def eigenvalues(A, max_iter: int = 60) -> np.ndarray:
    """All eigenvalues of a real square matrix, with multiplicity.

    Raises :class:`NumericalError` if the QR iteration does not converge
    within ``max_iter`` iterations for some eigenvalue.
    """
    A = _as_square(A)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    H = np.ascontiguousarray(hessenberg(balance(A)))
    wr, wi, status = _backend.hqr(H, max_iter)
    if status != 0:
        raise NumericalError(
            f"QR iteration failed to converge (eigenvalue index {status - 1}, {n}x{n} matrix)"
        )
    return np.asarray(wr) + 1j * np.asarray(wi)


def spectral_radius(A) -> float:
    ev = eigenvalues(A)
    if ev.size == 0:
        return 0.0
    return float(np.max(np.abs(ev)))
