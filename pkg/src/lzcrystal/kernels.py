"""Hot numeric kernels.

Every kernel exists twice: a ``*_numba`` version compiled with ``@njit`` and a
``*_numpy`` version built from vectorised numpy/scipy calls.  The unsuffixed
names are bound to one or the other at import time (see :mod:`._accel`).
Both variants implement the same algorithm and are cross-checked in the tests.
"""
import numpy as np
from scipy.linalg import solve_banded

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# Coulomb crystal: gradient and Hessian of the harmonic + Coulomb part of the
# dimensionless 2D potential.  Coordinates are packed as (y_1..y_N, z_1..z_N).
# ---------------------------------------------------------------------------


@njit
def coulomb_grad_hess_numba(y, z, alpha):
    n = y.shape[0]
    g = np.zeros(2 * n)
    h = np.zeros((2 * n, 2 * n))
    energy = 0.0
    for i in range(n):
        energy += 0.5 * (alpha * y[i] * y[i] + z[i] * z[i])
        g[i] += alpha * y[i]
        g[n + i] += z[i]
        h[i, i] += alpha
        h[n + i, n + i] += 1.0
    for i in range(n):
        for j in range(i + 1, n):
            dy = y[i] - y[j]
            dz = z[i] - z[j]
            r2 = dy * dy + dz * dz
            r = np.sqrt(r2)
            inv3 = 1.0 / (r2 * r)
            inv5 = inv3 / r2
            energy += 1.0 / r
            gy = -dy * inv3
            gz = -dz * inv3
            g[i] += gy
            g[j] -= gy
            g[n + i] += gz
            g[n + j] -= gz
            hyy = 3.0 * dy * dy * inv5 - inv3
            hzz = 3.0 * dz * dz * inv5 - inv3
            hyz = 3.0 * dy * dz * inv5
            # (a, b) index pairs for y_i, y_j, z_i, z_j
            for a, b, v in ((i, i, hyy), (j, j, hyy), (i, j, -hyy), (j, i, -hyy),
                            (n + i, n + i, hzz), (n + j, n + j, hzz),
                            (n + i, n + j, -hzz), (n + j, n + i, -hzz)):
                h[a, b] += v
            for a, b, v in ((i, n + i, hyz), (j, n + j, hyz), (i, n + j, -hyz), (j, n + i, -hyz)):
                h[a, b] += v
                h[b, a] += v
    return energy, g, h


def coulomb_grad_hess_numpy(y, z, alpha):
    n = y.shape[0]
    dy = y[:, None] - y[None, :]
    dz = z[:, None] - z[None, :]
    r2 = dy**2 + dz**2
    np.fill_diagonal(r2, 1.0)
    r = np.sqrt(r2)
    inv3 = 1.0 / (r2 * r)
    inv5 = inv3 / r2
    off = ~np.eye(n, dtype=bool)
    inv1 = np.where(off, 1.0 / r, 0.0)
    inv3 = np.where(off, inv3, 0.0)
    inv5 = np.where(off, inv5, 0.0)

    energy = 0.5 * np.sum(alpha * y**2 + z**2) + 0.5 * inv1.sum()
    g = np.concatenate([alpha * y - np.sum(dy * inv3, axis=1), z - np.sum(dz * inv3, axis=1)])

    kyy = 3.0 * dy**2 * inv5 - inv3
    kzz = 3.0 * dz**2 * inv5 - inv3
    kyz = 3.0 * dy * dz * inv5

    def block(k, diag0):
        return np.diag(diag0 + k.sum(axis=1)) - k

    h = np.empty((2 * n, 2 * n))
    h[:n, :n] = block(kyy, alpha)
    h[n:, n:] = block(kzz, 1.0)
    h[:n, n:] = block(kyz, 0.0)
    h[n:, :n] = h[:n, n:].T
    return energy, g, h


# ---------------------------------------------------------------------------
# Crank-Nicolson propagation of i*hbar dpsi/dt = H(t) psi on a uniform grid.
# H = T + u_fixed + c2(t) * x2half with T the 3-point kinetic operator whose
# diagonal is folded into ``diag_fixed`` and off-diagonal is the scalar ``off``.
# The Cayley form is exactly unitary for Hermitian H.
# ---------------------------------------------------------------------------


@njit
def cn_evolve_numba(psi, diag_fixed, x2half, off, c2_steps, dt, hbar):
    n = psi.shape[0]
    a = 0.5j * dt / hbar
    out = psi.copy()
    cp = np.empty(n, dtype=np.complex128)
    dp = np.empty(n, dtype=np.complex128)
    rhs = np.empty(n, dtype=np.complex128)
    lo = a * off
    for k in range(c2_steps.shape[0]):
        c2 = c2_steps[k]
        for i in range(n):
            d = diag_fixed[i] + c2 * x2half[i]
            r = (1.0 - a * d) * out[i]
            if i > 0:
                r -= lo * out[i - 1]
            if i < n - 1:
                r -= lo * out[i + 1]
            rhs[i] = r
        # Thomas algorithm, constant off-diagonal lo
        b0 = 1.0 + a * (diag_fixed[0] + c2 * x2half[0])
        cp[0] = lo / b0
        dp[0] = rhs[0] / b0
        for i in range(1, n):
            b = 1.0 + a * (diag_fixed[i] + c2 * x2half[i])
            m = b - lo * cp[i - 1]
            cp[i] = lo / m
            dp[i] = (rhs[i] - lo * dp[i - 1]) / m
        out[n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            out[i] = dp[i] - cp[i] * out[i + 1]
    return out


def cn_evolve_numpy(psi, diag_fixed, x2half, off, c2_steps, dt, hbar):
    n = psi.shape[0]
    a = 0.5j * dt / hbar
    out = np.array(psi, dtype=np.complex128)
    ab = np.empty((3, n), dtype=np.complex128)
    ab[0, 0] = 0.0
    ab[0, 1:] = a * off
    ab[2, -1] = 0.0
    ab[2, :-1] = a * off
    for c2 in c2_steps:
        d = diag_fixed + c2 * x2half
        rhs = (1.0 - a * d) * out
        rhs[1:] -= a * off * out[:-1]
        rhs[:-1] -= a * off * out[1:]
        ab[1] = 1.0 + a * d
        out = solve_banded((1, 1), ab, rhs, overwrite_ab=False, overwrite_b=True, check_finite=False)
    return out


# ---------------------------------------------------------------------------
# Two-level optical Bloch equations with pure dephasing.
#   du/dt = -g u + D v,  dv/dt = -D u - g v + W w,  dw/dt = -W v
# starting from (0, 0, -1); returns the excited-state probability (1 + w)/2.
# All rates are angular (rad/s) except g, which is a plain 1/s rate.
# The propagator exp(M t) is computed by scaling and squaring of a Taylor
# series; this is exact to rounding for the 3x3 generator.
# ---------------------------------------------------------------------------

_TAYLOR_TERMS = 12  # truncation error < 1e-16 once the scaled norm is <= 0.25


@njit
def _mm3(a, b, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = a[i, 0] * b[0, j] + a[i, 1] * b[1, j] + a[i, 2] * b[2, j]


@njit
def bloch_excitation_numba(omega, delta, gamma, t):
    n = omega.shape[0]
    out = np.empty(n)
    a = np.zeros((3, 3))
    e = np.empty((3, 3))
    term = np.empty((3, 3))
    tmp = np.empty((3, 3))
    for k in range(n):
        w, d, g = omega[k], delta[k], gamma[k]
        norm = max(abs(g) + abs(d), abs(d) + abs(g) + abs(w), abs(w)) * t
        s = 0
        if norm > 0.25:
            s = int(np.ceil(np.log2(norm / 0.25)))
        h = t / (2.0**s)
        a[0, 0] = -g * h
        a[0, 1] = d * h
        a[1, 0] = -d * h
        a[1, 1] = -g * h
        a[1, 2] = w * h
        a[2, 1] = -w * h
        for i in range(3):
            for j in range(3):
                v = 1.0 if i == j else 0.0
                e[i, j] = v
                term[i, j] = v
        for m in range(1, _TAYLOR_TERMS + 1):
            _mm3(term, a, tmp)
            for i in range(3):
                for j in range(3):
                    term[i, j] = tmp[i, j] / m
                    e[i, j] += term[i, j]
        for _ in range(s):
            _mm3(e, e, tmp)
            for i in range(3):
                for j in range(3):
                    e[i, j] = tmp[i, j]
        # initial Bloch vector (0, 0, -1)
        p = 0.5 * (1.0 - e[2, 2])
        out[k] = min(max(p, 0.0), 1.0)
    return out


def bloch_excitation_numpy(omega, delta, gamma, t):
    n = omega.shape[0]
    m = np.zeros((n, 3, 3))
    m[:, 0, 0] = -gamma
    m[:, 0, 1] = delta
    m[:, 1, 0] = -delta
    m[:, 1, 1] = -gamma
    m[:, 1, 2] = omega
    m[:, 2, 1] = -omega
    norm = np.abs(m).sum(axis=2).max(axis=1) * t
    s = np.where(norm > 0.25, np.ceil(np.log2(np.maximum(norm, 1e-300) / 0.25)), 0).astype(int)
    a = m * (t / 2.0**s)[:, None, None]
    e = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    term = e.copy()
    for k in range(1, _TAYLOR_TERMS + 1):
        term = term @ a / k
        e = e + term
    for level in range(int(s.max(initial=0))):
        sel = s > level
        e[sel] = e[sel] @ e[sel]
    p = 0.5 * (1.0 - e[:, 2, 2])
    return np.clip(p, 0.0, 1.0)


if USE_NUMBA:
    coulomb_grad_hess = coulomb_grad_hess_numba
    cn_evolve = cn_evolve_numba
    bloch_excitation = bloch_excitation_numba
else:
    coulomb_grad_hess = coulomb_grad_hess_numpy
    cn_evolve = cn_evolve_numpy
    bloch_excitation = bloch_excitation_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
