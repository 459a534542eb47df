"""Equilibrium structures and normal modes of an N-ion crystal in the y-z plane.

The dimensionless potential is

    V = sum_i (alpha y_i^2 + z_i^2) / 2 + sum_{i<j} 1/|r_i - r_j| + sum_i sum_{(a,b)} lam[a,b] y_i^a z_i^b

with lengths in units of the Coulomb length.  Coordinate vectors are packed
as ``(y_1, ..., y_N, z_1, ..., z_N)`` with ions ordered by increasing z.

Sign conventions (no convention is fixed by the underlying physics):

* a zigzag structure is labelled ``zigzag_R`` when the leftmost ion (smallest z)
  has y > 0, and ``zigzag_L`` otherwise;
* the zigzag mode vector is oriented so that ion ``(N - 1) // 2`` (the central
  ion for odd N, the one just left of centre for even N) has positive y amplitude.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import ConvergenceError, DomainError, InstabilityError

LINEAR = "linear"
ZIGZAG_L = "zigzag_L"
ZIGZAG_R = "zigzag_R"
PHASES = (LINEAR, ZIGZAG_L, ZIGZAG_R)

GRAD_TOL = 1e-10
HESS_TOL = 1e-9


@dataclass(frozen=True)
class CrystalState:
    N: int
    alpha: float
    positions: np.ndarray  # shape (N, 2): columns (y, z)
    energy: float
    phase_label: str

    @property
    def y(self):
        return self.positions[:, 0]

    @property
    def z(self):
        return self.positions[:, 1]

    @property
    def coords(self):
        return np.concatenate([self.y, self.z])


@dataclass(frozen=True)
class ModeSpectrum:
    frequencies: np.ndarray  # units of omega_z, ascending
    vectors: np.ndarray  # columns are modes over packed coordinates
    zigzag_index: int
    eigenvalues: np.ndarray

    @property
    def zigzag_frequency(self):
        return self.frequencies[self.zigzag_index]

    @property
    def zigzag_vector(self):
        return self.vectors[:, self.zigzag_index]


# ---------------------------------------------------------------------------
# potential evaluation
# ---------------------------------------------------------------------------


def _ipow(x, k):
    return np.ones_like(x) if k == 0 else x**k


def perturbation_terms(y, z, lam):
    """Energy, gradient and Hessian of the single-ion polynomial perturbation."""
    n = y.shape[0]
    e = 0.0
    g = np.zeros(2 * n)
    h = np.zeros((2 * n, 2 * n))
    idx = np.arange(n)
    for (a, b), c in (lam or {}).items():
        if c == 0.0:
            continue
        e += c * np.sum(_ipow(y, a) * _ipow(z, b))
        if a >= 1:
            g[:n] += c * a * _ipow(y, a - 1) * _ipow(z, b)
        if b >= 1:
            g[n:] += c * b * _ipow(y, a) * _ipow(z, b - 1)
        if a >= 2:
            h[idx, idx] += c * a * (a - 1) * _ipow(y, a - 2) * _ipow(z, b)
        if b >= 2:
            h[n + idx, n + idx] += c * b * (b - 1) * _ipow(y, a) * _ipow(z, b - 2)
        if a >= 1 and b >= 1:
            cross = c * a * b * _ipow(y, a - 1) * _ipow(z, b - 1)
            h[idx, n + idx] += cross
            h[n + idx, idx] += cross
    return e, g, h


def potential(coords, alpha, lam=None):
    """Energy, gradient and Hessian of the full dimensionless potential."""
    coords = np.asarray(coords, dtype=float)
    n = coords.size // 2
    y, z = np.ascontiguousarray(coords[:n]), np.ascontiguousarray(coords[n:])
    e, g, h = kernels.coulomb_grad_hess(y, z, float(alpha))
    if lam:
        ep, gp, hp = perturbation_terms(y, z, lam)
        e, g, h = e + ep, g + gp, h + hp
    return e, g, h


# ---------------------------------------------------------------------------
# equilibria
# ---------------------------------------------------------------------------


def _linear_guess(N):
    # spacing heuristic for a harmonic axial well; Newton does the rest
    half = 0.63 * (N - 1) ** 0.78 if N > 1 else 0.0
    return np.linspace(-half, half, N)


def _odd_lambda_scale(lam):
    return max((abs(v) for (a, _), v in (lam or {}).items() if a % 2 == 1), default=0.0)


def _label(y, z, lam):
    tol = 1e-8 + 100.0 * _odd_lambda_scale(lam)
    if np.max(np.abs(y)) < tol:
        return LINEAR
    return ZIGZAG_R if y[np.argmin(z)] > 0 else ZIGZAG_L


def _relax(x, alpha, lam, *, saddle_free, max_iter=400):
    """Damped Newton iteration.

    With ``saddle_free`` the Hessian spectrum is replaced by its absolute
    values, which turns every step into a descent direction (the iteration then
    slides off saddles instead of converging to them).  Without it the
    iteration converges to the nearest stationary point, saddle or not.
    """
    x = np.array(x, dtype=float)
    e, g, h = potential(x, alpha, lam)
    for _ in range(max_iter):
        if np.max(np.abs(g)) < GRAD_TOL:
            return x, e, g, h
        w, v = np.linalg.eigh(h)
        scale = max(np.max(np.abs(w)), 1.0)
        if saddle_free:
            w_eff = np.maximum(np.abs(w), 1e-8 * scale)
        else:
            w_eff = np.where(np.abs(w) < 1e-12 * scale, 1e-12 * scale, w)
        step = -v @ ((v.T @ g) / w_eff)
        t = 1.0
        while True:
            x_new = x + t * step
            n = x.size // 2
            zn = x_new[n:]
            if np.all(np.diff(zn) > 0):
                e_new, g_new, h_new = potential(x_new, alpha, lam)
                if not saddle_free:
                    ok = np.max(np.abs(g_new)) < (1 - 1e-4 * t) * np.max(np.abs(g)) or t < 1e-3
                else:
                    ok = e_new <= e + 1e-4 * t * float(g @ step) + 1e-15 * abs(e)
                if ok:
                    break
            t *= 0.5
            if t < 1e-12:
                if np.max(np.abs(g)) < 1e3 * GRAD_TOL:
                    return x, e, g, h
                raise ConvergenceError("line search failed", last_iterate=x)
        x, e, g, h = x_new, e_new, g_new, h_new
    raise ConvergenceError(f"no convergence after {max_iter} iterations", last_iterate=x)


def _make_state(N, alpha, x, e, lam):
    y, z = x[:N].copy(), x[N:].copy()
    order = np.argsort(z, kind="stable")
    y, z = y[order], z[order]
    return CrystalState(N=N, alpha=float(alpha), positions=np.column_stack([y, z]),
                        energy=float(e), phase_label=_label(y, z, lam))


@lru_cache(maxsize=64)
def _linear_z_cached(N):
    x0 = np.concatenate([np.zeros(N), _linear_guess(N)])
    x, *_ = _relax(x0, 1.0, None, saddle_free=False)
    return x[N:]


def linear_configuration(N, alpha=1.0, lam=None) -> CrystalState:
    """Stationary linear chain (a saddle when alpha is below the critical value)."""
    if N < 1:
        raise DomainError("need at least one ion")
    x0 = np.concatenate([np.zeros(N), _linear_z_cached(N) if N > 1 else np.zeros(1)])
    x, e, _, _ = _relax(x0, alpha, lam, saddle_free=False)
    return _make_state(N, alpha, x, e, lam)


def _alternating(N):
    v = np.zeros(2 * N)
    v[:N] = (-1.0) ** np.arange(N)
    return v / math.sqrt(N)


def equilibrium(N, alpha, lam=None, seed_hint=None) -> CrystalState:
    """Local minimum of the crystal potential.

    ``seed_hint`` selects the branch below the critical point: ``zigzag_L`` or
    ``zigzag_R`` seed from the linear chain displaced by 0.05 along the zigzag
    mode; ``linear`` (or None) seeds at the chain and, if that is unstable,
    relaxes towards ``zigzag_R``.
    """
    if N < 1:
        raise DomainError("need at least one ion")
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    if seed_hint not in (None,) + PHASES:
        raise DomainError(f"unknown seed_hint {seed_hint!r}")
    lin = linear_configuration(N, alpha, lam)
    if N == 1:
        return lin
    x = lin.coords
    _, _, h = potential(x, alpha, lam)
    w, v = np.linalg.eigh(h)
    unstable = w[0] < -HESS_TOL
    if seed_hint in (ZIGZAG_L, ZIGZAG_R) or unstable:
        # displacement along the softest transverse-alternating direction
        alt = _alternating(N)
        k = int(np.argmax(np.abs(v.T @ alt))) if not unstable else 0
        d = v[:, k].copy()
        leftmost = int(np.argmin(x[N:]))
        want_right = seed_hint != ZIGZAG_L
        if (d[leftmost] > 0) != want_right:
            d = -d
        x = x + 0.05 * d
    x, e, g, h = _relax(x, alpha, lam, saddle_free=True)
    return _make_state(N, alpha, x, e, lam)


# ---------------------------------------------------------------------------
# normal modes
# ---------------------------------------------------------------------------


def _orient(vectors, N, zz):
    out = vectors.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        if k == zz:
            ref = col[(N - 1) // 2]
            if abs(ref) < 1e-8:
                ref = col[np.argmax(np.abs(col[:N]))]
        else:
            nz = np.flatnonzero(np.abs(col) > 1e-8)
            ref = col[nz[0]] if nz.size else 1.0
        if ref < 0:
            out[:, k] = -col
    return out


def zigzag_mode_index(vectors, N):
    return int(np.argmax(np.abs(vectors.T @ _alternating(N))))


def normal_modes(state: CrystalState, lam=None) -> ModeSpectrum:
    """Mode frequencies (units of omega_z) and orthonormal mode vectors."""
    N = state.N
    e, g, h = potential(state.coords, state.alpha, lam)
    if np.max(np.abs(g)) > 1e3 * GRAD_TOL:
        raise DomainError(f"state is not stationary (|grad| = {np.max(np.abs(g)):.2e})")
    w, v = np.linalg.eigh(0.5 * (h + h.T))
    if w[0] < -HESS_TOL:
        raise InstabilityError(f"Hessian eigenvalue {w[0]:.3e} < 0: state is a saddle")
    order = np.argsort(w, kind="stable")
    w, v = w[order], v[:, order]
    zz = zigzag_mode_index(v, N) if N > 1 else int(np.argmax(np.abs(v[0])))
    v = _orient(v, N, zz)
    freqs = np.sqrt(np.clip(w, 0.0, None))
    return ModeSpectrum(frequencies=freqs, vectors=v, zigzag_index=zz, eigenvalues=w)


def linear_modes(N, alpha, lam=None):
    """Eigen-decomposition at the linear chain without the stability check.

    Returns the same fields as :func:`normal_modes`; eigenvalues may be
    negative below the critical point (frequencies are then reported as
    ``-sqrt(|w|)`` for the unstable modes).
    """
    state = linear_configuration(N, alpha, lam)
    _, _, h = potential(state.coords, alpha, lam)
    w, v = np.linalg.eigh(0.5 * (h + h.T))
    zz = zigzag_mode_index(v, N)
    v = _orient(v, N, zz)
    freqs = np.sign(w) * np.sqrt(np.abs(w))
    return state, ModeSpectrum(frequencies=freqs, vectors=v, zigzag_index=zz, eigenvalues=w)


def zigzag_eigenvalue_linear(N, alpha):
    """Squared zigzag-mode frequency of the ideal linear chain."""
    z = _linear_z_cached(N)
    _, _, h = kernels.coulomb_grad_hess(np.zeros(N), np.ascontiguousarray(z), float(alpha))
    w, v = np.linalg.eigh(h[:N, :N])
    return float(w[int(np.argmax(np.abs(v.T @ ((-1.0) ** np.arange(N)))))])


def critical_alpha_pseudo(N, tol=1e-12) -> float:
    """Pseudopotential critical aspect ratio by bisection of the zigzag eigenvalue."""
    if not 2 <= N <= 20:
        raise DomainError("critical_alpha_pseudo supports 2 <= N <= 20")
    lo, hi = 0.0, 1.0
    while zigzag_eigenvalue_linear(N, hi) <= 0:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if zigzag_eigenvalue_linear(N, mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# CSV emitters
# ---------------------------------------------------------------------------


def write_positions_csv(state: CrystalState, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ion", "y", "z"])
        for i, (y, z) in enumerate(state.positions):
            w.writerow([i, f"{y:.12e}", f"{z:.12e}"])


def write_modes_csv(modes: ModeSpectrum, nu_z, path):
    n2 = modes.vectors.shape[0]
    N = n2 // 2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "frequency_Hz", "zigzag"] + [f"y{i}" for i in range(N)] + [f"z{i}" for i in range(N)])
        for k in range(n2):
            w.writerow([k, f"{modes.frequencies[k] * nu_z:.9e}", int(k == modes.zigzag_index)]
                       + [f"{c:.12e}" for c in modes.vectors[:, k]])
