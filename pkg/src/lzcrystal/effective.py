"""Quartic effective potential of the zigzag mode.

The crystal potential is Taylor-expanded about the linear chain in the
normal-mode coordinates of the ideal trap.  All non-zigzag modes are slaved to
the zigzag coordinate ``phi`` by solving their static force balance as a power
series in ``phi``; substituting back gives

    U(phi) = C1 phi + C2 phi^2 / 2 + C3 phi^3 / 3 + C4 phi^4 / 4.

Trap perturbations ``lam[(a, b)] * y^a z^b`` are kept to first order: their
contribution is the perturbation evaluated along the unperturbed elimination
path (first-order change of a constrained minimum).  This gives C1 and C3 and
the first-order shifts of C2 and C4, which are reported but not used in
``ZigzagPotential.C2`` / ``C4`` (those stay at their ideal-trap values).

Orientation: the zigzag mode vector has positive y amplitude on ion
``(N - 1) // 2``; the well at ``phi < 0`` is called R and ``phi > 0`` is L.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import constants

from . import crystal
from .errors import DegeneracyError, DomainError
from .trap import UnitSystem, micromotion_corrected_alpha_c, TrapConfig

SUPPORTED_ORDERS = (5, 6)


# ---------------------------------------------------------------------------
# Taylor tensors
# ---------------------------------------------------------------------------


def _binom_half(k):
    # binomial(-1/2, k)
    out = 1.0
    for i in range(k):
        out *= (-0.5 - i) / (i + 1)
    return out


def _falling(x, b):
    out = 1.0
    for i in range(b):
        out *= x - i
    return out


def pair_derivatives(d, order):
    """D[a, b] = d^a/du^a d^b/dv^b (u^2 + v^2)^(-1/2) at (0, d), a + b <= order."""
    D = np.zeros((order + 1, order + 1))
    ad = abs(d)
    sg = math.copysign(1.0, d)
    for a in range(0, order + 1, 2):
        p = a + 1
        base = math.factorial(a) * _binom_half(a // 2)
        for b in range(0, order + 1 - a):
            D[a, b] = base * _falling(-p, b) * ad ** (-p - b) * sg**b
    return D


def _accumulate_symmetric(out, coeffs, u, v, order):
    """Add sum_{a+b=n} coeffs[a, b] * S(a, b) for every n <= order into ``out[n]``.

    S(a, b) is the sum over all placements of ``a`` copies of ``u`` and ``b``
    copies of ``v`` in an order-n tensor product; it obeys
    S(a, b) = u (x) S(a-1, b) + v (x) S(a, b-1).
    """
    prev = {(0, 0): np.array(1.0)}
    for n in range(1, order + 1):
        cur = {}
        for a in range(n + 1):
            b = n - a
            t = 0.0
            if a > 0:
                t = np.multiply.outer(u, prev[(a - 1, b)])
            if b > 0:
                t = t + np.multiply.outer(v, prev[(a, b - 1)])
            cur[(a, b)] = t
            c = coeffs[a, b] if a < coeffs.shape[0] and b < coeffs.shape[1] else 0.0
            if c != 0.0 and n in out:
                out[n] += c * t
        prev = cur


def coulomb_tensors(z, B, order):
    """Mode-coordinate derivative tensors of the Coulomb energy, orders 3..order."""
    N = z.size
    dim = 2 * N
    out = {n: np.zeros((dim,) * n) for n in range(3, order + 1)}
    for i in range(N):
        for j in range(i + 1, N):
            D = pair_derivatives(z[i] - z[j], order)
            D[:, :] = np.where(np.add.outer(np.arange(order + 1), np.arange(order + 1)) >= 3, D, 0.0)
            u = B[i] - B[j]
            v = B[N + i] - B[N + j]
            _accumulate_symmetric(out, D, u, v, order)
    return out


def perturbation_tensors(z, B, term, order):
    """Mode-coordinate Taylor tensors (orders 1..order) of sum_i y_i^a z_i^b at y = 0."""
    a, b = term
    N = z.size
    dim = 2 * N
    out = {n: np.zeros((dim,) * n) for n in range(1, order + 1)}
    value = float(np.sum(z**b)) if a == 0 else 0.0
    for i in range(N):
        coeffs = np.zeros((order + 1, order + 1))
        for bb in range(0, min(b, order - a) + 1):
            if a + bb == 0:
                continue
            coeffs[a, bb] = math.factorial(a) * _falling(b, bb) * z[i] ** (b - bb)
        _accumulate_symmetric(out, coeffs, B[i], B[N + i], order)
    return value, out


@dataclass(frozen=True)
class CouplingTensors:
    """Taylor coefficients of the crystal potential in normal-mode coordinates.

    ``coulomb[n]`` is the order-n derivative tensor (n >= 3) at the linear
    chain; ``perturbation[(a, b)][k]`` are the order-k derivative tensors of
    ``sum_i y_i^a z_i^b`` (multiply by ``lam[(a, b)]`` for the coupling).
    """

    N: int
    order: int
    z: np.ndarray
    B: np.ndarray
    eigenvalues: np.ndarray  # unperturbed Hessian eigenvalues at alpha
    zigzag_index: int
    alpha: float
    coulomb: dict
    perturbation: dict = field(default_factory=dict)
    lam: dict = field(default_factory=dict)

    def cubic(self):
        return self.coulomb[3]

    def quartic(self):
        return self.coulomb[4]


def expand_modes(state, modes, lam=None, order=5) -> CouplingTensors:
    """Expand the potential about a linear chain to the given order."""
    if order not in SUPPORTED_ORDERS:
        raise DomainError(f"order must be one of {SUPPORTED_ORDERS}")
    N = state.N
    if np.max(np.abs(state.y)) > 1e-8:
        raise DomainError("expansion point must be the ideal linear chain")
    z = state.z
    B = modes.vectors
    coul = coulomb_tensors(z, B, order)
    pert = {}
    for term in sorted(lam or {}):
        _, tens = perturbation_tensors(z, B, term, order)
        pert[term] = tens
    return CouplingTensors(N=N, order=order, z=z, B=B, eigenvalues=np.asarray(modes.eigenvalues),
                           zigzag_index=modes.zigzag_index, alpha=state.alpha, coulomb=coul,
                           perturbation=pert, lam=dict(lam or {}))


# ---------------------------------------------------------------------------
# power series in phi
# ---------------------------------------------------------------------------


def _contract(T, P, K):
    """Contract every index of ``T`` except the first with the polynomial
    vector ``P`` (shape (dim, K+1)); returns (dim, K+1) truncated at phi^K."""
    n = T.ndim
    A = np.zeros(T.shape + (K + 1,))  # power axis last
    A[..., 0] = T
    for _ in range(n - 1):
        # contract the last tensor index (axis -2) with P
        new = np.zeros(A.shape[:-2] + (K + 1,))
        for p1 in range(K + 1):
            slab = A[..., p1]
            if not np.any(slab):
                continue
            prod = np.tensordot(slab, P[:, : K + 1 - p1], axes=([slab.ndim - 1], [0]))
            new[..., p1:] += prod
        A = new
    return A


def _full_contract(T, P, K):
    g = _contract(T, P, K)  # (dim, K+1) polynomial vector
    return _poly_dot(g, P, K)


def _poly_dot(g, P, K):
    out = np.zeros(K + 1)
    for p1 in range(K + 1):
        out[p1:] += g[:, p1] @ P[:, : K + 1 - p1]
    return out


def elimination_path(tensors: CouplingTensors, alpha=None, K=None):
    """Series coefficients q_k(phi) of all mode coordinates, truncated at phi^K.

    Returns array (2N, K+1).  Only the ideal (unperturbed) potential enters.
    """
    order = tensors.order
    K = order - 1 if K is None else K
    zz = tensors.zigzag_index
    N = tensors.N
    w = _eigenvalues_at(tensors, alpha)
    others = np.array([k for k in range(2 * N) if k != zz])
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.min(np.abs(w[others])) < 1e-6 * scale:
        raise DegeneracyError("a non-zigzag mode is soft; adiabatic elimination is invalid")
    P = np.zeros((2 * N, K + 1))
    P[zz, 1] = 1.0
    for _ in range(K):
        F = np.zeros((2 * N, K + 1))
        for n, T in tensors.coulomb.items():
            F += _contract(T, P, K) / math.factorial(n - 1)
        new = np.zeros_like(P)
        new[others] = -F[others] / w[others, None]
        new[others, :2] = 0.0
        new[zz] = P[zz]
        P = new
    return P


def _eigenvalues_at(tensors, alpha):
    w = np.array(tensors.eigenvalues, dtype=float)
    if alpha is None or alpha == tensors.alpha:
        return w
    # transverse modes shift rigidly with alpha; axial ones do not
    N = tensors.N
    yweight = np.sum(tensors.B[:N] ** 2, axis=0)
    return w + (alpha - tensors.alpha) * yweight


def ideal_series(tensors: CouplingTensors, alpha=None):
    """U_0(phi) polynomial coefficients (index = power) for the ideal trap."""
    K = tensors.order
    P = elimination_path(tensors, alpha, K=K - 1)
    Pk = np.zeros((P.shape[0], K + 1))
    Pk[:, : P.shape[1]] = P
    w = _eigenvalues_at(tensors, alpha)
    u = np.zeros(K + 1)
    u += 0.5 * _poly_dot(w[:, None] * Pk, Pk, K)
    for n, T in tensors.coulomb.items():
        u += _full_contract(T, Pk, K) / math.factorial(n)
    return u


def perturbation_series(tensors: CouplingTensors, term, alpha=None):
    """First-order contribution of ``sum_i y^a z^b`` (unit coefficient) to U(phi)."""
    K = tensors.order
    if term in tensors.perturbation:
        tens = tensors.perturbation[term]
    else:
        _, tens = perturbation_tensors(tensors.z, tensors.B, term, K)
    P = elimination_path(tensors, alpha, K=K - 1)
    Pk = np.zeros((P.shape[0], K + 1))
    Pk[:, : P.shape[1]] = P
    u = np.zeros(K + 1)
    for k, T in tens.items():
        if k == 1:
            u += T @ Pk
        else:
            u += _full_contract(T, Pk, K) / math.factorial(k)
    return u


# ---------------------------------------------------------------------------
# effective potential
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZigzagPotential:
    C1: float
    C2: float
    C3: float
    C4: float
    alpha: float
    alpha_c: float
    hbar_eff: float
    N: int
    delta_C2: float = 0.0  # first-order trap-perturbation shifts, not applied
    delta_C4: float = 0.0

    def U(self, phi):
        phi = np.asarray(phi, dtype=float)
        return phi * (self.C1 + phi * (self.C2 / 2 + phi * (self.C3 / 3 + phi * self.C4 / 4)))

    def dU(self, phi):
        phi = np.asarray(phi, dtype=float)
        return self.C1 + phi * (self.C2 + phi * (self.C3 + phi * self.C4))

    def d2U(self, phi):
        phi = np.asarray(phi, dtype=float)
        return self.C2 + phi * (2 * self.C3 + 3 * self.C4 * phi)

    def with_bias(self, C1=None, C3=None) -> "ZigzagPotential":
        return replace(self, C1=self.C1 if C1 is None else C1, C3=self.C3 if C3 is None else C3)

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("N", "alpha", "alpha_c", "C1", "C2", "C3", "C4", "hbar_eff", "delta_C2", "delta_C4")}


def reduce_to_zigzag(tensors: CouplingTensors, modes=None, alpha=None, alpha_c=None,
                     hbar_eff=1.0, nu_z=None) -> ZigzagPotential:
    """Collapse the mode expansion to the zigzag potential ``U(phi)``.

    ``alpha_c`` defaults to the critical point of the expansion (where the
    zigzag eigenvalue vanishes); C2 is ``alpha - alpha_c`` exactly.
    """
    if modes is not None and modes.zigzag_index != tensors.zigzag_index:
        raise DomainError("modes and tensors disagree on the zigzag mode")
    a_expand = tensors.alpha
    if alpha_c is None:
        alpha_c = a_expand - tensors.eigenvalues[tensors.zigzag_index]
    alpha = alpha_c if alpha is None else alpha
    C2 = alpha - alpha_c
    if abs(C2) > 0.5:
        warnings.warn(f"|C2| = {abs(C2):.3g} is far from the critical point", RuntimeWarning, stacklevel=2)
    a_eval = a_expand - tensors.eigenvalues[tensors.zigzag_index]  # expansion at the critical point
    u0 = ideal_series(tensors, alpha=a_eval)
    C4 = 4.0 * u0[4]
    u1 = np.zeros_like(u0)
    for term, value in tensors.lam.items():
        if value:
            u1 += value * perturbation_series(tensors, term, alpha=a_eval)
    pot = ZigzagPotential(C1=float(u1[1]), C2=float(C2), C3=float(3.0 * u1[3]), C4=float(C4),
                          alpha=float(alpha), alpha_c=float(alpha_c), hbar_eff=float(hbar_eff), N=tensors.N,
                          delta_C2=float(2.0 * u1[2]), delta_C4=float(4.0 * u1[4]))
    if nu_z is not None:
        check_validity(pot, nu_z)
    return pot


def check_validity(pot: ZigzagPotential, nu_z, limit_hz=100e3):
    """Warn when the implied zigzag-side mode frequency exceeds ``limit_hz``."""
    if pot.C2 < 0:
        f = nu_z * math.sqrt(-2.0 * pot.C2)
        if f > limit_hz:
            warnings.warn(f"zigzag-side frequency {f / 1e3:.0f} kHz: quartic model breaks down",
                          RuntimeWarning, stacklevel=3)


@lru_cache(maxsize=32)
def _ideal_expansion(N, order=5):
    alpha_c0 = crystal.critical_alpha_pseudo(N)
    state, modes = crystal.linear_modes(N, alpha_c0)
    return alpha_c0, expand_modes(state, modes, None, order=order)


def ideal_coefficients(N, order=5):
    """(alpha_c0, C4) for the ideal trap."""
    alpha_c0, tens = _ideal_expansion(N, order)
    return alpha_c0, reduce_to_zigzag(tens, alpha=alpha_c0, alpha_c=alpha_c0).C4


def zigzag_potential(N, alpha, lam=None, alpha_c=None, hbar_eff=1.0, order=5) -> ZigzagPotential:
    """Convenience pipeline: linear chain -> modes -> expansion -> reduction."""
    alpha_c0, tens = _ideal_expansion(N, order)
    if lam:
        tens = replace(tens, lam=dict(lam), perturbation={})
    return reduce_to_zigzag(tens, alpha=alpha, alpha_c=alpha_c0 if alpha_c is None else alpha_c,
                            hbar_eff=hbar_eff)


def bias_sensitivity(N, term):
    """Linear response (dC1/dlam, dC3/dlam) of the bias coefficients to one term."""
    if not 2 <= N <= 7:
        raise DomainError("bias_sensitivity supports 2 <= N <= 7")
    a, b = (int(t) for t in term)
    if a < 0 or b < 0 or a + b > 6 or a + b < 2:
        raise DomainError("term must satisfy 2 <= i + j <= 6")
    alpha_c0, tens = _ideal_expansion(N)
    u = perturbation_series(tens, (a, b), alpha=alpha_c0)
    return float(u[1]), float(3.0 * u[3])


def sensitivity_table(ions, terms):
    return {f"{N},{i},{j}": dict(zip(("dC1", "dC3"), bias_sensitivity(N, (i, j))))
            for N in ions for (i, j) in terms}


def potential_json(pot: ZigzagPotential, **extra):
    return json.dumps({**pot.to_dict(), **extra}, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# classical analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Branch:
    phi: float
    U: float
    curvature: float

    @property
    def is_minimum(self):
        return self.curvature > 0


def stationary_points(pot: ZigzagPotential):
    """All real roots of dU/dphi, sorted by phi."""
    coeffs = [pot.C4, pot.C3, pot.C2, pot.C1]
    if pot.C4 == 0:
        coeffs = coeffs[1:] if pot.C3 != 0 else coeffs[2:]
    roots = np.roots(coeffs) if len(coeffs) > 1 else np.array([])
    scale = max(np.max(np.abs(roots)) if roots.size else 0.0, 1e-12)
    out = []
    for r in roots:
        if abs(r.imag) > 1e-7 * scale:
            continue
        x = r.real
        for _ in range(50):
            d2 = float(pot.d2U(x))
            if d2 == 0:
                break
            step = float(pot.dU(x)) / d2
            x -= step
            if abs(step) <= 1e-16 * max(abs(x), 1e-300):
                break
        if all(abs(x - b.phi) > 1e-12 * scale for b in out):
            out.append(Branch(phi=float(x), U=float(pot.U(x)), curvature=float(pot.d2U(x))))
    return sorted(out, key=lambda b: b.phi)


def classical_minima(pot: ZigzagPotential):
    """Minima of U (one for a single well, two for a double well)."""
    return [b for b in stationary_points(pot) if b.is_minimum]


def barrier(pot: ZigzagPotential):
    """Local maximum between the two wells, or None for a single well."""
    pts = stationary_points(pot)
    mins = [b for b in pts if b.is_minimum]
    if len(mins) < 2:
        return None
    inner = [b for b in pts if not b.is_minimum and mins[0].phi < b.phi < mins[-1].phi]
    return inner[0] if inner else None


# ---------------------------------------------------------------------------
# alpha -> potential families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialFamily:
    """Zigzag potentials along a transverse-frequency scan.

    The control parameter enters only through ``C2 = (nu_y^2 - nu_yc^2) / nu_z^2``.
    """

    N: int
    C4: float
    nu_z: float
    nu_yc: float
    hbar_eff: float
    C1: float = 0.0
    C3: float = 0.0

    @classmethod
    def for_ions(cls, N, nu_z=None, nu_yc=None, C1=0.0, C3=0.0, trap: TrapConfig | None = None,
                 mass=None, micromotion=False):
        """Build from first principles.

        Give ``nu_z`` or ``nu_yc`` (or a ``trap``).  If only ``nu_yc`` is given,
        ``nu_z = nu_yc / sqrt(alpha_c)``.
        """
        alpha_c0, C4 = ideal_coefficients(N)
        alpha_c = alpha_c0
        charge = constants.e
        if trap is not None:
            nu_z = trap.nu_z0 if nu_z is None else nu_z
            if micromotion:
                alpha_c = micromotion_corrected_alpha_c(trap, alpha_c0)
            mass = trap.ion_mass
            charge = trap.ion_charge
        if nu_z is None and nu_yc is None:
            raise DomainError("need nu_z, nu_yc or a trap")
        if nu_z is None:
            nu_z = nu_yc / math.sqrt(alpha_c)
        if nu_yc is None:
            nu_yc = nu_z * math.sqrt(alpha_c)
        units = UnitSystem.yb171(nu_z) if mass is None else UnitSystem.from_trap(mass, charge, nu_z)
        return cls(N=N, C4=C4, nu_z=float(nu_z), nu_yc=float(nu_yc), hbar_eff=units.hbar_eff, C1=C1, C3=C3)

    @property
    def alpha_c(self):
        return (self.nu_yc / self.nu_z) ** 2

    def units(self):
        return UnitSystem(a_z=float("nan"), E0=float("nan"), hbar_eff=self.hbar_eff, nu_z=self.nu_z)

    def c2_of_nu_y(self, nu_y):
        return (np.asarray(nu_y, dtype=float) ** 2 - self.nu_yc**2) / self.nu_z**2

    def nu_y_of_c2(self, c2):
        return np.sqrt(self.nu_yc**2 + np.asarray(c2) * self.nu_z**2)

    def at_alpha(self, alpha) -> ZigzagPotential:
        return ZigzagPotential(C1=self.C1, C2=float(alpha - self.alpha_c), C3=self.C3, C4=self.C4,
                               alpha=float(alpha), alpha_c=self.alpha_c, hbar_eff=self.hbar_eff, N=self.N)

    def at_c2(self, c2) -> ZigzagPotential:
        return self.at_alpha(self.alpha_c + float(c2))

    def at_nu_y(self, nu_y) -> ZigzagPotential:
        return self.at_c2(float(self.c2_of_nu_y(nu_y)))

    def at_detuning(self, dnu_y) -> ZigzagPotential:
        """Potential at ``nu_y = nu_yc + dnu_y`` (Hz)."""
        return self.at_nu_y(self.nu_yc + dnu_y)

    def energy_to_hz(self, e):
        return np.asarray(e) * self.nu_z / self.hbar_eff

    def with_bias(self, C1=None, C3=None) -> "PotentialFamily":
        return replace(self, C1=self.C1 if C1 is None else C1, C3=self.C3 if C3 is None else C3)
