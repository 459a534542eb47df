"""One-dimensional quantum mechanics of the zigzag coordinate.

Hamiltonian (dimensionless, energies in units of ``m w_z^2 a_z^2``)::

    H = -(hbar_eff^2 / 2) d^2/dphi^2 + U(phi)

discretised with second-order central differences on a uniform grid.  Energy
differences convert to cyclic frequencies as ``dE * nu_z / hbar_eff``; time
evolution uses ``tau = 2 pi nu_z t``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import minimize_scalar

from . import kernels
from .effective import PotentialFamily, ZigzagPotential, barrier, classical_minima
from .errors import DomainError, IntegrationError, NotFoundError, ResolutionError

DEFAULT_POINTS = 2048
MAX_POINTS = 1 << 15


# ---------------------------------------------------------------------------
# stationary states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantumSolution:
    phi: np.ndarray
    energies: np.ndarray
    wavefunctions: np.ndarray  # (n_points, n_levels), unit norm under sum * dx
    pot: ZigzagPotential
    nu_z: float | None = None

    @property
    def dx(self):
        return float(self.phi[1] - self.phi[0])

    @property
    def grid(self):
        return float(self.phi[0]), float(self.phi[-1]), self.phi.size

    @property
    def n_levels(self):
        return self.energies.size

    def inner(self, a, b):
        # trapezoid rule; the end points carry a negligible weight
        return np.trapezoid(np.conj(a) * b, dx=self.dx)

    def expectation(self, f, n=0):
        psi = self.wavefunctions[:, n]
        return float(np.trapezoid(psi * f(self.phi) * psi, dx=self.dx))

    def phi_mean(self, n=0):
        return self.expectation(lambda x: x, n)

    def to_hz(self, energy):
        if self.nu_z is None:
            raise DomainError("nu_z unknown: pass nu_z to solve_tise for Hz conversion")
        return np.asarray(energy) * self.nu_z / self.pot.hbar_eff

    def transition_hz(self, n, m):
        return float(self.to_hz(self.energies[m] - self.energies[n]))

    def splitting_hz(self):
        return self.transition_hz(0, 1)


def _kinetic(hbar, dx):
    return hbar**2 / dx**2, -(hbar**2) / (2 * dx**2)


def _diagonalise(pot, phi, n_levels):
    dx = phi[1] - phi[0]
    kd, ko = _kinetic(pot.hbar_eff, dx)
    diag = kd + pot.U(phi)
    off = np.full(phi.size - 1, ko)
    E, V = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_levels - 1))
    V = V / math.sqrt(dx)
    # fixed phase: first appreciable lobe (from the left) positive
    for k in range(V.shape[1]):
        col = V[:, k]
        i = int(np.argmax(np.abs(col) > 1e-3 * np.max(np.abs(col))))
        if col[i] < 0:
            V[:, k] = -col
    return E, V


def turning_point(pot: ZigzagPotential, energy):
    """Largest |phi| with U(phi) = energy."""
    coeffs = np.array([pot.C4 / 4, pot.C3 / 3, pot.C2 / 2, pot.C1, -energy])
    while coeffs.size > 1 and coeffs[0] == 0:
        coeffs = coeffs[1:]
    roots = np.roots(coeffs)
    real = roots[np.abs(roots.imag) <= 1e-9 * max(1.0, np.max(np.abs(roots)))].real
    if real.size == 0:
        raise DomainError("energy below the potential everywhere")
    return float(np.max(np.abs(real)))


def _confining(pot):
    if pot.C4 > 0:
        return True
    return pot.C4 == 0 and pot.C3 == 0 and pot.C2 > 0


def _level_scale(pot, n_levels):
    """Rough size of the region occupied by the first ``n_levels`` states."""
    h = pot.hbar_eff
    # the stiffer of the quartic and harmonic confinements sets the size
    confining = []
    if pot.C4 > 0:
        confining.append((h**2 / pot.C4) ** (1 / 6) * (n_levels + 1) ** (1 / 3))
    if pot.C2 > 0:
        confining.append(math.sqrt(h * (2 * n_levels + 1) / math.sqrt(pot.C2)))
    lengths = [min(confining)] if confining else []
    mins = classical_minima(pot)
    if mins:
        lengths.append(1.5 * max(abs(b.phi) for b in mins))
    return max(lengths)


def auto_half_width(pot: ZigzagPotential, n_levels, n_points=DEFAULT_POINTS):
    """Four times the outer classical turning point of the top requested level."""
    L = 3.0 * _level_scale(pot, n_levels)
    for _ in range(8):
        phi = np.linspace(-L, L, n_points)
        E, _ = _diagonalise(pot, phi, n_levels)
        new = 4.0 * turning_point(pot, E[-1])
        if abs(new - L) <= 0.1 * L:
            return new
        L = new
    return L


def solve_tise(pot: ZigzagPotential, n_levels=6, n_points=None, half_width=None, grid=None,
               nu_z=None, rtol=1e-3, check=True) -> QuantumSolution:
    """Lowest ``n_levels`` eigenpairs of the zigzag Hamiltonian.

    With ``n_points=None`` the grid starts at 2048 points and is doubled until
    the first four levels change by less than ``rtol`` of their spread.  An
    explicit ``n_points`` that fails the same test raises ``ResolutionError``.
    ``grid`` fixes the phi grid (no checks).
    """
    if n_levels < 2:
        raise DomainError("n_levels must be at least 2")
    if not pot.hbar_eff > 0:
        raise DomainError("hbar_eff must be positive")
    if not _confining(pot):
        raise DomainError("potential is not confining (need C4 > 0, or a harmonic C2 > 0)")
    if grid is not None:
        phi = np.asarray(grid, dtype=float)
        E, V = _diagonalise(pot, phi, n_levels)
        return QuantumSolution(phi, E, V, pot, nu_z)

    n = DEFAULT_POINTS if n_points is None else int(n_points)
    L = auto_half_width(pot, n_levels, n) if half_width is None else float(half_width)
    k = max(4, n_levels)
    while True:
        phi = np.linspace(-L, L, n)
        E, V = _diagonalise(pot, phi, k)
        if not check:
            break
        E2, _ = _diagonalise(pot, np.linspace(-L, L, 2 * n), 4)
        spread = max(E[3] - E[0], 1e-300)
        err = float(np.max(np.abs(E2 - E[:4])) / spread)
        if err < rtol:
            break
        if n_points is not None or 2 * n > MAX_POINTS:
            raise ResolutionError(f"levels not converged on {n} points (relative change {err:.2e})")
        n *= 2
    E, V = E[:n_levels], V[:, :n_levels]
    edge = max(np.max(np.abs(V[[0, -1]])), 0.0) / np.max(np.abs(V))
    if check and edge > 1e-6:
        raise ResolutionError(f"wavefunctions reach the grid boundary (edge/max = {edge:.1e})")
    return QuantumSolution(phi, E, V, pot, nu_z)


def solve_family(family: PotentialFamily, dnu_y, n_levels=6, **kw) -> QuantumSolution:
    """TISE at ``nu_y = nu_yc + dnu_y`` with Hz conversion attached."""
    return solve_tise(family.at_detuning(dnu_y), n_levels=n_levels, nu_z=family.nu_z, **kw)


def level_scan(family: PotentialFamily, dnu_values, n_levels=4, **kw):
    """Transition frequencies (Hz) n -> n+1 along a detuning scan; shape (len, n_levels-1)."""
    out = []
    for d in np.asarray(dnu_values, dtype=float):
        sol = solve_family(family, d, n_levels=n_levels, **kw)
        out.append(np.diff(sol.to_hz(sol.energies)))
    return np.array(out)


# ---------------------------------------------------------------------------
# double-well quantities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimumPoint:
    alpha: float
    dnu_y: float
    C2: float
    splitting_hz: float
    phi_mean: float  # classical |phi| at the minima
    phi_localized: float  # |<R|phi|R>| of the localized combination
    pot: ZigzagPotential


def _barrier_margin(pot, n_levels=2):
    top = barrier(pot)
    if top is None:
        return math.inf
    sol = solve_tise(pot, n_levels=max(n_levels, 2))
    return float(sol.energies[1] - top.U)


def optimum_tunneling_point(family: PotentialFamily, step_hz=2.0, max_depth_hz=5e3,
                            xtol_hz=0.01) -> OptimumPoint:
    """Shallowest zigzag-side point where the two lowest levels both sit below the barrier."""
    if family.C4 <= 0:
        raise NotFoundError("no double well: C4 <= 0")

    def margin(d):
        return _barrier_margin(family.at_detuning(d))

    prev = 0.0
    d = -step_hz
    while d >= -max_depth_hz:
        if margin(d) < 0:
            break
        prev = d
        d -= step_hz
    else:
        raise NotFoundError(f"no level pair below the barrier within {max_depth_hz:.0f} Hz of the critical point")
    # sign bisection: the margin jumps where the barrier first appears
    lo, hi = d, prev
    while hi - lo > xtol_hz:
        mid = 0.5 * (lo + hi)
        if margin(mid) < 0:
            lo = mid
        else:
            hi = mid
    d_opt = lo
    pot = family.at_detuning(d_opt)
    sol = solve_tise(pot, n_levels=2, nu_z=family.nu_z)
    mins = classical_minima(pot)
    R = _localized_state(sol, symmetric_reference(sol))
    return OptimumPoint(alpha=pot.alpha, dnu_y=float(d_opt), C2=pot.C2, splitting_hz=sol.splitting_hz(),
                        phi_mean=float(np.mean([abs(b.phi) for b in mins])),
                        phi_localized=abs(float(np.trapezoid(sol.phi * R**2, dx=sol.dx))), pot=pot)


def symmetric_reference(sol: QuantumSolution) -> QuantumSolution:
    """Same potential with the odd terms removed, on the same grid."""
    pot = sol.pot.with_bias(C1=0.0, C3=0.0)
    return solve_tise(pot, n_levels=2, grid=sol.phi, nu_z=sol.nu_z)


def _localized_state(sol, ref):
    psi0, psi1 = ref.wavefunctions[:, 0], ref.wavefunctions[:, 1]
    # R is the phi < 0 well
    if np.trapezoid(sol.phi * psi0 * psi1, dx=ref.dx) > 0:
        psi1 = -psi1
    return (psi0 + psi1) / math.sqrt(2.0)


def localization(sol: QuantumSolution, method="superposition", reference: QuantumSolution | None = None):
    """Probability that the ground state sits in the R (phi < 0) well.

    ``superposition``: |<R|0>|^2 with |R> = (|0> + |1>)/sqrt 2 of the unbiased
    potential.  ``well``: ground-state weight on the R side of the barrier.
    """
    psi = sol.wavefunctions[:, 0]
    if method == "superposition":
        ref = symmetric_reference(sol) if reference is None else reference
        R = _localized_state(sol, ref)
        return float(np.trapezoid(R * psi, dx=sol.dx) ** 2)
    if method == "well":
        top = barrier(sol.pot)
        cut = 0.0 if top is None else top.phi
        w = np.where(sol.phi < cut, psi**2, 0.0)
        return float(np.trapezoid(w, dx=sol.dx))
    raise DomainError(f"unknown localization method '{method}'")


# ---------------------------------------------------------------------------
# ramps and time evolution
# ---------------------------------------------------------------------------


def tanh_profile(x, kappa):
    """Monotone map [0, 1] -> [0, 1] with a tanh-shaped speed profile."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return 0.5 * (1.0 + np.tanh(kappa * (2.0 * x - 1.0)) / math.tanh(kappa))


@dataclass(frozen=True)
class TwoStageTanhRamp:
    """Quadrupole-voltage ramp from the linear side to a zigzag-side endpoint.

    Each stage is a hyperbolic-tangent interpolation in the quadrupole voltage.
    Since ``nu_y^2`` is linear in that voltage, the profile is linear in C2 and
    does not depend on the trap's voltage calibration.  Detunings are
    ``nu_y - nu_yc`` in Hz.
    """

    dnu_end: float
    dnu_start: float = 10e3
    dnu_mid: float = 1e3
    t1: float = 3e-3
    t2: float = 1e-3
    kappa: float = 3.0

    def __post_init__(self):
        if self.t1 < 0 or self.t2 <= 0:
            raise DomainError("stage durations must be positive")
        if self.kappa <= 0:
            raise DomainError("kappa must be positive")

    @property
    def duration(self):
        return self.t1 + self.t2

    def c2(self, family: PotentialFamily, t):
        t = np.asarray(t, dtype=float)
        a, b, c = (family.c2_of_nu_y(family.nu_yc + d) for d in (self.dnu_start, self.dnu_mid, self.dnu_end))
        s1 = a + (b - a) * tanh_profile(t / self.t1, self.kappa) if self.t1 > 0 else np.full_like(t, b)
        s2 = b + (c - b) * tanh_profile((t - self.t1) / self.t2, self.kappa)
        return np.where(t < self.t1, s1, s2)

    def detuning(self, family, t):
        return family.nu_y_of_c2(self.c2(family, t)) - family.nu_yc


@dataclass(frozen=True)
class ConstantRamp:
    """Frozen control parameter; useful as a null test."""

    dnu: float
    duration: float
    t1: float = 0.0

    def c2(self, family, t):
        return np.full_like(np.asarray(t, dtype=float), family.c2_of_nu_y(family.nu_yc + self.dnu))

    def detuning(self, family, t):
        return np.full_like(np.asarray(t, dtype=float), self.dnu)


@dataclass(frozen=True)
class RampResult:
    times: np.ndarray  # s
    c2: np.ndarray
    alpha: np.ndarray
    populations: np.ndarray  # (n_times, n_levels) in the instantaneous basis
    norm: np.ndarray
    psi_final: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)

    @property
    def final(self):
        return self.populations[-1]

    @property
    def ground_change(self):
        return float(self.populations[0, 0] - self.populations[-1, 0])


def solve_tdse(family: PotentialFamily, ramp, initial: QuantumSolution | None = None, n_levels=6,
               n_points=2048, half_width=None, n_snapshots=21, dt_factor=50.0, final_stage_only=True,
               max_steps=50_000_000) -> RampResult:
    """Crank-Nicolson propagation along ``ramp`` starting from a stationary state.

    ``final_stage_only`` starts the evolution at the beginning of the last
    stage (the first stage is slow and far from the critical point).  The time
    step in each snapshot interval is ``1 / (dt_factor * f_max)``, with
    ``f_max`` the largest tracked level frequency at the interval ends.
    """
    t0 = ramp.t1 if final_stage_only else 0.0
    t_end = ramp.duration
    times = np.linspace(t0, t_end, n_snapshots)
    c2_snap = np.asarray(ramp.c2(family, times), dtype=float)
    pots = [family.at_c2(c) for c in c2_snap]
    if half_width is None:
        half_width = max(auto_half_width(pots[i], n_levels, n_points) for i in (0, -1))
    phi = np.linspace(-half_width, half_width, n_points)
    sols = [solve_tise(p, n_levels=n_levels, grid=phi, nu_z=family.nu_z) for p in pots]
    for s in (sols[0], sols[-1]):
        edge = np.max(np.abs(s.wavefunctions[[0, -1]])) / np.max(np.abs(s.wavefunctions))
        if edge > 1e-6:
            raise DomainError("grid too small for the ramp endpoints")
    dx = phi[1] - phi[0]
    h = family.hbar_eff
    kd, ko = _kinetic(h, dx)
    base = family.at_c2(0.0)
    diag_fixed = kd + base.U(phi)
    x2half = 0.5 * phi**2

    psi = (sols[0].wavefunctions[:, 0] if initial is None else initial.wavefunctions[:, 0]).astype(complex)
    if initial is not None and not np.array_equal(initial.phi, phi):
        psi = np.interp(phi, initial.phi, initial.wavefunctions[:, 0]).astype(complex)
        psi /= math.sqrt(np.trapezoid(np.abs(psi) ** 2, dx=dx))

    def project(sol, psi):
        amps = sol.wavefunctions.T @ psi * dx
        return np.abs(amps) ** 2

    pops = [project(sols[0], psi)]
    norms = [float(np.sum(np.abs(psi) ** 2) * dx)]
    omega_z = 2 * math.pi * family.nu_z
    steps_total = 0
    for k in range(1, n_snapshots):
        ta, tb = times[k - 1], times[k]
        f_max = max(sols[i].to_hz(sols[i].energies[-1] - sols[i].energies[0]) for i in (k - 1, k))
        n_steps = max(1, int(math.ceil((tb - ta) * dt_factor * f_max)))
        steps_total += n_steps
        if steps_total > max_steps:
            raise IntegrationError("time-step budget exhausted")
        dt = (tb - ta) / n_steps
        mids = ta + (np.arange(n_steps) + 0.5) * dt
        c2_steps = np.asarray(ramp.c2(family, mids), dtype=float)
        psi = kernels.cn_evolve(psi, diag_fixed, x2half, ko, c2_steps, dt * omega_z, h)
        norm = float(np.sum(np.abs(psi) ** 2) * dx)
        if not abs(norm - norms[0]) < 1e-6:
            raise IntegrationError(f"norm drift {norm - norms[0]:.2e}")
        pops.append(project(sols[k], psi))
        norms.append(norm)
    alpha = family.alpha_c + c2_snap
    return RampResult(times=times, c2=c2_snap, alpha=alpha, populations=np.array(pops), norm=np.array(norms),
                      psi_final=psi, phi=phi)


def endpoint_scan(family, endpoints, ramp_template: TwoStageTanhRamp | None = None, **kw):
    """Final populations for a list of ramp endpoints (Hz detuning); shape (len, n_levels)."""
    tpl = ramp_template or TwoStageTanhRamp(dnu_end=0.0)
    return np.array([solve_tdse(family, replace(tpl, dnu_end=float(d)), **kw).final for d in endpoints])


# ---------------------------------------------------------------------------
# sensing gain
# ---------------------------------------------------------------------------


def sensing_gain(family: PotentialFamily, dnu_y, step_hz=0.5, n_levels=3):
    """|d f_01 / d nu_y|: response of the first sideband to the transverse frequency.

    Far on the linear side this is the classical ``nu_y / nu_zz``.
    """
    sol = solve_family(family, dnu_y, n_levels=n_levels)
    f = []
    for d in (dnu_y - step_hz, dnu_y + step_hz):
        s = solve_tise(family.at_detuning(d), n_levels=2, grid=sol.phi, nu_z=family.nu_z)
        f.append(s.splitting_hz())
    return abs(f[1] - f[0]) / (2 * step_hz)


def max_sensing_gain(family: PotentialFamily, window_hz=(-400.0, 400.0), n_scan=81):
    """(dnu_y, G) at the largest gain in the window."""
    grid = np.linspace(*window_hz, n_scan)
    g = np.array([sensing_gain(family, d) for d in grid])
    i = int(np.argmax(g))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n_scan - 1)]
    res = minimize_scalar(lambda d: -sensing_gain(family, d), bounds=(lo, hi), method="bounded",
                          options={"xatol": 0.05})
    if -res.fun > g[i]:
        return float(res.x), float(-res.fun)
    return float(grid[i]), float(g[i])


def minimum_splitting(family: PotentialFamily, window_hz=(-400.0, 400.0), n_scan=81):
    """(dnu_y, f_01) where the first sideband frequency is smallest."""
    grid = np.linspace(*window_hz, n_scan)
    f = np.array([solve_family(family, d, n_levels=2).splitting_hz() for d in grid])
    i = int(np.argmin(f))
    return float(grid[i]), float(f[i])


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_levels_csv(path, dnu_values, transitions, header_note="detuning is nu_y - nu_yc in kHz"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        fh.write(f"# {header_note}\n")
        w.writerow(["dnu_y_khz"] + [f"f_{n}{n + 1}_hz" for n in range(transitions.shape[1])])
        for d, row in zip(dnu_values, transitions):
            w.writerow([f"{d / 1e3:.6f}"] + [f"{x:.6f}" for x in row])


def write_populations_csv(path, endpoints, populations):
    with open(path, "w", newline="") as fh:
        fh.write("# endpoint is nu_y - nu_yc in kHz\n")
        w = csv.writer(fh)
        w.writerow(["endpoint_khz"] + [f"P{n}" for n in range(populations.shape[1])])
        for d, row in zip(endpoints, populations):
            w.writerow([f"{d / 1e3:.6f}"] + [f"{x:.8f}" for x in row])


def write_wavefunctions_csv(sol: QuantumSolution, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phi"] + [f"psi{n}" for n in range(sol.n_levels)])
        for i, x in enumerate(sol.phi):
            w.writerow([f"{x:.10e}"] + [f"{v:.10e}" for v in sol.wavefunctions[i]])
