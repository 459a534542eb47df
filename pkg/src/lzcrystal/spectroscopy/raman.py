"""Raman coupling of the zigzag mode and synthetic sideband spectra."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, UsageError
from ..quantum import QuantumSolution
from .lineshapes import bloch_lineshape


@dataclass(frozen=True)
class RamanConfig:
    """Global Raman beam settings.

    ``k_eff_az[j]`` is the Raman wavevector projected on ion j's zigzag
    displacement direction, times the Coulomb length.
    """

    k_eff_az: tuple
    Omega_0: float  # Hz
    pulse_time: float  # s
    gamma_car: float = 0.0
    gamma_1: float = 0.0
    gamma_2: float = 0.0
    allow_strong_drive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "k_eff_az", tuple(float(k) for k in self.k_eff_az))
        if not self.k_eff_az:
            raise DomainError("k_eff_az needs one entry per ion")
        if self.Omega_0 < 0 or self.pulse_time < 0:
            raise DomainError("Omega_0 and pulse_time must be non-negative")
        if min(self.gamma_car, self.gamma_1, self.gamma_2) < 0:
            raise DomainError("damping rates must be non-negative")
        if not self.allow_strong_drive and 2 * math.pi * self.Omega_0 * self.pulse_time > math.pi * (1 + 1e-9):
            raise DomainError("carrier pulse area exceeds pi; set allow_strong_drive to override")

    @property
    def N(self):
        return len(self.k_eff_az)

    def gamma(self, order):
        """Damping rate for a transition changing n by ``order``."""
        order = abs(order)
        return (self.gamma_car, self.gamma_1, self.gamma_2)[min(order, 2)]

    @classmethod
    def uniform(cls, N, hbar_eff, eta=0.1, c2_ref=1.0, Omega_0=1e3, pulse_time=None, **rates):
        """Equal |k_eff a_z| on every ion, signs alternating like the zigzag pattern.

        The magnitude gives Lamb-Dicke parameter ``eta`` for a harmonic zigzag
        mode with ``C2 = c2_ref``.  The default pulse is a carrier pi pulse.
        """
        k = eta / math.sqrt(hbar_eff / (2.0 * math.sqrt(c2_ref)))
        mid = (N - 1) // 2
        ks = tuple(k * (-1.0) ** (j - mid) for j in range(N))
        if pulse_time is None:
            pulse_time = 0.5 / Omega_0
        return cls(k_eff_az=ks, Omega_0=Omega_0, pulse_time=pulse_time, **rates)

    @classmethod
    def from_modes(cls, modes, k_y_az, k_z_az=0.0, nu_zz=None, Omega_0=1e3, pulse_time=None, **rates):
        """Project a Raman wavevector (components along y and z) on each ion's zigzag displacement."""
        if nu_zz is not None and nu_zz > 60e3:
            warnings.warn(f"zigzag frequency {nu_zz / 1e3:.0f} kHz is outside the linear-model range",
                          RuntimeWarning, stacklevel=2)
        v = modes.zigzag_vector
        N = v.size // 2
        ks = []
        for j in range(N):
            d = np.array([v[j], v[N + j]])
            nrm = np.linalg.norm(d)
            ks.append(0.0 if nrm == 0 else float((k_y_az * d[0] + k_z_az * d[1]) / nrm))
        if pulse_time is None:
            pulse_time = 0.5 / Omega_0
        return cls(k_eff_az=tuple(ks), Omega_0=Omega_0, pulse_time=pulse_time, **rates)


def matrix_element(sol: QuantumSolution, n, m, k_eff_az):
    """<Psi_n| exp(i k phi) |Psi_m> by trapezoidal quadrature."""
    if max(n, m) >= sol.n_levels or min(n, m) < 0:
        raise DomainError(f"levels ({n}, {m}) not in the solved basis of {sol.n_levels}")
    a = sol.wavefunctions[:, n]
    b = sol.wavefunctions[:, m]
    return complex(np.trapezoid(a * np.exp(1j * k_eff_az * sol.phi) * b, dx=sol.dx))


def effective_rabi(sol: QuantumSolution, n, m, cfg: RamanConfig):
    """Global-beam Rabi frequency (Hz) of |n> -> |m> with one spin flip."""
    s = sum(abs(matrix_element(sol, n, m, k)) ** 2 for k in cfg.k_eff_az)
    return cfg.Omega_0 * math.sqrt(s)


@dataclass(frozen=True)
class Transition:
    n: int
    m: int
    center: float  # Hz
    rabi: float  # Hz
    gamma: float

    @property
    def order(self):
        return self.m - self.n


@dataclass(frozen=True)
class Spectrum:
    detunings: np.ndarray
    excitation: np.ndarray
    sigma: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.detunings, dtype=float)
        e = np.asarray(self.excitation, dtype=float)
        if d.ndim != 1 or d.shape != e.shape:
            raise DomainError("detunings and excitation must be 1-D arrays of equal length")
        if d.size > 1 and not np.all(np.diff(d) > 0):
            raise DomainError("detunings must be strictly increasing")
        if np.any(e < 0) or np.any(e > 1):
            raise DomainError("excitation must lie in [0, 1]")
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "excitation", e)
        s = np.zeros_like(d) if self.sigma is None else np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "sigma", s)

    def with_noise(self, sigma, seed):
        rng = np.random.default_rng(seed)
        e = np.clip(self.excitation + rng.normal(0.0, sigma, self.excitation.size), 0.0, 1.0)
        return Spectrum(self.detunings, e, np.full_like(e, sigma), dict(self.metadata, noise=sigma, seed=seed))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["detuning_hz", "excitation", "sigma"])
            for row in zip(self.detunings, self.excitation, self.sigma):
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if not rows or rows[0][:2] != ["detuning_hz", "excitation"]:
            raise UsageError("spectrum CSV needs a header 'detuning_hz,excitation[,sigma]'")
        data = np.array([[float(x) for x in r] for r in rows[1:]])
        if data.size == 0:
            raise UsageError("spectrum CSV has no data rows")
        sigma = data[:, 2] if data.shape[1] > 2 else None
        return cls(data[:, 0], data[:, 1], sigma)


def transitions(sol: QuantumSolution, cfg: RamanConfig, populations, max_order=2, lower=True):
    """Carrier, upper sidebands up to ``max_order`` and the first lower sideband."""
    pops = np.asarray(populations, dtype=float)
    out = []
    E = sol.to_hz(sol.energies)
    for n, p in enumerate(pops):
        if p <= 0:
            continue
        orders = [0] + list(range(1, max_order + 1)) + ([-1] if lower and n > 0 else [])
        for k in orders:
            m = n + k
            if m >= sol.n_levels:
                continue
            out.append(Transition(n, m, float(E[m] - E[n]), effective_rabi(sol, n, m, cfg), cfg.gamma(k)))
    return out


def synthesize_spectrum(sol: QuantumSolution, cfg: RamanConfig, populations, detunings, baseline=0.0,
                        max_order=2, lower=True, carrier_scale=1.0, sideband_scale=1.0) -> Spectrum:
    """Incoherent sum of Bloch lineshapes weighted by the motional populations."""
    pops = np.asarray(populations, dtype=float)
    if np.any(pops < 0) or abs(pops.sum() - 1.0) > 1e-6:
        raise DomainError("populations must be non-negative and sum to 1")
    if pops.size > sol.n_levels:
        raise DomainError("more populations than solved levels")
    det = np.asarray(detunings, dtype=float)
    total = np.full(det.shape, float(baseline))
    for tr in transitions(sol, cfg, pops, max_order, lower):
        scale = carrier_scale if tr.order == 0 else sideband_scale
        total += scale * pops[tr.n] * bloch_lineshape(tr.rabi, tr.gamma, cfg.pulse_time, det - tr.center)
    total = np.clip(total, 0.0, 1.0)
    meta = {"N": cfg.N, "alpha": sol.pot.alpha, "C1": sol.pot.C1, "C3": sol.pot.C3,
            "populations": pops.tolist(), "pulse_time": cfg.pulse_time}
    return Spectrum(det, total, None, meta)
