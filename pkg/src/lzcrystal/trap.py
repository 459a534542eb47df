"""Trap parameterisation, dimensionless units and the micromotion shift."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import constants as const

from .errors import DomainError, UsageError

YB171_MASS_AMU = 170.9363258


def _check_lambda(lam):
    out = {}
    for key, value in (lam or {}).items():
        i, j = (int(k) for k in key)
        if i < 0 or j < 0 or i + j < 2:
            raise DomainError(f"lambda term ({i}, {j}) must have i, j >= 0 and i + j >= 2")
        out[(i, j)] = float(value)
    return out


@dataclass(frozen=True)
class TrapConfig:
    """Linear Paul trap near the linear-zigzag transition.

    Frequencies are cyclic (Hz) except ``Omega_rf`` which is angular (rad/s).
    ``q_y`` is back-calibrated from ``nu_y0`` and the drive when not given, using
    the lowest-order pseudopotential relation ``omega_y = q_y Omega_rf / (2 sqrt 2)``.
    """

    nu_x0: float
    nu_y0: float
    nu_z0: float
    Omega_rf: float
    V_q0: float = 13.2
    ion_mass: float = YB171_MASS_AMU * const.atomic_mass
    ion_charge: float = const.e
    q_y: float | None = None
    a_y: float = 0.0
    lam: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("nu_x0", "nu_y0", "nu_z0"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if not self.Omega_rf > 2 * math.pi * max(self.nu_x0, self.nu_y0, self.nu_z0):
            raise DomainError("Omega_rf must exceed every secular angular frequency")
        if self.V_q0 <= 0:
            raise DomainError("V_q0 must be positive")
        if self.q_y is None:
            object.__setattr__(self, "q_y", 2 * math.sqrt(2) * 2 * math.pi * self.nu_y0 / self.Omega_rf)
        if not 0 < self.q_y < 0.9:
            raise DomainError(f"q_y = {self.q_y:.4g} outside the stable range (0, 0.9)")
        object.__setattr__(self, "lam", _check_lambda(self.lam))

    @property
    def alpha0(self):
        return alpha_from_frequencies(self.nu_y0, self.nu_z0)

    def units(self) -> "UnitSystem":
        return UnitSystem.from_trap(self.ion_mass, self.ion_charge, self.nu_z0)

    def with_lambda(self, lam) -> "TrapConfig":
        return replace(self, lam=_check_lambda(lam))

    # -- serialisation -----------------------------------------------------

    def to_dict(self):
        return {
            "ion_mass_amu": self.ion_mass / const.atomic_mass,
            "nu_x0_hz": self.nu_x0,
            "nu_y0_hz": self.nu_y0,
            "nu_z0_hz": self.nu_z0,
            "omega_rf_hz": self.Omega_rf / (2 * math.pi),
            "v_q0": self.V_q0,
            "q_y": self.q_y,
            "a_y": self.a_y,
            "lambda": [{"i": i, "j": j, "value": v} for (i, j), v in sorted(self.lam.items())],
        }

    @classmethod
    def from_dict(cls, d):
        required = ("nu_x0_hz", "nu_y0_hz", "nu_z0_hz", "omega_rf_hz")
        for key in required:
            if key not in d:
                raise UsageError(f"config is missing key '{key}'")
        known = set(required) | {"ion_mass_amu", "v_q0", "lambda", "q_y", "a_y", "ion_charge_e"}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config key '{sorted(unknown)[0]}'")
        try:
            lam = {(int(t["i"]), int(t["j"])): float(t["value"]) for t in d.get("lambda", [])}
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError("config key 'lambda' must be a list of {i, j, value}") from exc
        try:
            return cls(
                nu_x0=float(d["nu_x0_hz"]),
                nu_y0=float(d["nu_y0_hz"]),
                nu_z0=float(d["nu_z0_hz"]),
                Omega_rf=2 * math.pi * float(d["omega_rf_hz"]),
                V_q0=float(d.get("v_q0", 13.2)),
                ion_mass=float(d.get("ion_mass_amu", YB171_MASS_AMU)) * const.atomic_mass,
                ion_charge=float(d.get("ion_charge_e", 1.0)) * const.e,
                q_y=None if d.get("q_y") is None else float(d["q_y"]),
                a_y=float(d.get("a_y", 0.0)),
                lam=lam,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise UsageError(f"bad config value: {exc}") from exc


def load_config(path) -> TrapConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return TrapConfig.from_dict(data)


# Experimental trap for five Yb-171 ions; V_q0 puts the 760 kHz critical
# point at a quadrupole voltage of about 2.5 V.
PAPER_TRAP = TrapConfig(nu_x0=864e3, nu_y0=844e3, nu_z0=303e3, Omega_rf=2 * math.pi * 16.9e6, V_q0=13.2)


@dataclass(frozen=True)
class UnitSystem:
    """Coulomb length, Coulomb energy and the dimensionless hbar."""

    a_z: float
    E0: float
    hbar_eff: float
    nu_z: float

    @classmethod
    def from_trap(cls, mass, charge, nu_z):
        if nu_z <= 0:
            raise DomainError("nu_z must be positive")
        omega = 2 * math.pi * nu_z
        a_z = (charge**2 / (4 * math.pi * const.epsilon_0 * mass * omega**2)) ** (1.0 / 3.0)
        E0 = mass * omega**2 * a_z**2
        return cls(a_z=a_z, E0=E0, hbar_eff=const.hbar / (mass * omega * a_z**2), nu_z=nu_z)

    @classmethod
    def yb171(cls, nu_z):
        return cls.from_trap(YB171_MASS_AMU * const.atomic_mass, const.e, nu_z)

    def energy_to_hz(self, energy):
        """Dimensionless energy (units of E0) to a cyclic frequency in Hz."""
        return np.asarray(energy) * self.nu_z / self.hbar_eff

    def hz_to_energy(self, freq):
        return np.asarray(freq) * self.hbar_eff / self.nu_z


def hbar_eff_for(nu_z, mass=YB171_MASS_AMU * const.atomic_mass, charge=const.e):
    return UnitSystem.from_trap(mass, charge, nu_z).hbar_eff


def ramp_frequencies(cfg: TrapConfig, V_q):
    """Transverse secular frequencies (nu_x, nu_y) at quadrupole voltage ``V_q``."""
    v = np.asarray(V_q, dtype=float)
    if np.any(v < 0):
        raise DomainError("V_q must be non-negative")
    if np.any(v >= cfg.V_q0):
        raise DomainError("V_q >= V_q0 collapses the y confinement")
    ratio = v / cfg.V_q0
    nu_x = cfg.nu_x0 * np.sqrt(1 + ratio)
    nu_y = cfg.nu_y0 * np.sqrt(1 - ratio)
    if nu_x.ndim == 0:
        return float(nu_x), float(nu_y)
    return nu_x, nu_y


def quadrupole_voltage_for(cfg: TrapConfig, nu_y):
    """Inverse of :func:`ramp_frequencies` for the y axis."""
    nu_y = np.asarray(nu_y, dtype=float)
    if np.any(nu_y <= 0) or np.any(nu_y > cfg.nu_y0):
        raise DomainError("nu_y must lie in (0, nu_y0]")
    v = cfg.V_q0 * (1 - (nu_y / cfg.nu_y0) ** 2)
    return float(v) if v.ndim == 0 else v


def alpha_from_frequencies(nu_y, nu_z):
    """Trap aspect ratio (nu_y / nu_z)**2."""
    if nu_z == 0:
        raise DomainError("nu_z must be non-zero")
    return (nu_y / nu_z) ** 2


def micromotion_shift(cfg: TrapConfig, alpha_c0):
    """Fractional micromotion shift of the critical aspect ratio."""
    q = cfg.q_y
    if q > 0.4:
        warnings.warn(f"q_y = {q:.3f}: small-q expansion is unreliable", RuntimeWarning, stacklevel=2)
    wz_over_rf = 2 * math.pi * cfg.nu_z0 / cfg.Omega_rf
    return 0.5 * q**2 * (1 + 0.375 * q**2 + 2.5 * wz_over_rf**2 * alpha_c0)


def micromotion_corrected_alpha_c(cfg: TrapConfig, alpha_c0):
    return alpha_c0 * (1 + micromotion_shift(cfg, alpha_c0))
