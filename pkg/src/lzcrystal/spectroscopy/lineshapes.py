"""Peak shapes for Raman spectra.

Frequencies and detunings are in Hz.  Rabi frequencies are cyclic (Hz) too:
a resonant pi pulse has ``2 pi * Omega * t = pi``.  Phase-damping rates are
plain 1/s rates (coherences decay as ``exp(-gamma t)``).
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc, erfcx

from .. import kernels
from ..errors import DomainError

SQRT_PI = math.sqrt(math.pi)


def gaussian(f, f0, w, A=1.0, b0=0.0):
    u = (np.asarray(f, dtype=float) - f0) / w
    return A * np.exp(-(u**2)) + b0


def expmod_gaussian(f, f0, w, Delta_a, A=1.0, b0=0.0):
    """Exponentially modified Gaussian with area ``A w sqrt(pi)``.

    ``Delta_a > 0`` puts the exponential tail on the high-frequency side.
    Evaluated through ``erfcx`` so that small ``|Delta_a|/w`` does not
    overflow; ``Delta_a = 0`` is the Gaussian limit.
    """
    if not w > 0:
        raise DomainError("width must be positive")
    f = np.asarray(f, dtype=float)
    if Delta_a == 0:
        return gaussian(f, f0, w, A, b0)
    u = (f - f0) / w
    s = math.copysign(1.0, Delta_a)
    r = w / (2.0 * abs(Delta_a))
    X = r - s * u
    # exp(X^2 - u^2) erfc(X), split by the sign of X for stability
    with np.errstate(over="ignore", under="ignore"):
        core = np.where(X >= 0, erfcx(np.maximum(X, 0.0)) * np.exp(-(u**2)),
                        erfc(np.minimum(X, 0.0)) * np.exp(np.minimum(r * r - 2.0 * s * r * u, 0.0)))
    return A * SQRT_PI * r * core + b0


def rabi(f, f0, Omega, t, A=1.0, b0=0.0):
    """Undamped two-level excitation after a square pulse of length ``t``."""
    d = np.asarray(f, dtype=float) - f0
    gen2 = Omega**2 + d**2
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(gen2 > 0, Omega**2 / gen2 * np.sin(math.pi * np.sqrt(gen2) * t) ** 2, 0.0)
    return A * p + b0


def bloch_lineshape(Omega, gamma, pulse_time, detunings):
    """Excitation after ``pulse_time`` of the dephased two-level Bloch equations."""
    if gamma < 0:
        raise DomainError("gamma must be non-negative")
    if pulse_time < 0:
        raise DomainError("pulse_time must be non-negative")
    det = np.asarray(detunings, dtype=float).ravel()
    n = det.size
    two_pi = 2.0 * math.pi
    out = kernels.bloch_excitation(np.full(n, two_pi * Omega), two_pi * det, np.full(n, float(gamma)),
                                   float(pulse_time))
    if not np.all(np.isfinite(out)):
        from ..errors import IntegrationError

        raise IntegrationError("Bloch propagation produced non-finite values")
    return out.reshape(np.shape(detunings)) if np.ndim(detunings) else float(out[0])
