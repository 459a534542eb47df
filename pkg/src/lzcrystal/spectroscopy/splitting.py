"""Zigzag-mode frequency difference between the two wells."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..effective import ZigzagPotential, classical_minima
from ..errors import DomainError


@dataclass(frozen=True)
class BiasSplitting:
    nu_L: float  # phi > 0 well
    nu_R: float  # phi < 0 well
    approx_delta: float  # first-order nu_L - nu_R, evaluated at nu_R
    approx_delta_mean: float  # same formula evaluated at (nu_L + nu_R) / 2

    @property
    def delta(self):
        return self.nu_L - self.nu_R


def first_order_delta(C1, C3, C4, nu_z, nu_R):
    """Leading-order ``nu_L - nu_R`` from the odd bias terms.

    The neglected terms are of relative size ``|nu_L - nu_R| / nu_R`` when the
    measured ``nu_R`` is used; evaluating at the mean well frequency cancels
    most of that.
    """
    s = math.sqrt(2.0 * C4)
    return -nu_z * (3.0 * C1 * s * (nu_z / nu_R) ** 2 + C3 / s)


def bias_splitting(pot: ZigzagPotential, nu_z) -> BiasSplitting:
    """Exact well frequencies from the curvature at each classical minimum."""
    mins = classical_minima(pot)
    if len(mins) < 2:
        raise DomainError("bias splitting needs a double well")
    R, L = mins[0], mins[-1]
    nu_L = nu_z * math.sqrt(L.curvature)
    nu_R = nu_z * math.sqrt(R.curvature)
    return BiasSplitting(nu_L=nu_L, nu_R=nu_R,
                         approx_delta=first_order_delta(pot.C1, pot.C3, pot.C4, nu_z, nu_R),
                         approx_delta_mean=first_order_delta(pot.C1, pot.C3, pot.C4, nu_z, 0.5 * (nu_L + nu_R)))


def c2_for_well_frequency(nu_R, nu_z):
    """C2 of the unbiased double well whose wells oscillate at ``nu_R``."""
    return -0.5 * (nu_R / nu_z) ** 2
