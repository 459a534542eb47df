"""Quantum simulation and spectroscopy of the linear-zigzag transition in ion crystals."""
from .crystal import critical_alpha_pseudo, equilibrium, linear_configuration, normal_modes
from .effective import PotentialFamily, ZigzagPotential, bias_sensitivity, classical_minima, reduce_to_zigzag
from .errors import LZError
from .quantum import optimum_tunneling_point, solve_tdse, solve_tise
from .trap import PAPER_TRAP, TrapConfig, UnitSystem

__version__ = "0.1.0"

__all__ = [
    "LZError", "PAPER_TRAP", "PotentialFamily", "TrapConfig", "UnitSystem", "ZigzagPotential",
    "bias_sensitivity", "classical_minima", "critical_alpha_pseudo", "equilibrium", "linear_configuration",
    "normal_modes", "optimum_tunneling_point", "reduce_to_zigzag", "solve_tdse", "solve_tise",
]
