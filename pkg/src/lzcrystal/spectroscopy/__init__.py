"""Raman sideband spectra: lineshapes, synthesis and fitting."""
from .fitting import LineshapeFit, PeakFit, TransitionFit, fit_peaks, fit_resolved, fit_transition
from .lineshapes import bloch_lineshape, expmod_gaussian, gaussian, rabi
from .raman import RamanConfig, Spectrum, effective_rabi, matrix_element, synthesize_spectrum, transitions
from .splitting import BiasSplitting, bias_splitting, first_order_delta

__all__ = [
    "BiasSplitting", "LineshapeFit", "PeakFit", "RamanConfig", "Spectrum", "TransitionFit",
    "bias_splitting", "bloch_lineshape", "effective_rabi", "expmod_gaussian", "first_order_delta",
    "fit_peaks", "fit_resolved", "fit_transition", "gaussian", "matrix_element", "rabi",
    "synthesize_spectrum", "transitions",
]
