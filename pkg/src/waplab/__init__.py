"""waplab: diffraction, Fourier-Bohr coefficients and Eberlein convolutions of Dirac combs."""

from .averaging import VanHoveFamily, k_boundary, mean_of_comb, mean_of_function
from .measures import Box, DiracComb, TestFunction
from .spectra import bragg_intensity, diffraction_spectrum, fourier_bohr

__version__ = "0.1.0"

__all__ = [
    "Box",
    "DiracComb",
    "TestFunction",
    "VanHoveFamily",
    "bragg_intensity",
    "diffraction_spectrum",
    "fourier_bohr",
    "k_boundary",
    "mean_of_comb",
    "mean_of_function",
]
