"""Monte Carlo spectra and localization diagnostics for the disordered dipolar XY model
of seed/probe Rydberg excitations in a Thomas-Fermi cloud."""

__version__ = "0.1.0"

from .ensemble import CloudConfig, ExcitationSet, place_probe, sample_thomas_fermi, select_seeds
from .interaction import InteractionCoefficients, coupling_j, coupling_vdw
from .hamiltonian import build_hamiltonian, diagonalize
from .spectra import Spectrum, LorentzianModel, accumulate, broaden, fit_lorentzian, poisson_mix

__all__ = [
    "CloudConfig", "ExcitationSet", "sample_thomas_fermi", "select_seeds", "place_probe",
    "InteractionCoefficients", "coupling_j", "coupling_vdw",
    "build_hamiltonian", "diagonalize",
    "Spectrum", "LorentzianModel", "accumulate", "broaden", "fit_lorentzian", "poisson_mix",
]
