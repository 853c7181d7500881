"""Decoherence and entanglement decay of qubits coupled to random-matrix environments."""

__version__ = "0.1.0"

from .rmt_core import HEISENBERG_TIME, EnsembleSpec, form_factor_b2, unfold_spectrum
from .dynamics import InitialState, SystemConfig, Topology, assemble_hamiltonian, evolve
from .linres import lr_purity, lr_purity_limit

__all__ = [
    "HEISENBERG_TIME",
    "EnsembleSpec",
    "form_factor_b2",
    "unfold_spectrum",
    "InitialState",
    "SystemConfig",
    "Topology",
    "assemble_hamiltonian",
    "evolve",
    "lr_purity",
    "lr_purity_limit",
]
