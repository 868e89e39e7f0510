"""Noise-assisted simulation of open quantum systems on an emulated noisy device."""

from .channels import LindbladSpec, PauliChannel, ResetSpec
from .errors import ConfigError, NumericalError
from .hamiltonian import (
    ChainParams,
    Hamiltonian,
    TrotterCircuit,
    TrotterPlan,
    build_chain_hamiltonian,
    build_tfim_hamiltonian,
    build_trotter_layer,
)
from .pauli import PauliString
from .pec import MitigationPlan, QuasiProbability, build_quasiprobability, plan_decoherence_control

__all__ = [
    "ChainParams",
    "ConfigError",
    "Hamiltonian",
    "LindbladSpec",
    "MitigationPlan",
    "NumericalError",
    "PauliChannel",
    "PauliString",
    "QuasiProbability",
    "ResetSpec",
    "TrotterCircuit",
    "TrotterPlan",
    "build_chain_hamiltonian",
    "build_quasiprobability",
    "build_tfim_hamiltonian",
    "build_trotter_layer",
    "plan_decoherence_control",
]
