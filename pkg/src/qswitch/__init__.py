"""Simulation and calibration toolkit for a longitudinally driven
qubit-resonator switch.

The coupling between a flux qubit and its readout resonator is modulated by
driving the qubit gap at w_z; the transverse coupling dresses to
g * J0(2*lambda_z/w_z) and vanishes when the drive amplitude sits at the
first Bessel zero.  This package simulates the full lab-frame dynamics
(unitary and Lindblad), analyzes the drive with Floquet methods, runs the
measurement protocols (spectroscopy, Rabi maps, switch and storage
sequences), and synthesizes the calibrated bias waveforms.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .backend import backend_name
from .dynamics import (
    CollapseSpec,
    EvolutionResult,
    FloquetResult,
    TimeGrid,
    collapse_channels,
    default_lindblad_max_step,
    default_max_step,
    evolve_lindblad,
    evolve_unitary,
    floquet_propagator,
    identify_pair_modes,
    quasienergy_gap,
)
from .errors import (
    ConfigError,
    DomainError,
    FitConvergenceError,
    IntegratorError,
    ModeAmbiguityError,
    NumericalError,
    PeriodMismatchError,
    QswitchError,
)
from .linalg import HilbertLayout
from .model import (
    CosineHamiltonian,
    CouplingParams,
    DeviceModel,
    DriveParams,
    QubitParams,
    ResonatorParams,
    bessel_j0,
    bessel_j1,
    build_driven_jc_hamiltonian,
    build_effective_hamiltonian,
    build_jc_hamiltonian,
    build_lab_hamiltonian,
    effective_coupling,
    qubit_frequency,
    switch_off_amplitude,
)
from .protocols import (
    DampedCosineFit,
    PulseSchedule,
    SpectrumMap,
    StorageOutcome,
    SweepSpec,
    analyze_storage,
    driven_spectrum_scan,
    extract_frequency,
    find_switch_off,
    fit_damped_cosine,
    onoff_ratio,
    rabi_compare,
    rabi_scan,
    spectrum_scan,
    storage_experiment,
    swap_duration,
    switch_sequence,
)

__all__ = [
    "CollapseSpec",
    "ConfigError",
    "CosineHamiltonian",
    "CouplingParams",
    "DampedCosineFit",
    "DeviceModel",
    "DomainError",
    "DriveParams",
    "EvolutionResult",
    "FitConvergenceError",
    "FloquetResult",
    "HilbertLayout",
    "IntegratorError",
    "ModeAmbiguityError",
    "NumericalError",
    "PeriodMismatchError",
    "PulseSchedule",
    "QswitchError",
    "QubitParams",
    "ResonatorParams",
    "SpectrumMap",
    "StorageOutcome",
    "SweepSpec",
    "TimeGrid",
    "analyze_storage",
    "backend_name",
    "bessel_j0",
    "bessel_j1",
    "build_driven_jc_hamiltonian",
    "build_effective_hamiltonian",
    "build_jc_hamiltonian",
    "build_lab_hamiltonian",
    "collapse_channels",
    "default_lindblad_max_step",
    "default_max_step",
    "driven_spectrum_scan",
    "effective_coupling",
    "evolve_lindblad",
    "evolve_unitary",
    "extract_frequency",
    "find_switch_off",
    "fit_damped_cosine",
    "floquet_propagator",
    "identify_pair_modes",
    "onoff_ratio",
    "quasienergy_gap",
    "qubit_frequency",
    "rabi_compare",
    "rabi_scan",
    "spectrum_scan",
    "storage_experiment",
    "swap_duration",
    "switch_sequence",
]
