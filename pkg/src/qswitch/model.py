"""Device model for a flux qubit inductively coupled to a quarter-wave resonator.

The qubit is described in its energy eigenbasis at the optimal point,

    H/hbar = (Delta/2) sigma_z + (epsilon/2) sigma_x
             + w_r a^dag a + g (a + a^dag) sigma_x,

with Delta the qubit gap, epsilon the flux-controlled bias
(hbar*epsilon = 2 I_p (Phi_eps - Phi_0/2)), and g = M I_p I_r / hbar the
inductive coupling (I_r = sqrt(hbar w_r / L_r) the resonator zero-point
current).  A longitudinal modulation of the gap adds

    H_L/hbar = lambda_z * cos(w_z t + phase) * sigma_z * ... (coefficient
    2*lambda_z on the gap, i.e. Delta(t) = Delta + 2 lambda_z cos(w_z t)),

which dresses the transverse coupling down to an effective

    g_eff = g * J0(2 lambda_z / w_z),

so driving at 2 lambda_z / w_z = j_{0,1} (the first zero of the Bessel
function J0) switches the coupling off.

All frequencies in this module are angular (rad/s).  Configuration files
and the CLI accept ordinary frequencies in Hz; that conversion happens
exactly once, where the config layer builds a DeviceModel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .linalg import HilbertLayout

# Exact SI values (2019 redefinition).
PLANCK_H = 6.62607015e-34       # J s
H_BAR = 1.054571817e-34         # J s
FLUX_QUANTUM = 2.067833848e-15  # Wb, h/2e
TWO_PI = 2.0 * math.pi

# First positive zero of J0; the coupling switches off at
# lambda_z = J0_FIRST_ZERO * w_z / 2.
J0_FIRST_ZERO = 2.404825557695773


# ---------------------------------------------------------------------------
# Bessel functions for the coupling suppression law
# ---------------------------------------------------------------------------

def bessel_j0(x: float) -> float:
    """J0(x), power series for |x| <= 12 and the Hankel asymptotic form beyond.

    Absolute error below 1e-10 everywhere (the series keeps full accuracy to
    |x| ~ 12 in double precision; the asymptotic form takes over where its
    optimal truncation error has dropped well below that).
    """
    if not math.isfinite(x):
        raise ValueError("bessel_j0 requires a finite argument")
    ax = abs(x)
    if ax <= 12.0:
        return _j0_series(ax)
    return _j0_hankel(ax)


def bessel_j1(x: float) -> float:
    """J1(x), same construction as bessel_j0. Odd in x."""
    if not math.isfinite(x):
        raise ValueError("bessel_j1 requires a finite argument")
    sign = -1.0 if x < 0 else 1.0
    ax = abs(x)
    if ax <= 12.0:
        return sign * _j1_series(ax)
    return sign * _j1_hankel(ax)


def _j0_series(x: float) -> float:
    # sum_k (-1)^k (x/2)^(2k) / (k!)^2, terms recursively
    q = -0.25 * x * x
    term = 1.0
    total = 1.0
    for k in range(1, 60):
        term *= q / (k * k)
        total += term
        if abs(term) < 1e-18:
            break
    return total


def _j1_series(x: float) -> float:
    # sum_k (-1)^k (x/2)^(2k+1) / (k! (k+1)!)
    q = -0.25 * x * x
    term = 0.5 * x
    total = term
    for k in range(1, 60):
        term *= q / (k * (k + 1))
        total += term
        if abs(term) < 1e-18:
            break
    return total


def _hankel_pq(mu: float, x: float) -> tuple[float, float]:
    # Asymptotic amplitude/phase series: a_0 = 1,
    # a_m = a_{m-1} * (mu - (2m-1)^2) / (8 m); P sums even terms with
    # alternating sign, Q the odd ones.
    p = 0.0
    q = 0.0
    a = 1.0
    best = math.inf
    for m in range(0, 18):
        u = a / x ** m
        if abs(u) > best:
            break  # asymptotic terms started growing: stop at optimal truncation
        best = abs(u)
        k, r = divmod(m, 2)
        if r == 0:
            p += (-1.0) ** k * u
        else:
            q += (-1.0) ** k * u
        a *= (mu - (2 * m + 1) ** 2) / (8.0 * (m + 1))
    return p, q


def _j0_hankel(x: float) -> float:
    p, q = _hankel_pq(0.0, x)
    w = x - 0.25 * math.pi
    return math.sqrt(2.0 / (math.pi * x)) * (p * math.cos(w) - q * math.sin(w))


def _j1_hankel(x: float) -> float:
    p, q = _hankel_pq(4.0, x)
    w = x - 0.75 * math.pi
    return math.sqrt(2.0 / (math.pi * x)) * (p * math.cos(w) - q * math.sin(w))


# ---------------------------------------------------------------------------
# Circuit parameter relations
# ---------------------------------------------------------------------------

def epsilon_from_flux(flux_bias: float, persistent_current: float) -> float:
    """Qubit bias epsilon (rad/s) from the loop flux (Wb) and I_p (A).

    hbar*epsilon = 2 I_p (Phi_eps - Phi_0/2); epsilon vanishes at the
    half-quantum optimal point.
    """
    if persistent_current <= 0.0:
        raise ValueError("persistent current must be positive")
    return 2.0 * persistent_current * (flux_bias - 0.5 * FLUX_QUANTUM) / H_BAR


def coupling_from_circuit(mutual_inductance: float, persistent_current: float,
                          zero_point_current: float) -> float:
    """g = M I_p I_r / hbar (rad/s)."""
    if mutual_inductance <= 0.0 or persistent_current <= 0.0 or zero_point_current <= 0.0:
        raise ValueError("circuit parameters must be positive")
    return mutual_inductance * persistent_current * zero_point_current / H_BAR


def zero_point_current(frequency: float, inductance: float) -> float:
    """Resonator zero-point current I_r = sqrt(hbar w_r / L_r) (A)."""
    if frequency <= 0.0 or inductance <= 0.0:
        raise ValueError("frequency and inductance must be positive")
    return math.sqrt(H_BAR * frequency / inductance)


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QubitParams:
    """Flux qubit parameters; exactly one of bias/flux_bias sets epsilon.

    gap: Delta (rad/s), the qubit splitting at the optimal point.
    bias: epsilon (rad/s), or None when flux_bias is authoritative.
    flux_bias: loop flux Phi_eps (Wb); needs persistent_current.
    persistent_current: I_p (A).
    """

    gap: float
    bias: float | None = None
    flux_bias: float | None = None
    persistent_current: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.gap) and self.gap > 0.0):
            raise ValueError("qubit gap must be positive and finite")
        if (self.bias is None) == (self.flux_bias is None):
            raise ValueError("give exactly one of bias or flux_bias")
        if self.flux_bias is not None and self.persistent_current is None:
            raise ValueError("flux_bias requires persistent_current")

    @property
    def epsilon(self) -> float:
        """Resolved bias (rad/s) regardless of which input was given."""
        if self.bias is not None:
            return self.bias
        return epsilon_from_flux(self.flux_bias, self.persistent_current)


@dataclass(frozen=True)
class ResonatorParams:
    """Resonator frequency w_r (rad/s) plus optional circuit data."""

    frequency: float
    inductance: float | None = None      # L_r, H
    t1: float = math.inf                 # photon lifetime, s

    def __post_init__(self) -> None:
        if not (math.isfinite(self.frequency) and self.frequency > 0.0):
            raise ValueError("resonator frequency must be positive and finite")
        if self.inductance is not None and self.inductance <= 0.0:
            raise ValueError("resonator inductance must be positive")
        if self.t1 <= 0.0:
            raise ValueError("resonator t1 must be positive (math.inf for lossless)")

    @property
    def zero_point_current(self) -> float | None:
        if self.inductance is None:
            return None
        return zero_point_current(self.frequency, self.inductance)


@dataclass(frozen=True)
class CouplingParams:
    """Transverse coupling g (rad/s); circuit values cross-check g when present."""

    g: float
    mutual_inductance: float | None = None  # M, H

    def __post_init__(self) -> None:
        if not (math.isfinite(self.g) and self.g >= 0.0):
            raise ValueError("coupling g must be non-negative and finite")
        if self.mutual_inductance is not None and self.mutual_inductance <= 0.0:
            raise ValueError("mutual inductance must be positive")


@dataclass(frozen=True)
class DriveParams:
    """Longitudinal gap modulation: Delta(t) = Delta + 2*amplitude*cos(frequency*t + phase)."""

    amplitude: float   # lambda_z, rad/s
    frequency: float   # w_z, rad/s
    phase: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0.0):
            raise ValueError("drive amplitude must be non-negative and finite")
        if not (math.isfinite(self.frequency) and self.frequency > 0.0):
            raise ValueError("drive frequency must be positive and finite")

    @property
    def period(self) -> float:
        return TWO_PI / self.frequency


@dataclass(frozen=True)
class DeviceModel:
    """Complete system description used by the dynamics and protocol layers."""

    qubit: QubitParams
    resonator: ResonatorParams
    coupling: CouplingParams
    drive: DriveParams | None = None
    qubit_t1: float = math.inf   # seconds
    fock_cutoff: int = 5

    def __post_init__(self) -> None:
        if self.qubit_t1 <= 0.0:
            raise ValueError("qubit_t1 must be positive (math.inf for lossless)")
        if self.fock_cutoff < 2:
            raise ValueError("fock_cutoff must be at least 2")
        ir = self.resonator.zero_point_current
        ip = self.qubit.persistent_current
        m = self.coupling.mutual_inductance
        if ir is not None and ip is not None and m is not None:
            g_circuit = coupling_from_circuit(m, ip, ir)
            if abs(g_circuit - self.coupling.g) > 1e-9 * abs(g_circuit):
                raise ValueError(
                    f"coupling g={self.coupling.g:.6e} rad/s inconsistent with "
                    f"M*Ip*Ir/hbar={g_circuit:.6e} rad/s")

    @property
    def resonator_t1(self) -> float:
        return self.resonator.t1

    @property
    def layout(self) -> HilbertLayout:
        return HilbertLayout(self.fock_cutoff)


def qubit_frequency(params: QubitParams) -> float:
    """w_qb = sqrt(Delta^2 + epsilon^2) (rad/s)."""
    return math.hypot(params.gap, params.epsilon)


def effective_coupling(model: DeviceModel) -> float:
    """Dressed coupling g_eff = g * J0(2 lambda_z / w_z); requires a drive."""
    if model.drive is None:
        raise ValueError("effective_coupling requires a drive")
    return model.coupling.g * bessel_j0(2.0 * model.drive.amplitude / model.drive.frequency)


def switch_off_amplitude(drive_frequency: float) -> float:
    """Drive amplitude placing 2*lambda_z/w_z at the first J0 zero (rad/s)."""
    if drive_frequency <= 0.0:
        raise ValueError("drive frequency must be positive")
    return 0.5 * J0_FIRST_ZERO * drive_frequency


# ---------------------------------------------------------------------------
# Hamiltonian builders (all return H/hbar in rad/s)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CosineHamiltonian:
    """H(t) = static + cos(omega*t + phase) * drive, with constant matrices.

    drive=None (or omega=0 with phase=0 folded into static) describes a
    time-independent Hamiltonian.
    """

    static: np.ndarray
    drive: np.ndarray | None = None
    omega: float = 0.0
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.drive is not None and self.omega <= 0.0:
            raise ValueError("a drive term needs a positive drive frequency")

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    @property
    def period(self) -> float | None:
        if self.drive is None:
            return None
        return TWO_PI / self.omega

    def at(self, t: float) -> np.ndarray:
        if self.drive is None:
            return self.static.copy()
        return self.static + math.cos(self.omega * t + self.phase) * self.drive


def _joint_operators(layout: HilbertLayout):
    n = layout.fock_cutoff
    sz = linalg.tensor_product(linalg.sigma_z(), linalg.identity(n))
    sx = linalg.tensor_product(linalg.sigma_x(), linalg.identity(n))
    a = linalg.tensor_product(linalg.identity(2), linalg.annihilation(n))
    return sz, sx, a


def build_lab_hamiltonian(model: DeviceModel) -> CosineHamiltonian:
    """Full lab-frame Hamiltonian, no rotating-wave approximation.

    H/hbar = (Delta/2 + lambda_z cos(w_z t + phase)) sigma_z
             + (epsilon/2) sigma_x + w_r a^dag a + g (a + a^dag) sigma_x.
    """
    layout = model.layout
    sz, sx, a = _joint_operators(layout)
    static = (0.5 * model.qubit.gap * sz
              + 0.5 * model.qubit.epsilon * sx
              + model.resonator.frequency * (a.conj().T @ a)
              + model.coupling.g * ((a + a.conj().T) @ sx))
    if model.drive is None or model.drive.amplitude == 0.0:
        if model.drive is None:
            return CosineHamiltonian(static=static)
        return CosineHamiltonian(static=static, drive=None,
                                 omega=model.drive.frequency, phase=model.drive.phase)
    return CosineHamiltonian(static=static,
                             drive=model.drive.amplitude * sz,
                             omega=model.drive.frequency,
                             phase=model.drive.phase)


def _jc_matrix(gap: float, w_r: float, g: float, layout: HilbertLayout) -> np.ndarray:
    n = layout.fock_cutoff
    sz = linalg.tensor_product(linalg.sigma_z(), linalg.identity(n))
    sm = linalg.tensor_product(linalg.sigma_minus(), linalg.identity(n))
    sp = linalg.tensor_product(linalg.sigma_plus(), linalg.identity(n))
    a = linalg.tensor_product(linalg.identity(2), linalg.annihilation(n))
    return (0.5 * gap * sz
            + w_r * (a.conj().T @ a)
            + g * (a.conj().T @ sm + a @ sp))


def build_jc_hamiltonian(model: DeviceModel) -> np.ndarray:
    """Excitation-conserving (rotating-wave) Hamiltonian at the optimal point.

    H/hbar = (Delta/2) sigma_z + w_r a^dag a
             + g (a^dag sigma_- + a sigma_+);  requires epsilon = 0.
    """
    if model.qubit.epsilon != 0.0:
        raise ValueError("the rotating-wave form is built at epsilon = 0")
    return _jc_matrix(model.qubit.gap, model.resonator.frequency,
                      model.coupling.g, model.layout)


def build_driven_jc_hamiltonian(model: DeviceModel) -> CosineHamiltonian:
    """Rotating-wave coupling plus the longitudinal drive: H_JC + H_L.

    This is the Hamiltonian whose Floquet spectrum defines the effective
    coupling: the transverse term is excitation-conserving, and the drive
    modulates only the qubit gap.  Requires epsilon = 0 (the optimal point,
    where the rotating-wave reduction holds) and a drive.
    """
    if model.drive is None:
        raise ValueError("build_driven_jc_hamiltonian requires a drive")
    static = build_jc_hamiltonian(model)
    if model.drive.amplitude == 0.0:
        return CosineHamiltonian(static=static, drive=None,
                                 omega=model.drive.frequency, phase=model.drive.phase)
    sz = linalg.tensor_product(linalg.sigma_z(), linalg.identity(model.fock_cutoff))
    return CosineHamiltonian(static=static,
                             drive=model.drive.amplitude * sz,
                             omega=model.drive.frequency,
                             phase=model.drive.phase)


def build_effective_hamiltonian(model: DeviceModel) -> np.ndarray:
    """Rotating-wave Hamiltonian with g replaced by the Bessel-dressed g_eff."""
    if model.drive is None:
        raise ValueError("build_effective_hamiltonian requires a drive")
    if model.qubit.epsilon != 0.0:
        raise ValueError("the rotating-wave form is built at epsilon = 0")
    return _jc_matrix(model.qubit.gap, model.resonator.frequency,
                      effective_coupling(model), model.layout)
