"""Dense complex linear algebra for small composite Hilbert spaces.

Everything works on plain ``numpy`` ``complex128`` arrays: kets are 1-d,
operators and density matrices 2-d.  The composite space is qubit (x)
resonator with the qubit index slowest, so basis state ``(q, n)`` lives at
flat index ``q * fock_cutoff + n``; qubit level 0 is the excited state,
level 1 the ground state (sigma_z = diag(+1, -1) therefore measures the
excited-state population minus the ground-state population).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EXCITED = 0
GROUND = 1

# Relative tolerance for treating a matrix as (anti-)Hermitian.
HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class HilbertLayout:
    """Index bookkeeping for the qubit (x) resonator product space."""

    fock_cutoff: int

    def __post_init__(self) -> None:
        if self.fock_cutoff < 2:
            raise ValueError("fock_cutoff must be at least 2")

    @property
    def dim(self) -> int:
        return 2 * self.fock_cutoff

    def index(self, qubit: int, photon: int) -> int:
        """Flat index of the joint basis state |qubit, photon>."""
        if qubit not in (EXCITED, GROUND):
            raise ValueError(f"qubit level must be 0 (excited) or 1 (ground), got {qubit}")
        if not 0 <= photon < self.fock_cutoff:
            raise ValueError(f"photon number {photon} outside [0, {self.fock_cutoff})")
        return qubit * self.fock_cutoff + photon

    def basis_ket(self, qubit: int, photon: int) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=np.complex128)
        psi[self.index(qubit, photon)] = 1.0
        return psi


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=np.complex128)


def sigma_x() -> np.ndarray:
    return np.array([[0, 1], [1, 0]], dtype=np.complex128)


def sigma_z() -> np.ndarray:
    return np.array([[1, 0], [0, -1]], dtype=np.complex128)


def sigma_plus() -> np.ndarray:
    """Qubit raising operator |e><g| in the (excited, ground) ordering."""
    return np.array([[0, 1], [0, 0]], dtype=np.complex128)


def sigma_minus() -> np.ndarray:
    """Qubit lowering operator |g><e|."""
    return np.array([[0, 0], [1, 0]], dtype=np.complex128)


def annihilation(fock_cutoff: int) -> np.ndarray:
    """Truncated resonator lowering operator, <n-1|a|n> = sqrt(n)."""
    if fock_cutoff < 2:
        raise ValueError("fock_cutoff must be at least 2")
    a = np.zeros((fock_cutoff, fock_cutoff), dtype=np.complex128)
    for n in range(1, fock_cutoff):
        a[n - 1, n] = math.sqrt(n)
    return a


def creation(fock_cutoff: int) -> np.ndarray:
    return annihilation(fock_cutoff).conj().T


def number_operator(fock_cutoff: int) -> np.ndarray:
    return np.diag(np.arange(fock_cutoff, dtype=np.complex128))


def tensor_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with the left factor slowest (qubit (x) resonator)."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"left factor must be square, got shape {a.shape}")
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValueError(f"right factor must be square, got shape {b.shape}")
    return np.kron(a, b)


def hermiticity_error(a: np.ndarray) -> float:
    """max|A - A^dag| as an absolute number."""
    return float(np.abs(a - a.conj().T).max())


def is_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    scale = float(np.abs(a).max())
    if scale == 0.0:
        return True
    return hermiticity_error(a) <= rtol * scale


def matrix_exp(a: np.ndarray) -> np.ndarray:
    """exp(A) for a square complex matrix.

    Hermitian and anti-Hermitian inputs (the cases that matter for
    propagators) go through an exact eigendecomposition, which keeps
    exp(anti-Hermitian) unitary to rounding.  Everything else falls back to
    Pade approximation with scaling and squaring.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix_exp needs a square matrix, got shape {a.shape}")
    scale = float(np.abs(a).max())
    if not math.isfinite(scale):
        raise ValueError("matrix_exp input contains non-finite entries")
    if scale == 0.0:
        return identity(a.shape[0])
    if hermiticity_error(a) <= HERMITIAN_RTOL * scale:
        w, v = np.linalg.eigh(a)
        return (v * np.exp(w)) @ v.conj().T
    if float(np.abs(a + a.conj().T).max()) <= HERMITIAN_RTOL * scale:
        # A = -iH with H = iA Hermitian, so exp(A) is exactly unitary.
        w, v = np.linalg.eigh(1j * a)
        return (v * np.exp(-1j * w)) @ v.conj().T
    return _expm_pade(a)


# [13/13] Pade coefficients for the exponential.
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_PADE13_THETA = 5.371920351148152


def _expm_pade(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    norm = float(np.linalg.norm(a, 1))
    squarings = max(0, int(math.ceil(math.log2(norm / _PADE13_THETA))) if norm > _PADE13_THETA else 0)
    a = a / (2.0 ** squarings)
    b = _PADE13
    ident = identity(n)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(squarings):
        r = r @ r
    return r


def normalize_ket(amplitudes: np.ndarray) -> np.ndarray:
    psi = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
    norm = float(np.linalg.norm(psi))
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return psi / norm


def density_from_ket(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128).reshape(-1)
    return np.outer(psi, psi.conj())


def partial_trace_resonator(state: np.ndarray, layout: HilbertLayout) -> np.ndarray:
    """Reduced 2x2 qubit density matrix, tracing out the resonator."""
    state = np.asarray(state, dtype=np.complex128)
    if state.ndim == 1:
        state = density_from_ket(state)
    if state.shape != (layout.dim, layout.dim):
        raise ValueError(
            f"state shape {state.shape} does not match layout dimension {layout.dim}")
    n = layout.fock_cutoff
    return np.einsum("anbn->ab", state.reshape(2, n, 2, n))


def expectation(op: np.ndarray, state: np.ndarray) -> float:
    """<A> for a Hermitian operator against a ket or density matrix."""
    op = np.asarray(op, dtype=np.complex128)
    if not is_hermitian(op):
        raise ValueError("expectation requires a Hermitian operator")
    state = np.asarray(state, dtype=np.complex128)
    if state.ndim == 1:
        if op.shape != (state.size, state.size):
            raise ValueError("operator/ket dimension mismatch")
        value = complex(np.vdot(state, op @ state))
    elif state.ndim == 2:
        if op.shape != state.shape:
            raise ValueError("operator/density-matrix dimension mismatch")
        value = complex(np.trace(op @ state))
    else:
        raise ValueError("state must be a ket (1-d) or density matrix (2-d)")
    if abs(value.imag) > 1e-10 * max(1.0, abs(value.real)):
        raise ValueError(f"expectation value has non-real residue {value.imag:g}")
    return value.real


def check_density_matrix(rho: np.ndarray, *, herm_rtol: float = 1e-10,
                         trace_atol: float = 1e-8, eig_floor: float = -1e-9) -> None:
    """Raise ValueError unless rho is Hermitian, unit-trace and positive
    within the given tolerances."""
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    scale = float(np.abs(rho).max())
    if scale == 0.0:
        raise ValueError("density matrix is zero")
    if hermiticity_error(rho) > herm_rtol * scale:
        raise ValueError("density matrix is not Hermitian within tolerance")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > trace_atol:
        raise ValueError(f"density matrix trace {tr:.12g} differs from 1")
    lowest = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if lowest < eig_floor:
        raise ValueError(f"density matrix has negative eigenvalue {lowest:g}")
