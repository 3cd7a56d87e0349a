"""Pure-numpy propagation kernels (reference semantics, compiled fallback).

Both backends expose the same two entry points:

``propagate_cosine(h0, h1, omega, phase, x0, times, max_step)``
    Integrates dX/dt = -i H(t) X with H(t) = h0 + cos(omega*t + phase)*h1
    from t = 0, recording X at each entry of ``times`` (non-decreasing,
    first entry >= 0).  Each substep applies the exact exponential of a
    fourth-order Magnus term sampled at the two Gauss-Legendre nodes; for
    H(t) = h0 + c(t)*h1 the Magnus commutator collapses to a scalar
    multiple of the constant K = i[h0, h1], so every substep exponentiates
    a Hermitian matrix (eigendecomposition) and the propagation is exactly
    unitary regardless of step size.  ``x0`` may be a ket (n,) or an
    operator (n, m); the result has shape (len(times), n, m) with kets
    carried as column matrices.

``lindblad_rk4_cosine(h0, h1, omega, phase, rho0, l_ops, times, max_step)``
    Classical fixed-step RK4 on the Lindblad master equation
    drho/dt = -i[H(t), rho] + sum_k (L_k rho L_k^dag - {L_k^dag L_k, rho}/2)
    with decay rates already folded into the collapse operators
    (L_k = sqrt(gamma_k) C_k).  The anticommutator is absorbed into a
    non-Hermitian effective Hamiltonian; rho is re-Hermitized after every
    step to pin down rounding.

Substep counts per output interval are ceil(span / max_step), identical in
both backends, so halving max_step exactly doubles the work.
"""

from __future__ import annotations

import math

import numpy as np

# Gauss-Legendre nodes at t_mid +- GL_OFFSET * h
GL_OFFSET = 0.5 / math.sqrt(3.0)

# Hard cap on substeps per output interval; beyond this the requested step
# is so small the integration would never finish (or max_step underflowed).
MAX_SUBSTEPS = 200_000_000


def _substeps(span: float, max_step: float) -> int:
    if span < 0.0:
        raise ValueError("output times must be non-decreasing")
    if not (max_step > 0.0) or not math.isfinite(max_step):
        raise ValueError("max_step must be positive and finite")
    if span == 0.0:
        return 0
    n = int(math.ceil(span / max_step))
    if n > MAX_SUBSTEPS:
        raise ValueError(
            f"step-size underflow: interval of {span:g} s needs {n} substeps "
            f"at max_step {max_step:g} s")
    return n


def propagate_cosine(h0, h1, omega, phase, x0, times, max_step):
    h0 = np.asarray(h0, dtype=np.complex128)
    h1 = np.asarray(h1, dtype=np.complex128)
    times = np.asarray(times, dtype=np.float64)
    x = np.array(x0, dtype=np.complex128, copy=True)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    n = h0.shape[0]
    out = np.empty((times.size, n, x.shape[1]), dtype=np.complex128)
    k_mat = 1j * (h0 @ h1 - h1 @ h0)
    t = 0.0
    if times.size and times[0] < 0.0:
        raise ValueError("output times must start at or after t = 0")
    for j, tj in enumerate(times):
        nsub = _substeps(float(tj) - t, max_step)
        if nsub:
            h = (float(tj) - t) / nsub
            gcoef = math.sqrt(3.0) * h / 12.0
            for i in range(nsub):
                ta = t + i * h + (0.5 - GL_OFFSET) * h
                tb = t + i * h + (0.5 + GL_OFFSET) * h
                ca = math.cos(omega * ta + phase)
                cb = math.cos(omega * tb + phase)
                m = h0 + (0.5 * (ca + cb)) * h1 + (gcoef * (cb - ca)) * k_mat
                w, v = np.linalg.eigh(m)
                x = v @ (np.exp(-1j * w * h)[:, None] * (v.conj().T @ x))
        t = float(tj)
        out[j] = x
    return out


def lindblad_rk4_cosine(h0, h1, omega, phase, rho0, l_ops, times, max_step):
    h0 = np.asarray(h0, dtype=np.complex128)
    h1 = np.asarray(h1, dtype=np.complex128)
    times = np.asarray(times, dtype=np.float64)
    rho = np.array(rho0, dtype=np.complex128, copy=True)
    l_ops = [np.asarray(l, dtype=np.complex128) for l in l_ops]
    l_dags = [l.conj().T.copy() for l in l_ops]
    n = h0.shape[0]

    ldl = np.zeros((n, n), dtype=np.complex128)
    for l, ld in zip(l_ops, l_dags):
        ldl += ld @ l
    h0_nh = h0 - 0.5j * ldl
    h0_nh_dag = h0_nh.conj().T.copy()

    def rhs(c, r):
        hnh = h0_nh + c * h1
        hnh_dag = h0_nh_dag + c * h1  # h1 Hermitian, c real
        d = -1j * (hnh @ r - r @ hnh_dag)
        for l, ld in zip(l_ops, l_dags):
            d += l @ r @ ld
        return d

    out = np.empty((times.size, n, n), dtype=np.complex128)
    t = 0.0
    if times.size and times[0] < 0.0:
        raise ValueError("output times must start at or after t = 0")
    for j, tj in enumerate(times):
        nsub = _substeps(float(tj) - t, max_step)
        if nsub:
            h = (float(tj) - t) / nsub
            for i in range(nsub):
                ti = t + i * h
                c1 = math.cos(omega * ti + phase)
                c2 = math.cos(omega * (ti + 0.5 * h) + phase)
                c3 = math.cos(omega * (ti + h) + phase)
                k1 = rhs(c1, rho)
                k2 = rhs(c2, rho + (0.5 * h) * k1)
                k3 = rhs(c2, rho + (0.5 * h) * k2)
                k4 = rhs(c3, rho + h * k3)
                rho = rho + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
                rho = 0.5 * (rho + rho.conj().T)
        t = float(tj)
        out[j] = rho
    return out
