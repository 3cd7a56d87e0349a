# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled propagation kernels.

Same contract as qswitch._kernels_py (the reference implementation); see
that module's docstring.  Matrices live in C order; LAPACK's column-major
view of a Hermitian C-order buffer is its transpose/conjugate, which zheev
diagonalizes with the same (real) eigenvalues and conjugated eigenvectors.
With W the returned buffer read in C order (row k = eigenvector q_k of the
conjugated matrix), the exact substep X <- exp(-i M h) X becomes

    Y = W @ X,   Y[k,:] *= exp(-i w_k h),   X <- W^H @ Y,

using plain row-major products throughout.
"""

import math

import numpy as np

from libc.math cimport cos, sin, ceil, sqrt
from scipy.linalg.cython_blas cimport zgemm
from scipy.linalg.cython_lapack cimport zheev

ctypedef double complex zcomplex

GL_OFFSET = 0.5 / math.sqrt(3.0)
MAX_SUBSTEPS = 200_000_000

cdef double _GL_OFF = 0.5 / sqrt(3.0)

# The products below run through BLAS zgemm.  zgemm is column-major; a
# row-major product C = op(A) @ op(B) is computed as the column-major
# product C^T = op(B)^T @ op(A)^T on the same buffers, so the operands
# swap places and 'C' on a row-major buffer yields conj(op) instead of
# the conjugate transpose.

cdef void _matmul(int n, int m, zcomplex* a, zcomplex* x, zcomplex* y) noexcept nogil:
    # y = a @ x with a (n,n), x (n,m), all row-major
    cdef char nt = b'N'
    cdef zcomplex one = 1.0, zero = 0.0
    zgemm(&nt, &nt, &m, &n, &n, &one, x, &m, a, &n, &zero, y, &m)


cdef void _conjt_matmul(int n, int m, zcomplex* a, zcomplex* y, zcomplex* x) noexcept nogil:
    # x = a^H @ y with a (n,n), y (n,m), all row-major:
    # x^T = y^T @ conj(a) in column-major terms
    cdef char nt = b'N', ct = b'C'
    cdef zcomplex one = 1.0, zero = 0.0
    zgemm(&nt, &ct, &m, &n, &n, &one, y, &m, a, &n, &zero, x, &m)


cdef void _matmul_conjt(int n, zcomplex* b, zcomplex* c, zcomplex* d) noexcept nogil:
    # d = b @ c^H with b, c (n,n) row-major:
    # d^T = conj(c) @ b^T in column-major terms
    cdef char nt = b'N', ct = b'C'
    cdef zcomplex one = 1.0, zero = 0.0
    zgemm(&ct, &nt, &n, &n, &n, &one, c, &n, b, &n, &zero, d, &n)


cdef int _advance_prop(int n, int m, zcomplex* h0, zcomplex* h1, zcomplex* kmat,
                       double omega, double phase, double t0, double span,
                       long nsub, zcomplex* x, zcomplex* mbuf, double* w,
                       zcomplex* ybuf, zcomplex* work, int lwork,
                       double* rwork) noexcept nogil:
    cdef long i
    cdef int j, k, info = 0, nn = n, lda = n, lw = lwork
    cdef double h, gcoef, ta, tb, ca, cb, cbar, gterm, wh
    cdef char jobz = b'V', uplo = b'U'
    cdef zcomplex ph
    h = span / nsub
    gcoef = sqrt(3.0) * h / 12.0
    for i in range(nsub):
        ta = t0 + i * h + (0.5 - _GL_OFF) * h
        tb = t0 + i * h + (0.5 + _GL_OFF) * h
        ca = cos(omega * ta + phase)
        cb = cos(omega * tb + phase)
        cbar = 0.5 * (ca + cb)
        gterm = gcoef * (cb - ca)
        for j in range(n * n):
            mbuf[j] = h0[j] + cbar * h1[j] + gterm * kmat[j]
        zheev(&jobz, &uplo, &nn, mbuf, &lda, w, work, &lw, rwork, &info)
        if info != 0:
            return info
        _matmul(n, m, mbuf, x, ybuf)
        for j in range(n):
            wh = w[j] * h
            ph = cos(wh) - 1j * sin(wh)
            for k in range(m):
                ybuf[j * m + k] = ybuf[j * m + k] * ph
        _conjt_matmul(n, m, mbuf, ybuf, x)
    return 0


def propagate_cosine(h0, h1, double omega, double phase, x0, times, double max_step):
    h0 = np.ascontiguousarray(h0, dtype=np.complex128)
    h1 = np.ascontiguousarray(h1, dtype=np.complex128)
    cdef double[::1] tview = np.ascontiguousarray(times, dtype=np.float64)
    x = np.array(x0, dtype=np.complex128, order="C", copy=True)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    cdef int n = h0.shape[0]
    cdef int m = x.shape[1]
    cdef Py_ssize_t nt = tview.shape[0]
    if not (max_step > 0.0) or not math.isfinite(max_step):
        raise ValueError("max_step must be positive and finite")
    if nt and tview[0] < 0.0:
        raise ValueError("output times must start at or after t = 0")

    kmat = np.ascontiguousarray(1j * (h0 @ h1 - h1 @ h0))
    out = np.empty((nt, n, m), dtype=np.complex128)

    cdef zcomplex[:, ::1] h0v = h0
    cdef zcomplex[:, ::1] h1v = h1
    cdef zcomplex[:, ::1] kv = kmat
    cdef zcomplex[:, ::1] xv = x
    cdef zcomplex[:, :, ::1] outv = out

    mbuf = np.empty((n, n), dtype=np.complex128)
    ybuf = np.empty((n, m), dtype=np.complex128)
    wbuf = np.empty(n, dtype=np.float64)
    rwork = np.empty(max(1, 3 * n - 2), dtype=np.float64)
    cdef zcomplex[:, ::1] mv = mbuf
    cdef zcomplex[:, ::1] yv = ybuf
    cdef double[::1] wv = wbuf
    cdef double[::1] rwv = rwork

    # workspace query
    cdef int info = 0, nn = n, lda = n, lwork = -1
    cdef char jobz = b'V', uplo = b'U'
    cdef zcomplex wkopt
    zheev(&jobz, &uplo, &nn, &mv[0, 0], &lda, &wv[0], &wkopt, &lwork, &rwv[0], &info)
    lwork = max(2 * n, int(wkopt.real))
    work = np.empty(lwork, dtype=np.complex128)
    cdef zcomplex[::1] workv = work

    cdef double t = 0.0, tj, span
    cdef long nsub
    cdef Py_ssize_t j
    for j in range(nt):
        tj = tview[j]
        span = tj - t
        if span < 0.0:
            raise ValueError("output times must be non-decreasing")
        if span > 0.0:
            nsub = <long> ceil(span / max_step)
            if nsub < 1:
                nsub = 1
            if nsub > MAX_SUBSTEPS:
                raise ValueError(
                    f"step-size underflow: interval of {span:g} s needs "
                    f"{nsub} substeps at max_step {max_step:g} s")
            with nogil:
                info = _advance_prop(n, m, &h0v[0, 0], &h1v[0, 0], &kv[0, 0],
                                     omega, phase, t, span, nsub, &xv[0, 0],
                                     &mv[0, 0], &wv[0], &yv[0, 0], &workv[0],
                                     lwork, &rwv[0])
            if info != 0:
                raise RuntimeError(f"zheev failed with info={info}")
        t = tj
        outv[j, :, :] = xv
    return out


cdef void _lindblad_rhs(int n, int nl, zcomplex* h0nh, zcomplex* h0nhd,
                        zcomplex* h1, double c, zcomplex* lops, zcomplex* rho,
                        zcomplex* hc, zcomplex* hcd, zcomplex* t1,
                        zcomplex* t2, zcomplex* out) noexcept nogil:
    # out = -i[(h0nh + c h1) rho - rho (h0nhd + c h1)] + sum_k L_k rho L_k^H
    cdef int i, q
    for i in range(n * n):
        hc[i] = h0nh[i] + c * h1[i]
        hcd[i] = h0nhd[i] + c * h1[i]
    _matmul(n, n, hc, rho, t1)
    _matmul(n, n, rho, hcd, t2)
    for i in range(n * n):
        out[i] = -1j * (t1[i] - t2[i])
    # collapse channels: out += (L @ rho) @ L^H
    for q in range(nl):
        _matmul(n, n, lops + q * n * n, rho, t1)
        _matmul_conjt(n, t1, lops + q * n * n, t2)
        for i in range(n * n):
            out[i] = out[i] + t2[i]
    return


cdef int _advance_lindblad(int n, int nl, zcomplex* h0nh, zcomplex* h0nhd,
                           zcomplex* h1, zcomplex* lops, double omega,
                           double phase, double t0, double span, long nsub,
                           zcomplex* rho, zcomplex* k1, zcomplex* k2,
                           zcomplex* k3, zcomplex* k4, zcomplex* stage,
                           zcomplex* hc, zcomplex* hcd, zcomplex* t1,
                           zcomplex* t2) noexcept nogil:
    cdef long i
    cdef int j, a, b
    cdef double h, ti, c1, c2, c3
    cdef zcomplex avg
    h = span / nsub
    for i in range(nsub):
        ti = t0 + i * h
        c1 = cos(omega * ti + phase)
        c2 = cos(omega * (ti + 0.5 * h) + phase)
        c3 = cos(omega * (ti + h) + phase)
        _lindblad_rhs(n, nl, h0nh, h0nhd, h1, c1, lops, rho, hc, hcd, t1, t2, k1)
        for j in range(n * n):
            stage[j] = rho[j] + 0.5 * h * k1[j]
        _lindblad_rhs(n, nl, h0nh, h0nhd, h1, c2, lops, stage, hc, hcd, t1, t2, k2)
        for j in range(n * n):
            stage[j] = rho[j] + 0.5 * h * k2[j]
        _lindblad_rhs(n, nl, h0nh, h0nhd, h1, c2, lops, stage, hc, hcd, t1, t2, k3)
        for j in range(n * n):
            stage[j] = rho[j] + h * k3[j]
        _lindblad_rhs(n, nl, h0nh, h0nhd, h1, c3, lops, stage, hc, hcd, t1, t2, k4)
        for j in range(n * n):
            rho[j] = rho[j] + (h / 6.0) * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j])
        # re-Hermitize
        for a in range(n):
            rho[a * n + a] = rho[a * n + a].real + 0.0j
            for b in range(a + 1, n):
                avg = 0.5 * (rho[a * n + b] + rho[b * n + a].conjugate())
                rho[a * n + b] = avg
                rho[b * n + a] = avg.conjugate()
    return 0


def lindblad_rk4_cosine(h0, h1, double omega, double phase, rho0, l_ops,
                        times, double max_step):
    h0 = np.ascontiguousarray(h0, dtype=np.complex128)
    h1 = np.ascontiguousarray(h1, dtype=np.complex128)
    cdef double[::1] tview = np.ascontiguousarray(times, dtype=np.float64)
    rho = np.array(rho0, dtype=np.complex128, order="C", copy=True)
    lcube = np.ascontiguousarray(np.stack([np.asarray(l, dtype=np.complex128)
                                           for l in l_ops])
                                 if len(l_ops) else
                                 np.zeros((0, h0.shape[0], h0.shape[0]),
                                          dtype=np.complex128))
    cdef int n = h0.shape[0]
    cdef int nl = lcube.shape[0]
    cdef Py_ssize_t nt = tview.shape[0]
    if not (max_step > 0.0) or not math.isfinite(max_step):
        raise ValueError("max_step must be positive and finite")
    if nt and tview[0] < 0.0:
        raise ValueError("output times must start at or after t = 0")

    ldl = np.zeros((n, n), dtype=np.complex128)
    for q in range(nl):
        ldl += lcube[q].conj().T @ lcube[q]
    h0nh = np.ascontiguousarray(h0 - 0.5j * ldl)
    h0nhd = np.ascontiguousarray(h0nh.conj().T)

    out = np.empty((nt, n, n), dtype=np.complex128)
    cdef zcomplex[:, ::1] h0nhv = h0nh
    cdef zcomplex[:, ::1] h0nhdv = h0nhd
    cdef zcomplex[:, ::1] h1v = h1
    cdef zcomplex[:, :, ::1] lv = lcube
    cdef zcomplex[:, ::1] rhov = rho
    cdef zcomplex[:, :, ::1] outv = out

    scratch = [np.empty((n, n), dtype=np.complex128) for _ in range(9)]
    cdef zcomplex[:, ::1] k1v = scratch[0]
    cdef zcomplex[:, ::1] k2v = scratch[1]
    cdef zcomplex[:, ::1] k3v = scratch[2]
    cdef zcomplex[:, ::1] k4v = scratch[3]
    cdef zcomplex[:, ::1] stv = scratch[4]
    cdef zcomplex[:, ::1] hcv = scratch[5]
    cdef zcomplex[:, ::1] hcdv = scratch[6]
    cdef zcomplex[:, ::1] t1v = scratch[7]
    cdef zcomplex[:, ::1] t2v = scratch[8]

    cdef zcomplex* lptr = &lv[0, 0, 0] if nl else NULL
    cdef double t = 0.0, tj, span
    cdef long nsub
    cdef Py_ssize_t j
    for j in range(nt):
        tj = tview[j]
        span = tj - t
        if span < 0.0:
            raise ValueError("output times must be non-decreasing")
        if span > 0.0:
            nsub = <long> ceil(span / max_step)
            if nsub < 1:
                nsub = 1
            if nsub > MAX_SUBSTEPS:
                raise ValueError(
                    f"step-size underflow: interval of {span:g} s needs "
                    f"{nsub} substeps at max_step {max_step:g} s")
            with nogil:
                _advance_lindblad(n, nl, &h0nhv[0, 0], &h0nhdv[0, 0],
                                  &h1v[0, 0], lptr, omega, phase, t, span,
                                  nsub, &rhov[0, 0], &k1v[0, 0], &k2v[0, 0],
                                  &k3v[0, 0], &k4v[0, 0], &stv[0, 0],
                                  &hcv[0, 0], &hcdv[0, 0],
                                  &t1v[0, 0], &t2v[0, 0])
        t = tj
        outv[j, :, :] = rhov
    return out
