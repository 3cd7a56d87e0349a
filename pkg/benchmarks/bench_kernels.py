#!/usr/bin/env python3
"""Timing comparison of the compiled kernels against the numpy fallback.

Both backends integrate the same schemes (4th-order Magnus with two-point
Gauss-Legendre collocation for the Schrodinger equation, classical RK4 for
the Lindblad equation), so this doubles as an agreement check: the reported
deviation is roundoff accumulation, nothing else.  Problems are the real
switch workload -- the 2x5 qubit-resonator space driven at the switch-off
amplitude -- plus a larger synthetic system to show how the gap scales.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import math
import time

import numpy as np

from qswitch import _kernels_py
from qswitch.backend import COMPILED
from qswitch.dynamics import (
    TimeGrid,
    collapse_channels,
    default_lindblad_max_step,
    default_max_step,
)
from qswitch.model import (
    CouplingParams,
    DeviceModel,
    DriveParams,
    QubitParams,
    ResonatorParams,
    TWO_PI,
    build_lab_hamiltonian,
    switch_off_amplitude,
)

if COMPILED:
    from qswitch import _kernels
else:
    _kernels = None


def switch_model(fock_cutoff=5):
    wz = TWO_PI * 150e6
    return DeviceModel(
        qubit=QubitParams(gap=TWO_PI * 2.417e9, bias=0.0),
        resonator=ResonatorParams(frequency=TWO_PI * 2.417e9, t1=4.6e-6),
        coupling=CouplingParams(g=TWO_PI * 9.14e6),
        drive=DriveParams(amplitude=switch_off_amplitude(wz), frequency=wz),
        qubit_t1=0.45e-6,
        fock_cutoff=fock_cutoff,
    )


def random_hermitian(dim, scale, rng):
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (m + m.conj().T) * scale


def best_of(func, args, repeat):
    timings = []
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = func(*args)
        timings.append(time.perf_counter() - t0)
    return min(timings), result


def unitary_cases():
    model = switch_model()
    h = build_lab_hamiltonian(model)
    psi = model.layout.basis_ket(0, 0)
    times = TimeGrid(0.2e-6, 201).times()
    yield ("propagate  dim 10 (device, 0.2 us)",
           (h.static, h.drive, h.omega, h.phase, psi, times,
            default_max_step(model)))

    rng = np.random.default_rng(20260818)
    dim = 24
    psi = np.zeros(dim, complex)
    psi[0] = 1.0
    yield (f"propagate  dim {dim} (synthetic)",
           (random_hermitian(dim, 1e9, rng), random_hermitian(dim, 1e8, rng),
            TWO_PI * 150e6, 0.0, psi, np.linspace(0.0, 20e-9, 51), 2e-12))


def lindblad_cases():
    model = switch_model()
    h = build_lab_hamiltonian(model)
    dim = model.layout.dim
    rho = np.zeros((dim, dim), complex)
    rho[0, 0] = 1.0
    l_ops = [spec.scaled() for spec in collapse_channels(model)]
    times = TimeGrid(0.05e-6, 51).times()
    yield ("lindblad   dim 10 (device, 50 ns)",
           (h.static, h.drive, h.omega, h.phase, rho, l_ops, times,
            default_lindblad_max_step(model)))

    rng = np.random.default_rng(7)
    dim = 16
    rho = np.zeros((dim, dim), complex)
    rho[0, 0] = 1.0
    lower = np.zeros((dim, dim), complex)
    for k in range(dim - 1):
        lower[k, k + 1] = math.sqrt(k + 1.0)
    yield (f"lindblad   dim {dim} (synthetic)",
           (random_hermitian(dim, 1e9, rng), random_hermitian(dim, 1e8, rng),
            TWO_PI * 150e6, 0.0, rho, [math.sqrt(1.0 / 2e-6) * lower],
            np.linspace(0.0, 10e-9, 21), 5e-12))


def run(repeat):
    print(f"backend: compiled extension {'present' if COMPILED else 'MISSING'}"
          f" (best of {repeat})")
    header = f"{'case':38s} {'numpy':>10s} {'cython':>10s} {'speedup':>8s} {'max dev':>9s}"
    print(header)
    print("-" * len(header))
    for name, args in list(unitary_cases()) + list(lindblad_cases()):
        kernel = "propagate_cosine" if name.startswith("propagate") else \
            "lindblad_rk4_cosine"
        t_py, ref = best_of(getattr(_kernels_py, kernel), args, repeat)
        if _kernels is None:
            print(f"{name:38s} {t_py * 1e3:8.1f}ms {'-':>10s} {'-':>8s} {'-':>9s}")
            continue
        t_cy, out = best_of(getattr(_kernels, kernel), args, repeat)
        dev = float(np.abs(np.asarray(out) - np.asarray(ref)).max())
        print(f"{name:38s} {t_py * 1e3:8.1f}ms {t_cy * 1e3:8.1f}ms "
              f"{t_py / t_cy:7.1f}x {dev:9.1e}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3,
                        help="timing repetitions per case (best is reported)")
    run(parser.parse_args().repeat)
