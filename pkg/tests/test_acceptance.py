"""Top-level acceptance battery.

Each test checks one contract the toolkit must honor, prints a single
PASS/FAIL line with the measured numbers (visible even under capture), and
asserts.  Tolerances are pinned here and nowhere else.
"""

import hashlib
import json
import math
import time

import numpy as np
import pytest

from conftest import (
    DELTA,
    G,
    T1_QUBIT,
    T1_RESONATOR,
    WR,
    WZ,
    build_model,
)
from qswitch import linalg
from qswitch.calibration import (
    REFERENCE_MAP,
    SpectrumPeaks,
    fit_anticrossing,
    gap_tuning_curve,
    synthesize_waveform,
    valpha,
)
from qswitch.cli import main as cli_main
from qswitch.dynamics import (
    EIG_FLOOR,
    NORM_TOL,
    TRACE_TOL,
    TimeGrid,
    collapse_channels,
    default_lindblad_max_step,
    default_max_step,
    evolve_lindblad,
    evolve_unitary,
    quasienergy_gap,
)
from qswitch.model import (
    TWO_PI,
    bessel_j0,
    build_effective_hamiltonian,
    build_lab_hamiltonian,
    switch_off_amplitude,
)
from qswitch.protocols import (
    analyze_storage,
    extract_frequency,
    find_switch_off,
    onoff_ratio,
    storage_experiment,
    swap_duration,
)


def report(capfd, num: int, ok: bool, detail: str) -> None:
    with capfd.disabled():
        print(f"[acceptance {num:02d}] {'PASS' if ok else 'FAIL'}: {detail}",
              flush=True)
    assert ok, f"criterion {num}: {detail}"


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv("QSWITCH_OUT", raising=False)


def test_criterion_01_vacuum_rabi(capfd):
    """Undriven, lossless, resonant: P(t) oscillates at 2g/2pi = 18.28 MHz."""
    started = time.perf_counter()
    model = build_model(with_drive=False)
    res = evolve_unitary(build_lab_hamiltonian(model),
                         model.layout.basis_ket(0, 0),
                         TimeGrid(1.0e-6, 2001), model.layout)
    freq = extract_frequency(res.qubit_excited_population, res.times)
    elapsed = time.perf_counter() - started
    err = abs(freq / 18.28e6 - 1.0) if freq is not None else math.inf
    ok = freq is not None and err <= 0.01 and elapsed < 5.0
    report(capfd, 1, ok,
           f"vacuum Rabi {freq / 1e6 if freq else math.nan:.4f} MHz vs 18.28 MHz "
           f"(rel err {err:.2e}, tol 1e-2) in {elapsed:.1f} s (limit 5 s)")


def test_criterion_02_bessel_law(capfd):
    """Quasienergy gap follows 2g|J0(2 lambda_z/w_z)| across the drive sweep."""
    started = time.perf_counter()
    ratios = np.linspace(0.0, 1.6, 40)
    worst = 0.0
    checked = 0
    for r in ratios:
        gap = quasienergy_gap(build_model(lambda_z=float(r) * WZ))
        j0 = abs(bessel_j0(2.0 * float(r)))
        if j0 > 0.05:
            worst = max(worst, abs(gap - 2.0 * G * j0) / (2.0 * G * j0))
            checked += 1
    elapsed = time.perf_counter() - started
    ok = worst <= 0.05 and checked >= 20 and elapsed < 120.0
    report(capfd, 2, ok,
           f"gap vs 2g|J0| worst rel err {worst:.2e} (tol 5e-2) over {checked}"
           f"/40 points with |J0| > 0.05 in {elapsed:.1f} s (limit 120 s)")


def test_criterion_03_switch_off_depth(capfd):
    """Minimized gap: R < 1e-5 with lambda_off/2pi inside [175, 185] MHz."""
    started = time.perf_counter()
    model = build_model()
    lam_off = find_switch_off(model)
    ratio = onoff_ratio(model, lam_off)
    elapsed = time.perf_counter() - started
    lam_mhz = lam_off / TWO_PI / 1e6
    ok = ratio < 1e-5 and 175.0 <= lam_mhz <= 185.0 and elapsed < 60.0
    report(capfd, 3, ok,
           f"R = {ratio:.2e} (tol < 1e-5) at lambda_off/2pi = {lam_mhz:.4f} MHz "
           f"(window [175, 185]) in {elapsed:.1f} s (limit 60 s)")


def test_criterion_04_pause_property(capfd):
    """With T1 = (0.45, 4.6) us, the held qubit hugs its decay envelope."""
    started = time.perf_counter()
    model = build_model(t1_qubit=T1_QUBIT, t1_resonator=T1_RESONATOR)
    lam_off = find_switch_off(model)
    t_swap = swap_duration(model)
    t_off = 0.5e-6
    grid = TimeGrid(t_swap + t_off + 0.1e-6, 301)
    res = storage_experiment(model, t_off, grid, lambda_off=lam_off)
    hold = (res.times >= t_swap) & (res.times <= t_swap + t_off)
    p_hold = res.qubit_excited_population[hold]
    envelope = p_hold[0] * np.exp(-(res.times[hold] - res.times[hold][0])
                                  / T1_QUBIT)
    deviation = float(np.abs(p_hold - envelope).max())
    elapsed = time.perf_counter() - started
    ok = deviation <= 0.03 and hold.sum() >= 32 and elapsed < 60.0
    report(capfd, 4, ok,
           f"max |P - envelope| = {deviation:.4f} (tol 0.03) over "
           f"{int(hold.sum())} hold samples in {elapsed:.1f} s (limit 60 s)")


def test_criterion_05_storage_revival(capfd):
    """1.5 us hold: revival amplitude ratio tracks exp(-1.5/4.6), 18.28 MHz."""
    started = time.perf_counter()
    model = build_model(t1_qubit=T1_QUBIT, t1_resonator=T1_RESONATOR)
    lam_off = find_switch_off(model)
    t_off, post = 1.5e-6, 0.6e-6
    t_end = swap_duration(model) + t_off + post
    grid = TimeGrid(t_end, int(round(t_end / 2e-9)) + 1)
    out = analyze_storage(model, t_off, grid, lambda_off=lam_off)
    expected_ratio = math.exp(-t_off / T1_RESONATOR)
    ratio_err = abs(out.amplitude_ratio / expected_ratio - 1.0)
    freq_err = abs(out.revival_frequency_hz / 18.28e6 - 1.0)
    elapsed = time.perf_counter() - started
    ok = ratio_err <= 0.10 and freq_err <= 0.01 and elapsed < 120.0
    report(capfd, 5, ok,
           f"amplitude ratio {out.amplitude_ratio:.4f} vs exp(-1.5/4.6) = "
           f"{expected_ratio:.4f} (rel err {ratio_err:.2e}, tol 0.1); revival "
           f"{out.revival_frequency_hz / 1e6:.4f} MHz (rel err {freq_err:.2e}, "
           f"tol 0.01) in {elapsed:.1f} s (limit 120 s)")


def _rwa_residual(wz: float, fock_cutoff: int = 5) -> float:
    """Peak |P_full - P_eff| over 2 us at the switch-off amplitude for wz."""
    model = build_model(lambda_z=switch_off_amplitude(wz), wz=wz,
                        fock_cutoff=fock_cutoff)
    grid = TimeGrid(2.0e-6, 4001)
    psi0 = model.layout.basis_ket(0, 0)
    full = evolve_unitary(build_lab_hamiltonian(model), psi0, grid, model.layout)
    eff = evolve_unitary(build_effective_hamiltonian(model), psi0, grid,
                         model.layout)
    return float(np.abs(full.qubit_excited_population
                        - eff.qubit_excited_population).max())


def test_criterion_06_rwa_residual(capfd):
    """Residual against the Bessel-coupling model falls as wz grows."""
    started = time.perf_counter()
    peaks = {f: _rwa_residual(TWO_PI * f) for f in (150e6, 300e6, 600e6)}
    elapsed = time.perf_counter() - started
    ok = peaks[150e6] > peaks[300e6] > peaks[600e6]
    report(capfd, 6, ok,
           "peak |P_full - P_eff| over 2 us: "
           + ", ".join(f"{f / 1e6:.0f} MHz -> {p:.2e}"
                       for f, p in sorted(peaks.items()))
           + f" (strictly decreasing: {ok}) in {elapsed:.1f} s")


def _dressed_peaks(noise_hz: float, seed: int) -> SpectrumPeaks:
    rng = np.random.default_rng(seed)
    entries = []
    for eps in np.linspace(-TWO_PI * 50e6, TWO_PI * 50e6, 21):
        wq = math.hypot(DELTA, float(eps))
        root = math.hypot(0.5 * (wq - WR), G)
        center = 0.5 * (wq + WR)
        pair = sorted(((center - root) / TWO_PI + noise_hz * rng.standard_normal(),
                       (center + root) / TWO_PI + noise_hz * rng.standard_normal()))
        entries.append((float(eps), tuple(pair)))
    return SpectrumPeaks(entries=tuple(entries))


def test_criterion_07_anticrossing_fit(capfd):
    """g recovered to 0.1% noiseless and 1% under 10 kHz seeded noise."""
    started = time.perf_counter()
    clean = fit_anticrossing(_dressed_peaks(0.0, seed=1234))
    noisy = fit_anticrossing(_dressed_peaks(1e4, seed=1234))
    clean_err = abs(clean.g / G - 1.0)
    noisy_err = abs(noisy.g / G - 1.0)
    elapsed = time.perf_counter() - started
    ok = clean_err <= 1e-3 and noisy_err <= 1e-2
    report(capfd, 7, ok,
           f"g rel err {clean_err:.2e} noiseless (tol 1e-3), {noisy_err:.2e} "
           f"with 10 kHz seeded noise (tol 1e-2) in {elapsed:.1f} s")


def test_criterion_08_numerical_hygiene(capfd):
    """Invariants, substep-halving stability, and Fock-cutoff insensitivity."""
    started = time.perf_counter()
    lam_off = find_switch_off(build_model())

    # Invariants on representative driven runs (they also raise on violation
    # inside every other criterion's evolution).
    uni_model = build_model(lambda_z=lam_off)
    h_uni = build_lab_hamiltonian(uni_model)
    psi0 = uni_model.layout.basis_ket(0, 0)
    step = default_max_step(uni_model)
    coarse = evolve_unitary(h_uni, psi0, TimeGrid(0.5e-6, 501, max_step=step),
                            uni_model.layout)
    fine = evolve_unitary(h_uni, psi0, TimeGrid(0.5e-6, 501, max_step=step / 2),
                          uni_model.layout)
    halving_uni = float(np.abs(coarse.qubit_excited_population
                               - fine.qubit_excited_population).max())

    diss_model = build_model(lambda_z=lam_off, t1_qubit=T1_QUBIT,
                             t1_resonator=T1_RESONATOR)
    h_diss = build_lab_hamiltonian(diss_model)
    rho0 = linalg.density_from_ket(diss_model.layout.basis_ket(0, 0))
    channels = collapse_channels(diss_model)
    lstep = default_lindblad_max_step(diss_model)
    dcoarse = evolve_lindblad(h_diss, rho0, channels,
                              TimeGrid(0.1e-6, 101, max_step=lstep),
                              diss_model.layout)
    dfine = evolve_lindblad(h_diss, rho0, channels,
                            TimeGrid(0.1e-6, 101, max_step=lstep / 2),
                            diss_model.layout)
    halving_diss = float(np.abs(dcoarse.qubit_excited_population
                                - dfine.qubit_excited_population).max())
    invariants_ok = (coarse.norm_error <= NORM_TOL
                     and dcoarse.trace_error <= TRACE_TOL
                     and dcoarse.min_eigenvalue >= EIG_FLOOR)

    # Fock cutoff N = 5 vs N = 8, observable by observable.  Static paths
    # are exact (no substeps), so halving is vacuous there by construction.
    def rabi_freq(fock):
        model = build_model(with_drive=False, fock_cutoff=fock)
        res = evolve_unitary(build_lab_hamiltonian(model),
                             model.layout.basis_ket(0, 0),
                             TimeGrid(1.0e-6, 2001), model.layout)
        return extract_frequency(res.qubit_excited_population, res.times)

    cut_freq = abs(rabi_freq(8) / rabi_freq(5) - 1.0)

    gap_shift = 0.0
    for r in np.linspace(0.0, 1.6, 40):
        g5 = quasienergy_gap(build_model(lambda_z=float(r) * WZ, fock_cutoff=5))
        g8 = quasienergy_gap(build_model(lambda_z=float(r) * WZ, fock_cutoff=8))
        gap_shift = max(gap_shift, abs(g8 - g5) / (2.0 * G))

    lam5 = find_switch_off(build_model(fock_cutoff=5))
    lam8 = find_switch_off(build_model(fock_cutoff=8))
    cut_lam = abs(lam8 / lam5 - 1.0)
    cut_r = abs(onoff_ratio(build_model(fock_cutoff=8), lam8)
                - onoff_ratio(build_model(fock_cutoff=5), lam5))

    def storage_probe(fock):
        model = build_model(lambda_z=0.0, t1_qubit=T1_QUBIT,
                            t1_resonator=T1_RESONATOR, fock_cutoff=fock)
        grid = TimeGrid(swap_duration(model) + 0.1e-6 + 0.05e-6, 121)
        return storage_experiment(model, 0.1e-6, grid, lambda_off=lam_off)

    probe5, probe8 = storage_probe(5), storage_probe(8)
    cut_pop = float(np.abs(probe5.qubit_excited_population
                           - probe8.qubit_excited_population).max())
    cut_photon = float(np.abs(probe5.photon_number - probe8.photon_number).max())

    cut_rwa = abs(_rwa_residual(WZ, fock_cutoff=8) - _rwa_residual(WZ, fock_cutoff=5))

    elapsed = time.perf_counter() - started
    ok = (invariants_ok
          and halving_uni <= 1e-7 and halving_diss <= 1e-7
          and cut_freq <= 1e-6 and gap_shift <= 1e-6
          and cut_lam <= 1e-6 and cut_r <= 1e-6
          and cut_pop <= 1e-6 and cut_photon <= 1e-6 and cut_rwa <= 1e-6)
    report(capfd, 8, ok,
           f"invariants (norm {coarse.norm_error:.1e}, trace "
           f"{dcoarse.trace_error:.1e}, min eig {dcoarse.min_eigenvalue:.1e}); "
           f"halving dP {halving_uni:.1e} unitary / {halving_diss:.1e} "
           f"dissipative (tol 1e-7); N5 vs N8: rabi {cut_freq:.1e}, gaps "
           f"{gap_shift:.1e}, lambda_off {cut_lam:.1e}, R {cut_r:.1e}, "
           f"storage P/n {cut_pop:.1e}/{cut_photon:.1e}, rwa {cut_rwa:.1e} "
           f"(tol 1e-6) in {elapsed:.1f} s")


def test_criterion_09_calibration_chain(capfd):
    """Horner oracle, tuning-curve inversion, exact waveform extremes."""
    started = time.perf_counter()
    x = 2.417
    horner = ((0.2287 * x - 2.758) * x + 11.14) * x - 15.27
    volt_err = abs(valpha(2.417) - horner)

    xs = np.linspace(2.05, 4.95, 25)
    curve = gap_tuning_curve(REFERENCE_MAP, [valpha(float(v)) for v in xs])
    round_trip = max(abs(gap - float(v)) for gap, v in zip(curve.gaps_ghz, xs))

    wf = synthesize_waveform(TWO_PI * 180e6, WZ, WR, REFERENCE_MAP,
                             2.4e9, 100e-9)
    # 2.4 GS/s over 150 MHz: cosine extremes at samples 0 and 8, where the
    # instantaneous gap is 2.417 +- 0.360 GHz.
    extremes_exact = (wf.samples[0] == valpha(2.777)
                      and wf.samples[8] == valpha(2.057))

    elapsed = time.perf_counter() - started
    ok = volt_err <= 1e-12 and round_trip <= 1e-9 and extremes_exact
    report(capfd, 9, ok,
           f"valpha(2.417) off Horner oracle by {volt_err:.1e} V (tol 1e-12); "
           f"tuning round trip {round_trip:.1e} GHz (tol 1e-9); waveform "
           f"extremes bit-equal to valpha: {extremes_exact} in {elapsed:.1f} s")


CLI_DEVICE = """\
[device]
delta = 2.417 GHz
wr = 2.417 GHz
g = 9.14 MHz
t1_qubit = 0.45 us
t1_resonator = 4.6 us
"""

# Small but non-degenerate run cards: every subcommand exercises its real
# code path, sized so three runs apiece stay affordable.
CLI_CONFIGS = {
    "spectrum": CLI_DEVICE + """\
[epsilon_sweep]
start = -40 MHz
stop = 40 MHz
points = 3
[probe]
points = 9
""",
    "driven-spectrum": CLI_DEVICE + """\
[drive_sweep]
stop = 120 MHz
points = 3
[probe]
points = 9
""",
    "rabi-scan": CLI_DEVICE + """\
[drive_sweep]
stop = 80 MHz
points = 3
[grid]
duration = 0.2 us
samples = 41
""",
    "rabi-compare": CLI_DEVICE + """\
[drive]
lambda_z = 180.0376 MHz
[grid]
duration = 0.2 us
samples = 81
""",
    "switch": CLI_DEVICE + """\
[storage]
t_off = 40 ns
post = 60 ns
[grid]
samples = 61
""",
    "storage": CLI_DEVICE + """\
[storage]
t_off = 60 ns
post = 200 ns
[grid]
samples = 131
""",
    "onoff-ratio": CLI_DEVICE + """\
[drive_sweep]
stop = 200 MHz
points = 5
""",
    "waveform": CLI_DEVICE + """\
[drive]
lambda_z = 180.0376 MHz
[waveform]
duration = 50 ns
""",
    "gap-curve": CLI_DEVICE + """\
[gapcurve]
points = 41
""",
    "fit-anticrossing": CLI_DEVICE + """\
[epsilon_sweep]
start = -50 MHz
stop = 50 MHz
points = 11
[anticrossing]
noise_khz = 10.0
""",
}


def _digests(out_dir) -> dict:
    digests = {}
    for path in sorted(out_dir.iterdir()):
        if path.suffix in (".csv", ".json") and path.name != "manifest.json":
            digests[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
    return digests


def test_criterion_10_determinism(capfd, tmp_path):
    """Byte-identical CSV/JSON across reruns and across 1 vs 8 workers."""
    started = time.perf_counter()
    failures = []
    for sub, text in CLI_CONFIGS.items():
        cfg = tmp_path / f"{sub}.cfg"
        cfg.write_text(text)
        runs = {}
        for tag, workers in (("a", 1), ("b", 1), ("w8", 8)):
            out = tmp_path / sub / tag
            code = cli_main([sub, "--config", str(cfg), "--out", str(out),
                             "--workers", str(workers)])
            if code != 0:
                failures.append(f"{sub}: exit {code} ({tag})")
                break
            runs[tag] = _digests(out)
        else:
            if not runs["a"]:
                failures.append(f"{sub}: no CSV/JSON emitted")
            if runs["a"] != runs["b"]:
                failures.append(f"{sub}: rerun bytes differ")
            if runs["a"] != runs["w8"]:
                failures.append(f"{sub}: workers 1 vs 8 bytes differ")
    elapsed = time.perf_counter() - started
    ok = not failures
    report(capfd, 10, ok,
           (f"all {len(CLI_CONFIGS)} subcommands byte-identical across reruns "
            f"and workers 1 vs 8 in {elapsed:.1f} s") if ok
           else "; ".join(failures))
