"""Scripted experiments on the switchable qubit-resonator device.

Spectroscopy maps are eigenvalue-based: line positions come from exact
diagonalization (or Floquet quasienergies for the driven scan) and are
rendered as Lorentzian profiles, since peak positions and splittings are
the information the maps carry.  Time-domain protocols (vacuum Rabi scans,
switch sequences, state storage) integrate the full lab-frame master
equation with both relaxation channels.

Switch windows toggle the drive amplitude as a step function.  The drive
phase restarts at the device's nominal phase on every on-edge; this keeps
runs reproducible and its effect on the pause property is covered by the
phase-sensitivity tests rather than assumed away.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.optimize

from . import linalg
from .dynamics import (
    EIG_FLOOR,
    TRACE_TOL,
    EvolutionResult,
    TimeGrid,
    _check_populations,
    _fold,
    _lindblad_trajectory,
    _observables,
    _resolve_max_step,
    collapse_channels,
    default_lindblad_max_step,
    evolve_lindblad,
    floquet_propagator,
    identify_pair_modes,
    quasienergy_gap,
)
from .errors import FitConvergenceError, IntegratorError
from .linalg import EXCITED, GROUND, HilbertLayout
from .model import (
    TWO_PI,
    CosineHamiltonian,
    DeviceModel,
    QubitParams,
    bessel_j0,
    build_driven_jc_hamiltonian,
    build_lab_hamiltonian,
    effective_coupling,
)

# Lorentzian rendering width (FWHM, Hz) for spectroscopy maps.
DEFAULT_LINEWIDTH = 2.0e6

# Dominant-peak detection threshold: spectral peak over median background.
SNR_FLOOR = 3.0

# Exchange oscillations are full-contrast, so a genuine spectral peak carries
# a sizable fraction of the trace's own swing.  Residue left by an
# imperfectly-detrended decay envelope is ~0.1% of the swing yet can show a
# huge formal SNR on smooth traces; gate detections on physical amplitude.
AMPLITUDE_FRACTION = 0.05

# Golden-section bracket for the switch-off search, in units of the drive
# frequency.  The gap minimum sits near 1.2024 (half the first Bessel-J0
# zero of 2*lambda_z/w_z) but shifts slightly with drive corrections.
SWITCH_OFF_BRACKET = (1.15, 1.25)

_PREPARATIONS = ("qubit_excited", "entangled_half_swap")

_SWEEP_VARIABLES = ("epsilon", "probe_frequency", "lambda_z", "time")


@dataclass(frozen=True)
class SweepSpec:
    """Uniform one-dimensional sweep of a named protocol variable."""

    variable: str
    start: float
    stop: float
    n_points: int

    def __post_init__(self) -> None:
        if self.variable not in _SWEEP_VARIABLES:
            raise ValueError(f"unknown sweep variable {self.variable!r}; "
                             f"expected one of {_SWEEP_VARIABLES}")
        if self.n_points < 2:
            raise ValueError("sweep needs at least 2 points")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ValueError("sweep endpoints must be finite")
        if not self.stop > self.start:
            raise ValueError("sweep requires stop > start")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.n_points)


@dataclass(frozen=True, eq=False)
class PulseSchedule:
    """Ordered (duration, lambda_z) segments plus the initial preparation.

    Zero-duration segments are legal no-ops, so a switch window can be
    collapsed to nothing without restructuring the schedule.  Preparation
    is idealized: either a named state ("qubit_excited" = |e,0>,
    "entangled_half_swap" = (|e,0> - i|g,1>)/sqrt(2)) or an explicit ket.
    """

    segments: tuple[tuple[float, float], ...]
    preparation: object = "qubit_excited"

    def __post_init__(self) -> None:
        segs = tuple((float(d), float(lam)) for d, lam in self.segments)
        if not segs:
            raise ValueError("schedule needs at least one segment")
        for d, lam in segs:
            if not (math.isfinite(d) and d >= 0.0):
                raise ValueError("segment durations must be >= 0 and finite")
            if not (math.isfinite(lam) and lam >= 0.0):
                raise ValueError("segment amplitudes must be >= 0 and finite")
        object.__setattr__(self, "segments", segs)
        if isinstance(self.preparation, str):
            if self.preparation not in _PREPARATIONS:
                raise ValueError(f"unknown preparation {self.preparation!r}; "
                                 f"expected one of {_PREPARATIONS} or a ket")
        else:
            ket = np.asarray(self.preparation, dtype=np.complex128).reshape(-1)
            if abs(np.linalg.norm(ket) - 1.0) > 1e-10:
                raise ValueError("custom preparation ket must be normalized")
            object.__setattr__(self, "preparation", ket)

    @property
    def total_duration(self) -> float:
        return math.fsum(d for d, _ in self.segments)

    def preparation_ket(self, layout: HilbertLayout) -> np.ndarray:
        if isinstance(self.preparation, str):
            e0 = layout.basis_ket(EXCITED, 0)
            if self.preparation == "qubit_excited":
                return e0
            g1 = layout.basis_ket(GROUND, 1)
            return (e0 - 1j * g1) / math.sqrt(2.0)
        ket = self.preparation
        if ket.size != layout.dim:
            raise ValueError("preparation ket dimension does not match layout")
        return ket.copy()


@dataclass
class SpectrumMap:
    """Rendered sweep map: population on (y_axis) x (x_axis) plus overlays.

    ``overlays`` holds per-column analytic curves keyed by name (each an
    array along x_axis); NaN entries mark columns where an extracted
    quantity is unavailable rather than zero.
    """

    x_axis: np.ndarray
    y_axis: np.ndarray
    population: np.ndarray
    overlays: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        self.x_axis = np.asarray(self.x_axis, dtype=np.float64)
        self.y_axis = np.asarray(self.y_axis, dtype=np.float64)
        self.population = np.asarray(self.population, dtype=np.float64)
        if self.population.shape != (self.y_axis.size, self.x_axis.size):
            raise ValueError("population shape does not match the axes")
        if not np.isfinite(self.population).all():
            raise ValueError("population contains non-finite entries")
        lo = float(self.population.min()) if self.population.size else 0.0
        hi = float(self.population.max()) if self.population.size else 0.0
        if lo < -1e-12 or hi > 1.0 + 1e-8:
            raise ValueError(f"population outside [0, 1] (range {lo:g}..{hi:g})")
        np.clip(self.population, 0.0, None, out=self.population)


# ---------------------------------------------------------------------------
# Frequency extraction and damped-cosine fitting
# ---------------------------------------------------------------------------

def extract_frequency(p_trace, times, f_max: float | None = None) -> float | None:
    """Dominant oscillation frequency (Hz) of a sampled trace, or None.

    Detrends a cubic envelope, applies a Hann window, and locates the
    Fourier magnitude peak with 3-point parabolic interpolation.  Returns
    None when no peak stands above the background (SNR < 3) or when the
    peak's physical amplitude is below 5% of the trace's swing, inside the
    optional ``f_max`` band -- the trace is then unresolved, not at zero
    frequency.
    """
    p = np.asarray(p_trace, dtype=np.float64).reshape(-1)
    t = np.asarray(times, dtype=np.float64).reshape(-1)
    if p.size != t.size:
        raise ValueError("trace and time arrays differ in length")
    if p.size < 16:
        raise ValueError("need at least 16 samples to extract a frequency")
    dt = np.diff(t)
    step = float(dt[0])
    if step <= 0.0 or np.abs(dt - step).max() > 1e-9 * step:
        raise ValueError("time samples must be uniformly spaced")

    # Remove the slow decay envelope; a cubic tracks exp(-t/tau) well over
    # the windows used here without absorbing the oscillation itself.
    tau = (t - t[0]) / (t[-1] - t[0])
    residual = p - np.polyval(np.polyfit(tau, p, 3), tau)
    scale = float(np.abs(p).max())
    if float(residual.std()) <= 1e-10 * max(1.0, scale):
        return None  # flat trace: nothing but fit noise left

    window = np.hanning(p.size)
    mag = np.abs(np.fft.rfft(residual * window))
    freqs = np.fft.rfftfreq(p.size, step)

    # Skip DC and its leakage skirt; optionally cap the search band.
    lo = 2
    hi = mag.size
    if f_max is not None:
        hi = int(np.searchsorted(freqs, f_max, side="right"))
    if hi - lo < 3:
        raise ValueError("frequency band too narrow for the sample count")
    band = mag[lo:hi]
    k = int(band.argmax()) + lo
    background = float(np.median(band))
    if background <= 0.0 or mag[k] / background < SNR_FLOOR:
        return None
    amplitude = 2.0 * mag[k] / window.sum()
    if amplitude < AMPLITUDE_FRACTION * float(p.max() - p.min()):
        return None

    # Parabolic refinement on log magnitude (falls back to linear scale
    # when a neighbor bin is empty).
    if 0 < k < mag.size - 1:
        a, b, c = mag[k - 1], mag[k], mag[k + 1]
        if a > 0.0 and c > 0.0:
            a, b, c = math.log(a), math.log(b), math.log(c)
        denom = a - 2.0 * b + c
        shift = 0.0 if denom == 0.0 else 0.5 * (a - c) / denom
        shift = min(0.5, max(-0.5, shift))
    else:
        shift = 0.0
    return float((k + shift) * freqs[1])


@dataclass
class DampedCosineFit:
    """Least-squares parameters of exp(-t/decay)*(A cos(2 pi f t + phase) + offset).

    Times are measured from ``t0`` (the first fitted sample), so
    ``amplitude`` is the oscillation amplitude at t0.
    """

    amplitude: float
    frequency_hz: float
    decay_time: float
    phase: float
    offset: float
    t0: float
    residual_rms: float

    def amplitude_at(self, t: float) -> float:
        return self.amplitude * math.exp(-(t - self.t0) / self.decay_time)


def fit_damped_cosine(times, p_trace, f0: float | None = None) -> DampedCosineFit:
    """Fit a decaying cosine with a co-decaying offset to a sampled trace.

    The offset term shares the envelope because for exchange oscillations
    P(t) = env(t) * (1 + cos)/2: both the mean and the oscillation decay
    together.  Seeded from extract_frequency unless ``f0`` is given.
    """
    p = np.asarray(p_trace, dtype=np.float64).reshape(-1)
    t = np.asarray(times, dtype=np.float64).reshape(-1)
    if p.size != t.size or p.size < 16:
        raise ValueError("need matching arrays with at least 16 samples")
    t0 = float(t[0])
    tl = t - t0
    span = float(tl[-1])

    if f0 is None:
        f0 = extract_frequency(p, t)
        if f0 is None:
            raise FitConvergenceError("no resolvable oscillation to seed the fit")
    if not f0 > 0.0:
        raise ValueError("seed frequency must be positive")

    a0 = 0.5 * float(p.max() - p.min())
    c0 = float(p.mean())
    if a0 <= 0.0:
        raise FitConvergenceError("trace has no amplitude to fit")

    def model(x, tt):
        amp, freq, tau, phi, off = x
        return np.exp(-tt / tau) * (amp * np.cos(TWO_PI * freq * tt + phi) + off)

    def residuals(x):
        return model(x, tl) - p

    best = None
    for phi0 in (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi):
        x0 = np.array([a0, f0, span, phi0, c0])
        sol = scipy.optimize.least_squares(
            residuals, x0,
            bounds=([0.0, 0.25 * f0, 1e-3 * span, -TWO_PI, -np.inf],
                    [np.inf, 4.0 * f0, np.inf, TWO_PI, np.inf]),
            xtol=1e-12, ftol=1e-12, gtol=1e-12)
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or not best.success:
        raise FitConvergenceError("damped-cosine fit did not converge")

    amp, freq, tau, phi, off = (float(v) for v in best.x)
    rms = float(np.sqrt(np.mean(best.fun ** 2)))
    return DampedCosineFit(amplitude=amp, frequency_hz=freq, decay_time=tau,
                           phase=phi, offset=off, t0=t0, residual_rms=rms)


# ---------------------------------------------------------------------------
# Spectroscopy
# ---------------------------------------------------------------------------

def _lorentzian_columns(f_axis: np.ndarray, centers: list[np.ndarray],
                        weights: list[np.ndarray], linewidth: float) -> np.ndarray:
    if linewidth <= 0.0:
        raise ValueError("linewidth must be positive")
    half = 0.5 * linewidth
    out = np.zeros((f_axis.size, len(centers)))
    for j, (cs, ws) in enumerate(zip(centers, weights)):
        for c, w in zip(cs, ws):
            out[:, j] += w * half * half / ((f_axis - c) ** 2 + half * half)
    peak = float(out.max())
    if peak > 0.0:
        out /= peak
    return out


def _with_amplitude(model: DeviceModel, lam: float) -> DeviceModel:
    if model.drive is None:
        raise ValueError("this protocol needs a drive definition (w_z)")
    return replace(model, drive=replace(model.drive, amplitude=lam))


def _resolved_grid(grid: TimeGrid, model: DeviceModel) -> TimeGrid:
    """Pin the integrator step to the device's fastest frequency.

    Ensures trajectory runs use the documented model-aware default rather
    than the conservative matrix-norm fallback, and keeps runs with equal
    physics numerically identical across protocol entry points.
    """
    if grid.max_step is not None:
        return grid
    return replace(grid, max_step=default_lindblad_max_step(model))


def _require_switch_point(model: DeviceModel, what: str) -> None:
    if model.qubit.epsilon != 0.0:
        raise ValueError(f"{what} is defined at epsilon = 0")
    wr = model.resonator.frequency
    if abs(model.qubit.gap - wr) > 1e-9 * wr:
        raise ValueError(f"{what} is defined at Delta = w_r")


def _run_indexed(n: int, task, workers: int) -> None:
    """Run task(j) for j in range(n), optionally on a thread pool.

    Tasks write results into caller-owned arrays by index, so assembly is
    order-independent and the output does not depend on worker count.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1 or n <= 1:
        for j in range(n):
            task(j)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for future in [pool.submit(task, j) for j in range(n)]:
            future.result()


def spectrum_scan(model: DeviceModel, epsilon_sweep: SweepSpec,
                  f_sweep: SweepSpec, linewidth: float = DEFAULT_LINEWIDTH,
                  workers: int = 1) -> SpectrumMap:
    """Undriven spectroscopy map over energy bias: one-tone line positions.

    For each bias the full Hamiltonian is diagonalized; transitions from
    the ground state carry dipole weight |<k|sigma_x|0>|^2 and are drawn as
    Lorentzians of the given FWHM (Hz) on the probe-frequency axis.  The
    analytic dressed branches E+-(epsilon) are attached as overlays.
    """
    if model.drive is not None and model.drive.amplitude != 0.0:
        raise ValueError("spectrum_scan is an undriven protocol")
    if epsilon_sweep.variable != "epsilon":
        raise ValueError("epsilon_sweep must sweep 'epsilon'")
    if f_sweep.variable != "probe_frequency":
        raise ValueError("f_sweep must sweep 'probe_frequency'")

    layout = model.layout
    n = layout.fock_cutoff
    sx = linalg.tensor_product(linalg.sigma_x(), linalg.identity(n))
    eps_values = epsilon_sweep.values()
    f_values = f_sweep.values()

    centers: list[np.ndarray] = [None] * eps_values.size  # type: ignore[list-item]
    weights: list[np.ndarray] = [None] * eps_values.size  # type: ignore[list-item]

    def column(j: int) -> None:
        biased = replace(model, qubit=QubitParams(gap=model.qubit.gap,
                                                  bias=float(eps_values[j])))
        h = build_lab_hamiltonian(biased).static
        w, v = np.linalg.eigh(h)
        span = float(w[-1] - w[0])
        if w.size > 1 and w[1] - w[0] < 1e-9 * span:
            raise IntegratorError(
                f"degenerate ground state at bias index {j}; "
                "transition weights are not reproducible")
        amp = v.conj().T @ (sx @ v[:, 0])
        cs, ws = [], []
        k = 1
        while k < w.size:
            # Lump near-degenerate levels: members of an invariant subspace
            # have basis-dependent individual weights but a stable sum.
            m = k
            total = abs(amp[k]) ** 2
            while m + 1 < w.size and w[m + 1] - w[m] < 1e-9 * span:
                m += 1
                total += abs(amp[m]) ** 2
            cs.append(float(np.mean(w[k:m + 1]) - w[0]) / TWO_PI)
            ws.append(total)
            k = m + 1
        centers[j] = np.asarray(cs)
        weights[j] = np.asarray(ws)

    _run_indexed(eps_values.size, column, workers)
    population = _lorentzian_columns(f_values, centers, weights, linewidth)

    g = model.coupling.g
    wr = model.resonator.frequency
    wq = np.hypot(model.qubit.gap, eps_values)
    root = np.sqrt(((wq - wr) / 2.0) ** 2 + g * g)
    overlays = {
        "dressed_upper_hz": ((wq + wr) / 2.0 + root) / TWO_PI,
        "dressed_lower_hz": ((wq + wr) / 2.0 - root) / TWO_PI,
    }
    return SpectrumMap(x_axis=eps_values, y_axis=f_values,
                       population=population, overlays=overlays)


def driven_spectrum_scan(model: DeviceModel, lambda_sweep: SweepSpec,
                         f_sweep: SweepSpec | None = None,
                         linewidth: float = DEFAULT_LINEWIDTH,
                         workers: int = 1) -> SpectrumMap:
    """Anticrossing gap versus drive amplitude at the switch working point.

    Each column reports the Floquet quasienergy splitting of the
    one-excitation pair, rendered as two Lorentzian branches around the
    resonator line.  Overlays carry the gap itself, the Bessel-law curve
    2|g J0(2 lambda_z/w_z)|, and the coupling sign recovered from the
    hybridized modes (the sign flips where the gap reopens past its zero).
    """
    _require_switch_point(model, "driven_spectrum_scan")
    if lambda_sweep.variable != "lambda_z":
        raise ValueError("lambda_sweep must sweep 'lambda_z'")
    if model.drive is None:
        raise ValueError("driven_spectrum_scan needs a drive definition (w_z)")
    if f_sweep is None:
        center = model.resonator.frequency / TWO_PI
        halfspan = 1.25 * 2.0 * model.coupling.g / TWO_PI
        f_sweep = SweepSpec("probe_frequency", center - halfspan,
                            center + halfspan, 161)
    elif f_sweep.variable != "probe_frequency":
        raise ValueError("f_sweep must sweep 'probe_frequency'")

    lam_values = lambda_sweep.values()
    f_values = f_sweep.values()
    layout = model.layout
    e0 = layout.index(EXCITED, 0)
    g1 = layout.index(GROUND, 1)
    center_hz = model.resonator.frequency / TWO_PI

    gaps = np.empty(lam_values.size)
    signs = np.empty(lam_values.size)

    def column(j: int) -> None:
        driven = _with_amplitude(model, float(lam_values[j]))
        h = build_driven_jc_hamiltonian(driven)
        result = floquet_propagator(h, layout, period=driven.drive.period)
        a, b = identify_pair_modes(result)
        if result.quasienergies[a] < result.quasienergies[b]:
            a, b = b, a
        delta = result.quasienergies[a] - result.quasienergies[b]
        gaps[j] = abs(_fold(delta, driven.drive.frequency))
        # Relative phase of the upper mode's components is gauge-invariant:
        # (|e,0> + |g,1>)/sqrt(2) for positive coupling, (+,-) for negative.
        cross = result.modes[e0, a] * np.conj(result.modes[g1, a])
        signs[j] = math.copysign(1.0, cross.real) if cross.real != 0.0 else 0.0

    _run_indexed(lam_values.size, column, workers)

    centers = [np.array([center_hz - 0.5 * gap / TWO_PI,
                         center_hz + 0.5 * gap / TWO_PI]) for gap in gaps]
    weights = [np.ones(2)] * lam_values.size
    population = _lorentzian_columns(f_values, centers, weights, linewidth)

    ratio = 2.0 * lam_values / model.drive.frequency
    bessel_gap = np.array([2.0 * abs(model.coupling.g * bessel_j0(r)) / TWO_PI
                           for r in ratio])
    overlays = {
        "gap_hz": gaps / TWO_PI,
        "bessel_gap_hz": bessel_gap,
        "coupling_sign": signs,
    }
    return SpectrumMap(x_axis=lam_values, y_axis=f_values,
                       population=population, overlays=overlays)


# ---------------------------------------------------------------------------
# Time-domain protocols
# ---------------------------------------------------------------------------

def rabi_scan(model: DeviceModel, lambda_sweep: SweepSpec, grid: TimeGrid,
              workers: int = 1) -> SpectrumMap:
    """Vacuum Rabi map P(t, lambda_z) from full lab-frame Lindblad runs.

    Starts every column in |e,0>.  Each column's oscillation frequency is
    extracted and attached as an overlay (NaN where nothing resolvable
    remains, e.g. at the switch-off amplitude); the Bessel-law prediction
    2|g_eff|/2pi rides along for comparison.
    """
    _require_switch_point(model, "rabi_scan")
    if lambda_sweep.variable != "lambda_z":
        raise ValueError("lambda_sweep must sweep 'lambda_z'")
    layout = model.layout
    psi0 = layout.basis_ket(EXCITED, 0)
    rho0 = linalg.density_from_ket(psi0)
    collapses = collapse_channels(model)
    lam_values = lambda_sweep.values()
    times = grid.times()

    population = np.empty((times.size, lam_values.size))
    freq_hz = np.full(lam_values.size, np.nan)
    geff_hz = np.empty(lam_values.size)
    # Band limit for the column extraction: harmonics of the exchange
    # frequency live below ~3 * 2g/2pi; the drive ripple at w_z does not.
    f_band = 3.0 * 2.0 * model.coupling.g / TWO_PI

    def column(j: int) -> None:
        driven = _with_amplitude(model, float(lam_values[j]))
        h = build_lab_hamiltonian(driven)
        res = evolve_lindblad(h, rho0, collapses, _resolved_grid(grid, driven),
                              layout)
        population[:, j] = res.qubit_excited_population
        geff_hz[j] = 2.0 * abs(effective_coupling(driven)) / TWO_PI
        f = extract_frequency(population[:, j], times, f_max=f_band)
        if f is not None:
            freq_hz[j] = f

    _run_indexed(lam_values.size, column, workers)
    overlays = {"column_frequency_hz": freq_hz, "effective_rabi_hz": geff_hz}
    return SpectrumMap(x_axis=lam_values, y_axis=times,
                       population=population, overlays=overlays)


def _merged_segments(schedule: PulseSchedule) -> list[tuple[float, float]]:
    merged: list[tuple[float, float]] = []
    for duration, lam in schedule.segments:
        if duration == 0.0:
            continue
        if merged and merged[-1][1] == lam:
            merged[-1] = (merged[-1][0] + duration, lam)
        else:
            merged.append((duration, lam))
    if not merged:
        raise ValueError("schedule has zero total duration")
    return merged


def switch_sequence(model: DeviceModel, schedule: PulseSchedule,
                    grid: TimeGrid) -> EvolutionResult:
    """Lindblad trajectory through a piecewise-constant drive schedule.

    Adjacent segments with equal amplitude are merged before integration,
    so a schedule that never changes amplitude is numerically identical to
    a plain uninterrupted run on the same grid.  The drive phase restarts
    at each on-edge (local time zero per segment).
    """
    total = schedule.total_duration
    if grid.t_end > total * (1.0 + 1e-12):
        raise ValueError(f"grid extends to {grid.t_end:g} s but the schedule "
                         f"ends at {total:g} s")
    layout = model.layout
    rho = linalg.density_from_ket(schedule.preparation_ket(layout))
    collapses = collapse_channels(model)
    times = grid.times()

    segments = _merged_segments(schedule)
    bounds = np.cumsum([d for d, _ in segments])
    seg_index = np.searchsorted(bounds, times, side="left")
    seg_index = np.minimum(seg_index, len(segments) - 1)

    stacks: list[np.ndarray] = []
    start = 0.0
    for i, (duration, lam) in enumerate(segments):
        mask = seg_index == i
        if not mask.any() and not (seg_index > i).any():
            break  # grid fully consumed; trailing segments never run
        seg_model = model if model.drive is None and lam == 0.0 \
            else _with_amplitude(model, lam)
        h = build_lab_hamiltonian(seg_model) if lam != 0.0 else _undriven(model)
        local = times[mask] - start
        end = float(bounds[i])
        need_handoff = bool((seg_index > i).any())
        handoff_appended = False
        if need_handoff:
            seg_len = end - start
            if local.size == 0 or local[-1] != seg_len:
                local = np.append(local, seg_len)
                handoff_appended = True
        rhos = _lindblad_trajectory(
            h, rho, collapses, local,
            _resolve_max_step(_resolved_grid(grid, seg_model), h))
        rho = rhos[-1]
        stacks.append(rhos[:-1] if handoff_appended else rhos)
        start = end

    rhos = np.concatenate(stacks, axis=0)
    if rhos.shape[0] != times.size:
        raise IntegratorError("segment assembly lost samples")  # pragma: no cover

    diags = np.einsum("tii->ti", rhos).real
    trace_error = float(np.abs(diags.sum(axis=1) - 1.0).max())
    if trace_error > TRACE_TOL:
        raise IntegratorError(f"trace drifted by {trace_error:g} (> {TRACE_TOL:g})")
    min_eig = float(min(np.linalg.eigvalsh(r).min() for r in rhos))
    if min_eig < EIG_FLOOR:
        raise IntegratorError(
            f"density matrix developed eigenvalue {min_eig:g} (< {EIG_FLOOR:g})")
    p_exc, photons = _observables(layout, diags)
    return EvolutionResult(
        times=times,
        qubit_excited_population=_check_populations(p_exc, "qubit population"),
        photon_number=photons,
        final_state=rhos[-1].copy(),
        trace_error=trace_error,
        min_eigenvalue=min_eig)


def _undriven(model: DeviceModel) -> CosineHamiltonian:
    return build_lab_hamiltonian(
        model if model.drive is None or model.drive.amplitude == 0.0
        else _with_amplitude(model, 0.0))


def swap_duration(model: DeviceModel) -> float:
    """Time for a full excitation transfer |e,0> -> |g,1>: pi/(2g)."""
    return math.pi / (2.0 * model.coupling.g)


def storage_experiment(model: DeviceModel, t_off: float, grid: TimeGrid,
                       lambda_off: float | None = None) -> EvolutionResult:
    """Swap the excitation into the resonator, hold it with the coupling
    switched off for ``t_off``, then release it and watch the revival.

    ``lambda_off`` may carry a precomputed switch-off amplitude; otherwise
    it is located by minimizing the quasienergy gap for this model.
    """
    if t_off < 0.0 or not math.isfinite(t_off):
        raise ValueError("t_off must be >= 0 and finite")
    t_swap = swap_duration(model)
    t_on = t_swap + t_off
    if grid.t_end <= t_on:
        raise ValueError("grid must extend past the switch-on edge")
    if lambda_off is None:
        lambda_off = find_switch_off(model)
    schedule = PulseSchedule(
        segments=((t_swap, 0.0), (t_off, lambda_off),
                  (grid.t_end - t_on, 0.0)),
        preparation="qubit_excited")
    return switch_sequence(model, schedule, grid)


@dataclass
class StorageOutcome:
    """Storage run plus the fits quantifying the revival."""

    trajectory: EvolutionResult
    reference: EvolutionResult
    switch_on_time: float
    pre_fit: DampedCosineFit
    post_fit: DampedCosineFit
    amplitude_ratio: float
    revival_frequency_hz: float


def analyze_storage(model: DeviceModel, t_off: float, grid: TimeGrid,
                    lambda_off: float | None = None) -> StorageOutcome:
    """Run the storage protocol and extract the revival amplitude ratio.

    The pre-storage amplitude comes from a reference run with no off
    window (same grid spacing), fitted over its whole span and evaluated
    at the swap edge; the post-revival amplitude comes from a fit on the
    samples after switch-on, referred back to the switch-on instant.
    """
    if lambda_off is None:
        lambda_off = find_switch_off(model)
    trajectory = storage_experiment(model, t_off, grid, lambda_off)
    t_swap = swap_duration(model)
    t_on = t_swap + t_off

    ref_end = grid.t_end - t_off
    n_ref = max(int(round(ref_end / grid.spacing)) + 1, 17)
    ref_grid = TimeGrid(t_end=ref_end, n_samples=n_ref, max_step=grid.max_step)
    reference = storage_experiment(model, 0.0, ref_grid, lambda_off)

    pre_fit = fit_damped_cosine(reference.times,
                                reference.qubit_excited_population)
    mask = trajectory.times >= t_on - 1e-15
    if int(mask.sum()) < 16:
        raise ValueError("grid leaves fewer than 16 samples after switch-on")
    post_fit = fit_damped_cosine(trajectory.times[mask],
                                 trajectory.qubit_excited_population[mask])

    ratio = post_fit.amplitude_at(t_on) / pre_fit.amplitude_at(t_swap)
    return StorageOutcome(
        trajectory=trajectory,
        reference=reference,
        switch_on_time=t_on,
        pre_fit=pre_fit,
        post_fit=post_fit,
        amplitude_ratio=ratio,
        revival_frequency_hz=post_fit.frequency_hz)


def rabi_compare(model: DeviceModel, grid: TimeGrid,
                 lambda_off: float | None = None):
    """Side-by-side traces with the coupling on (lambda_z = 0) and off.

    Returns (times, p_on, p_off, lambda_off).
    """
    if lambda_off is None:
        lambda_off = find_switch_off(model)
    layout = model.layout
    rho0 = linalg.density_from_ket(layout.basis_ket(EXCITED, 0))
    collapses = collapse_channels(model)
    on = evolve_lindblad(_undriven(model), rho0, collapses,
                         _resolved_grid(grid, _with_amplitude(model, 0.0)), layout)
    off_model = _with_amplitude(model, lambda_off)
    off = evolve_lindblad(build_lab_hamiltonian(off_model), rho0, collapses,
                          _resolved_grid(grid, off_model), layout)
    return (grid.times(), on.qubit_excited_population,
            off.qubit_excited_population, lambda_off)


# ---------------------------------------------------------------------------
# On/off ratio and the switch-off search
# ---------------------------------------------------------------------------

def onoff_ratio(model: DeviceModel, lambda_z: float) -> float:
    """Exchange-frequency suppression R = gap(lambda_z) / gap(0).

    Both gaps come from the Floquet quasienergy instrument, the same one
    the driven spectroscopy uses, so R is a pure frequency ratio.
    """
    if lambda_z < 0.0:
        raise ValueError("lambda_z must be >= 0")
    on = quasienergy_gap(_with_amplitude(model, 0.0))
    off = quasienergy_gap(_with_amplitude(model, lambda_z))
    return off / on


def find_switch_off(model: DeviceModel,
                    bracket: tuple[float, float] = SWITCH_OFF_BRACKET,
                    tol: float = 1e-12) -> float:
    """Drive amplitude minimizing the quasienergy gap (the switch-off point).

    Golden-section search over ``bracket`` in units of the drive frequency;
    the gap is unimodal there around the first Bessel zero.  ``tol`` is the
    relative bracket width at which the search stops.
    """
    if model.drive is None:
        raise ValueError("find_switch_off needs a drive definition (w_z)")
    lo, hi = bracket
    if not 0.0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < low < high")
    wz = model.drive.frequency

    def gap_at(x: float) -> float:
        return quasienergy_gap(_with_amplitude(model, x * wz))

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = gap_at(c), gap_at(d)
    for _ in range(200):
        if b - a <= tol * hi:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = gap_at(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = gap_at(d)
    return 0.5 * (a + b) * wz
