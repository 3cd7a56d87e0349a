"""Bias-line calibration and spectrum fitting.

The qubit gap is tuned by a voltage on the alpha-loop bias line, and the
measured transfer curve V(gap) is well described by a cubic over the
calibrated window.  Because the map is nonlinear, a sinusoidal gap
modulation Delta(t) = Delta + 2*lambda_z*cos(w_z t) requires a
pre-distorted voltage waveform

    V[k] = valpha(1e-9 * (w_r + 2*lambda_z*cos(w_z * k / rate)) / 2pi),

which this module synthesizes sample by sample through the fitted map.
The inverse direction (voltage sweep -> gap tuning curve) is solved by
bisection on the recorded monotone domain.  fit_anticrossing recovers the
coupling g and the gap Delta from two-branch spectroscopy peaks via the
dressed-level model

    E_pm(eps) = (w_qb + w_r)/2 +- sqrt(((w_qb - w_r)/2)^2 + g^2),
    w_qb = sqrt(Delta^2 + eps^2),

seeded on a coarse (g, Delta) grid and refined with damped Gauss-Newton.

Gap arguments to the cubic map are plain frequencies in GHz (the unit the
transfer curve is calibrated in); everything else follows the package
convention of angular frequencies in rad/s.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FitConvergenceError
from .model import TWO_PI

# Default calibrated window of the bias map, GHz.  Outside it the cubic is
# an extrapolation with no physical meaning, so evaluation there is an
# error rather than a number.
DEFAULT_DOMAIN = (2.0, 5.0)

# Inversion tolerance for gap_tuning_curve, GHz.
INVERSION_TOL_GHZ = 1e-12

# Anticrossing fitter controls: coarse seed grid, then Gauss-Newton with
# step halving.  The objective is mildly nonconvex (branch assignment can
# swap), so the grid seeding matters more than the refinement settings.
SEED_G_HZ = tuple(1.0e6 * k for k in range(1, 31))
SEED_DELTA_OFFSETS_HZ = tuple(1.0e7 * k for k in range(-5, 6))
GN_MAX_ITER = 100
GN_STEP_TOL = 1e-10
GN_MAX_HALVINGS = 25

# Raw waveform container format: 16-byte header (magic, version, sample
# rate) followed by the samples as little-endian float64.
WAVEFORM_MAGIC = b"QSWF"
WAVEFORM_VERSION = 1
_HEADER = struct.Struct("<4sid")


@dataclass(frozen=True)
class CubicMap:
    """Cubic bias map V(x) = c3 x^3 + c2 x^2 + c1 x + c0, x in GHz, V in volts.

    The map is only trusted on `domain`; evaluation outside raises
    DomainError.  `direction` is recorded at construction: +1 if the map
    increases over the domain, -1 if it decreases, 0 if it is not monotone
    (in which case it cannot be inverted).
    """

    c3: float
    c2: float
    c1: float
    c0: float
    domain: tuple[float, float] = DEFAULT_DOMAIN
    fit_residuals: tuple[float, ...] | None = None
    direction: int = field(init=False)

    def __post_init__(self) -> None:
        coeffs = (self.c3, self.c2, self.c1, self.c0)
        if not all(math.isfinite(c) for c in coeffs):
            raise ValueError("cubic coefficients must be finite")
        lo, hi = self.domain
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError("domain must be a finite interval (lo, hi) with lo < hi")
        object.__setattr__(self, "domain", (float(lo), float(hi)))
        object.__setattr__(self, "direction", self._monotone_direction())

    def _monotone_direction(self) -> int:
        # Sign analysis of V'(x) = 3 c3 x^2 + 2 c2 x + c1 over the domain:
        # the derivative is a quadratic, so it suffices to check its sign at
        # the domain edges and at any interior stationary points.
        lo, hi = self.domain
        probes = [lo, hi]
        a, b = 3.0 * self.c3, 2.0 * self.c2
        if a != 0.0:
            disc = b * b - 4.0 * a * self.c1
            if disc >= 0.0:
                root = math.sqrt(disc)
                for r in ((-b - root) / (2.0 * a), (-b + root) / (2.0 * a)):
                    if lo < r < hi:
                        probes.append(r)
        elif b != 0.0:
            r = -self.c1 / b
            if lo < r < hi:
                probes.append(r)
        # Between consecutive sign changes of a quadratic it keeps one sign,
        # so probing midpoints of the partition decides monotonicity.
        probes.sort()
        mids = [0.5 * (u + v) for u, v in zip(probes, probes[1:])] or [0.5 * (lo + hi)]
        signs = {math.copysign(1.0, d) for d in (self._derivative(x) for x in mids) if d != 0.0}
        if len(signs) != 1:
            return 0
        return 1 if signs == {1.0} else -1

    def _derivative(self, x: float) -> float:
        return (3.0 * self.c3 * x + 2.0 * self.c2) * x + self.c1

    def range(self) -> tuple[float, float]:
        """Voltage interval covered over the domain (monotone maps only)."""
        if self.direction == 0:
            raise DomainError("bias map is not monotone over its domain")
        lo, hi = self.domain
        v_lo, v_hi = valpha(lo, self), valpha(hi, self)
        return (v_lo, v_hi) if v_lo <= v_hi else (v_hi, v_lo)


# The measured transfer curve of the alpha-loop bias line, volts as a
# function of the qubit gap in GHz, calibrated over 2.0-5.0 GHz.
REFERENCE_MAP = CubicMap(0.2287, -2.758, 11.14, -15.27)


def fit_cubic(points: list[tuple[float, float]]) -> CubicMap:
    """Least-squares cubic through (x, y) samples.

    Needs at least four distinct x values; solved through numpy's SVD-based
    lstsq on the Vandermonde matrix.  The fitted map's domain is the span
    of the data (the cubic is not trusted beyond what was measured), and
    the per-point residual vector y - V(x) is kept on the result.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 4:
        raise ValueError(f"need at least 4 points to fit a cubic, got {len(pts)}")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("points must be finite")
    if len(np.unique(xs)) < 4:
        raise ValueError("need at least 4 distinct x values to fit a cubic")
    vand = np.column_stack([xs**3, xs**2, xs, np.ones_like(xs)])
    coeffs, _, rank, _ = np.linalg.lstsq(vand, ys, rcond=None)
    if rank < 4:
        raise ValueError("cubic fit is rank deficient")
    residuals = ys - vand @ coeffs
    return CubicMap(*map(float, coeffs),
                    domain=(float(xs.min()), float(xs.max())),
                    fit_residuals=tuple(float(r) for r in residuals))


def valpha(gap_ghz: float, bias_map: CubicMap = REFERENCE_MAP) -> float:
    """Bias voltage for a qubit gap (GHz), by Horner evaluation of the map."""
    x = float(gap_ghz)
    lo, hi = bias_map.domain
    if not (lo <= x <= hi):
        raise DomainError(
            f"gap {x:g} GHz outside the calibrated window [{lo:g}, {hi:g}] GHz")
    return ((bias_map.c3 * x + bias_map.c2) * x + bias_map.c1) * x + bias_map.c0


@dataclass(frozen=True, eq=False)
class SampledWaveform:
    """Voltage samples for the bias line at a fixed sample rate."""

    sample_rate: float          # samples per second
    samples: np.ndarray         # volts
    duration: float             # seconds

    def __post_init__(self) -> None:
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0.0):
            raise ValueError("sample_rate must be positive and finite")
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise ValueError("duration must be positive and finite")
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        expected = int(round(self.duration * self.sample_rate))
        if samples.ndim != 1 or samples.size != expected:
            raise ValueError(
                f"expected {expected} samples for {self.duration:g} s at "
                f"{self.sample_rate:g} Sa/s, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform samples must be finite")

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate


def synthesize_waveform(lambda_z: float, omega_z: float, omega_r: float,
                        bias_map: CubicMap, sample_rate: float,
                        duration: float) -> SampledWaveform:
    """Pre-distorted bias waveform for a sinusoidal gap modulation.

    Sample k carries valpha of the instantaneous gap
    (w_r + 2*lambda_z*cos(w_z k/rate))/2pi in GHz, so that pushing the
    samples through the nonlinear bias line reproduces a clean cosine on
    the gap itself.  All three frequencies are angular (rad/s).
    """
    if lambda_z < 0.0 or not math.isfinite(lambda_z):
        raise ValueError("lambda_z must be non-negative and finite")
    if omega_z <= 0.0 or omega_r <= 0.0:
        raise ValueError("omega_z and omega_r must be positive")
    lo, hi = bias_map.domain
    gap_min = 1e-9 * (omega_r - 2.0 * lambda_z) / TWO_PI
    gap_max = 1e-9 * (omega_r + 2.0 * lambda_z) / TWO_PI
    if gap_min < lo or gap_max > hi:
        raise DomainError(
            f"modulated gap sweeps [{gap_min:g}, {gap_max:g}] GHz, outside the "
            f"calibrated window [{lo:g}, {hi:g}] GHz; reduce lambda_z")
    n = int(round(duration * sample_rate))
    if n < 1:
        raise ValueError("duration times sample_rate must round to at least 1 sample")
    k = np.arange(n)
    gaps = 1e-9 * (omega_r + 2.0 * lambda_z * np.cos(omega_z * k / sample_rate)) / TWO_PI
    # np.polyval is the same Horner recurrence as valpha, so scalar spot
    # checks against valpha agree bit for bit.
    volts = np.polyval([bias_map.c3, bias_map.c2, bias_map.c1, bias_map.c0], gaps)
    return SampledWaveform(sample_rate=float(sample_rate), samples=volts,
                           duration=float(duration))


@dataclass(frozen=True)
class TuningCurve:
    """Gap-versus-voltage curve recovered by inverting the bias map."""

    volts: tuple[float, ...]
    gaps_ghz: tuple[float, ...]
    crossing_ghz: float | None = None    # marked gap value, if any
    crossing_volts: float | None = None  # voltage where the curve crosses it


def gap_tuning_curve(bias_map: CubicMap, v_sweep: list[float],
                     crossing_ghz: float | None = 2.417) -> TuningCurve:
    """Invert the bias map over a voltage sweep.

    Each voltage is solved for its gap by bisection on the monotone domain
    (to 1e-12 GHz; unconditional convergence is worth more than speed at
    these sizes).  When `crossing_ghz` lies inside the domain, the voltage
    at which the curve passes through it is marked on the result -- by
    default the resonator frequency, where the switch operates.
    """
    if bias_map.direction == 0:
        raise DomainError("bias map is not monotone over its domain; cannot invert")
    lo, hi = bias_map.domain
    v_min, v_max = bias_map.range()
    gaps = []
    for v in v_sweep:
        v = float(v)
        if not (v_min <= v <= v_max):
            raise DomainError(
                f"voltage {v:g} V outside the map's range [{v_min:g}, {v_max:g}] V")
        gaps.append(_invert(bias_map, v, lo, hi))
    crossing_volts = None
    if crossing_ghz is not None and lo <= crossing_ghz <= hi:
        crossing_volts = valpha(crossing_ghz, bias_map)
    return TuningCurve(volts=tuple(float(v) for v in v_sweep),
                       gaps_ghz=tuple(gaps),
                       crossing_ghz=crossing_ghz if crossing_volts is not None else None,
                       crossing_volts=crossing_volts)


def _invert(bias_map: CubicMap, target_volts: float, lo: float, hi: float) -> float:
    sign = float(bias_map.direction)
    f_lo = valpha(lo, bias_map) - target_volts
    if f_lo == 0.0:
        return lo
    a, b = lo, hi
    while b - a > INVERSION_TOL_GHZ:
        mid = 0.5 * (a + b)
        if sign * (valpha(mid, bias_map) - target_volts) < 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


@dataclass(frozen=True)
class SpectrumPeaks:
    """Two-branch spectroscopy peaks: (bias eps in rad/s, peak freqs in Hz)."""

    entries: tuple[tuple[float, tuple[float, ...]], ...]

    def __post_init__(self) -> None:
        normalized = []
        for eps, freqs in self.entries:
            freqs = tuple(float(f) for f in freqs)
            if not freqs:
                raise ValueError("each entry needs at least one peak frequency")
            if any(not math.isfinite(f) or f <= 0.0 for f in freqs):
                raise ValueError("peak frequencies must be positive and finite")
            if any(a > b for a, b in zip(freqs, freqs[1:])):
                raise ValueError("peak frequencies must be sorted ascending")
            normalized.append((float(eps), freqs))
        object.__setattr__(self, "entries", tuple(normalized))

    @property
    def n_observations(self) -> int:
        return sum(len(freqs) for _, freqs in self.entries)


@dataclass(frozen=True)
class AnticrossingFit:
    """Dressed-level fit result; g, delta, omega_r angular, residual RMS in Hz."""

    g: float
    delta: float
    omega_r: float
    residual_hz: float
    n_iterations: int


def _branch_freqs_hz(theta: np.ndarray, eps: float) -> tuple[float, float]:
    g, delta, wr = theta
    wqb = math.hypot(delta, eps)
    half_det = 0.5 * (wqb - wr)
    root = math.hypot(half_det, g)
    center = 0.5 * (wqb + wr)
    return (center - root) / TWO_PI, (center + root) / TWO_PI


def _tagged_observations(peaks: SpectrumPeaks) -> list[tuple[float, float, int]]:
    """Flatten to (eps, f_hz, label) rows.

    An entry that resolves two or more peaks shows both dressed levels at
    that bias, so its lowest peak is pinned to the lower branch and its
    highest to the upper one (sorted-to-sorted is the jointly nearest
    matching).  Everything else gets label 0 and is assigned to whichever
    branch of the current model sits nearer.  Without the pinning, a model
    whose single branch threads between two observed lines can beat the
    true two-branch structure on near-degenerate (crossing) data.
    """
    obs = []
    for eps, freqs in peaks.entries:
        labels = [0] * len(freqs)
        if len(freqs) >= 2:
            labels[0], labels[-1] = -1, 1
        obs.extend((eps, f, lab) for f, lab in zip(freqs, labels))
    return obs


def _residuals_and_jacobian(theta: np.ndarray,
                            obs: list[tuple[float, float, int]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residuals (Hz), Jacobian, and branch assignment (+-1) per observation."""
    g, delta, wr = theta
    res = np.empty(len(obs))
    jac = np.empty((len(obs), 3))
    branch = np.empty(len(obs))
    for i, (eps, f_hz, label) in enumerate(obs):
        wqb = math.hypot(delta, eps)
        half_det = 0.5 * (wqb - wr)
        root = math.hypot(half_det, g)
        center = 0.5 * (wqb + wr)
        if label:
            s = float(label)
        else:
            s = 1.0 if abs(f_hz - (center + root) / TWO_PI) < abs(f_hz - (center - root) / TWO_PI) else -1.0
        model = (center + s * root) / TWO_PI
        res[i] = f_hz - model
        d_dg = s * g / root if root > 0.0 else 0.0
        d_dwqb = 0.5 + s * half_det / (2.0 * root) if root > 0.0 else 0.5
        d_dwr = 0.5 - s * half_det / (2.0 * root) if root > 0.0 else 0.5
        d_ddelta = d_dwqb * (delta / wqb if wqb > 0.0 else 1.0)
        jac[i] = (-d_dg / TWO_PI, -d_ddelta / TWO_PI, -d_dwr / TWO_PI)
        branch[i] = s
    return res, jac, branch


def fit_anticrossing(peaks: SpectrumPeaks,
                     f_r_seed_hz: float | None = None) -> AnticrossingFit:
    """Extract (g, Delta, w_r) from two-branch anticrossing peaks.

    Seeds w_r at the branch midpoint where the observed splitting is
    smallest (or at `f_r_seed_hz`), scans a coarse grid over g and the
    Delta offset to dodge branch-swap local minima, then refines with
    Gauss-Newton plus step halving.  The fitted g is reported as found --
    a crossing dataset legitimately fits to g at the resolution floor, and
    clamping would hide that.
    """
    obs = _tagged_observations(peaks)
    if len(obs) < 6:
        raise ValueError(f"need at least 6 peak observations, got {len(obs)}")

    if f_r_seed_hz is None:
        # At the entry with the smallest observed splitting the two branches
        # straddle w_r; their midpoint is the best cheap estimate of it.
        paired = [(eps, freqs) for eps, freqs in peaks.entries if len(freqs) >= 2]
        if paired:
            eps0, freqs0 = min(paired, key=lambda e: e[1][-1] - e[1][0])
            f_r_seed_hz = 0.5 * (freqs0[0] + freqs0[-1])
        else:
            f_r_seed_hz = float(np.median([f for _, f, _ in obs]))
    wr_seed = TWO_PI * f_r_seed_hz

    def sse(theta: np.ndarray) -> float:
        r, _, _ = _residuals_and_jacobian(theta, obs)
        return float(r @ r)

    best_theta, best_sse = None, math.inf
    for g_hz in SEED_G_HZ:
        for off_hz in SEED_DELTA_OFFSETS_HZ:
            theta = np.array([TWO_PI * g_hz, wr_seed + TWO_PI * off_hz, wr_seed])
            s = sse(theta)
            if s < best_sse:
                best_theta, best_sse = theta, s

    # Branch coverage: any entry with two peaks shows both dressed levels at
    # that bias (a degenerate crossing reports the same frequency twice,
    # which still counts).  Otherwise fall back to the seed assignment --
    # single-peak entries that all land on one branch leave g unidentified.
    if not any(len(freqs) >= 2 for _, freqs in peaks.entries):
        _, _, branch = _residuals_and_jacobian(best_theta, obs)
        if not (np.any(branch > 0.0) and np.any(branch < 0.0)):
            raise ValueError("peaks must span both anticrossing branches")

    theta = best_theta
    current = best_sse
    for iteration in range(1, GN_MAX_ITER + 1):
        r, jac, _ = _residuals_and_jacobian(theta, obs)
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        scale = 1.0
        for _ in range(GN_MAX_HALVINGS):
            trial = theta + scale * step
            if sse(trial) < current:
                break
            scale *= 0.5
        else:
            break  # no descent along the Gauss-Newton direction: converged
        theta = theta + scale * step
        previous, current = current, sse(theta)
        if np.linalg.norm(scale * step) <= GN_STEP_TOL * max(np.linalg.norm(theta), 1.0):
            break
        if previous - current <= 1e-12 * previous:
            break  # objective has stalled at the halved step: converged
    else:
        raise FitConvergenceError(
            f"anticrossing fit did not converge in {GN_MAX_ITER} iterations; "
            f"best residual RMS {math.sqrt(current / len(obs)):.6g} Hz")

    g, delta, wr = theta
    residual = math.sqrt(current / len(obs))
    return AnticrossingFit(g=abs(float(g)), delta=float(delta), omega_r=float(wr),
                           residual_hz=residual, n_iterations=iteration)


# ---------------------------------------------------------------------------
# Waveform serialization
# ---------------------------------------------------------------------------

def write_waveform_csv(waveform: SampledWaveform, path) -> None:
    """CSV export: header line, then one `time_s,volts` row per sample."""
    lines = ["time_s,volts"]
    times = waveform.times()
    for t, v in zip(times, waveform.samples):
        lines.append(f"{t:.17g},{v:.17g}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_waveform_raw(waveform: SampledWaveform, path) -> None:
    """Raw export: 16-byte header (magic, version, sample rate), then
    the samples as little-endian float64."""
    header = _HEADER.pack(WAVEFORM_MAGIC, WAVEFORM_VERSION, waveform.sample_rate)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(waveform.samples, dtype="<f8").tobytes())


def read_waveform_raw(path) -> SampledWaveform:
    """Inverse of write_waveform_raw; duration is implied by the count."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise ValueError("waveform file shorter than its 16-byte header")
    magic, version, sample_rate = _HEADER.unpack_from(blob)
    if magic != WAVEFORM_MAGIC:
        raise ValueError(f"bad waveform magic {magic!r}")
    if version != WAVEFORM_VERSION:
        raise ValueError(f"unsupported waveform version {version}")
    body = blob[_HEADER.size:]
    if len(body) % 8:
        raise ValueError("waveform payload is not a whole number of float64 samples")
    samples = np.frombuffer(body, dtype="<f8").astype(float)
    return SampledWaveform(sample_rate=sample_rate, samples=samples,
                           duration=samples.size / sample_rate)
