"""Bias-map evaluation, waveform synthesis, and the anti-crossing fit.

Numeric anchors in this file were computed once with an independent scalar
Horner evaluation and are pinned to full precision; the library must keep
reproducing them bit-for-bit.
"""

import math

import numpy as np
import pytest

from conftest import DELTA, G, WR
from qswitch.calibration import (
    REFERENCE_MAP,
    AnticrossingFit,
    CubicMap,
    SampledWaveform,
    SpectrumPeaks,
    fit_anticrossing,
    fit_cubic,
    gap_tuning_curve,
    read_waveform_raw,
    synthesize_waveform,
    valpha,
    write_waveform_csv,
    write_waveform_raw,
)
from qswitch.errors import DomainError
from qswitch.model import TWO_PI

# Scalar Horner values of the reference map, frozen.
VALPHA_AT_CROSSING = -1.2273411474368974   # valpha(2.417)
VALPHA_AT_2p777 = -0.705450265272896       # upper modulation extreme
VALPHA_AT_2p057 = -2.0342733105608986      # lower modulation extreme


class TestCubicMap:
    def test_reference_map_is_increasing(self):
        assert REFERENCE_MAP.direction == 1
        lo, hi = REFERENCE_MAP.range()
        assert lo == valpha(2.0) and hi == valpha(5.0)

    def test_valpha_frozen_values(self):
        assert valpha(2.417) == VALPHA_AT_CROSSING
        assert valpha(2.777) == VALPHA_AT_2p777
        assert valpha(2.057) == VALPHA_AT_2p057

    def test_valpha_matches_polyval(self):
        """The scalar Horner form and numpy's polynomial evaluation agree
        bitwise, so CSV output and library calls can never drift apart."""
        coeffs = [REFERENCE_MAP.c3, REFERENCE_MAP.c2, REFERENCE_MAP.c1,
                  REFERENCE_MAP.c0]
        for x in np.linspace(2.0, 5.0, 301):
            assert valpha(float(x)) == float(np.polyval(coeffs, x))

    def test_domain_enforced(self):
        with pytest.raises(DomainError):
            valpha(1.99)
        with pytest.raises(DomainError):
            valpha(5.01)
        valpha(2.0), valpha(5.0)  # boundaries included

    def test_custom_domain(self):
        wide = CubicMap(REFERENCE_MAP.c3, REFERENCE_MAP.c2, REFERENCE_MAP.c1,
                        REFERENCE_MAP.c0, domain=(0.0, 6.0))
        assert valpha(1.0, wide) == pytest.approx(-6.6593, abs=1e-10)

    def test_non_monotone_map_has_no_range(self):
        bump = CubicMap(0.0, -1.0, 0.0, 0.0, domain=(-1.0, 1.0))
        assert bump.direction == 0
        with pytest.raises(DomainError):
            bump.range()


class TestFitCubic:
    def test_exact_recovery(self):
        xs = np.linspace(2.0, 5.0, 9)
        pts = [(float(x), float(np.polyval([0.2287, -2.758, 11.14, -15.27], x)))
               for x in xs]
        fit = fit_cubic(pts)
        np.testing.assert_allclose(
            [fit.c3, fit.c2, fit.c1, fit.c0],
            [0.2287, -2.758, 11.14, -15.27], rtol=1e-12)
        assert fit.domain == (2.0, 5.0)
        assert max(abs(r) for r in fit.fit_residuals) < 1e-12

    def test_needs_four_distinct_points(self):
        with pytest.raises(ValueError):
            fit_cubic([(1.0, 0.0), (2.0, 1.0), (3.0, 2.0)])
        with pytest.raises(ValueError):
            fit_cubic([(1.0, 0.0), (1.0, 0.1), (2.0, 1.0), (3.0, 2.0)])


class TestWaveform:
    def _waveform(self, lam_hz=180e6, rate=2.4e9, duration=100e-9):
        return synthesize_waveform(TWO_PI * lam_hz, TWO_PI * 150e6, WR,
                                   REFERENCE_MAP, rate, duration)

    def test_extremes_hit_valpha_exactly(self):
        """At cosine extremes the sample equals valpha of the gap excursion:
        2.417 +- 0.360 GHz for the 180 MHz modulation."""
        wf = self._waveform()
        # 2.4 GS/s over a 150 MHz modulation: 16 samples per period.
        assert wf.samples[0] == VALPHA_AT_2p777
        assert wf.samples[8] == VALPHA_AT_2p057

    def test_periodicity(self):
        wf = self._waveform()
        period = 16
        reps = wf.samples[: len(wf.samples) - period]
        shifted = wf.samples[period:]
        assert np.abs(reps - shifted).max() <= 1e-12

    def test_sample_count_and_times(self):
        wf = self._waveform(duration=50e-9)
        assert len(wf.samples) == round(50e-9 * 2.4e9)
        t = wf.times()
        assert t[0] == 0.0
        assert abs(t[1] - 1.0 / 2.4e9) < 1e-24

    def test_domain_excursion_rejected(self):
        """A modulation swinging the gap outside the map's domain cannot be
        converted to bias volts."""
        with pytest.raises(DomainError):
            self._waveform(lam_hz=1.4e9)

    def test_raw_round_trip_exact(self, tmp_path):
        wf = self._waveform()
        path = tmp_path / "wf.qswf"
        write_waveform_raw(wf, path)
        back = read_waveform_raw(path)
        assert back.sample_rate == wf.sample_rate
        assert back.duration == wf.duration
        np.testing.assert_array_equal(back.samples, wf.samples)

    def test_raw_validation(self, tmp_path):
        wf = self._waveform(duration=10e-9)
        path = tmp_path / "wf.qswf"
        write_waveform_raw(wf, path)
        blob = path.read_bytes()
        bad_magic = tmp_path / "bad.qswf"
        bad_magic.write_bytes(b"XXXX" + blob[4:])
        with pytest.raises(ValueError):
            read_waveform_raw(bad_magic)
        truncated = tmp_path / "trunc.qswf"
        truncated.write_bytes(blob[:-5])
        with pytest.raises(ValueError):
            read_waveform_raw(truncated)

    def test_csv_format(self, tmp_path):
        wf = self._waveform(duration=10e-9)
        path = tmp_path / "wf.csv"
        write_waveform_csv(wf, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "time_s,volts"
        assert len(lines) == 1 + len(wf.samples)
        t0, v0 = lines[1].split(",")
        assert float(t0) == 0.0
        assert float(v0) == wf.samples[0]

    def test_sampled_waveform_validation(self):
        with pytest.raises(ValueError):
            SampledWaveform(sample_rate=1e9, samples=np.ones(5), duration=1e-9)
        with pytest.raises(ValueError):
            SampledWaveform(sample_rate=1e9, samples=np.array([1.0, math.nan]),
                            duration=2e-9)


class TestTuningCurve:
    def test_round_trip_inversion(self):
        """Gap -> volts -> gap closes to well under a nano-GHz."""
        v = [valpha(x) for x in np.linspace(2.05, 4.95, 25)]
        curve = gap_tuning_curve(REFERENCE_MAP, v)
        for x, gap in zip(np.linspace(2.05, 4.95, 25), curve.gaps_ghz):
            assert abs(gap - x) <= 1e-9

    def test_crossing_marker(self):
        v = list(np.linspace(-2.1, 0.0, 43))
        curve = gap_tuning_curve(REFERENCE_MAP, v, crossing_ghz=2.417)
        assert curve.crossing_ghz == 2.417
        assert abs(curve.crossing_volts - VALPHA_AT_CROSSING) <= 1e-9

    def test_crossing_outside_domain_is_unmarked(self):
        curve = gap_tuning_curve(REFERENCE_MAP, [valpha(4.0), valpha(4.5)],
                                 crossing_ghz=5.5)
        assert curve.crossing_ghz is None
        assert curve.crossing_volts is None

    def test_requires_monotone_map(self):
        bump = CubicMap(0.0, -1.0, 0.0, 0.0, domain=(-1.0, 1.0))
        with pytest.raises(DomainError):
            gap_tuning_curve(bump, [0.0])


def dressed_branches_hz(eps, *, g=G, gap=DELTA, wr=WR):
    """E-/E+ of the single-excitation doublet, in Hz."""
    wqb = math.hypot(gap, eps)
    mean = 0.5 * (wqb + wr)
    split = math.sqrt(((wqb - wr) / 2) ** 2 + g ** 2)
    return (mean - split) / TWO_PI, (mean + split) / TWO_PI


def synth_peaks(*, g=G, gap=DELTA, wr=WR, span_hz=50e6, n=21, noise_hz=0.0,
                seed=1234, shift_hz=0.0):
    rng = np.random.default_rng(seed)
    entries = []
    for eps in np.linspace(-TWO_PI * span_hz, TWO_PI * span_hz, n):
        lo, hi = dressed_branches_hz(eps, g=g, gap=gap, wr=wr)
        if noise_hz:
            lo += noise_hz * rng.standard_normal()
            hi += noise_hz * rng.standard_normal()
        entries.append((float(eps), (lo + shift_hz, hi + shift_hz)))
    return SpectrumPeaks(entries=tuple(entries))


class TestAnticrossingFit:
    def test_noiseless_recovery(self):
        fit = fit_anticrossing(synth_peaks())
        assert abs(fit.g / G - 1.0) < 1e-9
        assert abs(fit.delta / DELTA - 1.0) < 1e-9
        assert abs(fit.omega_r / WR - 1.0) < 1e-9
        assert fit.residual_hz < 1e-3

    def test_noisy_recovery_fixed_seed(self):
        fit = fit_anticrossing(synth_peaks(noise_hz=1e4, seed=1234))
        assert abs(fit.g / G - 1.0) < 1e-3
        assert fit.residual_hz < 5e4

    def test_zero_coupling_crossing(self):
        """Plain crossing data fits to g = 0 instead of faking a splitting."""
        fit = fit_anticrossing(synth_peaks(g=0.0))
        assert abs(fit.g) / TWO_PI <= 1e-3  # Hz
        assert fit.residual_hz < 1e-3

    def test_frequency_shift_leaves_g(self):
        """Translating the whole spectrum must not move the fitted coupling.

        The branch model is only locally shift-invariant (the qubit
        frequency is sqrt(Delta^2 + eps^2)), so this uses a narrow window
        around the crossing where the invariance holds to high order."""
        base = synth_peaks(span_hz=20e6, n=15)
        shifted = synth_peaks(span_hz=20e6, n=15, shift_hz=50e6)
        g1 = fit_anticrossing(base).g
        g2 = fit_anticrossing(shifted, f_r_seed_hz=WR / TWO_PI + 50e6).g
        assert abs(g2 / g1 - 1.0) <= 1e-6

    def test_one_branch_rejected(self):
        entries = tuple(
            (float(eps), (dressed_branches_hz(eps)[1],))
            for eps in np.linspace(-TWO_PI * 50e6, TWO_PI * 50e6, 9))
        with pytest.raises(ValueError, match="span both"):
            fit_anticrossing(SpectrumPeaks(entries=entries))

    def test_fit_metadata(self):
        fit = fit_anticrossing(synth_peaks())
        assert isinstance(fit, AnticrossingFit)
        assert 1 <= fit.n_iterations <= 100
        assert fit.g >= 0.0

    def test_n_observations(self):
        peaks = synth_peaks(n=7)
        assert peaks.n_observations == 14
