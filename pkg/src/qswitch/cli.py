"""Command-line entry point.

Each subcommand reads one config file, runs its protocol, and writes into
the output directory:

  <subcommand>.csv   the data table (header line, 17 significant digits)
  summary.json       scalar results; unavailable values are null with a
                     companion `<name>_reason` string, never 0
  <subcommand>.svg   a self-contained plot (no timestamps, no external refs)
  manifest.json      tool version, the resolved config echo, wall-clock
                     duration, and SHA-256 checksums of every file above
                     (written last)

The `waveform` subcommand additionally writes `waveform.qswf`, the raw
little-endian float64 sample block.

CSV and JSON bytes depend only on the config: reruns and different
`--workers` counts produce identical files.  The manifest alone carries
the wall-clock duration and so differs between runs.

Exit codes: 0 success; 2 config or parameter error; 3 numerical failure
(integrator, fit, domain); 4 I/O failure.  Failures print a one-line JSON
error object to stderr.

Subcommand data schemas (columns):
  spectrum          epsilon_hz, probe_hz, response, dressed_lower_hz, dressed_upper_hz
  driven-spectrum   lambda_z_hz, probe_hz, response, gap_hz, bessel_gap_hz, coupling_sign
  rabi-scan         lambda_z_hz, time_s, p_excited
  rabi-compare      time_s, p_on, p_off
  switch            time_s, p_excited, photon_number, lambda_z_hz
  storage           time_s, p_excited, photon_number, lambda_z_hz
  onoff-ratio       lambda_z_hz, gap_hz
  waveform          time_s, volts
  gap-curve         volts, gap_ghz
  fit-anticrossing  epsilon_hz, f_lower_hz, f_upper_hz
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__, svg
from .calibration import (
    CubicMap,
    SampledWaveform,
    SpectrumPeaks,
    fit_anticrossing,
    gap_tuning_curve,
    synthesize_waveform,
    write_waveform_raw,
)
from .config import (
    FORMATS,
    PROTOCOLS,
    RunConfig,
    build_device,
    echo_config,
    parse_config,
    with_protocol,
)
from .dynamics import TimeGrid, quasienergy_gap
from .errors import ConfigError, NumericalError
from .model import TWO_PI
from .protocols import (
    SweepSpec,
    analyze_storage,
    driven_spectrum_scan,
    extract_frequency,
    find_switch_off,
    rabi_compare,
    rabi_scan,
    spectrum_scan,
    storage_experiment,
    swap_duration,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _fmt_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def _json_bytes(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _storage_grid(cfg: RunConfig, model) -> tuple[TimeGrid, float]:
    """Grid covering swap + hold + post-revival window for switch/storage."""
    t_end = swap_duration(model) + cfg.storage_t_off_s + cfg.storage_post_s
    return (TimeGrid(t_end, cfg.grid_samples, max_step=cfg.grid_max_step_s),
            t_end)


def _sequence_amplitudes(times: np.ndarray, t_swap: float, t_off: float,
                         lambda_off_hz: float) -> np.ndarray:
    """Drive amplitude (Hz) seen at each sample of the storage sequence."""
    inside = (times >= t_swap) & (times < t_swap + t_off)
    return np.where(inside, lambda_off_hz, 0.0)


# ---------------------------------------------------------------------------
# Subcommand implementations.  Each returns (header, rows, summary, svg_doc).
# ---------------------------------------------------------------------------

def _run_spectrum(cfg: RunConfig, workers: int):
    model = build_device(cfg, undriven=True)
    eps = SweepSpec("epsilon", TWO_PI * cfg.epsilon_sweep[0],
                    TWO_PI * cfg.epsilon_sweep[1], cfg.epsilon_sweep[2])
    probe = SweepSpec("probe_frequency", cfg.probe[0], cfg.probe[1], cfg.probe[2])
    result = spectrum_scan(model, eps, probe, workers=workers)
    lower = result.overlays["dressed_lower_hz"]
    upper = result.overlays["dressed_upper_hz"]
    rows = []
    for j, e in enumerate(result.x_axis):
        for i, f in enumerate(result.y_axis):
            rows.append((e / TWO_PI, f, result.population[i, j], lower[j], upper[j]))
    summary = {
        "min_splitting_hz": float(np.min(upper - lower)),
        "full_splitting_2g_hz": 2.0 * cfg.g_hz,
    }
    doc = svg.heatmap(result.x_axis / TWO_PI, result.y_axis, result.population,
                      "bias epsilon/2pi (Hz)", "probe frequency (Hz)",
                      "one-tone spectrum",
                      overlays=[(result.x_axis / TWO_PI, lower, "lower"),
                                (result.x_axis / TWO_PI, upper, "upper")])
    return (("epsilon_hz", "probe_hz", "response", "dressed_lower_hz",
             "dressed_upper_hz"), rows, summary, doc)


def _run_driven_spectrum(cfg: RunConfig, workers: int):
    model = build_device(cfg)
    lam = SweepSpec("lambda_z", TWO_PI * cfg.drive_sweep[0],
                    TWO_PI * cfg.drive_sweep[1], cfg.drive_sweep[2])
    probe = SweepSpec("probe_frequency", cfg.probe[0], cfg.probe[1], cfg.probe[2])
    result = driven_spectrum_scan(model, lam, probe, workers=workers)
    gap = result.overlays["gap_hz"]
    bessel = result.overlays["bessel_gap_hz"]
    sign = result.overlays["coupling_sign"]
    rows = []
    for j, lz in enumerate(result.x_axis):
        for i, f in enumerate(result.y_axis):
            rows.append((lz / TWO_PI, f, result.population[i, j],
                         gap[j], bessel[j], int(sign[j])))
    j_min = int(np.argmin(gap))
    summary = {
        "min_gap_hz": float(gap[j_min]),
        "lambda_at_min_gap_hz": float(result.x_axis[j_min] / TWO_PI),
        "max_rel_bessel_mismatch": float(np.max(np.abs(gap - bessel))
                                         / (2.0 * cfg.g_hz)),
    }
    x_hz = result.x_axis / TWO_PI
    center = cfg.wr_hz
    doc = svg.heatmap(x_hz, result.y_axis, result.population,
                      "drive amplitude lambda_z/2pi (Hz)",
                      "probe frequency (Hz)", "driven spectrum",
                      overlays=[(x_hz, center + gap / 2.0, "upper"),
                                (x_hz, center - gap / 2.0, "lower")])
    return (("lambda_z_hz", "probe_hz", "response", "gap_hz", "bessel_gap_hz",
             "coupling_sign"), rows, summary, doc)


def _run_rabi_scan(cfg: RunConfig, workers: int):
    model = build_device(cfg)
    lam = SweepSpec("lambda_z", TWO_PI * cfg.drive_sweep[0],
                    TWO_PI * cfg.drive_sweep[1], cfg.drive_sweep[2])
    grid = TimeGrid(cfg.grid_duration_s, cfg.grid_samples,
                    max_step=cfg.grid_max_step_s)
    result = rabi_scan(model, lam, grid, workers=workers)
    rows = []
    for j, lz in enumerate(result.x_axis):
        for i, t in enumerate(result.y_axis):
            rows.append((lz / TWO_PI, t, result.population[i, j]))
    freq = result.overlays["column_frequency_hz"]
    eff = result.overlays["effective_rabi_hz"]
    detected = ~np.isnan(freq)
    summary = {
        "columns_with_detected_oscillation": int(np.count_nonzero(detected)),
        "max_column_frequency_hz": (float(np.nanmax(freq))
                                    if detected.any() else None),
    }
    if not detected.any():
        summary["max_column_frequency_hz_reason"] = (
            "no column shows a spectral peak above the noise floor")
    resolved = detected & (np.abs(eff) > 1e6)
    summary["max_rel_error_vs_bessel"] = (
        float(np.max(np.abs(freq[resolved] - np.abs(eff[resolved]))
                     / np.abs(eff[resolved])))
        if resolved.any() else None)
    if not resolved.any():
        summary["max_rel_error_vs_bessel_reason"] = (
            "no column combines a detected oscillation with |g_eff|/2pi > 1 MHz")
    doc = svg.heatmap(result.x_axis / TWO_PI, result.y_axis, result.population,
                      "drive amplitude lambda_z/2pi (Hz)", "time (s)",
                      "Rabi map")
    return (("lambda_z_hz", "time_s", "p_excited"), rows, summary, doc)


def _run_rabi_compare(cfg: RunConfig, workers: int):
    model = build_device(cfg)
    grid = TimeGrid(cfg.grid_duration_s, cfg.grid_samples,
                    max_step=cfg.grid_max_step_s)
    lam_off = TWO_PI * cfg.lambda_z_hz if cfg.lambda_z_hz > 0.0 else None
    times, p_on, p_off, lambda_off = rabi_compare(model, grid, lambda_off=lam_off)
    rows = list(zip(times, p_on, p_off))
    summary: dict = {"lambda_off_hz": lambda_off / TWO_PI,
                     "expected_on_frequency_hz": 2.0 * cfg.g_hz}
    f_on = extract_frequency(p_on, times, f_max=6.0 * cfg.g_hz)
    f_off = extract_frequency(p_off, times, f_max=6.0 * cfg.g_hz)
    summary["on_frequency_hz"] = f_on
    if f_on is None:
        summary["on_frequency_hz_reason"] = (
            "no spectral peak above the noise floor")
    summary["off_frequency_hz"] = f_off
    if f_off is None:
        summary["off_frequency_hz_reason"] = (
            "no spectral peak above the noise floor: coupling is switched off")
    doc = svg.line_plot([(times, p_on, "drive off (coupling on)"),
                         (times, p_off, "drive at switch-off")],
                        "time (s)", "P(e)", "vacuum Rabi comparison")
    return (("time_s", "p_on", "p_off"), rows, summary, doc)


def _run_switch(cfg: RunConfig, workers: int, analyze: bool = False):
    model = build_device(cfg)
    grid, t_end = _storage_grid(cfg, model)
    t_swap = swap_duration(model)
    if analyze:
        outcome = analyze_storage(model, cfg.storage_t_off_s, grid)
        traj = outcome.trajectory
        lambda_off_hz = None  # recovered below from the fit summary
        summary = {
            "amplitude_ratio": outcome.amplitude_ratio,
            "expected_ratio": math.exp(-cfg.storage_t_off_s / cfg.t1_resonator_s)
            if math.isfinite(cfg.t1_resonator_s) else 1.0,
            "revival_frequency_hz": outcome.revival_frequency_hz,
            "expected_revival_hz": 2.0 * cfg.g_hz,
            "switch_on_time_s": outcome.switch_on_time,
            "pre_decay_time_s": outcome.pre_fit.decay_time,
            "post_decay_time_s": outcome.post_fit.decay_time,
        }
    else:
        lam_off = find_switch_off(model)
        outcome = None
        traj = storage_experiment(model, cfg.storage_t_off_s, grid,
                                  lambda_off=lam_off)
        lambda_off_hz = lam_off / TWO_PI
        summary = {
            "swap_duration_s": t_swap,
            "hold_duration_s": cfg.storage_t_off_s,
            "switch_on_time_s": t_swap + cfg.storage_t_off_s,
            "lambda_off_hz": lambda_off_hz,
        }
    if lambda_off_hz is None:
        lambda_off_hz = find_switch_off(model) / TWO_PI
    amps = _sequence_amplitudes(traj.times, t_swap, cfg.storage_t_off_s,
                                lambda_off_hz)
    rows = list(zip(traj.times, traj.qubit_excited_population,
                    traj.photon_number, amps))
    doc = svg.line_plot([(traj.times, traj.qubit_excited_population, "P(e)"),
                         (traj.times, traj.photon_number, "photon number")],
                        "time (s)", "population",
                        "storage sequence" if analyze else "switch sequence")
    return (("time_s", "p_excited", "photon_number", "lambda_z_hz"),
            rows, summary, doc)


def _run_storage(cfg: RunConfig, workers: int):
    return _run_switch(cfg, workers, analyze=True)


def _run_onoff_ratio(cfg: RunConfig, workers: int):
    model = build_device(cfg)
    lam_off = find_switch_off(model)
    gap_on = quasienergy_gap(replace(model, drive=replace(model.drive,
                                                          amplitude=0.0)))
    gap_off = quasienergy_gap(replace(model, drive=replace(model.drive,
                                                           amplitude=lam_off)))
    lam_values = np.linspace(TWO_PI * cfg.drive_sweep[0],
                             TWO_PI * cfg.drive_sweep[1], cfg.drive_sweep[2])
    gaps = [quasienergy_gap(replace(model,
                                    drive=replace(model.drive, amplitude=float(lz))))
            for lz in lam_values]
    rows = [(lz / TWO_PI, gp) for lz, gp in zip(lam_values, gaps)]
    summary = {
        "lambda_off_hz": lam_off / TWO_PI,
        "onoff_ratio": gap_off / gap_on,
        "gap_on_hz": gap_on / TWO_PI,
        "gap_off_hz": gap_off / TWO_PI,
    }
    doc = svg.line_plot([(lam_values / TWO_PI, np.asarray(gaps), "gap")],
                        "drive amplitude lambda_z/2pi (Hz)",
                        "quasienergy gap (Hz)", "coupling suppression")
    return (("lambda_z_hz", "gap_hz"), rows, summary, doc)


def _waveform_pieces(cfg: RunConfig) -> SampledWaveform:
    bias_map = CubicMap(*cfg.wf_coeffs, domain=cfg.wf_domain)
    wf = synthesize_waveform(TWO_PI * cfg.lambda_z_hz, TWO_PI * cfg.wz_hz,
                             TWO_PI * cfg.wr_hz, bias_map,
                             cfg.wf_sample_rate_hz, cfg.wf_duration_s)
    if cfg.wf_gain != 1.0:
        wf = SampledWaveform(sample_rate=wf.sample_rate,
                             samples=wf.samples * cfg.wf_gain,
                             duration=wf.duration)
    return wf


def _run_waveform(cfg: RunConfig, workers: int):
    wf = _waveform_pieces(cfg)
    times = wf.times()
    rows = list(zip(times, wf.samples))
    summary = {
        "n_samples": int(wf.samples.size),
        "sample_rate_hz": wf.sample_rate,
        "v_min": float(wf.samples.min()),
        "v_max": float(wf.samples.max()),
        "gain": cfg.wf_gain,
    }
    doc = svg.line_plot([(times, wf.samples, "")], "time (s)", "bias (V)",
                        "synthesized bias waveform")
    return (("time_s", "volts"), rows, summary, doc)


def _run_gap_curve(cfg: RunConfig, workers: int):
    bias_map = CubicMap(*cfg.wf_coeffs, domain=cfg.wf_domain)
    volts = np.linspace(*cfg.gapcurve[:2], cfg.gapcurve[2])
    curve = gap_tuning_curve(bias_map, [float(v) for v in volts],
                             crossing_ghz=1e-9 * cfg.wr_hz)
    rows = list(zip(curve.volts, curve.gaps_ghz))
    summary: dict = {"crossing_volts": curve.crossing_volts,
                     "crossing_ghz": curve.crossing_ghz}
    if curve.crossing_volts is None:
        summary["crossing_volts_reason"] = (
            "resonator frequency lies outside the calibrated map domain")
    doc = svg.line_plot([(volts, np.asarray(curve.gaps_ghz), "")],
                        "bias (V)", "qubit gap (GHz)", "gap tuning curve")
    return (("volts", "gap_ghz"), rows, summary, doc)


def _run_fit_anticrossing(cfg: RunConfig, workers: int):
    g = TWO_PI * cfg.g_hz
    delta = TWO_PI * cfg.delta_hz
    wr = TWO_PI * cfg.wr_hz
    eps_values = np.linspace(TWO_PI * cfg.epsilon_sweep[0],
                             TWO_PI * cfg.epsilon_sweep[1],
                             cfg.epsilon_sweep[2])
    rng = np.random.default_rng(cfg.anticross_seed)
    entries = []
    for eps in eps_values:
        wq = math.hypot(delta, float(eps))
        root = math.hypot(0.5 * (wq - wr), g)
        center = 0.5 * (wq + wr)
        pair = [(center - root) / TWO_PI, (center + root) / TWO_PI]
        if cfg.anticross_noise_khz > 0.0:
            pair = [f + 1e3 * cfg.anticross_noise_khz * rng.standard_normal()
                    for f in pair]
        entries.append((float(eps), tuple(sorted(pair))))
    peaks = SpectrumPeaks(tuple(entries))
    fit = fit_anticrossing(peaks)
    rows = [(eps / TWO_PI, fs[0], fs[1]) for eps, fs in peaks.entries]
    summary = {
        "g_fit_hz": fit.g / TWO_PI,
        "delta_fit_hz": fit.delta / TWO_PI,
        "wr_fit_hz": fit.omega_r / TWO_PI,
        "residual_hz": fit.residual_hz,
        "g_config_hz": cfg.g_hz,
        "g_rel_error": abs(fit.g / TWO_PI - cfg.g_hz) / cfg.g_hz,
        "noise_khz": cfg.anticross_noise_khz,
    }
    xs = eps_values / TWO_PI
    doc = svg.line_plot(
        [(xs, np.array([fs[0] for _, fs in peaks.entries]), "lower peaks"),
         (xs, np.array([fs[1] for _, fs in peaks.entries]), "upper peaks")],
        "bias epsilon/2pi (Hz)", "frequency (Hz)", "anticrossing fit input")
    return (("epsilon_hz", "f_lower_hz", "f_upper_hz"), rows, summary, doc)


_RUNNERS = {
    "spectrum": _run_spectrum,
    "driven-spectrum": _run_driven_spectrum,
    "rabi-scan": _run_rabi_scan,
    "rabi-compare": _run_rabi_compare,
    "switch": _run_switch,
    "storage": _run_storage,
    "onoff-ratio": _run_onoff_ratio,
    "waveform": _run_waveform,
    "gap-curve": _run_gap_curve,
    "fit-anticrossing": _run_fit_anticrossing,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qswitch",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name in PROTOCOLS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", required=True,
                         help="path to the run configuration file")
        sub.add_argument("--out", default=None,
                         help="output directory (QSWITCH_OUT overrides)")
        sub.add_argument("--format", default=None,
                         help=f"comma list drawn from {','.join(FORMATS)}")
        sub.add_argument("--workers", type=int, default=1,
                         help="worker threads for sweep columns")
        sub.add_argument("--verbose", action="store_true",
                         help="progress notes on stderr")
    return parser


def _fail(code: int, exc: BaseException) -> int:
    payload = {"error": {"type": type(exc).__name__, "message": str(exc)},
               "exit_code": code}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    started = time.monotonic()

    try:
        with open(args.config, "r") as fh:
            text = fh.read()
    except OSError as exc:
        return _fail(EXIT_IO, exc)

    try:
        cfg = parse_config(text)
        cfg = with_protocol(cfg, args.subcommand)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
        env_out = os.environ.get("QSWITCH_OUT")
        if env_out:
            cfg = replace(cfg, out_dir=env_out)
        if args.format is not None:
            formats = tuple(dict.fromkeys(
                part.strip() for part in args.format.split(",")))
            if not formats or any(f not in FORMATS for f in formats):
                raise ConfigError(
                    f"--format must be a comma list drawn from {', '.join(FORMATS)}")
            cfg = replace(cfg, formats=formats)
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)

    if args.verbose:
        print(f"qswitch {__version__}: {args.subcommand} with "
              f"{args.workers} worker(s) -> {cfg.out_dir}", file=sys.stderr)

    try:
        header, rows, summary, svg_doc = _RUNNERS[args.subcommand](cfg, args.workers)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, exc)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, exc)

    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        emitted: dict[str, str] = {}

        def _save(name: str, data: str | bytes) -> None:
            path = os.path.join(cfg.out_dir, name)
            mode = "wb" if isinstance(data, bytes) else "w"
            with open(path, mode, **({} if isinstance(data, bytes)
                                     else {"newline": "\n"})) as fh:
                fh.write(data)
            with open(path, "rb") as fh:
                emitted[name] = hashlib.sha256(fh.read()).hexdigest()
            if args.verbose:
                print(f"wrote {path}", file=sys.stderr)

        if "csv" in cfg.formats:
            lines = [",".join(header)]
            lines += [",".join(_fmt_cell(c) for c in row) for row in rows]
            _save(f"{args.subcommand}.csv", "\n".join(lines) + "\n")
        if "json" in cfg.formats:
            _save("summary.json", _json_bytes(summary))
        if "svg" in cfg.formats:
            _save(f"{args.subcommand}.svg", svg_doc)
        if args.subcommand == "waveform":
            raw_path = os.path.join(cfg.out_dir, "waveform.qswf")
            write_waveform_raw(_waveform_pieces(cfg), raw_path)
            with open(raw_path, "rb") as fh:
                emitted["waveform.qswf"] = hashlib.sha256(fh.read()).hexdigest()

        manifest = {
            "tool": "qswitch",
            "version": __version__,
            "protocol": args.subcommand,
            "workers": args.workers,
            "duration_seconds": time.monotonic() - started,
            "config": echo_config(cfg),
            "files": emitted,
        }
        with open(os.path.join(cfg.out_dir, "manifest.json"), "w",
                  newline="\n") as fh:
            fh.write(_json_bytes(manifest))
    except OSError as exc:
        return _fail(EXIT_IO, exc)

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
