"""Run configuration: strict sectioned key=value files.

Format: `[section]` headers, one `key = value` pair per line, `#` starts a
comment.  Values carry unit suffixes -- Hz/kHz/MHz/GHz for frequencies and
ns/us/ms/s for times, exact case -- and are stored internally as plain Hz
and seconds.  The conversion to angular frequencies happens exactly once,
in build_device().  The schema is closed: unknown sections or keys are
errors, as are duplicate keys, missing suffixes, and suffixes of the wrong
dimension; every parse error names the offending line.

Defaults are applied at parse time and echo_config() renders the fully
resolved configuration back to text.  The echo is canonical: parsing it
yields an equal RunConfig, which is how run manifests prove what a run
actually used.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

from .errors import ConfigError
from .model import (
    CouplingParams,
    DeviceModel,
    DriveParams,
    QubitParams,
    ResonatorParams,
    TWO_PI,
)

PROTOCOLS = ("spectrum", "driven-spectrum", "rabi-scan", "rabi-compare",
             "switch", "storage", "onoff-ratio", "waveform", "gap-curve",
             "fit-anticrossing")

FORMATS = ("csv", "json", "svg")

_FREQ_SUFFIX = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}
_TIME_SUFFIX = {"ns": 1e-9, "us": 1e-6, "ms": 1e-3, "s": 1.0}

# Kinds: how a raw value string becomes a number (or None for "auto").
#   freq      positive frequency, suffix required, stored in Hz
#   freq0     non-negative frequency, suffix required
#   freqs     signed frequency, suffix required
#   time      positive duration (inf allowed), suffix required, stored in s
#   time0     non-negative duration, suffix required
#   time_auto duration or the literal `auto` (stored as None)
#   float     bare finite float, suffix forbidden
#   int       bare integer
#   str       taken verbatim (after whitespace strip)
_SCHEMA: dict[str, dict[str, tuple[str, str | None]]] = {
    "run": {
        "protocol": ("str", ""),
    },
    "device": {
        "delta": ("freq", None),
        "wr": ("freq", None),
        "g": ("freq", None),
        "eps": ("freqs", "0 Hz"),
        "t1_qubit": ("time", "inf s"),
        "t1_resonator": ("time", "inf s"),
        "fock_cutoff": ("int", "5"),
    },
    "drive": {
        "wz": ("freq", "150 MHz"),
        "lambda_z": ("freq0", "0 Hz"),
        "phase": ("float", "0.0"),
    },
    "epsilon_sweep": {
        "start": ("freqs", "-400 MHz"),
        "stop": ("freqs", "400 MHz"),
        "points": ("int", "81"),
    },
    "drive_sweep": {
        "start": ("freq0", "0 Hz"),
        "stop": ("freq0", "240 MHz"),
        "points": ("int", "41"),
    },
    "probe": {
        "start": ("freq_auto", "auto"),
        "stop": ("freq_auto", "auto"),
        "points": ("int", "161"),
    },
    "grid": {
        "duration": ("time", "0.6 us"),
        "samples": ("int", "301"),
        "max_step": ("time_auto", "auto"),
    },
    "storage": {
        "t_off": ("time0", "1.5 us"),
        "post": ("time", "0.6 us"),
    },
    "waveform": {
        "sample_rate": ("freq", "2.4 GHz"),
        "duration": ("time", "100 ns"),
        "gain": ("float", "1.0"),
        "c3": ("float", "0.2287"),
        "c2": ("float", "-2.758"),
        "c1": ("float", "11.14"),
        "c0": ("float", "-15.27"),
        "domain_lo": ("float", "2.0"),
        "domain_hi": ("float", "5.0"),
    },
    "gapcurve": {
        "v_start": ("float", "-2.1"),
        "v_stop": ("float", "0.0"),
        "points": ("int", "211"),
    },
    "anticrossing": {
        "noise_khz": ("float", "0.0"),
        "seed": ("int", "20260818"),
    },
    "output": {
        "directory": ("str", "."),
        "formats": ("str", "csv,json,svg"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run parameters: frequencies in Hz, times in seconds."""

    protocol: str
    delta_hz: float
    wr_hz: float
    g_hz: float
    eps_hz: float
    t1_qubit_s: float
    t1_resonator_s: float
    fock_cutoff: int
    wz_hz: float
    lambda_z_hz: float
    drive_phase: float
    epsilon_sweep: tuple[float, float, int]
    drive_sweep: tuple[float, float, int]
    probe: tuple[float, float, int]
    grid_duration_s: float
    grid_samples: int
    grid_max_step_s: float | None
    storage_t_off_s: float
    storage_post_s: float
    wf_sample_rate_hz: float
    wf_duration_s: float
    wf_gain: float
    wf_coeffs: tuple[float, float, float, float]
    wf_domain: tuple[float, float]
    gapcurve: tuple[float, float, int]
    anticross_noise_khz: float
    anticross_seed: int
    out_dir: str
    formats: tuple[str, ...]


_VALUE_RE = re.compile(r"(.*?)\s*([A-Za-z]+)?$", re.DOTALL)


def _split_value(raw: str) -> tuple[str, str | None]:
    match = _VALUE_RE.fullmatch(raw)
    number, suffix = match.group(1), match.group(2)
    if number == "" and suffix is not None:
        return suffix, None   # pure word ("auto", "inf", or garbage)
    return number, suffix


def _parse_number(number: str, where: str) -> float:
    try:
        value = float(number)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse number {number!r}") from None
    if math.isnan(value):
        raise ConfigError(f"{where}: nan is not a valid value")
    return value


def _parse_value(kind: str, raw: str, where: str):
    if kind == "str":
        return raw
    if kind in ("time_auto", "freq_auto") and raw == "auto":
        return None
    number, suffix = _split_value(raw)
    if kind == "int":
        if suffix is not None:
            raise ConfigError(f"{where}: no unit suffix allowed, got {suffix!r}")
        try:
            return int(number, 10)
        except ValueError:
            raise ConfigError(f"{where}: cannot parse integer {number!r}") from None
    if kind == "float":
        if suffix is not None:
            raise ConfigError(f"{where}: no unit suffix allowed, got {suffix!r}")
        value = _parse_number(number, where)
        if not math.isfinite(value):
            raise ConfigError(f"{where}: value must be finite")
        return value

    table = _FREQ_SUFFIX if kind.startswith("freq") else _TIME_SUFFIX
    dimension = "frequency" if kind.startswith("freq") else "time"
    if suffix is None:
        raise ConfigError(
            f"{where}: missing unit suffix (accepted for {dimension}: "
            f"{', '.join(table)})")
    if suffix not in table:
        raise ConfigError(
            f"{where}: unknown unit suffix {suffix!r} (accepted for {dimension}: "
            f"{', '.join(table)}; suffixes are case-sensitive)")
    value = _parse_number(number, where) * table[suffix]

    if kind in ("freq", "time") and not value > 0.0:
        raise ConfigError(f"{where}: value must be positive")
    if kind in ("freq0", "time0", "time_auto", "freq_auto") and value < 0.0:
        raise ConfigError(f"{where}: value must be non-negative")
    if kind.startswith("freq") and not math.isfinite(value):
        raise ConfigError(f"{where}: frequency must be finite")
    return value


def parse_config(text: str) -> RunConfig:
    """Parse a config document into a fully resolved RunConfig."""
    raw: dict[tuple[str, str], tuple[str, int]] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {line!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if value == "":
            raise ConfigError(f"line {lineno}: missing value for key {key!r}")
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if (section, key) in raw:
            first = raw[(section, key)][1]
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} in [{section}] "
                f"(first set at line {first})")
        raw[(section, key)] = (value, lineno)

    values: dict[tuple[str, str], object] = {}
    for section, keys in _SCHEMA.items():
        for key, (kind, default) in keys.items():
            if (section, key) in raw:
                text_value, lineno = raw[(section, key)]
                where = f"line {lineno} ([{section}] {key})"
            elif default is None:
                raise ConfigError(f"missing required key {key!r} in [{section}]")
            else:
                text_value, where = default, f"default for [{section}] {key}"
            values[(section, key)] = _parse_value(kind, text_value, where)

    return _assemble(values)


def _assemble(v: dict[tuple[str, str], object]) -> RunConfig:
    def get(section: str, key: str):
        return v[(section, key)]

    protocol = get("run", "protocol")
    if protocol and protocol not in PROTOCOLS:
        raise ConfigError(
            f"[run] protocol must be one of {', '.join(PROTOCOLS)}; got {protocol!r}")

    formats = tuple(dict.fromkeys(
        part.strip() for part in str(get("output", "formats")).split(",")))
    if not formats or any(f not in FORMATS for f in formats):
        raise ConfigError(
            f"[output] formats must be a comma list drawn from {', '.join(FORMATS)}")

    delta_hz = get("device", "delta")
    wr_hz = get("device", "wr")
    g_hz = get("device", "g")

    def sweep(section: str) -> tuple[float, float, int]:
        start, stop, points = (get(section, "start"), get(section, "stop"),
                               get(section, "points"))
        if not stop > start:
            raise ConfigError(f"[{section}] needs stop > start")
        if points < 2:
            raise ConfigError(f"[{section}] points must be at least 2")
        return (start, stop, points)

    # Probe window defaults to the anticrossing neighborhood: the split
    # lines sit at wr +- g/2pi... +- 1.25x the full splitting keeps margin.
    probe_start = get("probe", "start")
    probe_stop = get("probe", "stop")
    if probe_start is None:
        probe_start = wr_hz - 2.5 * g_hz
    if probe_stop is None:
        probe_stop = wr_hz + 2.5 * g_hz
    probe_points = get("probe", "points")
    if not probe_stop > probe_start:
        raise ConfigError("[probe] needs stop > start")
    if probe_points < 2:
        raise ConfigError("[probe] points must be at least 2")
    if probe_start <= 0.0:
        raise ConfigError("[probe] start must be positive")

    fock = get("device", "fock_cutoff")
    if fock < 2:
        raise ConfigError("[device] fock_cutoff must be at least 2")

    samples = get("grid", "samples")
    if samples < 2:
        raise ConfigError("[grid] samples must be at least 2")

    wf_domain = (get("waveform", "domain_lo"), get("waveform", "domain_hi"))
    if not wf_domain[0] < wf_domain[1]:
        raise ConfigError("[waveform] needs domain_lo < domain_hi")
    gain = get("waveform", "gain")
    if gain == 0.0:
        raise ConfigError("[waveform] gain must be nonzero")

    v_start, v_stop = get("gapcurve", "v_start"), get("gapcurve", "v_stop")
    gap_points = get("gapcurve", "points")
    if not v_stop > v_start:
        raise ConfigError("[gapcurve] needs v_stop > v_start")
    if gap_points < 2:
        raise ConfigError("[gapcurve] points must be at least 2")

    noise = get("anticrossing", "noise_khz")
    if noise < 0.0:
        raise ConfigError("[anticrossing] noise_khz must be non-negative")

    return RunConfig(
        protocol=protocol,
        delta_hz=delta_hz, wr_hz=wr_hz, g_hz=g_hz,
        eps_hz=get("device", "eps"),
        t1_qubit_s=get("device", "t1_qubit"),
        t1_resonator_s=get("device", "t1_resonator"),
        fock_cutoff=fock,
        wz_hz=get("drive", "wz"),
        lambda_z_hz=get("drive", "lambda_z"),
        drive_phase=get("drive", "phase"),
        epsilon_sweep=sweep("epsilon_sweep"),
        drive_sweep=sweep("drive_sweep"),
        probe=(probe_start, probe_stop, probe_points),
        grid_duration_s=get("grid", "duration"),
        grid_samples=samples,
        grid_max_step_s=get("grid", "max_step"),
        storage_t_off_s=get("storage", "t_off"),
        storage_post_s=get("storage", "post"),
        wf_sample_rate_hz=get("waveform", "sample_rate"),
        wf_duration_s=get("waveform", "duration"),
        wf_gain=gain,
        wf_coeffs=(get("waveform", "c3"), get("waveform", "c2"),
                   get("waveform", "c1"), get("waveform", "c0")),
        wf_domain=wf_domain,
        gapcurve=(v_start, v_stop, gap_points),
        anticross_noise_khz=noise,
        anticross_seed=get("anticrossing", "seed"),
        out_dir=get("output", "directory"),
        formats=formats,
    )


def _format_value(kind: str, value) -> str:
    if kind in ("time_auto", "freq_auto") and value is None:
        return "auto"
    if kind.startswith("freq"):
        return f"{value!r} Hz"
    if kind.startswith("time"):
        return "inf s" if math.isinf(value) else f"{value!r} s"
    if kind == "int":
        return str(value)
    if kind == "float":
        return repr(value)
    return str(value)


def echo_config(cfg: RunConfig) -> str:
    """Canonical text for a resolved config; parse_config(echo) == cfg."""
    lookup = {
        ("run", "protocol"): cfg.protocol,
        ("device", "delta"): cfg.delta_hz,
        ("device", "wr"): cfg.wr_hz,
        ("device", "g"): cfg.g_hz,
        ("device", "eps"): cfg.eps_hz,
        ("device", "t1_qubit"): cfg.t1_qubit_s,
        ("device", "t1_resonator"): cfg.t1_resonator_s,
        ("device", "fock_cutoff"): cfg.fock_cutoff,
        ("drive", "wz"): cfg.wz_hz,
        ("drive", "lambda_z"): cfg.lambda_z_hz,
        ("drive", "phase"): cfg.drive_phase,
        ("epsilon_sweep", "start"): cfg.epsilon_sweep[0],
        ("epsilon_sweep", "stop"): cfg.epsilon_sweep[1],
        ("epsilon_sweep", "points"): cfg.epsilon_sweep[2],
        ("drive_sweep", "start"): cfg.drive_sweep[0],
        ("drive_sweep", "stop"): cfg.drive_sweep[1],
        ("drive_sweep", "points"): cfg.drive_sweep[2],
        ("probe", "start"): cfg.probe[0],
        ("probe", "stop"): cfg.probe[1],
        ("probe", "points"): cfg.probe[2],
        ("grid", "duration"): cfg.grid_duration_s,
        ("grid", "samples"): cfg.grid_samples,
        ("grid", "max_step"): cfg.grid_max_step_s,
        ("storage", "t_off"): cfg.storage_t_off_s,
        ("storage", "post"): cfg.storage_post_s,
        ("waveform", "sample_rate"): cfg.wf_sample_rate_hz,
        ("waveform", "duration"): cfg.wf_duration_s,
        ("waveform", "gain"): cfg.wf_gain,
        ("waveform", "c3"): cfg.wf_coeffs[0],
        ("waveform", "c2"): cfg.wf_coeffs[1],
        ("waveform", "c1"): cfg.wf_coeffs[2],
        ("waveform", "c0"): cfg.wf_coeffs[3],
        ("waveform", "domain_lo"): cfg.wf_domain[0],
        ("waveform", "domain_hi"): cfg.wf_domain[1],
        ("gapcurve", "v_start"): cfg.gapcurve[0],
        ("gapcurve", "v_stop"): cfg.gapcurve[1],
        ("gapcurve", "points"): cfg.gapcurve[2],
        ("anticrossing", "noise_khz"): cfg.anticross_noise_khz,
        ("anticrossing", "seed"): cfg.anticross_seed,
        ("output", "directory"): cfg.out_dir,
        ("output", "formats"): ",".join(cfg.formats),
    }
    lines = []
    for section, keys in _SCHEMA.items():
        body = []
        for key, (kind, _) in keys.items():
            value = lookup[(section, key)]
            if (section, key) == ("run", "protocol") and value == "":
                continue
            body.append(f"{key} = {_format_value(kind, value)}")
        if body:
            lines.append(f"[{section}]")
            lines.extend(body)
            lines.append("")
    return "\n".join(lines)


def with_protocol(cfg: RunConfig, protocol: str) -> RunConfig:
    """Stamp the executed subcommand onto the config (must not conflict)."""
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}")
    if cfg.protocol and cfg.protocol != protocol:
        raise ConfigError(
            f"config pins protocol {cfg.protocol!r} but {protocol!r} was invoked")
    return replace(cfg, protocol=protocol)


def build_device(cfg: RunConfig, lambda_z_hz: float | None = None,
                 undriven: bool = False) -> DeviceModel:
    """DeviceModel from a config; the one place Hz becomes rad/s.

    lambda_z_hz overrides the configured drive amplitude (sweeps do this
    per column); undriven=True drops the drive entirely, which the static
    spectroscopy protocol requires.
    """
    drive = None
    if not undriven:
        amplitude = cfg.lambda_z_hz if lambda_z_hz is None else lambda_z_hz
        drive = DriveParams(amplitude=TWO_PI * amplitude,
                            frequency=TWO_PI * cfg.wz_hz,
                            phase=cfg.drive_phase)
    return DeviceModel(
        qubit=QubitParams(gap=TWO_PI * cfg.delta_hz, bias=TWO_PI * cfg.eps_hz),
        resonator=ResonatorParams(frequency=TWO_PI * cfg.wr_hz,
                                  t1=cfg.t1_resonator_s),
        coupling=CouplingParams(g=TWO_PI * cfg.g_hz),
        drive=drive,
        qubit_t1=cfg.t1_qubit_s,
        fock_cutoff=cfg.fock_cutoff,
    )
