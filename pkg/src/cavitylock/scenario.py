"""Declarative scenario runner: config schema, pipelines, outputs.

A scenario is one self-contained numerical experiment described by a
ScenarioConfig: device + bias + drive + noise + chain (+ loop).  Four
pipeline kinds cover the reproduced measurements:

* ``lock_run``          one open- or closed-loop time record with PSDs
* ``suppression_pair``  open and closed runs on the *same* noise
                        realization, plus the suppression ratio report
* ``gate_sweep``        staircase sweep of the base gate with the loop
                        locked at a fixed carrier
* ``response_sweep``    analytic error-signal curves vs carrier detuning

Every run is a pure function of (config, seed): summary metrics and CSV
bytes reproduce exactly.  Output files embed the config hash and seed.
"""
import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainConfig
from .control import LoopConfig, run_closed_loop, run_open_loop
from .device import BiasPoint, CavityParams, CptParams, FrequencyLookup, \
    TunabilityModel, resonant_frequency
from .errors import ConfigurationError
from .noise import NoiseConfig, RtnConfig, compose_bias_noise
from .response import (DriveConfig, open_loop_gain, reflection_coefficient,
                       sweep_quadratures, validate_modulation)
from .spectral import (extract_charge_psd, fit_powerlaw_plus_lorentzian,
                       fit_suppression_crossover, welch_psd)
from .timeseries import PsdEstimate

TWO_PI = 2.0 * math.pi

KINDS = ("lock_run", "suppression_pair", "gate_sweep", "response_sweep")


def _pow2_floor(n):
    return 1 << (int(n).bit_length() - 1)


@dataclass(frozen=True)
class LoopSpec:
    """Loop parameters before run-time resolution.

    ``g0=None`` computes the DC gain from the calibrated device at the lock
    bias; ``omega_lpf=None`` adopts the chain's effective pole so the
    shaping inverts the sensor that is actually simulated.
    """

    omega_prime: float
    omega_lpf: float = None
    g0: float = None
    y_ref: float = 0.0
    actuator_bw: float = TWO_PI * 1e6
    output_clamp: float = 0.3
    kd: float = 0.0


@dataclass(frozen=True)
class SweepConfig:
    """Gate staircase for gate_sweep scenarios."""

    start: float = 0.0
    stop: float = 1.0
    points: int = 101
    hold: float = 0.05       # seconds per point
    settle_fraction: float = 0.5   # averaged tail of each hold window

    def __post_init__(self):
        if self.points < 2 or self.hold <= 0:
            raise ConfigurationError("sweep needs >= 2 points and positive hold")


@dataclass(frozen=True)
class ResponseSweepConfig:
    """Carrier-detuning sweep of the analytic error signal."""

    photon_numbers: tuple = (1.0, 5.0, 10.0)
    span: float = None       # rad/s half-width; None -> 3*kappa_tot + Kerr shift
    points: int = 1601


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    kind: str = "lock_run"
    device: CavityParams = field(default_factory=CavityParams)
    bias0: BiasPoint = field(default_factory=lambda: BiasPoint(0.6, 0.0))
    drive: DriveConfig = field(default_factory=lambda: DriveConfig(n_target=10.0))
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    chain: ChainConfig = field(default_factory=ChainConfig)
    loop: LoopSpec = None
    duration: float = 1.0
    seed: int = 0
    kerr: bool = True
    parity_enabled: bool = True
    lock_policy: str = "kerr_shifted"
    outputs: tuple = ()
    sweep: SweepConfig = None
    response_sweep: ResponseSweepConfig = None
    psd_segment: int = 2 ** 14
    extract_charge: bool = False
    lost_lock_fraction: float = 0.5
    emit_stride: int = 0     # 0 = auto (cap trajectory CSVs near 200k rows)
    notes: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown scenario kind {self.kind!r}; "
                                     f"one of {KINDS}")
        if self.kind == "gate_sweep" and self.sweep is None:
            object.__setattr__(self, "sweep", SweepConfig())
        if self.kind == "response_sweep" and self.response_sweep is None:
            object.__setattr__(self, "response_sweep", ResponseSweepConfig())
        if self.duration <= 0:
            raise ConfigurationError("duration must be positive")


@dataclass
class SuppressionReport:
    """Per-bin closed/open ratio with fitted one-pole crossover."""

    freqs: np.ndarray
    ratio_db_raw: np.ndarray           # closed/open, raw open denominator
    ratio_db_fit_denom: np.ndarray     # denominator replaced by its smooth fit
    f3db_raw: float
    f3db_fit_denom: float
    resampled: bool = False


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    config_hash: str
    trajectories: dict = field(default_factory=dict)
    psds: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    suppression: SuppressionReport = None


# ---------------------------------------------------------------------------
# config (de)serialization

def config_to_dict(cfg):
    d = dataclasses.asdict(cfg)

    def clean(x):
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        return x

    return clean(d)


def config_hash(cfg):
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


_NESTED = {
    "device": CavityParams, "bias0": BiasPoint, "drive": DriveConfig,
    "noise": NoiseConfig, "chain": ChainConfig, "loop": LoopSpec,
    "sweep": SweepConfig, "response_sweep": ResponseSweepConfig,
    "cpt": CptParams, "tunability": TunabilityModel, "rtn": RtnConfig,
}

_TUPLE_FIELDS = {"jumps", "outputs", "photon_numbers", "slope_bias"}


def _build_dataclass(cls, data, path):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigurationError(
            f"{path}: unknown keys {sorted(unknown)}; allowed: {sorted(names)}")
    kwargs = {}
    for key, val in data.items():
        if key in _NESTED and isinstance(val, dict):
            kwargs[key] = _build_dataclass(_NESTED[key], val, f"{path}.{key}")
        elif key in _TUPLE_FIELDS and isinstance(val, (list, tuple)):
            kwargs[key] = tuple(tuple(v) if isinstance(v, (list, tuple)) else v
                                for v in val)
        else:
            kwargs[key] = val
    return cls(**kwargs)


def config_from_dict(data, name=None):
    """Strict ScenarioConfig builder; unknown keys are rejected."""
    data = dict(data)
    if name is not None:
        data.setdefault("name", name)
    return _build_dataclass(ScenarioConfig, data, "scenario")


def load_config(path):
    """Load a YAML scenario file, resolving one level of ``include``.

    The included file (path relative to the including file) supplies
    defaults; the including file's keys override, merging mappings deeply.
    """
    import yaml

    def read(p):
        with open(p) as fh:
            loaded = yaml.safe_load(fh)
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"{p}: scenario file must be a mapping")
        return loaded

    data = read(path)
    inc = data.pop("include", None)
    if inc:
        base = read(os.path.join(os.path.dirname(path), inc))
        base.pop("include", None)

        def merge(dst, src):
            for k, v in src.items():
                if isinstance(v, dict) and isinstance(dst.get(k), dict):
                    merge(dst[k], v)
                else:
                    dst[k] = v
            return dst

        data = merge(base, data)
    data.setdefault("name", os.path.splitext(os.path.basename(path))[0])
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# pipelines

def resolve_loop(cfg, lut=None):
    """LoopSpec -> validated LoopConfig at the chain output rate."""
    spec = cfg.loop
    if spec is None:
        return None
    omega_lpf = spec.omega_lpf if spec.omega_lpf is not None else cfg.chain.omega_lpf
    g0 = spec.g0
    if g0 is None:
        g0 = open_loop_gain(cfg.device, cfg.drive, cfg.bias0, cfg.chain.g_amp)
    return LoopConfig(omega_prime=spec.omega_prime, omega_lpf=omega_lpf, g0=g0,
                      y_ref=spec.y_ref, actuator_bw=spec.actuator_bw,
                      output_clamp=spec.output_clamp, dt=1.0 / cfg.chain.fs_out,
                      kd=spec.kd)


def _common_summary(cfg, run):
    return {
        "carrier_rad_s": run.omega_c,
        "closed": run.closed,
        "lost_lock": bool(run.lost_lock),
        "clamped_fraction": run.clamped_fraction,
        "bistable_seen": bool(run.bistable_seen),
        "y_rms_V": float(np.std(run.y_volts.samples)),
    }


def _jump_metrics(cfg, run, lut):
    """Post-jump recovery metrics when gate jumps are scheduled."""
    if not cfg.noise.jumps:
        return {}
    t_last = max(t for t, _ in cfg.noise.jumps)
    total = sum(d for _, d in cfg.noise.jumps)
    fs = run.fs
    i0 = int(t_last * fs)
    n = len(run.delta_b_app)
    tail = slice(i0 + (n - i0) // 2, n)
    head = slice(0, max(int(0.9 * i0), 1))
    corr = float(np.mean(run.delta_b_app.samples[tail])
                 - np.mean(run.delta_b_app.samples[head]))
    w_before = lut.omega0(cfg.bias0.n_g)
    w_after = lut.omega0(cfg.bias0.n_g + total)
    return {
        "jump_total": total,
        "post_jump_correction_mean": corr,
        "tracked_shift_rad_s": w_after - w_before,
        "tracked_shift_hz": (w_after - w_before) / TWO_PI,
    }


def _reflection_curve(cfg, lut, total_jump):
    """|r| vs probe frequency at the pre- and post-jump gate bias."""
    cav = cfg.device
    w_lo = min(lut.omega0(cfg.bias0.n_g), lut.omega0(cfg.bias0.n_g + total_jump))
    w_hi = max(lut.omega0(cfg.bias0.n_g), lut.omega0(cfg.bias0.n_g + total_jump))
    probe = np.linspace(w_lo - 6 * cav.kappa_tot, w_hi + 6 * cav.kappa_tot, 1201)
    cols = {"probe_hz": probe / TWO_PI}
    for tag, ng in (("before", cfg.bias0.n_g),
                    ("after", cfg.bias0.n_g + total_jump)):
        w0 = lut.omega0(ng)
        cols[f"mag_{tag}"] = np.abs(
            [reflection_coefficient(0, w0 - w, cav, cfg.drive.omega_m) for w in probe])
    return cols


def measure_g0(cfg, lut, window=0.01, points=21):
    """DC gain from the slope of the averaged error signal near the bias.

    Mirrors the experimental calibration: sweep small gate offsets around
    the lock point, evaluate the steady lock-in output, and least-squares
    the slope (V per unit gate charge).
    """
    from .control import lock_carrier
    from .response import error_quadratures, kerr_photon_number

    cav, drive = cfg.device, cfg.drive
    omega_c = lock_carrier(cav, drive, cfg.bias0, lut, cfg.lock_policy)
    drv = drive.with_carrier(omega_c)
    dns = np.linspace(-window, window, points)
    ys = []
    prev = None
    for dn in dns:
        w0 = lut.omega0(cfg.bias0.n_g + dn)
        prev, _ = kerr_photon_number(w0 - omega_c, cav, drv, prev_n=prev,
                                     omega_ref=omega_c)
        _, y, _ = error_quadratures(w0 - omega_c, cav, drv, kerr=cfg.kerr,
                                    prev_n=prev, omega_ref=omega_c)
        ys.append(y * cfg.chain.g_amp)
    slope = np.polyfit(dns, ys, 1)[0]
    return float(slope)


def _run_lock(cfg, closed, noise_records, lut):
    loop = resolve_loop(cfg, lut) if closed else None
    runner = run_closed_loop if closed else run_open_loop
    kwargs = dict(kerr=cfg.kerr, lock_policy=cfg.lock_policy,
                  parity_enabled=cfg.parity_enabled,
                  lost_lock_fraction=cfg.lost_lock_fraction,
                  lut=lut, seed=cfg.seed)
    if closed:
        return runner(cfg.device, cfg.bias0, cfg.drive, noise_records,
                      cfg.chain, loop, **kwargs), loop
    return runner(cfg.device, cfg.bias0, cfg.drive, noise_records,
                  cfg.chain, **kwargs), None


def _pipeline_lock_run(cfg, result):
    validate_modulation(cfg.device, cfg.drive)
    lut = FrequencyLookup(cfg.device, cfg.bias0.phi_ext)
    noise_records = compose_bias_noise(cfg.noise, cfg.chain.fs_out, cfg.duration)
    closed = cfg.loop is not None
    run, loop = _run_lock(cfg, closed, noise_records, lut)
    result.trajectories["y"] = run.y_volts
    result.trajectories["bias_correction"] = run.delta_b_app
    result.trajectories["n_g_app"] = run.n_g_app
    result.trajectories["omega0"] = run.omega0
    seg = min(cfg.psd_segment, _pow2_floor(len(run.y_volts)))
    result.psds["psd_y"] = welch_psd(run.y_volts, segment_len=seg)
    result.summary.update(_common_summary(cfg, run))
    if loop is not None:
        result.summary["g0_V_per_bias"] = loop.g0
        result.summary["omega_prime_rad_s"] = loop.omega_prime
    result.summary.update(_jump_metrics(cfg, run, lut))
    if cfg.noise.jumps:
        total = sum(d for _, d in cfg.noise.jumps)
        result.curves["reflection"] = _reflection_curve(cfg, lut, total)
    if cfg.extract_charge:
        _extract_charge_block(cfg, result, lut)
    return result


def _extract_charge_block(cfg, result, lut):
    """Charge-noise PSD recovered from the measured Y spectrum.

    The sensor-floor spectrum entering the subtraction is the injected
    floor through the lock-in pole (what a far-detuned floor run measures,
    known exactly here); the DC gain comes from the slope calibration, as
    in the experiment.
    """
    psd_y = result.psds["psd_y"]
    g0_meas = measure_g0(cfg, lut)
    omega_lpf = cfg.chain.omega_lpf
    floor = cfg.chain.noise_floor_psd / (1.0 + (TWO_PI * psd_y.freqs / omega_lpf) ** 2)
    extracted = extract_charge_psd(psd_y, g0_meas, omega_lpf, floor_psd=floor)
    extracted.unit = "e^2/Hz"
    result.psds["psd_charge"] = extracted
    result.summary["g0_measured_V_per_bias"] = g0_meas
    good_top = extracted.freqs[extracted.good_bins()]
    band = (max(1.0, extracted.freqs[1]), min(omega_lpf / TWO_PI,
                                              good_top[-1] if good_top.size else 1.0))
    try:
        fit = fit_powerlaw_plus_lorentzian(extracted, band=band)
        result.summary.update({
            "charge_fit_amp_e2_hz": fit.amp_at_1hz,
            "charge_fit_exponent": fit.exponent,
            "charge_fit_plateau_e2_hz": fit.plateau,
            "charge_fit_corner_hz": fit.corner_hz if fit.corner_resolved else -1.0,
            "charge_fit_corner_label": fit.corner_label,
            "charge_fit_residual_db": fit.residual_db_rms,
        })
    except Exception as exc:
        result.summary["charge_fit_error"] = str(exc)


def _pipeline_suppression_pair(cfg, result):
    validate_modulation(cfg.device, cfg.drive)
    lut = FrequencyLookup(cfg.device, cfg.bias0.phi_ext)
    noise_records = compose_bias_noise(cfg.noise, cfg.chain.fs_out, cfg.duration)
    run_open, _ = _run_lock(cfg, False, noise_records, lut)
    run_closed, loop = _run_lock(cfg, True, noise_records, lut)
    seg = min(cfg.psd_segment, _pow2_floor(len(run_open.y_volts)))
    psd_open = welch_psd(run_open.y_volts, segment_len=seg)
    psd_closed = welch_psd(run_closed.y_volts, segment_len=seg)
    result.trajectories["y_open"] = run_open.y_volts
    result.trajectories["y_closed"] = run_closed.y_volts
    result.trajectories["bias_correction"] = run_closed.delta_b_app
    result.psds["psd_y_open"] = psd_open
    result.psds["psd_y_closed"] = psd_closed
    report = compare_psds(psd_open, psd_closed, cfg)
    result.suppression = report
    result.summary.update(_common_summary(cfg, run_closed))
    result.summary.update({
        "g0_V_per_bias": loop.g0,
        "omega_prime_rad_s": loop.omega_prime,
        "f3db_raw_hz": report.f3db_raw,
        "f3db_fit_denom_hz": report.f3db_fit_denom,
        "y_rms_open_V": float(np.std(run_open.y_volts.samples)),
        "y_rms_closed_V": float(np.std(run_closed.y_volts.samples)),
    })
    return result


def _pipeline_gate_sweep(cfg, result):
    validate_modulation(cfg.device, cfg.drive)
    sw = cfg.sweep
    fs = cfg.chain.fs_out
    per = int(round(sw.hold * fs))
    base_points = np.linspace(sw.start, sw.stop, sw.points)
    schedule = np.repeat(base_points, per)
    duration = schedule.size / fs
    cfg_noise = cfg.noise
    noise_records = compose_bias_noise(cfg_noise, fs, duration)
    lut = FrequencyLookup(cfg.device, cfg.bias0.phi_ext)
    loop = resolve_loop(cfg, lut)
    common = dict(kerr=cfg.kerr, lock_policy=cfg.lock_policy,
                  parity_enabled=cfg.parity_enabled, bias_schedule=schedule,
                  lost_lock_fraction=cfg.lost_lock_fraction, lut=lut, seed=cfg.seed)
    run_o = run_open_loop(cfg.device, cfg.bias0, cfg.drive, noise_records,
                          cfg.chain, **common)
    run_c = run_closed_loop(cfg.device, cfg.bias0, cfg.drive, noise_records,
                            cfg.chain, loop, **common)
    tail = slice(per - max(int(per * sw.settle_fraction), 1), per)
    y_open = np.empty(sw.points)
    y_closed = np.empty(sw.points)
    ng_app = np.empty(sw.points)
    for i in range(sw.points):
        w = slice(i * per, (i + 1) * per)
        y_open[i] = np.mean(run_o.y_volts.samples[w][tail])
        y_closed[i] = np.mean(run_c.y_volts.samples[w][tail])
        ng_app[i] = np.mean(run_c.n_g_app.samples[w][tail])
    result.curves["sweep"] = {
        "n_g0": base_points, "y_open_V": y_open, "y_closed_V": y_closed,
        "n_g_app": ng_app,
    }
    lock_target = cfg.bias0.n_g
    pinned = np.abs(ng_app - lock_target) < 0.02
    i_lock = int(np.argmin(np.abs(base_points - lock_target)))
    lo = hi = i_lock
    if pinned[i_lock]:
        while lo > 0 and pinned[lo - 1]:
            lo -= 1
        while hi < sw.points - 1 and pinned[hi + 1]:
            hi += 1
    result.summary.update({
        "lock_target": lock_target,
        "carrier_rad_s": run_c.omega_c,
        "captured_at_target": bool(pinned[i_lock]),
        "capture_lo": float(base_points[lo]),
        "capture_hi": float(base_points[hi]),
        "capture_half_width": float(0.5 * (base_points[hi] - base_points[lo])),
        "g0_V_per_bias": loop.g0,
    })
    return result


def _pipeline_response_sweep(cfg, result):
    validate_modulation(cfg.device, cfg.drive)
    rs = cfg.response_sweep
    cav = cfg.device
    w0 = resonant_frequency(cfg.bias0, cav)
    curves = {}
    summary = {}
    for n in rs.photon_numbers:
        drive = dataclasses.replace(cfg.drive, n_target=float(n), p_in=None,
                                    omega_c=None)
        shift = abs(cav.kerr_k) * n if cfg.kerr else 0.0
        span = rs.span if rs.span is not None else 3.0 * cav.kappa_tot + shift
        # descending resonance offset = ascending carrier sweep through
        # resonance; rides the photon branch the way a swept measurement does
        deltas = np.linspace(span + shift, -(span + shift), rs.points)
        x, y, dc, nph, flags = sweep_quadratures(cav, drive, deltas,
                                                 kerr=cfg.kerr)
        key = f"n{n:g}"
        curves[f"carrier_detuning_hz_{key}"] = -deltas / TWO_PI
        curves[f"y_W_{key}"] = y
        curves[f"x_W_{key}"] = x
        curves[f"photons_{key}"] = nph
        s = np.where(np.diff(np.sign(y)) != 0)[0]
        if s.size:
            exp_cross = -cav.kerr_k * n if cfg.kerr else 0.0
            zi = s[np.argmin(np.abs(deltas[s] - exp_cross))]
            zc = deltas[zi] - y[zi] * (deltas[zi + 1] - deltas[zi]) / \
                (y[zi + 1] - y[zi])
            summary[f"zero_crossing_offset_rad_s_{key}"] = float(zc)
        summary[f"peak_y_W_{key}"] = float(np.max(np.abs(y)))
        summary[f"bistable_points_{key}"] = int(np.sum(flags))
    result.curves["error_signal"] = curves
    result.summary.update(summary)
    result.summary["omega0_rad_s"] = w0
    return result


_PIPELINES = {
    "lock_run": _pipeline_lock_run,
    "suppression_pair": _pipeline_suppression_pair,
    "gate_sweep": _pipeline_gate_sweep,
    "response_sweep": _pipeline_response_sweep,
}


def run_scenario(cfg):
    """Execute one scenario; deterministic per (config, seed)."""
    result = ScenarioResult(config=cfg, config_hash=config_hash(cfg))
    _PIPELINES[cfg.kind](cfg, result)
    result.summary["seed"] = cfg.seed
    result.summary["config_hash"] = result.config_hash
    return result


# ---------------------------------------------------------------------------
# comparison

def compare_psds(psd_open, psd_closed, cfg=None, f_lo=None, f_hi=None):
    """Suppression report from open/closed Y-quadrature PSDs.

    Emits both the raw per-bin dB ratio and the variant whose denominator
    is the smooth power-law(+plateau) fit of the open PSD; fits the
    one-pole crossover to each.  Mismatched grids resample the closed
    estimate onto the open grid and set the flag.
    """
    f = psd_open.freqs
    resampled = False
    closed_vals = psd_closed.values
    if not np.array_equal(psd_closed.freqs, f):
        closed_vals = np.interp(f, psd_closed.freqs, psd_closed.values)
        resampled = True
    good = (f > 0) & (psd_open.values > 0) & (closed_vals > 0)
    fg = f[good]
    ratio_db = 10.0 * np.log10(closed_vals[good] / psd_open.values[good])
    try:
        fit = fit_powerlaw_plus_lorentzian(
            PsdEstimate(fg, psd_open.values[good], n_segments=psd_open.n_segments))
        denom = fit.amp_at_1hz * fg ** (-fit.exponent)
        if fit.corner_resolved:
            denom = denom + fit.plateau / (1.0 + (fg / fit.corner_hz) ** 2)
        else:
            denom = denom + fit.plateau
        ratio_fit_db = 10.0 * np.log10(closed_vals[good] / denom)
    except Exception:
        ratio_fit_db = ratio_db.copy()
    if f_hi is None:
        f_hi = fg[-1] / 2.0
    f3_raw = fit_suppression_crossover(fg, ratio_db, f_lo, f_hi)
    f3_fit = fit_suppression_crossover(fg, ratio_fit_db, f_lo, f_hi)
    return SuppressionReport(fg, ratio_db, ratio_fit_db, f3_raw, f3_fit, resampled)


def compare_runs(result_open, result_closed):
    """Suppression report for two separately produced lock_run results.

    The configs must agree except for the loop block and seed policy.
    """
    def normalize(cfg):
        return dataclasses.replace(
            cfg, loop=None, seed=0, name="", outputs=(),
            noise=dataclasses.replace(cfg.noise, seed=0))

    co = normalize(result_open.config)
    cc = normalize(result_closed.config)
    if config_hash(co) != config_hash(cc):
        raise ConfigurationError(
            "compare_runs requires matching configs up to loop mode and seed")
    return compare_psds(result_open.psds["psd_y"], result_closed.psds["psd_y"])


# ---------------------------------------------------------------------------
# emission

_FLOAT_FMT = "%.17g"


def _meta_lines(result, extra=()):
    lines = [f"# cavitylock scenario={result.config.name} "
             f"config_sha256={result.config_hash} seed={result.config.seed}"]
    lines.extend(f"# {e}" for e in extra)
    return lines


def _write_rows(path, header_lines, col_names, columns):
    try:
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(line + "\n")
            fh.write(",".join(col_names) + "\n")
            arrs = [np.asarray(c) for c in columns]
            for row in zip(*arrs):
                fh.write(",".join(_FLOAT_FMT % v for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc


def available_artifacts(result):
    names = set()
    for key in result.trajectories:
        names.add(key)
    for key in result.psds:
        names.add(key)
    for key in result.curves:
        names.add(key)
    if result.suppression is not None:
        names.add("suppression")
    names.add("summary")
    return sorted(names)


def emit_outputs(result, out_dir, formats=("csv", "svg")):
    """Write the scenario artifacts; returns the list of file paths.

    ``result.config.outputs`` restricts emission to the named artifacts
    (empty = all); unknown names raise ConfigurationError listing what is
    available.  CSV files carry a provenance header; SVG plots are written
    for PSDs (log-log), trajectories and curves when requested.
    """
    os.makedirs(out_dir, exist_ok=True)
    wanted = set(result.config.outputs)
    have = set(available_artifacts(result))
    unknown = wanted - have
    if unknown:
        raise ConfigurationError(
            f"unknown artifacts {sorted(unknown)}; available: {sorted(have)}")
    if not wanted:
        wanted = have
    name = result.config.name
    paths = []

    def want(key):
        return key in wanted

    stride_cfg = result.config.emit_stride

    def stride_for(n):
        if stride_cfg > 0:
            return stride_cfg
        return max(1, n // 200000)

    if "csv" in formats:
        for key, ts in result.trajectories.items():
            if not want(key):
                continue
            st = stride_for(len(ts))
            t = ts.times()[::st]
            v = ts.samples[::st]
            path = os.path.join(out_dir, f"{name}_{key}.csv")
            _write_rows(path, _meta_lines(result, [f"unit={ts.unit} fs={ts.fs} "
                                                   f"stride={st}"]),
                        ["t_s", key], [t, v])
            paths.append(path)
        for key, psd in result.psds.items():
            if not want(key):
                continue
            path = os.path.join(out_dir, f"{name}_{key}.csv")
            cols = ["freq_hz", "value", "flag"]
            flags = psd.flags if psd.flags is not None else np.zeros(psd.freqs.size)
            _write_rows(path, _meta_lines(result, [f"unit={psd.unit} "
                                                   f"segments={psd.n_segments}"]),
                        cols, [psd.freqs, psd.values, flags])
            paths.append(path)
        for key, cols in result.curves.items():
            if not want(key):
                continue
            path = os.path.join(out_dir, f"{name}_{key}.csv")
            _write_rows(path, _meta_lines(result), list(cols.keys()),
                        list(cols.values()))
            paths.append(path)
        if result.suppression is not None and want("suppression"):
            rep = result.suppression
            path = os.path.join(out_dir, f"{name}_suppression.csv")
            _write_rows(path, _meta_lines(result, [
                f"f3db_raw_hz={rep.f3db_raw!r} "
                f"f3db_fit_denom_hz={rep.f3db_fit_denom!r} "
                f"resampled={rep.resampled}"]),
                ["freq_hz", "ratio_db_raw", "ratio_db_fit_denom"],
                [rep.freqs, rep.ratio_db_raw, rep.ratio_db_fit_denom])
            paths.append(path)

    if want("summary"):
        path = os.path.join(out_dir, f"{name}_summary.json")
        payload = {"scenario": name, "config_sha256": result.config_hash,
                   "summary": result.summary}
        try:
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
        except OSError as exc:
            raise OSError(f"writing {path}: {exc}") from exc
        paths.append(path)

    if "svg" in formats:
        paths.extend(_emit_svgs(result, out_dir, wanted))
    return paths


def _emit_svgs(result, out_dir, wanted):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    name = result.config.name
    paths = []

    def save(fig, key):
        path = os.path.join(out_dir, f"{name}_{key}.svg")
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        paths.append(path)

    for key, psd in result.psds.items():
        if key not in wanted:
            continue
        fig, ax = plt.subplots(figsize=(5, 3.4), constrained_layout=True)
        good = (psd.freqs > 0) & (psd.values > 0)
        ax.loglog(psd.freqs[good], psd.values[good], lw=0.8)
        ax.set_xlabel("frequency (Hz)")
        ax.set_ylabel(psd.unit or "PSD")
        ax.set_title(f"{name}: {key}")
        ax.grid(True, which="both", alpha=0.3)
        save(fig, key)
    for key, ts in result.trajectories.items():
        if key not in wanted:
            continue
        st = max(1, len(ts) // 20000)
        fig, ax = plt.subplots(figsize=(5, 3.0), constrained_layout=True)
        ax.plot(ts.times()[::st], ts.samples[::st], lw=0.6)
        ax.set_xlabel("t (s)")
        ax.set_ylabel(f"{key} ({ts.unit})")
        ax.set_title(f"{name}: {key}")
        save(fig, key)
    for key, cols in result.curves.items():
        if key not in wanted:
            continue
        names = list(cols)
        fig, ax = plt.subplots(figsize=(5, 3.4), constrained_layout=True)
        x = cols[names[0]]
        for cname in names[1:]:
            if len(cols[cname]) == len(x):
                ax.plot(x, cols[cname], lw=0.8, label=cname)
        ax.set_xlabel(names[0])
        ax.legend(fontsize=6)
        ax.set_title(f"{name}: {key}")
        save(fig, key)
    if result.suppression is not None and "suppression" in wanted:
        rep = result.suppression
        fig, ax = plt.subplots(figsize=(5, 3.4), constrained_layout=True)
        ax.semilogx(rep.freqs, rep.ratio_db_raw, lw=0.8, label="raw denominator")
        ax.semilogx(rep.freqs, rep.ratio_db_fit_denom, lw=0.8,
                    label="fitted denominator")
        ax.axhline(-3.0, color="k", lw=0.5, ls="--")
        ax.set_xlabel("frequency (Hz)")
        ax.set_ylabel("closed/open (dB)")
        ax.legend(fontsize=7)
        ax.set_title(f"{result.config.name}: suppression")
        save(fig, "suppression")
    return paths
