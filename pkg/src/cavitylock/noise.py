"""Seeded, reproducible intrinsic bias-noise synthesis.

Three generators cover the bias-noise budget: power-law (1/f^alpha) charge
and flux noise built by frequency-domain shaping of Hermitian-symmetric
complex Gaussian amplitudes, two-state Markov telegraph noise for
quasiparticle parity switching, and scheduled discrete gate jumps.

Reproducibility contract: every record is a pure function of
(config, seed, stream index).  Streams use the counter-based Philox
generator keyed by (seed, stream), so parallel scenario runs with disjoint
stream indices never share randomness.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .timeseries import TimeSeries

# stream indices for the standard substreams of a scenario seed
CHARGE_STREAM = 0
FLUX_STREAM = 1
PARITY_STREAM = 2
SENSOR_STREAM = 3

MEMORY_BUDGET_SAMPLES = 1 << 26


def substream_rng(seed, stream=0):
    """Independent deterministic generator for (seed, stream)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stream)])
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class RtnConfig:
    """Two-state quasiparticle switching rates (Hz)."""

    rate_even_to_odd: float = 10e3
    rate_odd_to_even: float = 10e3
    enabled: bool = False

    def __post_init__(self):
        if self.enabled and (self.rate_even_to_odd <= 0 or self.rate_odd_to_even <= 0):
            raise ConfigurationError("telegraph rates must be positive when enabled")


@dataclass(frozen=True)
class NoiseConfig:
    """Amplitudes at 1 Hz, spectral exponents, parity switching, gate jumps."""

    charge_amp: float = 5.5e-7       # e^2/Hz at 1 Hz
    charge_exponent: float = 0.89
    flux_amp: float = 0.0            # Phi0^2/Hz at 1 Hz
    flux_exponent: float = 0.5
    rtn: RtnConfig = field(default_factory=RtnConfig)
    jumps: tuple = ()                # ((time_s, delta_n_g), ...)
    seed: int = 0

    def __post_init__(self):
        if self.charge_amp < 0 or self.flux_amp < 0:
            raise ConfigurationError("noise amplitudes must be nonnegative")
        for name, a, ex in (("charge", self.charge_amp, self.charge_exponent),
                            ("flux", self.flux_amp, self.flux_exponent)):
            if a > 0 and not (0.0 < ex < 2.0):
                raise ConfigurationError(
                    f"{name} exponent must lie in (0, 2), got {ex}")
        object.__setattr__(self, "jumps", tuple((float(t), float(d))
                                                for t, d in self.jumps))


def power_law_noise(amp_at_1hz, exponent, fs, n_samples, seed, stream=0, unit=""):
    """Zero-mean real series with one-sided PSD amp * f^(-exponent).

    Synthesis shapes Hermitian-symmetric complex Gaussian spectral
    amplitudes to sqrt(S(f)) and inverse-transforms, so the target spectrum
    is exact in expectation.  The DC bin is zeroed (the lowest synthesized
    frequency is fs/n_samples, so the record rms grows with record length,
    as physical 1/f noise does).  ``n_samples`` must be a power of two.
    """
    n = int(n_samples)
    if n < 2 or n & (n - 1):
        raise ConfigurationError(f"n_samples must be a power of two, got {n_samples}")
    if amp_at_1hz < 0:
        raise ConfigurationError("amplitude must be nonnegative")
    rng = substream_rng(seed, stream)
    # rfft bin k carries E|A_k|^2 = S(f_k) * fs * n / 2 for 0 < k < n/2
    z = rng.standard_normal(n // 2 + 1) + 1j * rng.standard_normal(n // 2 + 1)
    freqs = np.arange(n // 2 + 1) * (fs / n)
    scale = np.zeros(n // 2 + 1)
    if amp_at_1hz > 0:
        scale[1:] = np.sqrt(amp_at_1hz * freqs[1:] ** (-exponent) * fs * n / 2.0)
    amps = z * scale / math.sqrt(2.0)
    amps[0] = 0.0
    amps[-1] = 0.0  # Nyquist dropped; negligible for red spectra
    x = np.fft.irfft(amps, n=n)
    return TimeSeries(x, fs, unit=unit)


def telegraph_noise(rate_01, rate_10, fs, n_samples, seed, stream=0, start=None):
    """Two-state Markov record sampled at fs, values in {0, 1}.

    Dwell times are exponential with the configured escape rates; the
    continuous-time process is synthesized exactly from its jump times and
    then sampled, so no time-discretization bias enters.  ``start`` fixes
    the initial state; by default it is drawn from the stationary
    distribution rate_01/(rate_01 + rate_10).
    """
    if rate_01 < 0 or rate_10 < 0:
        raise ConfigurationError("rates must be nonnegative")
    nyq = fs / 2.0
    if rate_01 >= nyq or rate_10 >= nyq:
        raise ConfigurationError(
            f"switching rates ({rate_01}, {rate_10}) Hz unresolvable at fs={fs}")
    n = int(n_samples)
    rng = substream_rng(seed, stream)
    duration = n / fs
    if start is None:
        p1 = rate_01 / (rate_01 + rate_10) if (rate_01 + rate_10) > 0 else 0.0
        state = 1 if rng.random() < p1 else 0
    else:
        state = int(start)
    rates = (rate_01, rate_10)  # escape rate out of state 0, state 1
    switch_times = []
    t = 0.0
    s = state
    while True:
        r = rates[s]
        if r <= 0.0:
            break  # absorbing state
        t += rng.exponential(1.0 / r)
        if t >= duration:
            break
        switch_times.append(t)
        s = 1 - s
    x = np.empty(n, dtype=np.float64)
    if not switch_times:
        x.fill(state)
    else:
        edges = np.asarray(switch_times)
        idx = np.minimum((edges * fs).astype(np.int64) + 1, n)
        bounds = np.concatenate(([0], idx, [n]))
        cur = state
        for i in range(len(bounds) - 1):
            x[bounds[i]:bounds[i + 1]] = cur
            cur = 1 - cur
    return TimeSeries(x, fs, unit="state")


def telegraph_psd(f, rate_01, rate_10, delta=1.0):
    """Analytic one-sided PSD of the stationary telegraph process.

    Lorentzian with corner (rate_01+rate_10)/(2*pi):
    S(f) = 4 w0 w1 delta^2 R / (R^2 + (2 pi f)^2), R = rate_01 + rate_10.
    """
    r = rate_01 + rate_10
    w0 = rate_10 / r
    w1 = rate_01 / r
    return 4.0 * w0 * w1 * delta ** 2 * r / (r ** 2 + (2.0 * math.pi * np.asarray(f)) ** 2)


@dataclass
class BiasNoiseRecords:
    """Bundle consumed by the loop engine; all share fs and length."""

    delta_ng: TimeSeries
    parity: TimeSeries
    delta_flux: TimeSeries


def _next_pow2(n):
    p = 1
    while p < n:
        p <<= 1
    return p


def compose_bias_noise(cfg, fs, duration):
    """Generate the full intrinsic-bias record set for one run.

    delta_ng combines the power-law charge record with the scheduled gate
    jumps; parity is the quasiparticle telegraph record (all zeros when
    disabled); delta_flux is the power-law flux record.  Power-law records
    are synthesized at the next power of two and truncated.  The three
    streams use independent substreams of cfg.seed.
    """
    n = int(round(duration * fs))
    if n < 1:
        raise ConfigurationError("duration too short for one sample")
    if n > MEMORY_BUDGET_SAMPLES:
        raise ConfigurationError(
            f"{n} samples exceed the memory budget ({MEMORY_BUDGET_SAMPLES}); "
            "lower fs or duration")
    n_synth = _next_pow2(n)

    if cfg.charge_amp > 0:
        dng = power_law_noise(cfg.charge_amp, cfg.charge_exponent, fs, n_synth,
                              cfg.seed, CHARGE_STREAM, unit="e").samples[:n].copy()
    else:
        dng = np.zeros(n)
    if cfg.jumps:
        seen = {}
        for t, d in cfg.jumps:
            if t in seen:
                warnings.warn(f"overlapping jump times at t={t}s: last wins")
            seen[t] = d
        for t, d in seen.items():
            i = int(round(t * fs))
            if i < n:
                dng[max(i, 0):] += d

    if cfg.flux_amp > 0:
        dflux = power_law_noise(cfg.flux_amp, cfg.flux_exponent, fs, n_synth,
                                cfg.seed, FLUX_STREAM, unit="Phi0").samples[:n].copy()
    else:
        dflux = np.zeros(n)

    if cfg.rtn.enabled:
        parity = telegraph_noise(cfg.rtn.rate_even_to_odd, cfg.rtn.rate_odd_to_even,
                                 fs, n, cfg.seed, PARITY_STREAM).samples
    else:
        parity = np.zeros(n)

    return BiasNoiseRecords(TimeSeries(dng, fs, unit="e"),
                            TimeSeries(parity, fs, unit="state"),
                            TimeSeries(dflux, fs, unit="Phi0"))
