"""Welch estimation, composite noise fitting, and band-limited rms.

The estimator is the standard averaged modified periodogram (Hann window,
50% overlap by default) with one-sided density normalization: white noise
of variance sigma^2 sampled at fs comes out flat at 2*sigma^2/fs.

Charge-noise extraction inverts the open-loop transfer function
S_YY = G0^2 |G_LA|^2 S_bb after subtracting the measured sensor floor;
bins where the floor exceeds the signal are flagged rather than deleted.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import welch

from .errors import ConfigurationError, DomainError
from .timeseries import PsdEstimate, TimeSeries

FLAG_GOOD = 0
FLAG_LOW_SNR = 1
FLAG_CLIPPED = 2


def welch_psd(x, segment_len=2 ** 14, overlap=0.5, window="hann", detrend="constant"):
    """One-sided Welch PSD of a TimeSeries.

    ``segment_len`` must be a power of two no longer than the record.  The
    estimate is flagged low-confidence when fewer than two segments fit.
    """
    if not isinstance(x, TimeSeries):
        raise DomainError("welch_psd expects a TimeSeries")
    n = len(x)
    seg = int(segment_len)
    if seg < 2 or seg & (seg - 1):
        raise ConfigurationError(f"segment_len must be a power of two, got {segment_len}")
    if seg > n:
        raise ConfigurationError(f"segment_len {seg} exceeds record length {n}")
    step = max(1, int(seg * (1.0 - overlap)))
    n_segments = 1 + (n - seg) // step
    f, p = welch(np.asarray(x.samples, dtype=float), fs=x.fs, window=window,
                 nperseg=seg, noverlap=seg - step, detrend=detrend,
                 return_onesided=True, scaling="density")
    unit = f"{x.unit}^2/Hz" if x.unit else "1/Hz"
    return PsdEstimate(f, p, unit=unit, n_segments=n_segments, window=window,
                       overlap=overlap, low_confidence=n_segments < 2)


def rms_over_band(psd, f_lo, f_hi):
    """sqrt of the trapezoidal PSD integral over [f_lo, f_hi]."""
    if f_lo >= f_hi:
        raise DomainError(f"empty band [{f_lo}, {f_hi}]")
    mask = psd.band(f_lo, f_hi)
    return math.sqrt(float(np.trapezoid(psd.values[mask], psd.freqs[mask])))


def extract_charge_psd(s_yy, g0, omega_lpf, floor_psd=None):
    """Recover the bias-noise PSD behind a measured error-signal PSD.

    Divides by G0^2 |G_LA(omega)|^2 with the single-pole sensor response,
    after subtracting ``floor_psd`` (a far-detuned floor measurement on the
    same frequency grid, or a scalar).  Post-subtraction negatives are
    clipped to zero and flagged; bins with floor >= signal are flagged
    SNR<1.  Returns a PsdEstimate in bias units squared per Hz.
    """
    if g0 == 0.0:
        raise ConfigurationError("zero DC gain: charge extraction undefined")
    f = s_yy.freqs
    vals = s_yy.values.copy()
    flags = np.zeros(f.size, dtype=np.int8)
    if floor_psd is not None:
        floor = floor_psd.values if isinstance(floor_psd, PsdEstimate) \
            else np.broadcast_to(np.asarray(floor_psd, dtype=float), vals.shape)
        if isinstance(floor_psd, PsdEstimate) and \
                not np.array_equal(floor_psd.freqs, f):
            raise DomainError("floor estimate must share the frequency grid")
        flags[floor >= vals] = FLAG_LOW_SNR
        vals = vals - floor
        clipped = vals < 0.0
        vals[clipped] = 0.0
        flags[clipped] = FLAG_CLIPPED
    glai2 = 1.0 + (2.0 * math.pi * f / omega_lpf) ** 2  # 1/|G_LA|^2
    out = vals * glai2 / (g0 * g0)
    return PsdEstimate(f, out, unit="bias^2/Hz", n_segments=s_yy.n_segments,
                       window=s_yy.window, overlap=s_yy.overlap, flags=flags,
                       low_confidence=s_yy.low_confidence)


@dataclass
class NoiseFit:
    """Power-law + Lorentzian decomposition of a measured PSD."""

    amp_at_1hz: float
    exponent: float
    plateau: float
    corner_hz: float          # math.inf when unresolved in band
    corner_resolved: bool
    residual_db_rms: float

    @property
    def corner_label(self):
        return f"{self.corner_hz:.6g}" if self.corner_resolved else "unresolved"


def _model_psd(f, amp, alpha, plateau, corner):
    return amp * f ** (-alpha) + plateau / (1.0 + (f / corner) ** 2)


def fit_powerlaw_plus_lorentzian(psd, band=None, weights=None):
    """Weighted log-space least squares of S(f) = A f^-a + L/(1+(f/fc)^2).

    Only bins flagged good are fit.  The Lorentzian corner is reported as
    unresolved when the best-fit corner exceeds the top of the fitted band
    (the plateau then looks white in band).  Raises ConfigurationError with
    the best iterate attached when the optimizer fails to converge.
    """
    good = psd.good_bins() & (psd.freqs > 0) & (psd.values > 0)
    if band is not None:
        good &= psd.band(*band)
    f = psd.freqs[good]
    s = psd.values[good]
    if f.size < 8:
        raise DomainError("too few usable bins to fit")
    w = np.ones(f.size) if weights is None else np.asarray(weights, float)[good]
    w = w * math.sqrt(max(psd.n_segments, 1))
    f_lo, f_top = f[0], f[-1]
    logs = np.log(s)

    def resid(x):
        amp, alpha, plat, corner = math.exp(x[0]), x[1], math.exp(x[2]), math.exp(x[3])
        return w * (np.log(_model_psd(f, amp, alpha, plat, corner)) - logs)

    # the decomposition is degenerate from a single start (a steep power law
    # can impersonate a Lorentzian roll-off); run structured starts under an
    # exponent bound and keep the lowest cost
    lo_lvl = float(np.exp(np.mean(logs[f <= f_lo * 3])))
    hi_lvl = float(np.median(s[f >= f_top / 3]))
    knee = f[np.argmin(np.abs(s - lo_lvl / 2.0))]
    tiny = 1e-12 * lo_lvl * f_lo
    starts = [
        # power-law dominant, Lorentzian as an in-band white floor
        [math.log(max(lo_lvl * f_lo, tiny)), 1.0, math.log(max(hi_lvl, tiny)),
         math.log(3.0 * f_top)],
        # Lorentzian dominant with the knee as the corner guess
        [math.log(tiny), 1.0, math.log(max(lo_lvl, tiny)),
         math.log(max(knee, 2.0 * f_lo))],
        # balanced
        [math.log(max(lo_lvl * f_lo, tiny)), 0.9, math.log(max(hi_lvl, tiny)),
         math.log(math.sqrt(f_lo * f_top))],
    ]
    lower = [-math.inf, 1e-3, -math.inf, math.log(f_lo / 10.0)]
    upper = [math.inf, 1.999, math.inf, math.log(f_top * 1e3)]
    best = None
    for x0 in starts:
        x0 = np.clip(x0, lower, upper)
        try:
            sol = least_squares(resid, x0, bounds=(lower, upper), method="trf",
                                max_nfev=4000)
        except ValueError:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or not best.success:
        msg = "none converged" if best is None else best.message
        raise ConfigurationError(
            f"noise fit did not converge: {msg}"
            + ("" if best is None else f"; best iterate {best.x}, cost {best.cost:.3g}"))
    amp, alpha = math.exp(best.x[0]), float(best.x[1])
    plat, corner = math.exp(best.x[2]), math.exp(best.x[3])
    resid_db = 10.0 * (np.log10(_model_psd(f, amp, alpha, plat, corner)) - np.log10(s))
    resolved = corner < f_top
    return NoiseFit(amp, alpha, plat, corner if resolved else math.inf,
                    resolved, float(np.sqrt(np.mean(resid_db ** 2))))


def fit_suppression_crossover(freqs, ratio_db, f_lo=None, f_hi=None):
    """Fit a one-pole closed-loop suppression ratio to dB data.

    Model: 10*log10(f^2/(f^2 + f3^2)).  Returns the fitted 3 dB frequency.
    """
    f = np.asarray(freqs, float)
    r = np.asarray(ratio_db, float)
    m = (f > 0) & np.isfinite(r)
    if f_lo is not None:
        m &= f >= f_lo
    if f_hi is not None:
        m &= f <= f_hi
    f, r = f[m], r[m]
    if f.size < 4:
        raise DomainError("too few points for crossover fit")

    def resid(x):
        f3 = math.exp(x[0])
        return 10.0 * np.log10(f ** 2 / (f ** 2 + f3 ** 2)) - r

    guess = math.log(np.median(f))
    sol = least_squares(resid, [guess], method="lm", max_nfev=2000)
    if not sol.success:
        raise ConfigurationError(f"crossover fit failed: {sol.message}")
    return math.exp(sol.x[0])
