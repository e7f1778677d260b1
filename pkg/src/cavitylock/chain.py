"""Measurement electronics between cavity output and error signal.

The chain is modeled at the envelope level: the analytic modulation-
frequency power components from the sideband model are converted to volts
by a linear detector + amplifier gain, white sensor noise referred to the
lock-in input is added, the reference-phase rotation is applied, and both
quadratures pass through the lock-in's single-pole low-pass filter.

The discrete filter uses the exact zero-order-hold recursion, so its step
response matches the analytic one at the sample instants to machine
precision.  The effective low-pass pole is configurable independently of
the nominal time constant because fitted sensor cutoffs routinely differ
from 1/(2*pi*tau).
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, ConfigurationError, DomainError
from .noise import SENSOR_STREAM, substream_rng
from .timeseries import TimeSeries

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ChainConfig:
    """Net chain gain, sensor noise floor, lock-in pole, output rate."""

    g_amp: float = 1e12          # V per W of detected power
    noise_floor_psd: float = 0.0  # V^2/Hz, one-sided, referred to lock-in input
    tau_la: float = 100e-6       # nominal lock-in time constant, s
    f_lpf: float = None          # effective pole, Hz; None -> 1/(2*pi*tau_la)
    ref_phase: float = 0.0       # rad
    fs_out: float = 100e3        # Hz

    def __post_init__(self):
        if self.tau_la <= 0:
            raise ConfigurationError("tau_la must be positive")
        if self.noise_floor_psd < 0:
            raise ConfigurationError("noise_floor_psd must be nonnegative")
        if self.fs_out <= 0:
            raise ConfigurationError("fs_out must be positive")

    @property
    def omega_lpf(self):
        if self.f_lpf is not None:
            return TWO_PI * self.f_lpf
        return 1.0 / self.tau_la


@dataclass
class QuadratureRecord:
    """Lock-in quadrature outputs; x and y share fs and length."""

    x: TimeSeries
    y: TimeSeries

    def __post_init__(self):
        if self.x.fs != self.y.fs or len(self.x) != len(self.y):
            raise DomainError("quadrature records must share fs and length")


def lockin_filter_response(omega, tau):
    """Single-pole low-pass transfer function 1/(1 + i*omega*tau)."""
    return 1.0 / (1.0 + 1j * np.asarray(omega) * tau)


class OnePoleFilter:
    """Exact ZOH discretization of dy/dt = omega_pole*(u - y).

    With the input held over each step, y[k+1] = u + (y[k] - u)*exp(-w*dt),
    which reproduces the analytic exponential step response exactly at the
    sample instants.  Filter state is per-instance; each run owns its own.
    """

    def __init__(self, omega_pole, fs, y0=0.0):
        self.decay = math.exp(-omega_pole / fs)
        self.y = y0

    def step(self, u):
        self.y = u + (self.y - u) * self.decay
        return self.y

    def run(self, u):
        """Filter a whole array (lfilter form of the same recursion)."""
        from scipy.signal import lfilter
        a = self.decay
        out, zf = lfilter([1.0 - a], [1.0, -a], np.asarray(u, dtype=float),
                          zi=[self.y * a])
        self.y = out[-1] if len(out) else self.y
        return out


def demodulate(envelope, chain, seed, stream=SENSOR_STREAM):
    """Lock-in output for a complex envelope record X + iY (W).

    Applies the detector/chain gain, adds white sensor noise of the
    configured one-sided PSD to each quadrature, rotates by the reference
    phase and low-pass filters both quadratures.
    """
    env = np.asarray(envelope.samples, dtype=complex)
    fs = envelope.fs
    x = env.real * chain.g_amp
    y = env.imag * chain.g_amp
    if chain.noise_floor_psd > 0.0:
        rng = substream_rng(seed, stream)
        sigma = math.sqrt(chain.noise_floor_psd * fs / 2.0)
        x = x + sigma * rng.standard_normal(x.size)
        y = y + sigma * rng.standard_normal(y.size)
    c, s = math.cos(chain.ref_phase), math.sin(chain.ref_phase)
    xr = c * x - s * y
    yr = s * x + c * y
    w = chain.omega_lpf
    fx = OnePoleFilter(w, fs)
    fy = OnePoleFilter(w, fs)
    return QuadratureRecord(
        TimeSeries(fx.run(xr), fs, unit="V", t0=envelope.t0),
        TimeSeries(fy.run(yr), fs, unit="V", t0=envelope.t0))


def calibrate_phase(sweep):
    """Reference-phase correction from a carrier-frequency sweep.

    ``sweep`` is an (N, 3) array-like of rows (omega_c, X, Y).  Cable and
    component delays rotate the quadrature plane; the dispersive sweep
    traces a nearly straight segment whose principal axis should align with
    Y.  Returns the rotation angle theta in (-pi, pi] that, applied as
    [X'; Y'] = R(theta) [X; Y], minimizes the variance of X' across the
    sweep; the residual pi ambiguity is resolved by requiring the rotated
    Y to fall with increasing carrier frequency (the physical orientation
    for a positive-gain chain).
    """
    arr = np.asarray(sweep, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 3:
        raise DomainError("sweep must be an (N>=3, 3) array of (omega_c, X, Y)")
    w, x, y = arr[:, 0], arr[:, 1], arr[:, 2]
    xc = x - x.mean()
    yc = y - y.mean()
    vxx = float(xc @ xc)
    vyy = float(yc @ yc)
    vxy = float(xc @ yc)
    # Var(X') is extremized at theta solving tan(2*theta) = 2 Vxy/(Vyy-Vxx);
    # of the two stationary angles pick the minimum
    theta = 0.5 * math.atan2(2.0 * vxy, vyy - vxx)
    best = None
    for cand in (theta, theta + 0.5 * math.pi):
        c, s = math.cos(cand), math.sin(cand)
        var_x = c * c * vxx - 2.0 * c * s * vxy + s * s * vyy
        if best is None or var_x < best[1]:
            best = (cand, var_x)
    theta, var_min = best
    theta = math.atan2(math.sin(theta), math.cos(theta))  # wrap
    if theta <= -0.5 * math.pi:
        theta += math.pi
    elif theta > 0.5 * math.pi:
        theta -= math.pi
    var_tot = vxx + vyy
    if var_tot <= 0 or var_min > 0.5 * var_tot:
        raise CalibrationError("sweep shows no dominant quadrature axis; "
                               "does it span the resonance?")
    c, s = math.cos(theta), math.sin(theta)
    y_rot = s * x + c * y
    slope = float((w - w.mean()) @ (y_rot - y_rot.mean()))
    if slope == 0.0:
        raise CalibrationError("degenerate sweep: rotated Y uncorrelated with frequency")
    if slope > 0.0:
        # flip by pi: keeps X-variance minimal, fixes the dispersive sign
        theta += math.pi if theta <= 0.0 else -math.pi
    if not np.any(np.diff(np.sign(y_rot - y_rot.mean())) != 0):
        raise CalibrationError("sweep does not cross the resonance")
    return theta
