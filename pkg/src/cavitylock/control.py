"""PI loop shaping and the sequential closed-loop stepping engine.

The control law inverts the sensor pole exactly: with sensor
G(s) = g0/(1 + s/w_lpf) and K(s) = kp + ki/s where

    kp = w'/(g0*w_lpf),   ki = w'/g0,

the loop transfer is K(s)G(s) = w'/s, hence a one-pole closed loop with
bandwidth w' and suppression |s/(s+w')|^2 = w^2/(w^2+w'^2).

The engine advances one controller step per sensor sample: instantaneous
bias -> resonance (parity-resolved, table lookup) -> sine-quadrature power
-> detector volts + sensor noise -> lock-in one-pole -> PI with clamp and
integrator freeze -> actuator one-pole -> next-step bias correction.  A run
is strictly sequential; independent runs share nothing mutable.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .chain import OnePoleFilter
from .device import BiasPoint, FrequencyLookup, coupling_coefficient
from .errors import ConfigurationError, DomainError
from .noise import SENSOR_STREAM, substream_rng
from .response import QuadratureEvaluator
from .timeseries import TimeSeries

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class LoopConfig:
    """Loop-shaping targets, actuator limits, and the controller step."""

    omega_prime: float              # target closed-loop bandwidth, rad/s
    omega_lpf: float                # sensor pole the shaping assumes, rad/s
    g0: float                       # open-loop DC gain, V per bias unit
    y_ref: float = 0.0              # V
    actuator_bw: float = TWO_PI * 1e6
    output_clamp: float = 0.3       # max |applied bias correction|
    dt: float = 1e-5                # s
    kd: float = 0.0                 # derivative hook, off by default

    def __post_init__(self):
        if self.g0 == 0.0:
            raise ConfigurationError("g0 = 0: bias point is unlockable")
        if not self.omega_prime > 0:
            raise ConfigurationError("omega_prime must be positive")
        if not self.omega_prime < self.omega_lpf:
            raise ConfigurationError(
                f"loop shaping requires omega_prime < omega_lpf "
                f"({self.omega_prime:.4g} >= {self.omega_lpf:.4g})")
        if not self.dt * self.omega_lpf < 0.1:
            raise ConfigurationError(
                f"dt*omega_lpf = {self.dt * self.omega_lpf:.3f} breaks the "
                "discretization validity bound (< 0.1)")
        if self.output_clamp <= 0:
            raise ConfigurationError("output_clamp must be positive")


def pi_gains(cfg):
    """(kp, ki) implementing K(s)G(s) = omega_prime/s against the sensor pole."""
    kp = cfg.omega_prime / (cfg.g0 * cfg.omega_lpf)
    ki = cfg.omega_prime / cfg.g0
    return kp, ki


@dataclass
class LoopState:
    """Controller memory between steps."""

    integrator: float = 0.0
    last_output: float = 0.0
    windup_flag: bool = False
    prev_error: float = 0.0


def pid_step(state, error, cfg):
    """One discrete PI(+D hook) update; returns (state, correction).

    Trapezoidal integration; the output is clamped to +-output_clamp and
    the integrator freezes while the update would push deeper into the
    clamp (conditional integration keeps recovery prompt once the error
    sign flips).
    """
    if not math.isfinite(error):
        raise DomainError(f"loop abort: non-finite error input {error!r}")
    kp, ki = pi_gains(cfg)
    new_int = state.integrator + 0.5 * ki * cfg.dt * (error + state.prev_error)
    u = kp * error + new_int
    if cfg.kd != 0.0:
        u += cfg.kd * (error - state.prev_error) / cfg.dt
    clamp = cfg.output_clamp
    clamped_hi = u > clamp
    clamped_lo = u < -clamp
    if clamped_hi or clamped_lo:
        push_deeper = (clamped_hi and ki * error > 0.0) or \
                      (clamped_lo and ki * error < 0.0)
        if not push_deeper:
            state.integrator = new_int
        u = clamp if clamped_hi else -clamp
        state.windup_flag = True
    else:
        state.integrator = new_int
        state.windup_flag = False
    state.prev_error = error
    state.last_output = u
    return state, u


@dataclass
class LoopRunResult:
    """Full trajectories plus lock diagnostics for one engine run."""

    y_volts: TimeSeries
    delta_b_app: TimeSeries
    n_g_app: TimeSeries
    omega0: TimeSeries
    omega_c: float
    g0: float
    closed: bool
    lost_lock: bool
    clamped_fraction: float
    bistable_seen: bool
    x_volts: TimeSeries = None

    @property
    def fs(self):
        return self.y_volts.fs


def lock_carrier(cav, drive, bias0, lut=None, policy="kerr_shifted"):
    """Carrier frequency for the configured lock policy.

    "kerr_shifted": carrier at the point of minimum reflection,
    omega0(b0) + n*K, which keeps Y_ref = 0 valid in Kerr regimes.
    "bare": carrier at the small-signal resonance (requires a recalibrated
    nonzero Y_ref to lock in a Kerr regime).
    """
    if lut is None:
        lut = FrequencyLookup(cav, bias0.phi_ext)
    w0 = lut.omega0(bias0.n_g)
    if policy == "kerr_shifted":
        n_lock = drive.n_target
        if n_lock is None:
            from .response import carrier_power
            from scipy.constants import hbar
            pc = carrier_power(cav, drive, w0)
            n_lock = 4.0 * cav.kappa_ext * pc / (hbar * w0 * cav.kappa_tot ** 2)
        return w0 + cav.kerr_k * n_lock
    if policy == "bare":
        return w0
    raise ConfigurationError(f"unknown lock policy {policy!r}")


def run_closed_loop(cav, bias0, drive, noise, chain, loop,
                    kerr=True, lock_policy="kerr_shifted",
                    bias_schedule=None, parity_enabled=True,
                    lost_lock_fraction=0.5, record_x=False,
                    lut=None, seed=None):
    """Run the feedback loop against pre-generated bias-noise records.

    ``noise`` is a BiasNoiseRecords bundle sampled at the controller rate;
    its length sets the run duration.  ``loop=None`` runs the identical
    pipeline open-loop (corrections forced to zero) so open/closed pairs
    see the same noise realization.  ``bias_schedule`` optionally replaces
    the constant base gate with a per-step array (gate sweeps).

    Returns a LoopRunResult; the run is flagged lost-lock when the
    commanded correction sits at the clamp for more than
    ``lost_lock_fraction`` of the steps.
    """
    fs = noise.delta_ng.fs
    n = len(noise.delta_ng)
    closed = loop is not None
    if closed and abs(loop.dt * fs - 1.0) > 1e-9:
        raise ConfigurationError(
            f"controller dt {loop.dt} must match the noise sample rate {fs}")
    if abs(chain.fs_out - fs) > 1e-9:
        raise ConfigurationError(
            f"chain fs_out {chain.fs_out} must match the noise sample rate {fs}")
    if lut is None:
        lut = FrequencyLookup(cav, bias0.phi_ext)
    omega_c = lock_carrier(cav, drive, bias0, lut, lock_policy)
    drive = drive.with_carrier(omega_c)
    ev = QuadratureEvaluator(cav, drive, omega_c)
    g_flux = coupling_coefficient(bias0, cav, "flux")

    # plain-float lists: per-step numpy scalar indexing would box every
    # value into np.float64 and dominate the runtime
    dng = noise.delta_ng.samples.tolist()
    dflux = noise.delta_flux.samples.tolist()
    parity = (noise.parity.samples > 0.5).tolist() if parity_enabled else None
    base = np.broadcast_to(np.asarray(bias_schedule, dtype=float), (n,)).tolist() \
        if bias_schedule is not None else None

    seed = 0 if seed is None else seed
    if chain.noise_floor_psd > 0.0:
        sigma = math.sqrt(chain.noise_floor_psd * fs / 2.0)
        sensor = (sigma * substream_rng(seed, SENSOR_STREAM)
                  .standard_normal(n)).tolist()
        sensor_x = (sigma * substream_rng(seed, SENSOR_STREAM + 1000)
                    .standard_normal(n)).tolist() if record_x else None
    else:
        sensor = None
        sensor_x = None

    y_rec = [0.0] * n
    u_rec = [0.0] * n
    ng_rec = [0.0] * n
    w_rec = [0.0] * n
    x_rec = [0.0] * n if record_x else None

    # scalar loop constants
    lp_decay = math.exp(-chain.omega_lpf / fs)
    g_amp = chain.g_amp
    ng0 = bias0.n_g
    phi_coupling = g_flux
    if closed:
        kp, ki = pi_gains(loop)
        ki_dt_half = 0.5 * ki * loop.dt
        clamp = loop.output_clamp
        act_decay = math.exp(-loop.actuator_bw * loop.dt)
        y_ref = loop.y_ref
        kd_over_dt = loop.kd / loop.dt
    integ = 0.0
    e_prev = 0.0
    u_cmd = 0.0
    u_act = 0.0
    y_f = 0.0
    x_f = 0.0
    clamped = 0
    prev_n = None
    bistable_seen = False

    # hot-loop locals: the quadrature evaluator's constants, the gate
    # lookup table, and the math functions (same formulas as
    # QuadratureEvaluator.y_quadrature / FrequencyLookup.omega0, kept in
    # plain floats; test_control pins the equivalence)
    kap_s = ev.kappa_sum
    kap_d = ev.kappa_dif
    wm = ev.wm
    kerr_k = ev.kerr
    kt2_4 = ev.kt2_4
    flux = ev.flux
    two_j0j1_p = ev.two_j0j1_p
    tab = lut._tab
    tab_ng0 = lut.ng0
    tab_inv_dn = lut.inv_dn
    tab_top = lut.n_points - 2
    fmod = math.fmod
    sqrt = math.sqrt
    acos = math.acos
    cos = math.cos
    isfinite = math.isfinite
    third = 1.0 / 3.0
    two_pi_third = TWO_PI / 3.0

    for i in range(n):
        ng_base = base[i] if base is not None else ng0
        ng_true = ng_base + dng[i] + u_act
        if parity is not None and parity[i]:
            ng_true -= 1.0
        # периodic reduction + linear table lookup
        xg = fmod(ng_true + 1.0, 2.0)
        if xg < 0.0:
            xg += 2.0
        pos = (xg - 1.0 - tab_ng0) * tab_inv_dn
        j = int(pos)
        if j > tab_top:
            j = tab_top
        frac = pos - j
        w0 = tab[j] * (1.0 - frac) + tab[j + 1] * frac + phi_coupling * dflux[i]
        delta = w0 - omega_c

        # steady-state photon number (Kerr cubic, branch continuity)
        if kerr_k == 0.0:
            n_ph = flux / (delta * delta + kt2_4)
        else:
            cb = 2.0 * delta / kerr_k
            cc = (delta * delta + kt2_4) / (kerr_k * kerr_k)
            cd = -flux / (kerr_k * kerr_k)
            p = cc - cb * cb * third
            q = cb * cb * cb * (2.0 / 27.0) - cb * cc * third + cd
            shift = -cb * third
            disc = -4.0 * p * p * p - 27.0 * q * q
            if disc > 0.0:
                # three real roots; only the positive ones are physical and
                # only a positive triple is true bistability
                m = 2.0 * sqrt(-p * third)
                arg = 3.0 * q / (p * m)
                if arg > 1.0:
                    arg = 1.0
                elif arg < -1.0:
                    arg = -1.0
                phi3 = acos(arg) * third
                r0_ = shift + m * cos(phi3)
                r1_ = shift + m * cos(phi3 - two_pi_third)
                r2_ = shift + m * cos(phi3 - 2.0 * two_pi_third)
                if r0_ > 0.0 and r1_ > 0.0 and r2_ > 0.0:
                    bistable_seen = True
                n_ph = -1.0
                if prev_n is None:
                    if r0_ > 0.0:
                        n_ph = r0_
                    if r1_ > 0.0 and (n_ph < 0.0 or r1_ < n_ph):
                        n_ph = r1_
                    if r2_ > 0.0 and (n_ph < 0.0 or r2_ < n_ph):
                        n_ph = r2_
                else:
                    bd = -1.0
                    if r0_ > 0.0:
                        n_ph = r0_
                        bd = abs(r0_ - prev_n)
                    if r1_ > 0.0:
                        d1 = abs(r1_ - prev_n)
                        if bd < 0.0 or d1 < bd:
                            n_ph, bd = r1_, d1
                    if r2_ > 0.0:
                        d2 = abs(r2_ - prev_n)
                        if bd < 0.0 or d2 < bd:
                            n_ph = r2_
            else:
                hq = -q * 0.5
                s = sqrt(q * q * 0.25 + p * p * p / 27.0) if \
                    (q * q * 0.25 + p * p * p / 27.0) > 0.0 else 0.0
                upv = hq + s
                u3 = upv ** third if upv >= 0.0 else -((-upv) ** third)
                vpv = hq - s
                v3 = vpv ** third if vpv >= 0.0 else -((-vpv) ** third)
                n_ph = shift + u3 + v3
            f_ = ((n_ph + cb) * n_ph + cc) * n_ph + cd
            fp_ = (3.0 * n_ph + 2.0 * cb) * n_ph + cc
            if fp_ != 0.0:
                n_ph -= f_ / fp_
            prev_n = n_ph

        de = delta + kerr_k * n_ph
        # r_k = (k*wm - de + i*kap_d)/(k*wm - de + i*kap_s), expanded to reals
        a0, a1, am = -de, wm - de, -wm - de
        d0 = 1.0 / (a0 * a0 + kap_s * kap_s)
        d1_ = 1.0 / (a1 * a1 + kap_s * kap_s)
        dm = 1.0 / (am * am + kap_s * kap_s)
        r0r = (a0 * a0 + kap_d * kap_s) * d0
        r0i = (kap_d - kap_s) * a0 * d0
        r1r = (a1 * a1 + kap_d * kap_s) * d1_
        r1i = (kap_d - kap_s) * a1 * d1_
        rmr = (am * am + kap_d * kap_s) * dm
        rmi = (kap_d - kap_s) * am * dm
        y_w = two_j0j1_p * (r0i * (r1r + rmr) - r0r * (r1i + rmi))
        if record_x:
            x_raw = two_j0j1_p * (r0r * (r1r - rmr) + r0i * (r1i - rmi)) * g_amp
            if sensor_x is not None:
                x_raw += sensor_x[i]
            x_f = x_raw + (x_f - x_raw) * lp_decay
            x_rec[i] = x_f

        y_raw = y_w * g_amp
        if sensor is not None:
            y_raw += sensor[i]
        y_f = y_raw + (y_f - y_raw) * lp_decay
        y_rec[i] = y_f
        w_rec[i] = w0
        if closed:
            e = y_ref - y_f
            if not isfinite(e):
                raise DomainError(f"loop abort at step {i}: non-finite error")
            new_int = integ + ki_dt_half * (e + e_prev)
            u = kp * e + new_int
            if kd_over_dt != 0.0:
                u += kd_over_dt * (e - e_prev)
            if u > clamp:
                if ki * e <= 0.0:
                    integ = new_int
                u = clamp
                clamped += 1
            elif u < -clamp:
                if ki * e >= 0.0:
                    integ = new_int
                u = -clamp
                clamped += 1
            else:
                integ = new_int
            e_prev = e
            u_cmd = u
            u_act = u_cmd + (u_act - u_cmd) * act_decay
        u_rec[i] = u_act
        ng_rec[i] = ng_base + u_act
    ev.bistable_seen = bistable_seen

    frac = clamped / n if n else 0.0
    return LoopRunResult(
        y_volts=TimeSeries(y_rec, fs, unit="V"),
        delta_b_app=TimeSeries(u_rec, fs, unit="e"),
        n_g_app=TimeSeries(ng_rec, fs, unit="e"),
        omega0=TimeSeries(w_rec, fs, unit="rad/s"),
        omega_c=omega_c, g0=(loop.g0 if closed else 0.0), closed=closed,
        lost_lock=closed and frac > lost_lock_fraction,
        clamped_fraction=frac, bistable_seen=ev.bistable_seen,
        x_volts=TimeSeries(x_rec, fs, unit="V") if record_x else None)


def run_open_loop(cav, bias0, drive, noise, chain, **kwargs):
    """Open-loop variant of :func:`run_closed_loop` (corrections held at 0)."""
    return run_closed_loop(cav, bias0, drive, noise, chain, None, **kwargs)
