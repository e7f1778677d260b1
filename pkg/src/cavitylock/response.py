"""Quasi-static sideband response of the driven nonlinear cavity.

A phase-modulated carrier (Jacobi-Anger sidebands at multiples of the
modulation frequency) reflects off the cavity; each sideband sees the
reflection coefficient

    r_k = (k*w_m - dw0 + i*(k_int - k_ext)/2) / (k*w_m - dw0 + i*(k_int + k_ext)/2)

with dw0 the instantaneous resonance offset from the carrier.  The reflected
power carries harmonics of the modulation frequency; the sine quadrature of
the first harmonic is the dispersive error signal used for locking.  With a
Kerr nonlinearity the offset is dressed by the intracavity photon number,
dw0 -> dw0 + K*n(dw0), where n solves a cubic in the steady state.
"""
import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar
from scipy.special import jv

from .device import coupling_coefficient, resonant_frequency
from .errors import ConfigurationError, DomainError, NumericalAccuracyError

TWO_PI = 2.0 * math.pi
J0_FIRST_ZERO = 2.404825557695773


@dataclass(frozen=True)
class DriveConfig:
    """Phase-modulated drive: carrier, modulation depth/frequency, power.

    Exactly one of ``p_in`` (input power at the sample, W) or ``n_target``
    (average intracavity photons with the carrier at the lock point) must be
    given.  ``omega_c`` may be left None and filled in by the lock policy.
    """

    beta: float = 1.84
    omega_m: float = TWO_PI * 30e6
    omega_c: float = None
    p_in: float = None
    n_target: float = None
    k_max: int = 6

    def __post_init__(self):
        if (self.p_in is None) == (self.n_target is None):
            raise ConfigurationError("specify exactly one of p_in or n_target")
        if self.p_in is not None and self.p_in <= 0:
            raise ConfigurationError("p_in must be positive")
        if self.n_target is not None and self.n_target <= 0:
            raise ConfigurationError("n_target must be positive")
        if self.beta < 0:
            raise ConfigurationError("modulation depth must be nonnegative")
        if self.omega_m <= 0:
            raise ConfigurationError("modulation frequency must be positive")
        ks = np.arange(-self.k_max, self.k_max + 1)
        captured = float(np.sum(jv(ks, self.beta) ** 2))
        if captured < 1.0 - 1e-6:
            raise ConfigurationError(
                f"sideband truncation k_max={self.k_max} captures only "
                f"{captured:.8f} of the drive power at beta={self.beta}")

    def with_carrier(self, omega_c):
        return DriveConfig(self.beta, self.omega_m, omega_c, self.p_in,
                           self.n_target, self.k_max)


def validate_modulation(cav, drive):
    """Modulation must sit well outside the cavity linewidth."""
    if drive.omega_m <= 5.0 * cav.kappa_tot:
        raise ConfigurationError(
            f"omega_m = {drive.omega_m:.3g} rad/s must exceed 5*kappa_tot = "
            f"{5 * cav.kappa_tot:.3g} rad/s")


def reflection_coefficient(k, delta_omega0, cav, omega_m):
    """Reflection coefficient seen by sideband k at resonance offset dw0."""
    if not math.isfinite(delta_omega0):
        raise DomainError("non-finite resonance offset")
    x = k * omega_m - delta_omega0
    return (x + 0.5j * (cav.kappa_int - cav.kappa_ext)) / \
           (x + 0.5j * (cav.kappa_int + cav.kappa_ext))


def _cubic_real_roots(b, c, d):
    """Real roots of the monic cubic t^3 + b t^2 + c t + d, ascending."""
    p = c - b * b / 3.0
    q = 2.0 * b ** 3 / 27.0 - b * c / 3.0 + d
    shift = -b / 3.0
    disc = -4.0 * p ** 3 - 27.0 * q * q
    if disc > 0.0:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        arg = max(-1.0, min(1.0, arg))
        phi = math.acos(arg) / 3.0
        roots = [shift + m * math.cos(phi - TWO_PI * k / 3.0) for k in range(3)]
        roots.sort()
        return roots
    half_q = -q / 2.0
    s = math.sqrt(max(q * q / 4.0 + p ** 3 / 27.0, 0.0))
    u = math.copysign(abs(half_q + s) ** (1.0 / 3.0), half_q + s)
    v = math.copysign(abs(half_q - s) ** (1.0 / 3.0), half_q - s)
    return [shift + u + v]


def carrier_power(cav, drive, omega_ref=None):
    """Carrier power J0(beta)^2 * P_in (W), resolving n_target if needed.

    ``n_target`` means the average photon number with the carrier parked at
    the Kerr-shifted lock point (zero effective offset), where the
    steady-state cubic reduces to the Lorentzian peak
    n = 4*kappa_ext*Pc/(hbar*w*kappa_tot^2); this is the same linear
    power-to-photon relation the net-gain formula uses.
    """
    w = omega_ref if omega_ref is not None else \
        (drive.omega_c if drive.omega_c is not None else cav.omega_bare)
    j0 = jv(0, drive.beta)
    if drive.p_in is not None:
        return j0 * j0 * drive.p_in
    return drive.n_target * cav.kappa_tot ** 2 * hbar * w / (4.0 * cav.kappa_ext)


def input_power(cav, drive, omega_ref=None):
    """Full phase-modulated input power P_in (W) at the sample."""
    j0 = jv(0, drive.beta)
    if abs(j0) < 1e-9:
        raise ConfigurationError("beta sits at a carrier null; cannot resolve power")
    return carrier_power(cav, drive, omega_ref) / (j0 * j0)


def kerr_photon_number(delta_omega0, cav, drive, prev_n=None, omega_ref=None):
    """Steady-state intracavity photons at resonance offset dw0.

    Returns ``(n, bistable)``.  The photon number is the nonnegative real
    root of

        n^3 K^2 + 2 dw0 K n^2 + (dw0^2 + kappa_tot^2/4) n - kappa_ext*Pc/(hbar*w) = 0.

    Where three positive roots coexist the returned branch follows
    ``prev_n`` (sweep continuity, hysteresis included) or the low-power
    branch from a cold start, and ``bistable`` is True.
    """
    w = omega_ref if omega_ref is not None else \
        (drive.omega_c if drive.omega_c is not None else cav.omega_bare)
    pc = carrier_power(cav, drive, omega_ref)
    flux = cav.kappa_ext * pc / (hbar * w)
    kt2_4 = cav.kappa_tot ** 2 / 4.0
    k = cav.kerr_k
    if k == 0.0:
        return flux / (delta_omega0 ** 2 + kt2_4), False
    k2 = k * k
    b = 2.0 * delta_omega0 / k
    c = (delta_omega0 ** 2 + kt2_4) / k2
    d = -flux / k2
    roots = [r for r in _cubic_real_roots(b, c, d) if r > 0.0]
    if not roots:
        raise NumericalAccuracyError(
            f"photon-number cubic returned no positive root at dw0="
            f"{delta_omega0:.3g}; inputs are unphysical", estimates=(b, c, d))
    bistable = len(roots) == 3
    if bistable and prev_n is not None:
        n = min(roots, key=lambda r: abs(r - prev_n))
    else:
        n = roots[0]
    # one Newton polish pass keeps the back-substitution residual tiny
    for _ in range(2):
        f = ((n + b) * n + c) * n + d
        fp = (3.0 * n + 2.0 * b) * n + c
        if fp != 0.0:
            n -= f / fp
    return n, bistable


def error_quadratures(delta_omega0, cav, drive, kerr=True, prev_n=None,
                      include_second_order=False, omega_ref=None):
    """Modulation-frequency quadratures (X_m, Y_m) and mean reflected power.

    X_m and Y_m are the cosine/sine components (W) of the reflected power at
    the modulation frequency built from the carrier/first-sideband pairs;
    ``include_second_order`` adds the (1,2) and (-2,-1) cross terms that the
    first-order model neglects.  With ``kerr`` the offset is dressed by the
    steady-state photon number.  ``dc`` is the time-averaged reflected power
    over all retained sidebands.
    """
    p_in = input_power(cav, drive, omega_ref)
    if kerr and cav.kerr_k != 0.0:
        n, _ = kerr_photon_number(delta_omega0, cav, drive, prev_n, omega_ref)
        delta_eff = delta_omega0 + cav.kerr_k * n
    else:
        delta_eff = delta_omega0
    wm = drive.omega_m
    pair_range = 2 if include_second_order else 1
    a = 0.0 + 0.0j
    for k in range(-pair_range + 1, pair_range + 1):
        rk = reflection_coefficient(k, delta_eff, cav, wm)
        rkm = reflection_coefficient(k - 1, delta_eff, cav, wm)
        a += jv(k, drive.beta) * jv(k - 1, drive.beta) * rk * rkm.conjugate()
    x_m = 2.0 * p_in * a.real
    y_m = -2.0 * p_in * a.imag
    dc = 0.0
    for k in range(-drive.k_max, drive.k_max + 1):
        rk = reflection_coefficient(k, delta_eff, cav, wm)
        dc += jv(k, drive.beta) ** 2 * (rk.real ** 2 + rk.imag ** 2)
    return x_m, y_m, dc * p_in


def small_signal_Y(delta_b, g_b, cav, drive, omega_ref=None):
    """Small-signal sine quadrature for a bias offset delta_b.

    Valid for modulation far outside the linewidth:
        Y = 16 k_ext J0 J1 P_in * g_b db / (kappa_tot^2 + 4 g_b^2 db^2).
    """
    p_in = input_power(cav, drive, omega_ref)
    j0j1 = jv(0, drive.beta) * jv(1, drive.beta)
    gdb = g_b * delta_b
    return 16.0 * cav.kappa_ext * j0j1 * p_in * gdb / \
        (cav.kappa_tot ** 2 + 4.0 * gdb * gdb)


def open_loop_gain(cav, drive, bias, g_amp, parity="even"):
    """DC gain of the open-loop error signal, V per unit bias.

    G0 = (4 J1/J0) * n * hbar * omega0 * g_b * G_amp, with n the photon
    number at the lock point and g_b the gate coupling at the bias.
    """
    if not (0.0 < drive.beta < J0_FIRST_ZERO):
        raise ConfigurationError(
            f"beta={drive.beta} outside (0, {J0_FIRST_ZERO:.3f}): carrier vanishes")
    w0 = resonant_frequency(bias, cav, parity)
    g_b = coupling_coefficient(bias, cav, "gate", parity)
    if g_b == 0.0:
        raise ConfigurationError(
            f"bias ({bias.n_g}, {bias.phi_ext}) has zero gate coupling; unlockable")
    pc = carrier_power(cav, drive, w0)
    n = 4.0 * pc / (hbar * w0 * cav.kappa_tot ** 2) * cav.kappa_ext
    ratio = jv(1, drive.beta) / jv(0, drive.beta)
    return 4.0 * ratio * n * hbar * w0 * g_b * g_amp


def sweep_quadratures(cav, drive, delta_grid, kerr=True,
                      include_second_order=False, omega_ref=None):
    """Evaluate (X, Y, dc, n, bistable) along a detuning sweep.

    The photon-number branch follows the sweep point-to-point (continuity
    with hysteresis), as a swept measurement would; sweep the grid in the
    direction the experiment scans.  Returns five arrays.
    """
    w = omega_ref if omega_ref is not None else \
        (drive.omega_c if drive.omega_c is not None else cav.omega_bare)
    xs, ys, dcs, ns, flags = [], [], [], [], []
    prev = None
    kt2_4 = cav.kappa_tot ** 2 / 4.0
    lin_flux = cav.kappa_ext * carrier_power(cav, drive, w) / (hbar * w)
    for d in np.asarray(delta_grid, dtype=float):
        if kerr and cav.kerr_k != 0.0:
            n, bist = kerr_photon_number(d, cav, drive, prev_n=prev, omega_ref=w)
            prev = n
        else:
            n, bist = lin_flux / (d * d + kt2_4), False
        x, y, dc = error_quadratures(d, cav, drive, kerr=kerr, prev_n=prev,
                                     include_second_order=include_second_order,
                                     omega_ref=w)
        xs.append(x)
        ys.append(y)
        dcs.append(dc)
        ns.append(n)
        flags.append(bist)
    return (np.array(xs), np.array(ys), np.array(dcs), np.array(ns),
            np.array(flags, dtype=bool))


class QuadratureEvaluator:
    """Scalar fast path for the per-step loop pipeline.

    Precomputes every drive/cavity constant so each call costs a handful of
    float operations; mirrors :func:`error_quadratures` with kerr on and the
    first-order pair structure (verified against it in the tests).
    Carries the previous photon number for branch continuity.
    """

    def __init__(self, cav, drive, omega_ref):
        self.kappa_sum = 0.5 * (cav.kappa_int + cav.kappa_ext)
        self.kappa_dif = 0.5 * (cav.kappa_int - cav.kappa_ext)
        self.wm = drive.omega_m
        self.kerr = cav.kerr_k
        self.kt2_4 = (cav.kappa_int + cav.kappa_ext) ** 2 / 4.0
        pc = carrier_power(cav, drive, omega_ref)
        self.flux = cav.kappa_ext * pc / (hbar * omega_ref)
        self.p_in = input_power(cav, drive, omega_ref)
        j0 = jv(0, drive.beta)
        j1 = jv(1, drive.beta)
        self.two_j0j1_p = 2.0 * j0 * j1 * self.p_in
        self.prev_n = None
        self.bistable_seen = False

    def photon_number(self, delta):
        k = self.kerr
        if k == 0.0:
            return self.flux / (delta * delta + self.kt2_4)
        b = 2.0 * delta / k
        c = (delta * delta + self.kt2_4) / (k * k)
        d = -self.flux / (k * k)
        roots = [r for r in _cubic_real_roots(b, c, d) if r > 0.0]
        if len(roots) == 3:
            self.bistable_seen = True
            n = roots[0] if self.prev_n is None else \
                min(roots, key=lambda r: abs(r - self.prev_n))
        else:
            n = roots[0]
        f = ((n + b) * n + c) * n + d
        fp = (3.0 * n + 2.0 * b) * n + c
        if fp != 0.0:
            n -= f / fp
        self.prev_n = n
        return n

    def y_quadrature(self, delta_omega0):
        """Sine-quadrature power (W) at resonance offset delta_omega0."""
        n = self.photon_number(delta_omega0)
        de = delta_omega0 + self.kerr * n
        ks, kd, wm = self.kappa_sum, self.kappa_dif, self.wm
        r0 = complex(-de, kd) / complex(-de, ks)
        r1 = complex(wm - de, kd) / complex(wm - de, ks)
        rm = complex(-wm - de, kd) / complex(-wm - de, ks)
        return self.two_j0j1_p * (r0.imag * (r1.real + rm.real)
                                  - r0.real * (r1.imag + rm.imag))

    def xy_quadratures(self, delta_omega0):
        """Both modulation-frequency quadrature powers (W)."""
        n = self.photon_number(delta_omega0)
        de = delta_omega0 + self.kerr * n
        ks, kd, wm = self.kappa_sum, self.kappa_dif, self.wm
        r0 = complex(-de, kd) / complex(-de, ks)
        r1 = complex(wm - de, kd) / complex(wm - de, ks)
        rm = complex(-wm - de, kd) / complex(-wm - de, ks)
        x = self.two_j0j1_p * (r0.real * (r1.real - rm.real)
                               + r0.imag * (r1.imag - rm.imag))
        y = self.two_j0j1_p * (r0.imag * (r1.real + rm.real)
                               - r0.real * (r1.imag + rm.imag))
        return x, y
