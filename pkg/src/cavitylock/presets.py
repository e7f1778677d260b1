"""Scenario presets, one per panel of the bundled demo figure suite.

Device values with a measured provenance (damping rates, bare frequency,
tunability span, modulation frequency/depth, bias points, photon numbers,
lock-in poles, gate-jump size, charge-noise amplitude and exponent) are
encoded in the defaults of the respective config dataclasses; simulation-
only values (CPT energies, chain gain, sensor noise floor, actuator range,
desk-scale durations) are set here and flagged in the ``notes`` field of
each preset.

Each preset runs in well under a minute on a laptop.
"""
import functools
import math

from .chain import ChainConfig
from .device import BiasPoint, CavityParams
from .noise import NoiseConfig, RtnConfig
from .response import DriveConfig
from .scenario import (LoopSpec, ResponseSweepConfig, ScenarioConfig,
                       SweepConfig)

TWO_PI = 2.0 * math.pi

# Simulation-only chain scale: detector + amplification, V per W.  The
# absolute value is arbitrary (only products like G0 matter); the sensor
# floor below is calibrated against it.
G_AMP = 1e12

# Per-photon Kerr scale at the lock biases (0.4-0.6, 0): the nonlinearity
# is strongly bias-dependent and sits far below its frustration-point
# maximum at the moderately charge-sensitive operating points, where the
# loop would otherwise see a heavily compressed error signal over the
# intrinsic noise excursions.  The device default (-2*pi*0.1 MHz) applies
# at the charge/flux-symmetric point used for the error-signal curves.
KERR_AT_LOCK_BIAS = -TWO_PI * 20e3


def _lock_device():
    return CavityParams(kerr_k=KERR_AT_LOCK_BIAS)

# Sensor noise floor (V^2/Hz referred to the lock-in input), the one fitted
# parameter: chosen so the ten-photon charge signal at gate bias 0.6
# crosses unit SNR near 200 Hz, reproducing the measured open-loop spectra.
# floor = G0(n=10, bias 0.6)^2 * S_qq(200 Hz); G0 evaluated on the
# calibrated default device.
@functools.lru_cache(maxsize=None)
def calibrated_noise_floor(f_snr1=200.0):
    from .response import open_loop_gain
    drive = DriveConfig(n_target=10.0)
    g0 = open_loop_gain(CavityParams(), drive, BiasPoint(0.6, 0.0), G_AMP)
    s_qq = 5.5e-7 * f_snr1 ** (-0.89)
    return g0 * g0 * s_qq


def _floor():
    return calibrated_noise_floor()


def fig3b(seed=0):
    """Error-signal curves vs carrier detuning for one, five, ten photons."""
    return ScenarioConfig(
        name="fig3b", kind="response_sweep",
        bias0=BiasPoint(0.0, 0.0),
        drive=DriveConfig(beta=1.08, n_target=1.0),
        response_sweep=ResponseSweepConfig(photon_numbers=(1.0, 5.0, 10.0)),
        seed=seed,
        notes="beta=1.08 as in the benchmarking sweep; zero crossings sit at "
              "the Kerr-shifted resonance for every drive level")


def fig3c(seed=0):
    """Open-loop Y PSD at ten photons, gate bias 0.6 (charge-sensitive)."""
    return ScenarioConfig(
        name="fig3c", kind="lock_run",
        bias0=BiasPoint(0.6, 0.0),
        drive=DriveConfig(beta=1.84, n_target=10.0),
        chain=ChainConfig(g_amp=G_AMP, noise_floor_psd=_floor(),
                          tau_la=100e-6, f_lpf=1331.0, fs_out=100e3),
        noise=NoiseConfig(seed=seed),
        loop=None, duration=10.0, seed=seed, psd_segment=2 ** 14,
        notes="10 s record at 100 kHz; sensor pole at the fitted 1331 Hz; "
              "noise floor is the calibrated simulation parameter")


def fig3d(seed=0):
    """Charge-noise extraction from the fig3c-style measurement."""
    return ScenarioConfig(
        name="fig3d", kind="lock_run",
        bias0=BiasPoint(0.6, 0.0),
        drive=DriveConfig(beta=1.84, n_target=10.0),
        chain=ChainConfig(g_amp=G_AMP, noise_floor_psd=_floor(),
                          tau_la=100e-6, f_lpf=1331.0, fs_out=100e3),
        noise=NoiseConfig(seed=seed,
                          rtn=RtnConfig(rate_even_to_odd=1.5e3,
                                        rate_odd_to_even=28.5e3, enabled=True)),
        loop=None, duration=10.0, seed=seed, psd_segment=2 ** 14,
        extract_charge=True,
        notes="quasiparticle telegraph enabled (5% odd occupancy, corner "
              "well above the sensor pole, so its floor looks white in band)")


def fig4a_sweep(seed=0):
    """Gate sweep 0..1 with the loop locked at 0.4, five photons."""
    return ScenarioConfig(
        name="fig4a_sweep", kind="gate_sweep",
        bias0=BiasPoint(0.4, 0.0),
        drive=DriveConfig(beta=1.84, n_target=5.0),
        chain=ChainConfig(g_amp=G_AMP, noise_floor_psd=_floor(),
                          tau_la=10e-3, f_lpf=200.0, fs_out=100e3),
        noise=NoiseConfig(seed=seed),
        loop=LoopSpec(omega_prime=TWO_PI * 50.0, output_clamp=0.1),
        sweep=SweepConfig(start=0.0, stop=1.0, points=101, hold=0.06),
        duration=6.06, seed=seed, lost_lock_fraction=1.1,
        notes="correction range +-0.1 gate charge models the summing-"
              "amplifier output window and bounds the capture region; "
              "dwell per point compressed to desk scale")


def fig4b(seed=0):
    """Corrected total gate charge for the fig4a sweep (same run)."""
    cfg = fig4a_sweep(seed)
    import dataclasses
    return dataclasses.replace(cfg, name="fig4b")


def fig4c_n10(seed=0):
    """Open/closed Y PSD comparison at ten photons, bias (0.6, 0)."""
    return ScenarioConfig(
        name="fig4c_n10", kind="suppression_pair",
        bias0=BiasPoint(0.6, 0.0),
        drive=DriveConfig(beta=1.84, n_target=10.0),
        chain=ChainConfig(g_amp=G_AMP, noise_floor_psd=_floor(),
                          tau_la=100e-6, f_lpf=1500.0, fs_out=100e3),
        noise=NoiseConfig(seed=seed),
        loop=LoopSpec(omega_prime=TWO_PI * 1400.0),
        duration=10.0, seed=seed, psd_segment=2 ** 14,
        notes="sensor pole set to 1500 Hz (100 us time constant within fit "
              "uncertainty) so the 1.4 kHz feedback bandwidth satisfies the "
              "shaping bound at the 100 kHz controller rate; open and "
              "closed runs share the same noise realization")


def fig4d(seed=0):
    """Long locked run with a discrete gate jump, ten photons, QP enabled."""
    return ScenarioConfig(
        name="fig4d", kind="lock_run",
        bias0=BiasPoint(0.6, 0.0),
        drive=DriveConfig(beta=1.84, n_target=10.0),
        chain=ChainConfig(g_amp=G_AMP, noise_floor_psd=_floor(),
                          tau_la=300e-6, f_lpf=530.0, fs_out=50e3),
        noise=NoiseConfig(seed=seed, jumps=((20.0, 0.022),),
                          rtn=RtnConfig(rate_even_to_odd=1e3,
                                        rate_odd_to_even=20e3, enabled=True)),
        loop=LoopSpec(omega_prime=TWO_PI * 400.0),
        duration=40.0, seed=seed, psd_segment=2 ** 16,
        notes="desk-scale stand-in for the two-hour lock: 40 s record with "
              "one 0.022 gate jump at mid-record")


def fig4e(seed=0):
    """Jump recovery metrics and reflection curves before/after the jump."""
    return ScenarioConfig(
        name="fig4e", kind="lock_run",
        bias0=BiasPoint(0.6, 0.0),
        drive=DriveConfig(beta=1.84, n_target=10.0),
        chain=ChainConfig(g_amp=G_AMP, noise_floor_psd=_floor(),
                          tau_la=300e-6, f_lpf=530.0, fs_out=50e3),
        noise=NoiseConfig(seed=seed, jumps=((10.0, 0.022),)),
        loop=LoopSpec(omega_prime=TWO_PI * 400.0),
        duration=20.0, seed=seed, psd_segment=2 ** 15,
        notes="reflection curves are evaluated at the pre- and post-jump "
              "gate bias; the tracked shift equals their resonance offset")


def fig4f_n1(seed=0):
    """Single-photon suppression pair: 11 Hz feedback bandwidth."""
    return ScenarioConfig(
        name="fig4f_n1", kind="suppression_pair",
        bias0=BiasPoint(0.4, 0.0),
        drive=DriveConfig(beta=1.84, n_target=1.0),
        chain=ChainConfig(g_amp=G_AMP, noise_floor_psd=_floor(),
                          tau_la=300e-6, f_lpf=530.0, fs_out=50e3),
        noise=NoiseConfig(seed=seed),
        loop=LoopSpec(omega_prime=TWO_PI * 11.0),
        duration=42.0, seed=seed, psd_segment=2 ** 18,
        notes="300 us time constant; the 11 Hz loop bandwidth is the "
              "documented choice for the single-photon signal-to-noise; "
              "the sensor floor dominates the error signal at this drive, "
              "which is why the bandwidth must be this low")


def fig4f_n5(seed=0):
    """Five-photon variant of the suppression pair."""
    import dataclasses
    cfg = fig4f_n1(seed)
    return dataclasses.replace(
        cfg, name="fig4f_n5",
        drive=DriveConfig(beta=1.84, n_target=5.0),
        loop=LoopSpec(omega_prime=TWO_PI * 150.0),
        duration=30.0, psd_segment=2 ** 17,
        notes="intermediate drive level; loop bandwidth scaled with the "
              "available signal-to-noise")


PRESETS = {
    "fig3b": fig3b,
    "fig3c": fig3c,
    "fig3d": fig3d,
    "fig4a_sweep": fig4a_sweep,
    "fig4b": fig4b,
    "fig4c_n10": fig4c_n10,
    "fig4d": fig4d,
    "fig4e": fig4e,
    "fig4f_n1": fig4f_n1,
    "fig4f_n5": fig4f_n5,
}


def get_preset(name, seed=None):
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return factory(seed) if seed is not None else factory()
