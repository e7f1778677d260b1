"""Common data carriers: uniformly sampled records and one-sided PSDs.

Conventions used throughout the package:

* time series are uniformly sampled; ``fs`` is in Hz
* angular frequencies are ``omega_*`` (rad/s), plain frequencies ``f_*`` (Hz)
* PSDs are one-sided densities in ``unit**2/Hz``
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass
class TimeSeries:
    """A uniformly sampled real or complex record.

    The ``unit`` tag is carried verbatim through every transformation; it is
    bookkeeping, not enforcement.
    """

    samples: np.ndarray
    fs: float
    unit: str = ""
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.fs <= 0:
            raise DomainError(f"sample rate must be positive, got {self.fs}")
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise DomainError("samples must be a non-empty 1-D array")

    def __len__(self):
        return self.samples.size

    @property
    def dt(self):
        return 1.0 / self.fs

    @property
    def duration(self):
        return self.samples.size / self.fs

    def times(self):
        return self.t0 + np.arange(self.samples.size) / self.fs

    def with_samples(self, samples, unit=None):
        """New series sharing fs/t0, for unit-preserving transformations."""
        return TimeSeries(samples, self.fs, self.unit if unit is None else unit, self.t0)


@dataclass
class PsdEstimate:
    """One-sided power spectral density with estimator metadata.

    ``flags`` (optional, same length as ``freqs``) marks bins judged
    unreliable: 0 = good, 1 = SNR below one after floor handling,
    2 = clipped negative after floor subtraction.
    """

    freqs: np.ndarray
    values: np.ndarray
    unit: str = ""
    n_segments: int = 1
    window: str = "hann"
    overlap: float = 0.5
    flags: np.ndarray = None
    low_confidence: bool = False

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.freqs.shape != self.values.shape:
            raise DomainError("frequency axis and values must have the same shape")

    def good_bins(self):
        if self.flags is None:
            return np.ones(self.freqs.size, dtype=bool)
        return self.flags == 0

    def band(self, f_lo, f_hi):
        """Boolean mask selecting f_lo <= f <= f_hi; errors on empty bands."""
        mask = (self.freqs >= f_lo) & (self.freqs <= f_hi)
        if not np.any(mask):
            raise DomainError(f"band [{f_lo}, {f_hi}] Hz outside estimate support")
        return mask
