"""FFT-based complex Morlet continuous wavelet transform with edge padding."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

MIN_LENGTH = 32
PAD_MODES = {"antisymmetric": ("reflect", "odd"), "reflection": ("reflect", "even"), "zero": ("constant", None)}


def frequency_grid(fmin=1.0, fmax=40.0, n=201, spacing="log"):
    if not 0 < fmin < fmax:
        raise ValueError("need 0 < fmin < fmax")
    if spacing == "log":
        return np.geomspace(fmin, fmax, n)
    if spacing == "linear":
        return np.linspace(fmin, fmax, n)
    raise ValueError(f"spacing must be 'log' or 'linear', got {spacing!r}")


@dataclass(frozen=True)
class MorletParams:
    """Wavelet settings.

    ``normalization="amplitude"`` scales each scale so that a unit-amplitude tone
    yields a unit ridge; ``"l2"`` applies the energy-preserving ``sqrt(scale)``
    factor instead.
    """

    omega0: float = 6.0
    frequencies: np.ndarray = field(default_factory=frequency_grid)
    padding_fraction: float = 0.5
    padding_mode: str = "antisymmetric"
    normalization: str = "amplitude"

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=float).ravel()
        if self.omega0 < 5:
            raise ValueError("omega0 must be >= 5 for approximate admissibility")
        if freqs.size == 0 or np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
            raise ValueError("frequency grid must be positive and strictly increasing")
        if self.padding_mode not in PAD_MODES:
            raise ValueError(f"padding_mode must be one of {sorted(PAD_MODES)}")
        if self.padding_fraction < 0:
            raise ValueError("padding_fraction must be nonnegative")
        if self.normalization not in ("amplitude", "l2"):
            raise ValueError("normalization must be 'amplitude' or 'l2'")
        freqs.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)

    def __eq__(self, other):
        if not isinstance(other, MorletParams):
            return NotImplemented
        return (self.omega0 == other.omega0 and np.array_equal(self.frequencies, other.frequencies)
                and self.padding_fraction == other.padding_fraction
                and self.padding_mode == other.padding_mode and self.normalization == other.normalization)

    __hash__ = None


@dataclass
class TimeFrequencyMap:
    coefficients: np.ndarray  # complex, (n_freq, n_time)
    times: np.ndarray
    frequencies: np.ndarray
    scan_id: str | None = None

    def __post_init__(self):
        if self.coefficients.shape != (self.frequencies.size, self.times.size):
            raise ValueError("coefficient matrix does not match the grids")

    @property
    def magnitude(self):
        return np.abs(self.coefficients)


def pad_signal(signal, params=None):
    """Pad ``ceil(padding_fraction * N)`` samples per side.

    Antisymmetric reflection continues the signal as ``s[-k] = 2 s[0] - s[k]``.
    Returns the padded signal and ``(n_left, n_right)``.
    """
    params = params or MorletParams()
    s = np.asarray(signal, dtype=float)
    if s.ndim != 1 or s.size < MIN_LENGTH:
        raise ValueError(f"signal must be 1-D with at least {MIN_LENGTH} samples")
    p = int(np.ceil(params.padding_fraction * s.size))
    p = min(p, s.size - 1)
    if p == 0:
        return s.copy(), (0, 0)
    mode, rtype = PAD_MODES[params.padding_mode]
    if rtype is None:
        return np.pad(s, p, mode=mode), (p, p)
    return np.pad(s, p, mode=mode, reflect_type=rtype), (p, p)


@lru_cache(maxsize=8)
def _filter_bank(nfft, fs, omega0, freq_bytes, normalization):
    """Normalized daughter-wavelet spectra, one row per target frequency."""
    freqs = np.frombuffer(freq_bytes)
    omega = 2 * np.pi * sfft.fftfreq(nfft, d=1.0 / fs)
    scales = omega0 / (2 * np.pi * freqs)
    if normalization == "amplitude":
        norm = np.full(scales.shape, 2 * np.pi ** 0.25)
    else:
        norm = np.sqrt(2 * np.pi * scales * fs)
    bank = np.pi ** -0.25 * np.exp(-0.5 * (scales[:, None] * omega[None, :] - omega0) ** 2)
    bank[:, omega <= 0] = 0.0
    bank *= norm[:, None]
    bank.setflags(write=False)
    return bank


def cwt(signal, fs, params=None, t0=0.0, scan_id=None, chunk=32):
    """Continuous wavelet transform of a uniformly sampled signal.

    Scale for target frequency ``f`` is ``omega0 / (2 pi f)``. The padded region is
    trimmed from the returned coefficients.
    """
    params = params or MorletParams()
    freqs = params.frequencies
    if freqs[-1] >= fs / 2:
        raise ValueError(f"grid frequency {freqs[-1]} Hz is at or above Nyquist ({fs / 2} Hz)")
    s = np.asarray(signal, dtype=float)
    padded, (left, _) = pad_signal(s, params)
    n = s.size
    nfft = sfft.next_fast_len(padded.size)
    spec = sfft.fft(padded, nfft)
    bank = _filter_bank(nfft, float(fs), float(params.omega0), freqs.tobytes(), params.normalization)
    coeffs = np.empty((freqs.size, n), dtype=complex)
    for start in range(0, freqs.size, chunk):
        sl = slice(start, start + chunk)
        rows = sfft.ifft(spec[None, :] * bank[sl], axis=1)
        coeffs[sl] = rows[:, left:left + n]
    times = t0 + np.arange(n) / fs
    return TimeFrequencyMap(coeffs, times, freqs.copy(), scan_id)
