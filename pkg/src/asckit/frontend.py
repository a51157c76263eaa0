"""Spectrogram front-ends: log-mel, constant-Q, and gammatone features.

Each front-end turns a 10 s / 32 kHz clip into a 128-band log spectrogram,
which `stack_3ch` augments with delta and delta-delta channels and
normalizes to a fixed 128 x 305 x 3 tensor.

Conventions shared by all three front-ends:
  * analysis window 2048 samples, hop 1024 samples (where applicable);
  * log compression 10*log10(max(value, 1e-10)), floor -100 dB;
  * the native frame count (311 for STFT-based features without centering,
    312 for hop-integrated gammatone energies) is center-cropped or
    replicate-padded to TARGET_FRAMES at stacking time.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

from .audio import PIPELINE_RATE, AudioClip
from .errors import (
    ClipTooShort,
    InvalidBandRange,
    NyquistExceeded,
    ShapeMismatch,
    TooFewFrames,
)

N_BANDS = 128
TARGET_FRAMES = 305
LOG_FLOOR = 1e-10  # 10*log10(floor) = -100 dB
DELTA_WIDTH = 9

FRONTENDS = ("logmel", "cqt", "gam")

AXIS_NAMES = ("frequency", "time", "channel")


@dataclass
class StftConfig:
    window_len: int = 2048
    hop: int = 1024
    fft_len: int = 2048
    center_pad: bool = False

    def __post_init__(self):
        if self.hop > self.window_len:
            raise ShapeMismatch("hop must not exceed window length")
        if self.fft_len < self.window_len:
            raise ShapeMismatch("fft_len must cover the window")


@dataclass
class FilterBank:
    """Linear frequency-axis transform: 128 band rows over FFT bins."""

    weights: np.ndarray  # [n_bands, n_fft_bins]
    kind: str
    band_centers: np.ndarray  # Hz, strictly increasing

    def __post_init__(self):
        if np.any(np.diff(self.band_centers) <= 0):
            raise InvalidBandRange("band centers must be strictly increasing")
        if self.kind in ("mel", "gammatone") and np.any(self.weights < 0):
            raise InvalidBandRange(f"{self.kind} bank must be nonnegative")
        if np.any(np.abs(self.weights).sum(axis=1) == 0):
            raise InvalidBandRange("every band row needs a nonzero entry")

    @property
    def n_bands(self) -> int:
        return self.weights.shape[0]

    @property
    def n_fft_bins(self) -> int:
        return self.weights.shape[1]


@dataclass
class SpectrogramTensor:
    """Feature block with named axes (frequency, time, channel)."""

    data: np.ndarray  # [F, T, C]
    frontend: str
    axis_names: tuple = AXIS_NAMES

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim == 2:
            self.data = self.data[:, :, None]
        if self.data.ndim != 3:
            raise ShapeMismatch(f"expected F x T x C data, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ShapeMismatch("spectrogram contains non-finite values")

    @property
    def shape(self):
        return self.data.shape


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _frame_signal(x: np.ndarray, window_len: int, hop: int) -> np.ndarray:
    """[T, window_len] view of consecutive hopped frames."""
    if x.size < window_len:
        raise ClipTooShort(
            f"{x.size} samples < one {window_len}-sample analysis window"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, window_len)[::hop]
    return frames


def _log_compress(values: np.ndarray) -> np.ndarray:
    return 10.0 * np.log10(np.maximum(values, LOG_FLOOR))


def stft_power(clip: AudioClip, cfg: StftConfig | None = None) -> SpectrogramTensor:
    """Hann-window power STFT; output [fft_len//2+1, T, 1].

    Frame t covers samples [t*hop, t*hop + window_len); without centering the
    frame count is floor((n - window_len)/hop) + 1.
    """
    cfg = cfg or StftConfig()
    x = clip.samples
    if cfg.center_pad:
        pad = cfg.window_len // 2
        x = np.pad(x, (pad, pad))
    frames = _frame_signal(x, cfg.window_len, cfg.hop)
    win = _hann_periodic(cfg.window_len)
    spec = np.fft.rfft(frames * win, n=cfg.fft_len, axis=1)
    power = (spec.real**2 + spec.imag**2).T  # [F, T]
    return SpectrogramTensor(data=power, frontend="power")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_bands: int = N_BANDS,
    sr: int = PIPELINE_RATE,
    fmin: float = 0.0,
    fmax: float = PIPELINE_RATE / 2,
    n_fft: int = 2048,
) -> FilterBank:
    """Triangular filters with centers uniform on the mel scale.

    Each triangle is area-normalized by 2/(upper_edge - lower_edge) so white
    input yields roughly flat band energies.
    """
    if not (0 <= fmin < fmax <= sr / 2):
        raise InvalidBandRange(f"need 0 <= fmin < fmax <= sr/2, got [{fmin}, {fmax}]")
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_bands + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * sr / n_fft
    weights = np.zeros((n_bands, bin_hz.size))
    for b in range(n_bands):
        lower, center, upper = edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]
        up = (bin_hz - lower) / (center - lower)
        down = (upper - bin_hz) / (upper - center)
        tri = np.maximum(0.0, np.minimum(up, down))
        weights[b] = tri * (2.0 / (upper - lower))
    return FilterBank(weights=weights, kind="mel", band_centers=edges_hz[1:-1])


def log_mel(power_spec: SpectrogramTensor, bank: FilterBank) -> SpectrogramTensor:
    """Apply a filterbank to a power spectrogram and log-compress."""
    power = power_spec.data[:, :, 0]
    if bank.n_fft_bins != power.shape[0]:
        raise ShapeMismatch(
            f"bank has {bank.n_fft_bins} bins, spectrogram has {power.shape[0]}"
        )
    bands = bank.weights @ power
    return SpectrogramTensor(data=_log_compress(bands), frontend="logmel")


def cqt_frequencies(
    n_bins: int = N_BANDS, bins_per_octave: int = 24, fmin: float = 32.7
) -> np.ndarray:
    """Geometrically spaced center frequencies fmin * 2^(k/bpo).

    Split into octave * fractional factors so f[k+bpo]/f[k] == 2 exactly.
    """
    k = np.arange(n_bins)
    frac = np.exp2((k % bins_per_octave) / bins_per_octave)
    return fmin * np.exp2(k // bins_per_octave) * frac


@lru_cache(maxsize=4)
def _cqt_kernels(n_bins, bins_per_octave, fmin, sr):
    """Analysis kernels [n_max, n_bins] split into real and imaginary parts.

    Hann-windowed complex sinusoids of per-bin length round(Q*sr/f_k),
    unit-window-sum normalized, center-aligned in an n_max slab. Stored as
    two contiguous float32 matrices so frame analysis is a pair of GEMMs.
    """
    freqs = cqt_frequencies(n_bins, bins_per_octave, fmin)
    q = 1.0 / (2.0 ** (1.0 / bins_per_octave) - 1.0)
    lengths = np.round(q * sr / freqs).astype(int)
    n_max = int(lengths[0])
    kernels = np.zeros((n_bins, n_max), dtype=np.complex128)
    for k, (f, n_k) in enumerate(zip(freqs, lengths)):
        start = (n_max - n_k) // 2
        win = _hann_periodic(n_k)
        phase = np.exp(-2j * np.pi * f * np.arange(n_k) / sr)
        kernels[k, start : start + n_k] = win * phase / win.sum()
    k_re = np.ascontiguousarray(kernels.real.T, dtype=np.float32)
    k_im = np.ascontiguousarray(kernels.imag.T, dtype=np.float32)
    return freqs, k_re, k_im


def cqt(
    clip: AudioClip,
    n_bins: int = N_BANDS,
    bins_per_octave: int = 24,
    fmin: float = 32.7,
    hop: int = 1024,
) -> SpectrogramTensor:
    """Constant-Q magnitudes (Q = 1/(2^(1/bpo)-1)), log-compressed.

    Frames are centered where the matching STFT frames sit (t*hop + 1024), so
    all front-ends share the native frame count.
    """
    sr = clip.sample_rate
    if fmin * 2.0 ** (n_bins / bins_per_octave) > sr / 2:
        raise NyquistExceeded(
            f"{n_bins} bins from {fmin} Hz at {bins_per_octave}/octave exceed Nyquist"
        )
    freqs, k_re, k_im = _cqt_kernels(n_bins, bins_per_octave, fmin, sr)
    n_frames = (clip.n_samples - 2048) // hop + 1
    if n_frames < 1:
        raise ClipTooShort("clip shorter than one analysis window")
    n_max = k_re.shape[0]
    half = n_max // 2
    padded = np.zeros(clip.n_samples + n_max, dtype=np.float32)
    padded[half : half + clip.n_samples] = clip.samples
    centers = np.arange(n_frames) * hop + 1024
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_max)[centers]
    mags = np.hypot(frames @ k_re, frames @ k_im).T.astype(np.float64)  # [n_bins, T]
    return SpectrogramTensor(data=_log_compress(mags), frontend="cqt")


def erb_bandwidth(f):
    """Equivalent rectangular bandwidth at center frequency f (Hz)."""
    return 24.7 * (4.37 * np.asarray(f, dtype=np.float64) / 1000.0 + 1.0)


def hz_to_erb_rate(f):
    return 21.4 * np.log10(1.0 + 0.00437 * np.asarray(f, dtype=np.float64))


def erb_rate_to_hz(r):
    return (10.0 ** (np.asarray(r, dtype=np.float64) / 21.4) - 1.0) / 0.00437


def erb_centers(n_bands: int = N_BANDS, fmin: float = 50.0, fmax: float = 16000.0):
    """n_bands center frequencies uniform on the ERB-rate scale, inclusive."""
    return erb_rate_to_hz(np.linspace(hz_to_erb_rate(fmin), hz_to_erb_rate(fmax), n_bands))


@lru_cache(maxsize=4)
def _gammatone_sos(n_bands, sr, fmin, fmax):
    """Second-order sections [n_bands, 4, 6] of 4th-order gammatone filters.

    Standard all-pole gammatone approximation: four cascaded biquads per
    band, overall gain normalized to unity at the center frequency.
    """
    cf = erb_centers(n_bands, fmin, fmax)
    t = 1.0 / sr
    b = 1.019 * 2.0 * np.pi * erb_bandwidth(cf)
    arg = 2.0 * cf * np.pi * t
    vec = np.exp(b * t)
    b0, b1, b2 = 1.0, -2.0 * np.cos(arg) / vec, np.exp(-2.0 * b * t)

    r_plus = np.sqrt(3.0 + 2.0**1.5)
    r_minus = np.sqrt(3.0 - 2.0**1.5)
    a1 = [
        -(2.0 * t * np.cos(arg) / vec + s * r * t * np.sin(arg) / vec)
        for s, r in ((1.0, r_plus), (-1.0, r_plus), (1.0, r_minus), (-1.0, r_minus))
    ]

    z = np.exp(4j * cf * np.pi * t)
    w = 2.0 * np.exp(-(b * t) + 2j * cf * np.pi * t) * t
    gain = np.abs(
        (-2.0 * z * t + w * (np.cos(arg) - r_minus * np.sin(arg)))
        * (-2.0 * z * t + w * (np.cos(arg) + r_minus * np.sin(arg)))
        * (-2.0 * z * t + w * (np.cos(arg) - r_plus * np.sin(arg)))
        * (-2.0 * z * t + w * (np.cos(arg) + r_plus * np.sin(arg)))
        / (-2.0 / np.exp(2.0 * b * t) - 2.0 * z + 2.0 * (1.0 + z) / vec) ** 4
    )

    sos = np.zeros((n_bands, 4, 6))
    for i in range(4):
        scale = gain if i == 0 else 1.0
        sos[:, i, 0] = t / scale
        sos[:, i, 1] = a1[i] / scale
        sos[:, i, 2] = 0.0
        sos[:, i, 3] = b0
        sos[:, i, 4] = b1
        sos[:, i, 5] = b2
    return cf, sos


def gammatone(
    clip: AudioClip,
    n_bands: int = N_BANDS,
    fmin: float = 50.0,
    fmax: float = 16000.0,
    hop: int = 1024,
) -> SpectrogramTensor:
    """Gammatone band energies per 1024-sample hop, log-compressed.

    Centers are ERB-rate-uniform on [fmin, fmax]; energy is the mean squared
    filter output over consecutive non-overlapping hop windows.
    """
    cf, sos = _gammatone_sos(n_bands, clip.sample_rate, fmin, fmax)
    n_frames = clip.n_samples // hop
    if n_frames < 1:
        raise ClipTooShort("clip shorter than one hop window")
    usable = n_frames * hop
    energies = np.empty((n_bands, n_frames))
    for band in range(n_bands):
        y = signal.sosfilt(sos[band], clip.samples)
        energies[band] = (y[:usable] ** 2).reshape(n_frames, hop).mean(axis=1)
    return SpectrogramTensor(data=_log_compress(energies), frontend="gam")


def delta(feat: SpectrogramTensor, width: int = DELTA_WIDTH) -> SpectrogramTensor:
    """Regression delta along time with replicate-padded edges.

    d_t = sum_{k=1..K} k*(x_{t+k} - x_{t-k}) / (2*sum k^2), K = width//2.
    """
    if width < 3 or width % 2 == 0:
        raise TooFewFrames(f"width must be odd and >= 3, got {width}")
    x = feat.data
    t_len = x.shape[1]
    if t_len < width:
        raise TooFewFrames(f"{t_len} frames < regression width {width}")
    k_max = width // 2
    denom = 2.0 * sum(k * k for k in range(1, k_max + 1))
    padded = np.pad(x, ((0, 0), (k_max, k_max), (0, 0)), mode="edge")
    out = np.zeros_like(x, dtype=np.float64)
    for k in range(1, k_max + 1):
        out += k * (
            padded[:, k_max + k : k_max + k + t_len]
            - padded[:, k_max - k : k_max - k + t_len]
        )
    return SpectrogramTensor(data=out / denom, frontend=feat.frontend)


def _fit_time_axis(x: np.ndarray, target: int) -> np.ndarray:
    """Center-crop or replicate-pad the time axis (axis 1) to target frames."""
    t_len = x.shape[1]
    if t_len == target:
        return x
    if t_len > target:
        left = (t_len - target) // 2
        return x[:, left : left + target]
    deficit = target - t_len
    left = deficit // 2
    return np.pad(x, ((0, 0), (left, deficit - left), (0, 0)), mode="edge")


def stack_3ch(
    feat: SpectrogramTensor, target_frames: int = TARGET_FRAMES
) -> SpectrogramTensor:
    """Stack [feature, delta, delta-delta] channels and fix T to target_frames."""
    if feat.data.shape[2] != 1:
        raise ShapeMismatch("stacking expects a single-channel spectrogram")
    d1 = delta(feat)
    d2 = delta(d1)
    stacked = np.concatenate([feat.data, d1.data, d2.data], axis=2)
    return SpectrogramTensor(
        data=_fit_time_axis(stacked, target_frames), frontend=feat.frontend
    )


@lru_cache(maxsize=1)
def _default_mel_bank():
    return mel_filterbank()


def extract_frontend(
    clip: AudioClip, frontend: str, target_frames: int = TARGET_FRAMES
) -> SpectrogramTensor:
    """Full front-end: clip -> 128 x target_frames x 3 feature tensor."""
    if frontend == "logmel":
        feat = log_mel(stft_power(clip), _default_mel_bank())
    elif frontend == "cqt":
        feat = cqt(clip)
    elif frontend == "gam":
        feat = gammatone(clip)
    else:
        raise InvalidBandRange(f"unknown frontend {frontend!r}")
    return stack_3ch(feat, target_frames)
