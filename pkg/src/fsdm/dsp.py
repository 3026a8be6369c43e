"""Signal preprocessing pipeline, rate extraction, and degradation.

The pipeline is the same for every signal kind: constant scaling,
linear interpolation across exact-zero (missing) samples, resampling to
128 Hz, fifth-order Butterworth high-/low-pass filtering, restoration
of the missing samples to exact zeros, clipping to [−5, 5], and
zero-padding to a common epoch count.  Cardiac and respiratory kinds
additionally yield an instantaneous rate signal: multi-scale peak
detection, inter-event intervals by sample-and-hold, removal of
biologically implausible intervals, and conversion to events/second.

Filtering is causal single-pass (the label-alignment consequences of a
zero-phase variant are a deliberate non-feature here).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal as sps

from ._kernels import ampd_gamma, ampd_local_maxima

TARGET_FS = 128.0
TARGET_EPOCHS = 1792
CLIP_LO, CLIP_HI = -5.0, 5.0

CARDIAC_INTERVAL_S = (0.3, 2.0)
RESPIRATORY_INTERVAL_S = (1.0, 30.0)
CARDIAC_MAX_SCALE_S = 5.0
RESPIRATORY_MAX_SCALE_S = 60.0

# Kaiser beta 7.0 puts the resampler's stopband past 70 dB.
_KAISER_BETA = 7.0


@dataclass(frozen=True)
class SignalKind:
    name: str
    scale: float
    hp_cutoff: float | None
    lp_cutoff: float | None
    category: str = "other"  # "cardiac" | "respiratory" | "other"
    sample_hold: bool = False

    def __post_init__(self):
        if self.category not in ("cardiac", "respiratory", "other"):
            raise ValueError(f"unknown category {self.category!r}")


# Per-kind scale and filter settings (cutoffs in Hz).
KINDS: dict[str, SignalKind] = {
    k.name: k
    for k in [
        SignalKind("eeg", 1e4, 0.3, 49.0),
        SignalKind("eog", 1e4, 0.3, 49.0),
        SignalKind("emg_chin", 1e4, 10.0, 49.0),
        SignalKind("ecg", 1e3, 0.3, 49.0, category="cardiac"),
        SignalKind("rip_belt", 1e-2, 0.1, 15.0, category="respiratory"),
        SignalKind("thermistor", 1e4, 0.1, 15.0, category="respiratory"),
        SignalKind("nasal_cannula", 1.0, 0.03, 49.0, category="respiratory"),
        SignalKind("pap_flow", 10.0, 0.03, 49.0, category="respiratory"),
        SignalKind("suprasternal_notch", 10.0, 0.03, 49.0, category="respiratory"),
        SignalKind("esophageal_pressure", 1e-1, 0.03, 49.0, category="respiratory"),
        SignalKind("snore_microphone", 1e3, 10.0, 49.0),
        SignalKind("finger_ppg", 1e-2, 0.3, 49.0, category="cardiac"),
        SignalKind("spo2", 1e-2, None, None, sample_hold=True),
        SignalKind("emg_fds", 1e4, 10.0, 49.0),
        SignalKind("emg_leg", 1e4, 10.0, 49.0),
        SignalKind("emg_scm", 1e4, 10.0, 49.0),
        SignalKind("ihr", 1.0 / 60.0, None, None),
        SignalKind("ibr", 1.0 / 60.0, None, None),
    ]
}


@dataclass(frozen=True)
class RawSignal:
    samples: np.ndarray
    fs: float
    kind: SignalKind

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("signal must be a nonempty 1-D array")
        if self.fs <= 0:
            raise ValueError("sampling rate must be positive")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class ProcessedSignal:
    samples: np.ndarray            # at 128 Hz, zero-padded
    valid_epochs: int
    rate: np.ndarray | None        # events/s at 128 Hz, same padding
    missing_indices: np.ndarray    # indices reset to zero, at 128 Hz


def scale_signal(s: np.ndarray, kind: SignalKind) -> np.ndarray:
    return np.asarray(s, dtype=np.float64) * kind.scale


def interpolate_missing(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Replace exact zeros by linear interpolation between nonzero neighbors.

    Leading and trailing zero runs take the nearest nonzero value.  An
    all-zero signal is returned unchanged with the full index set.
    """
    s = np.asarray(s, dtype=np.float64)
    missing = np.flatnonzero(s == 0.0)
    if missing.size == 0:
        return s.copy(), missing
    present = np.flatnonzero(s != 0.0)
    if present.size == 0:
        return s.copy(), missing
    out = s.copy()
    out[missing] = np.interp(missing, present, s[present])
    return out, missing


def design_butterworth(order: int = 5, mode: str = "lowpass",
                       cutoff_hz: float = 49.0, fs: float = TARGET_FS) -> np.ndarray:
    """Second-order-section Butterworth filter; −3 dB at the cutoff."""
    if mode not in ("lowpass", "highpass"):
        raise ValueError("mode must be 'lowpass' or 'highpass'")
    if not 0 < cutoff_hz < fs / 2:
        raise ValueError("cutoff must lie in (0, fs/2)")
    return sps.butter(order, cutoff_hz, btype=mode, fs=fs, output="sos")


def apply_filter(sos: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Causal single-pass filtering."""
    return sps.sosfilt(sos, np.asarray(s, dtype=np.float64))


def _rational_ratio(fs_from: float, fs_to: float) -> tuple[int, int]:
    frac = Fraction(fs_to / fs_from).limit_denominator(10_000)
    if abs(float(frac) - fs_to / fs_from) > 1e-9:
        raise ValueError(f"rate ratio {fs_from} -> {fs_to} is not usably rational")
    return frac.numerator, frac.denominator


def resample(s: np.ndarray, fs_from: float, fs_to: float = TARGET_FS) -> np.ndarray:
    """Polyphase windowed-sinc resampling (Kaiser window)."""
    s = np.asarray(s, dtype=np.float64)
    if fs_from == fs_to:
        return s.copy()
    up, down = _rational_ratio(fs_from, fs_to)
    return sps.resample_poly(s, up, down, window=("kaiser", _KAISER_BETA))


def sample_hold_upsample(s: np.ndarray, fs_from: float, fs_to: float) -> np.ndarray:
    """Repeat each sample fs_to/fs_from times (integer ratio required)."""
    s = np.asarray(s, dtype=np.float64)
    ratio = fs_to / fs_from
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise ValueError("sample-and-hold requires an integer upsampling ratio")
    return np.repeat(s, int(round(ratio)))


def restore_zeros(s: np.ndarray, missing: np.ndarray) -> np.ndarray:
    out = np.asarray(s, dtype=np.float64).copy()
    if missing.size:
        out[missing] = 0.0
    return out


def clip(s: np.ndarray, lo: float = CLIP_LO, hi: float = CLIP_HI) -> np.ndarray:
    return np.clip(np.asarray(s, dtype=np.float64), lo, hi)


def zero_pad(s: np.ndarray, target_epochs: int = TARGET_EPOCHS,
             fs: float = TARGET_FS) -> tuple[np.ndarray, int]:
    """Pad to target_epochs·30·fs samples; returns (padded, valid_epochs).

    valid_epochs counts epochs containing any real data; padding must be
    excluded from every downstream metric.
    """
    s = np.asarray(s, dtype=np.float64)
    epoch_samples = int(round(30 * fs))
    target = target_epochs * epoch_samples
    if s.size > target:
        raise ValueError(f"signal of {s.size} samples exceeds the {target}-sample target")
    valid = int(np.ceil(s.size / epoch_samples))
    out = np.zeros(target)
    out[: s.size] = s
    return out, valid


def _map_missing_indices(missing: np.ndarray, fs_from: float, fs_to: float,
                         n_out: int) -> np.ndarray:
    """Map missing-sample runs proportionally onto the resampled grid."""
    if missing.size == 0:
        return missing
    ratio = fs_to / fs_from
    mapped: list[np.ndarray] = []
    run_start = missing[0]
    prev = missing[0]
    for idx in list(missing[1:]) + [None]:
        if idx is not None and idx == prev + 1:
            prev = idx
            continue
        a = int(round(run_start * ratio))
        b = int(round((prev + 1) * ratio))
        mapped.append(np.arange(max(a, 0), min(b, n_out)))
        if idx is not None:
            run_start = prev = idx
    return np.concatenate(mapped) if mapped else np.array([], dtype=np.int64)


def ampd_peaks(s: np.ndarray, fs: float, window_s: float = 600.0,
               overlap_s: float = 120.0, max_scale_s: float = CARDIAC_MAX_SCALE_S) -> np.ndarray:
    """Automatic multi-scale peak detection over overlapping windows.

    Within each window the scale with the most local maxima is selected
    from the local-maxima scalogram (scales capped at max_scale_s·fs) and
    samples that are maxima at every scale up to it become peaks.  Peaks
    found by more than one window are kept once (earliest detection).
    """
    s = np.asarray(s, dtype=np.float64)
    n = s.size
    window_len = int(round(window_s * fs))
    step = window_len - int(round(overlap_s * fs))
    if step <= 0:
        raise ValueError("window overlap must be smaller than the window")
    starts = [0] if window_len >= n else list(range(0, n - window_len + 1, step))
    if window_len < n and starts[-1] + window_len < n:
        starts.append(n - window_len)
    peaks: set[int] = set()
    for a in starts:
        x = s[a:a + window_len]
        if x.size < 4 or np.all(x == x[0]):
            continue
        max_scale = min(int(round(max_scale_s * fs)), (x.size - 1) // 2)
        if max_scale < 1:
            continue
        gamma = ampd_gamma(x, max_scale)
        lam = int(np.argmin(gamma)) + 1
        mask = ampd_local_maxima(x, lam)
        peaks.update((a + np.flatnonzero(mask)).tolist())
    return np.array(sorted(peaks), dtype=np.int64)


def peaks_to_rate(peaks: np.ndarray, fs: float, category: str,
                  n_out: int | None = None, fs_out: float = TARGET_FS) -> np.ndarray:
    """Convert peak indices to an events/second signal at 128 Hz.

    Intervals outside the plausible range (cardiac [0.3, 2] s,
    respiratory [1, 30] s) hold the previous valid value; invalid
    intervals before the first valid one take the first valid value.
    """
    peaks = np.asarray(peaks, dtype=np.int64)
    if peaks.size < 2:
        raise ValueError("rate extraction requires at least 2 peaks")
    if category == "cardiac":
        lo, hi = CARDIAC_INTERVAL_S
    elif category == "respiratory":
        lo, hi = RESPIRATORY_INTERVAL_S
    else:
        raise ValueError(f"no interval validity range for category {category!r}")
    intervals = np.diff(peaks) / fs
    valid = (intervals >= lo) & (intervals <= hi)
    if not np.any(valid):
        raise ValueError("no biologically plausible intervals found")
    rates = 1.0 / intervals  # (60/interval) bpm scaled by 1/60
    filled = np.empty_like(rates)
    last = rates[np.flatnonzero(valid)[0]]
    for i in range(rates.size):
        if valid[i]:
            last = rates[i]
        filled[i] = last
    if n_out is None:
        n_out = int(np.ceil((peaks[-1] + 1) / fs * fs_out))
    bounds = np.round(peaks / fs * fs_out).astype(np.int64)
    bounds = np.clip(bounds, 0, n_out)
    out = np.empty(n_out)
    out[: bounds[0]] = filled[0]
    for i in range(filled.size):
        hi_idx = bounds[i + 1] if i + 1 < bounds.size else n_out
        out[bounds[i]:hi_idx] = filled[i]
    if bounds[-1] < n_out:
        out[bounds[-1]:] = filled[-1]
    return out


@dataclass(frozen=True)
class ZeroSpan:
    start_frac: float
    end_frac: float

    def __post_init__(self):
        if not (0 <= self.start_frac <= self.end_frac <= 1):
            raise ValueError("need 0 <= start_frac <= end_frac <= 1")


@dataclass(frozen=True)
class Awgn:
    snr_db: float


def degrade(s: np.ndarray, mode: ZeroSpan | Awgn, seed) -> np.ndarray:
    """Blank a span or add Gaussian noise at a target SNR (reproducible).

    The noise realization depends only on (seed, length), so sweeping
    the SNR with a fixed seed rescales one realization.
    """
    s = np.asarray(s, dtype=np.float64).copy()
    if isinstance(mode, ZeroSpan):
        a = int(round(mode.start_frac * s.size))
        b = int(round(mode.end_frac * s.size))
        s[a:b] = 0.0
        return s
    if isinstance(mode, Awgn):
        rng = np.random.default_rng(seed)
        power = float(np.mean(s * s))
        noise_sd = np.sqrt(power / 10.0 ** (mode.snr_db / 10.0))
        return s + noise_sd * rng.standard_normal(s.size)
    raise TypeError(f"unknown degradation mode {mode!r}")


def preprocess(raw: RawSignal, target_epochs: int = TARGET_EPOCHS) -> ProcessedSignal:
    """Full pipeline; cardiac/respiratory kinds also yield a rate signal."""
    kind = raw.kind
    s = scale_signal(raw.samples, kind)
    s, missing = interpolate_missing(s)
    if raw.fs != TARGET_FS:
        if kind.sample_hold:
            s = sample_hold_upsample(s, raw.fs, TARGET_FS)
        else:
            s = resample(s, raw.fs, TARGET_FS)
    if kind.hp_cutoff is not None:
        s = apply_filter(design_butterworth(5, "highpass", kind.hp_cutoff, TARGET_FS), s)
    if kind.lp_cutoff is not None:
        s = apply_filter(design_butterworth(5, "lowpass", kind.lp_cutoff, TARGET_FS), s)
    mapped = _map_missing_indices(missing, raw.fs, TARGET_FS, s.size)
    s = restore_zeros(s, mapped)
    s = clip(s)
    rate = None
    if kind.category in ("cardiac", "respiratory"):
        max_scale = (
            CARDIAC_MAX_SCALE_S if kind.category == "cardiac" else RESPIRATORY_MAX_SCALE_S
        )
        try:
            peaks = ampd_peaks(s, TARGET_FS, max_scale_s=max_scale)
            rate = peaks_to_rate(peaks, TARGET_FS, kind.category, n_out=s.size)
        except ValueError:
            rate = np.zeros(s.size)
        rate, _ = zero_pad(rate, target_epochs, TARGET_FS)
    s, valid = zero_pad(s, target_epochs, TARGET_FS)
    return ProcessedSignal(samples=s, valid_epochs=valid, rate=rate, missing_indices=mapped)


def epoch_rate_features(s: np.ndarray, fs: float, category: str, n_epochs: int,
                        missing_frac: float = 0.5) -> np.ndarray:
    """Per-epoch mean extracted rate; NaN marks missing/unusable epochs.

    An epoch is missing when more than missing_frac of its raw samples
    are exact zeros (the pipeline's missing-data convention); when peak
    or interval extraction fails outright every epoch is missing.
    """
    s = np.asarray(s, dtype=np.float64)
    max_scale = CARDIAC_MAX_SCALE_S if category == "cardiac" else RESPIRATORY_MAX_SCALE_S
    rate = None
    try:
        peaks = ampd_peaks(s, fs, max_scale_s=max_scale)
        rate = peaks_to_rate(
            peaks, fs, category, n_out=int(round(s.size / fs * TARGET_FS))
        )
    except ValueError:
        rate = None
    feats = np.full(n_epochs, np.nan)
    in_epoch = int(round(30 * fs))
    out_epoch = int(round(30 * TARGET_FS))
    for e in range(n_epochs):
        raw_ep = s[e * in_epoch:(e + 1) * in_epoch]
        if raw_ep.size == 0 or np.mean(raw_ep == 0.0) > missing_frac:
            continue
        if rate is None:
            continue
        seg = rate[e * out_epoch:(e + 1) * out_epoch]
        if seg.size:
            feats[e] = float(seg.mean())
    return feats


# -- raw float32 file format -------------------------------------------------


def write_signal_f32(path, samples: np.ndarray) -> None:
    np.asarray(samples, dtype="<f4").tofile(path)


def read_signal_f32(path) -> np.ndarray:
    return np.fromfile(path, dtype="<f4").astype(np.float64)


def read_signal_csv(path) -> np.ndarray:
    """Single-column CSV; a non-numeric first line is treated as a header."""
    values = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                if values:
                    raise
    return np.array(values, dtype=np.float64)
