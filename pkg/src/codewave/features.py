"""Reduce an arbitrary-length signal to a fixed-length feature vector.

Three extractors: averaged FFT magnitude spectrum, linear-prediction
coefficients, and min-max summary statistics. Whatever the input length
(including zero), each extractor returns exactly `d` finite values, so
vectors from different files are always comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .loader import Signal


@dataclass
class FeatureVector:
    values: np.ndarray
    extractor: str  # fft | lpc | minmax

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature vector contains non-finite values")

    @property
    def d(self) -> int:
        return len(self.values)


def extract_fft(signal: Signal, window: int = 1024, d: int = 512) -> FeatureVector:
    """Mean magnitude spectrum over non-overlapping windows.

    The signal is cut into windows of `window` samples (the last one
    zero-padded; an empty signal counts as one all-zero window), each is
    transformed, and the first `d` of the lower window/2 magnitude bins are
    averaged element-wise across windows.
    """
    if d > window // 2:
        raise ConfigError(f"d={d} exceeds window/2={window // 2}")
    x = signal.samples
    n_windows = max(1, -(-len(x) // window))
    padded = np.zeros(n_windows * window, dtype=np.float64)
    padded[: len(x)] = x
    frames = padded.reshape(n_windows, window)
    magnitudes = np.abs(np.fft.rfft(frames, axis=1))[:, : window // 2]
    return FeatureVector(magnitudes.mean(axis=0)[:d], "fft")


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelation lags 0..max_lag of the whole signal (unnormalized)."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    r = np.zeros(max_lag + 1, dtype=np.float64)
    for lag in range(min(max_lag + 1, n)):
        r[lag] = np.dot(x[: n - lag], x[lag:])
    return r


def levinson_durbin(r: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Solve the Toeplitz normal equations by the Levinson-Durbin recursion.

    Returns (a, k): prediction coefficients in the x[n] ~ sum a_j x[n-j]
    convention, and the reflection coefficients of each stage. A zero-energy
    input (r[0] == 0) yields all-zero coefficients by definition.
    """
    r = np.asarray(r, dtype=np.float64)
    a = np.zeros(order, dtype=np.float64)
    k = np.zeros(order, dtype=np.float64)
    if r[0] == 0.0:
        return a, k
    # `poly` holds the error-filter coefficients [1, -a_1, ..., -a_m].
    poly = np.zeros(order + 1, dtype=np.float64)
    poly[0] = 1.0
    err = r[0]
    for m in range(1, order + 1):
        acc = r[m] + np.dot(poly[1:m], r[m - 1:0:-1])
        if err == 0.0:
            break  # perfectly predictable already; higher coefficients stay 0
        ref = -acc / err
        k[m - 1] = ref
        poly[1:m + 1] += ref * poly[m - 1::-1][:m]
        err *= 1.0 - ref * ref
        if not np.isfinite(err):
            raise ArithmeticError("Levinson-Durbin recursion diverged")
    if not np.all(np.isfinite(poly)):
        raise ArithmeticError("Levinson-Durbin produced non-finite coefficients")
    a[:] = -poly[1:]
    return a, k


def extract_lpc(signal: Signal, order: int = 20, d: int | None = None) -> FeatureVector:
    """Linear-prediction coefficients by the autocorrelation method."""
    if order < 1:
        raise ConfigError("lpc order must be >= 1")
    if d is None:
        d = order
    r = autocorrelation(signal.samples, order)
    a, _ = levinson_durbin(r, order)
    values = np.zeros(d, dtype=np.float64)
    values[: min(d, order)] = a[: min(d, order)]
    return FeatureVector(values, "lpc")


def extract_minmax(signal: Signal, d: int = 4) -> FeatureVector:
    """[min, max] for d=2, [min, max, mean, rms] for d=4; zeros when empty."""
    if d not in (2, 4):
        raise ConfigError("minmax supports d=2 or d=4")
    x = signal.samples
    if len(x) == 0:
        return FeatureVector(np.zeros(d), "minmax")
    stats = [float(np.min(x)), float(np.max(x))]
    if d == 4:
        stats += [float(np.mean(x)), float(np.sqrt(np.mean(x * x)))]
    return FeatureVector(np.array(stats), "minmax")
