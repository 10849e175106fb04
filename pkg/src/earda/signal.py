"""Signal conditioning for 6-axis inertial streams.

Converts raw accelerometer/gyroscope series into the 2-channel magnitude
representation consumed by the sequence model: magnitude, gravity
normalization, zero-phase low-pass filtering, rate conversion, windowing
and amplitude spectra. All functions are pure and operate on numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

STANDARD_GRAVITY = 9.80665  # m/s^2

LOCATIONS = ("head", "pocket", "waist", "arm", "belt", "wrist")
ACCEL_UNITS = ("ms2", "g")


class LengthError(ValueError):
    """Series too short for an operation, or axis lengths disagree."""


class UnitError(ValueError):
    """Unknown or inconsistent physical unit tag."""


class FilterSpecError(ValueError):
    """Filter specification invalid for the sampling rate it is applied at."""


@dataclass
class FilterSpec:
    """Low-pass filter description: cutoff in Hz, Butterworth order, phase mode."""

    cutoff_hz: float
    order: int = 4
    zero_phase: bool = True

    def __post_init__(self):
        if self.cutoff_hz <= 0:
            raise FilterSpecError(f"cutoff must be positive, got {self.cutoff_hz}")
        if self.order < 1:
            raise FilterSpecError(f"order must be >= 1, got {self.order}")

    def validate_rate(self, rate_hz: float) -> None:
        if self.cutoff_hz >= rate_hz / 2.0:
            raise FilterSpecError(
                f"cutoff {self.cutoff_hz} Hz is not below the Nyquist "
                f"frequency {rate_hz / 2.0} Hz"
            )


@dataclass
class Spectrum:
    """One-sided amplitude spectrum: frequency bins and non-negative magnitudes."""

    freqs: np.ndarray
    magnitudes: np.ndarray

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=np.float64)
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        if self.freqs.shape != self.magnitudes.shape:
            raise LengthError("freqs and magnitudes must have equal length")
        if self.freqs.size and self.freqs[0] != 0.0:
            raise ValueError("spectrum must start at the DC bin")


@dataclass
class RawRecording:
    """Timestamped 6-axis inertial stream with unit tags and annotations.

    accel/gyro are (n, 3) arrays; accel is in m/s^2 or multiples of standard
    gravity, selected by accel_unit ('ms2' or 'g'); gyro is in rad/s.
    activity/head_movement, when present, annotate every sample with strings
    from the canonical vocabulary.
    """

    timestamps: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray
    rate_hz: float
    location: str
    accel_unit: str = "ms2"
    activity: np.ndarray | None = None
    head_movement: np.ndarray | None = None
    origin: str = field(default="")

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.accel = np.asarray(self.accel, dtype=np.float64)
        self.gyro = np.asarray(self.gyro, dtype=np.float64)
        n = self.timestamps.shape[0]
        if self.accel.shape != (n, 3) or self.gyro.shape != (n, 3):
            raise LengthError(
                f"accel {self.accel.shape} and gyro {self.gyro.shape} must both "
                f"be ({n}, 3) to match {n} timestamps"
            )
        for name in ("activity", "head_movement"):
            ann = getattr(self, name)
            if ann is not None:
                ann = np.asarray(ann, dtype=object)
                if ann.shape[0] != n:
                    raise LengthError(f"{name} annotation length != {n}")
                setattr(self, name, ann)
        if self.rate_hz <= 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if self.location not in LOCATIONS:
            raise ValueError(f"unknown sensor location {self.location!r}")
        if self.accel_unit not in ACCEL_UNITS:
            raise UnitError(f"accel unit must be one of {ACCEL_UNITS}, got {self.accel_unit!r}")

    def __len__(self) -> int:
        return self.timestamps.shape[0]


@dataclass
class WindowPayload:
    """One fixed-length segment plus the annotations it inherited."""

    data: np.ndarray  # (length, channels)
    activity: str | None = None
    head_movement: str | None = None


def magnitude(x, y, z) -> np.ndarray:
    """Euclidean norm per sample of three axis series.

    The magnitude abstracts away device orientation: it is invariant under
    any rotation of the sensor frame.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if not (x.shape == y.shape == z.shape):
        raise LengthError(
            f"axis lengths disagree: {x.shape}, {y.shape}, {z.shape}"
        )
    return np.sqrt(x * x + y * y + z * z)


def normalize_gravity(series, unit: str) -> np.ndarray:
    """Convert an acceleration-magnitude series to multiples of g.

    Series tagged 'ms2' are divided by standard gravity (9.80665 m/s^2);
    series already tagged 'g' pass through unchanged.
    """
    series = np.asarray(series, dtype=np.float64)
    if unit == "g":
        return series
    if unit == "ms2":
        return series / STANDARD_GRAVITY
    raise UnitError(f"unknown acceleration unit {unit!r}")


def low_pass(series, spec: FilterSpec, rate_hz: float) -> np.ndarray:
    """Butterworth low-pass a scalar series.

    Args:
        series: input samples, length > 3 * spec.order.
        spec: cutoff/order/phase description; cutoff must lie below Nyquist.
        rate_hz: sampling rate of the series.

    Returns:
        Filtered series of the same length. With zero_phase the filter runs
        forward then backward, so in-band components keep their alignment and
        the effective magnitude response is the squared single-pass response.
    """
    spec.validate_rate(rate_hz)
    series = np.asarray(series, dtype=np.float64)
    pad = 3 * spec.order
    if series.shape[0] <= pad:
        raise LengthError(
            f"series of length {series.shape[0]} is too short for "
            f"order-{spec.order} filtering (needs > {pad} samples)"
        )
    sos = sps.butter(spec.order, spec.cutoff_hz, btype="low", fs=rate_hz, output="sos")
    # Odd (point-symmetric) reflection keeps the first derivative continuous
    # at the boundaries; step-matched initial state makes constants exact.
    padded = np.pad(series, pad, mode="reflect", reflect_type="odd")
    zi = sps.sosfilt_zi(sos)
    out, _ = sps.sosfilt(sos, padded, zi=zi * padded[0])
    if spec.zero_phase:
        out, _ = sps.sosfilt(sos, out[::-1], zi=zi * out[-1])
        out = out[::-1]
    return out[pad:-pad]


def resample(series, from_hz: float, to_hz: float) -> np.ndarray:
    """Convert a series to a new sampling rate via linear interpolation.

    Down-sampling first applies an anti-alias zero-phase low-pass at
    0.45 * to_hz. Output length is floor(len * to_hz / from_hz), so the
    output covers the input duration to within one sample period.
    """
    if from_hz <= 0 or to_hz <= 0:
        raise ValueError("sampling rates must be positive")
    series = np.asarray(series, dtype=np.float64)
    n = series.shape[0]
    if n == 0:
        return series.copy()
    if to_hz == from_hz:
        return series.copy()
    if to_hz < from_hz:
        spec = FilterSpec(cutoff_hz=0.45 * to_hz, order=4, zero_phase=True)
        if n > 3 * spec.order:  # too-short series go through unfiltered
            series = low_pass(series, spec, from_hz)
    n_out = int(np.floor(n * to_hz / from_hz))
    t_in = np.arange(n) / from_hz
    t_out = np.arange(n_out) / to_hz
    return np.interp(t_out, t_in, series)


def window(channels, length: int, activity=None, head_movement=None) -> list[WindowPayload]:
    """Cut a multi-channel series into consecutive non-overlapping windows.

    A trailing remainder shorter than `length` is dropped. Windows whose
    samples mix more than one activity annotation are dropped; head-movement
    annotations resolve by majority (earliest-seen condition wins ties).
    """
    if length <= 0:
        raise ValueError(f"window length must be positive, got {length}")
    channels = np.asarray(channels, dtype=np.float64)
    if channels.ndim == 1:
        channels = channels[:, None]
    n = channels.shape[0]
    out: list[WindowPayload] = []
    for k in range(n // length):
        lo, hi = k * length, (k + 1) * length
        act = None
        if activity is not None:
            seen = list(dict.fromkeys(activity[lo:hi]))
            if len(seen) > 1:
                continue
            act = seen[0]
        head = None
        if head_movement is not None:
            counts: dict = {}
            for tag in head_movement[lo:hi]:
                counts[tag] = counts.get(tag, 0) + 1
            head = max(counts, key=counts.get)
        out.append(WindowPayload(data=channels[lo:hi].copy(), activity=act, head_movement=head))
    return out


def spectrum(series, rate_hz: float) -> Spectrum:
    """One-sided amplitude spectrum of the mean-removed series.

    Bins span 0 .. rate_hz/2; magnitudes are scaled so a unit-amplitude
    sinusoid at a bin frequency reads close to 1.0.
    """
    series = np.asarray(series, dtype=np.float64)
    n = series.shape[0]
    if n < 8:
        raise LengthError(f"spectrum needs at least 8 samples, got {n}")
    demeaned = series - series.mean()
    mags = np.abs(np.fft.rfft(demeaned)) / n
    mags[1:] *= 2.0
    if n % 2 == 0:
        mags[-1] /= 2.0  # Nyquist bin is not mirrored
    freqs = np.fft.rfftfreq(n, d=1.0 / rate_hz)
    return Spectrum(freqs=freqs, magnitudes=mags)
