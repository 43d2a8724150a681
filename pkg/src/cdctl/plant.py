"""Scalar actuator dynamics, frequency responses and zero-order-hold sampling."""

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import ImproperSystem, NonIntegerDelay, PoleOnGrid


def _strip_leading_zeros(c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:]


@dataclass(frozen=True)
class ScalarTransferFunction:
    """Proper rational transfer function in s with an optional pure delay.

    Coefficients are in descending powers of s; the denominator is normalized
    to a unit leading coefficient on construction.
    """

    num: np.ndarray
    den: np.ndarray
    delay_s: float = 0.0

    def __post_init__(self):
        num = _strip_leading_zeros(self.num)
        den = _strip_leading_zeros(self.den)
        if not np.any(den):
            raise ImproperSystem("denominator is zero")
        if len(num) > len(den):
            raise ImproperSystem(
                f"numerator degree {len(num) - 1} exceeds denominator degree {len(den) - 1}"
            )
        if self.delay_s < 0:
            raise ValueError("delay must be nonnegative")
        num = num / den[0]
        den = den / den[0]
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        object.__setattr__(self, "delay_s", float(self.delay_s))

    def freq_response(self, omega):
        return freq_response(self, omega)

    def dc_gain(self):
        """Gain at s = 0; inf when the denominator constant term vanishes."""
        if self.den[-1] == 0.0:
            return np.inf if self.num[-1] != 0.0 else np.nan
        return float(self.num[-1] / self.den[-1])

    def is_strictly_proper(self):
        return len(self.num) < len(self.den)

    def to_obj(self):
        return {
            "num": [float(v) for v in self.num],
            "den": [float(v) for v in self.den],
            "delay_s": self.delay_s,
        }

    @classmethod
    def from_obj(cls, obj):
        return cls(num=np.asarray(obj["num"]), den=np.asarray(obj["den"]),
                   delay_s=float(obj.get("delay_s", 0.0)))


def actuator_lag(bandwidth_rad_s, delay_s=0.0) -> ScalarTransferFunction:
    """First-order actuator model a/(s+a) with a transport delay."""
    a = float(bandwidth_rad_s)
    if a <= 0:
        raise ValueError("actuator bandwidth must be positive")
    return ScalarTransferFunction(num=[a], den=[1.0, a], delay_s=delay_s)


def freq_response(tf: ScalarTransferFunction, omega):
    """Evaluate N(jw)/D(jw) * exp(-jw*delay) at scalar or array omega."""
    omega = np.asarray(omega, dtype=float)
    s = 1j * omega
    den = np.polyval(tf.den, s)
    if np.any(np.abs(den) < 1e-300):
        w_bad = omega.ravel()[np.argmin(np.abs(np.atleast_1d(den)))]
        raise PoleOnGrid(f"denominator vanishes at omega={w_bad!r} rad/s")
    h = np.polyval(tf.num, s) / den * np.exp(-s * tf.delay_s)
    return complex(h) if omega.ndim == 0 else h


@dataclass(frozen=True)
class DiscreteFilter:
    """Rational filter in z^-1 with an integer output delay at rate fs_hz.

    ``num`` and ``den`` are equal-length coefficient arrays in ascending
    powers of z^-1 with den[0] normalized to 1.
    """

    num: np.ndarray
    den: np.ndarray
    fs_hz: float
    delay_samples: int = 0

    def __post_init__(self):
        num = np.atleast_1d(np.asarray(self.num, dtype=float))
        den = np.atleast_1d(np.asarray(self.den, dtype=float))
        if den[0] == 0.0:
            raise ImproperSystem("discrete denominator constant term must be nonzero")
        n = max(len(num), len(den))
        num = np.pad(num / den[0], (0, n - len(num)))
        den = np.pad(den / den[0], (0, n - len(den)))
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        object.__setattr__(self, "fs_hz", float(self.fs_hz))
        object.__setattr__(self, "delay_samples", int(self.delay_samples))

    @property
    def order(self):
        return len(self.den) - 1

    def is_strictly_proper(self):
        return self.num[0] == 0.0

    def freq_response(self, omega):
        """Response at z = exp(j*omega/fs), including the sample delay."""
        omega = np.asarray(omega, dtype=float)
        zinv = np.exp(-1j * omega / self.fs_hz)
        h = (np.polyval(self.num[::-1], zinv) / np.polyval(self.den[::-1], zinv)
             * zinv**self.delay_samples)
        return complex(h) if omega.ndim == 0 else h

    def dc_gain(self):
        return float(np.sum(self.num) / np.sum(self.den))

    def to_obj(self):
        return {
            "num": [float(v) for v in self.num],
            "den": [float(v) for v in self.den],
            "fs_hz": self.fs_hz,
            "delay_samples": self.delay_samples,
        }

    @classmethod
    def from_obj(cls, obj):
        return cls(num=np.asarray(obj["num"]), den=np.asarray(obj["den"]),
                   fs_hz=float(obj["fs_hz"]), delay_samples=int(obj["delay_samples"]))


def zoh_discretize(tf: ScalarTransferFunction, fs_hz) -> DiscreteFilter:
    """Exact zero-order-hold equivalent of the rational part plus sample delay.

    The transport delay must be an integer number of samples at fs_hz; the DC
    gain of the rational part is preserved exactly.
    """
    fs_hz = float(fs_hz)
    if fs_hz <= 0:
        raise ValueError("sample rate must be positive")
    ticks = tf.delay_s * fs_hz
    delay_samples = int(round(ticks))
    if abs(ticks - delay_samples) > 1e-9:
        raise NonIntegerDelay(
            f"delay {tf.delay_s} s is {ticks} samples at {fs_hz} Hz; not integral"
        )
    if len(tf.den) == 1:
        # static gain
        return DiscreteFilter(num=[tf.num[-1]], den=[1.0], fs_hz=fs_hz,
                              delay_samples=delay_samples)
    bz, az, _ = signal.cont2discrete((tf.num, tf.den), 1.0 / fs_hz, method="zoh")
    return DiscreteFilter(num=np.atleast_1d(bz.ravel()), den=np.atleast_1d(az.ravel()),
                          fs_hz=fs_hz, delay_samples=delay_samples)


def apply_filter(filt: DiscreteFilter, x) -> np.ndarray:
    """Causal direct-form filtering with zero initial conditions.

    Accepts a 1-D sequence or an (n_ch, N) array; the delay shifts the output
    within the window, padding with zeros at the front.
    """
    x = np.asarray(x, dtype=float)
    y = signal.lfilter(filt.num, filt.den, x, axis=-1)
    d = filt.delay_samples
    if d:
        y = np.concatenate([np.zeros(y.shape[:-1] + (d,)), y[..., :-d] if d <= y.shape[-1] else y[..., :0]], axis=-1)
        y = y[..., : x.shape[-1]]
    return y


class MultiChannelFilter:
    """One scalar DiscreteFilter run in parallel over n channels, sample by sample.

    Direct-form-II-transposed recursion plus a circular delay line.  For
    filters with at least one sample of inherent delay (strictly proper or
    delay_samples >= 1), ``peek`` returns the current-step output before the
    current input is known, which is what breaks the algebraic loop in the
    closed-loop simulator; ``push`` then advances the state.
    """

    def __init__(self, filt: DiscreteFilter, n_channels: int):
        self.filt = filt
        self.b = filt.num
        self.a = filt.den
        self.order = filt.order
        self.z = np.zeros((max(self.order, 1), n_channels))
        self.delay = filt.delay_samples
        self.buf = np.zeros((self.delay, n_channels)) if self.delay else None
        self.ptr = 0

    def has_inherent_delay(self):
        return self.delay >= 1 or self.filt.is_strictly_proper()

    def peek(self):
        """Output of the current step, before the current input arrives."""
        if self.delay:
            return self.buf[self.ptr].copy()
        if not self.filt.is_strictly_proper():
            raise ValueError("peek undefined: filter has direct feedthrough and no delay")
        return self.z[0].copy()

    def push(self, u):
        """Feed the current input; returns this step's (post-delay) output."""
        u = np.asarray(u, dtype=float)
        if self.order:
            y = self.b[0] * u + self.z[0]
            self.z[:-1] = self.z[1:]
            self.z[-1] = 0.0
            self.z += np.outer(self.b[1:], u) - np.outer(self.a[1:], y)
        else:
            y = self.b[0] * u
        if self.delay:
            out = self.buf[self.ptr].copy()
            self.buf[self.ptr] = y
            self.ptr = (self.ptr + 1) % self.delay
            return out
        return y

    def step(self, u):
        """Single-call push returning the current-step output."""
        return self.push(u)
