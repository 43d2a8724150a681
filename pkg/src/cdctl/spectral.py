"""Amplitude spectral density, Welch averaging and integrated motion curves.

The one-sided ASD is normalized so that the cumulative curve closes Parseval:
D_k = sqrt(2/(f_s N)) |X_k| on interior bins, with the DC and Nyquist bins
carrying sqrt(1/(f_s N)) (counted once).  The integrated motion at Nyquist
then equals the RMS of the mean-removed signal.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadSegmentation, EmptySignal


@dataclass(frozen=True)
class SpectrumSet:
    """One-sided per-channel amplitude spectral density.

    ``values[c, k]`` is channel c at frequency ``freq_hz[k] = k f_s / N`` in
    signal-units per sqrt(Hz); ``n_samples`` is the per-segment length that
    sets the bin width.
    """

    freq_hz: np.ndarray
    values: np.ndarray
    f_s: float
    n_samples: int
    n_segments: int = 1

    @property
    def n_channels(self):
        return self.values.shape[0]

    def bin_width(self):
        return self.f_s / self.n_samples


def _asd_segment(x, f_s):
    """One-sided ASD of one (n_ch, N) block with per-bin Parseval factors."""
    n = x.shape[-1]
    spec = np.abs(np.fft.rfft(x, axis=-1))
    scale = np.full(spec.shape[-1], np.sqrt(2.0 / (f_s * n)))
    scale[0] = np.sqrt(1.0 / (f_s * n))
    if n % 2 == 0:
        scale[-1] = np.sqrt(1.0 / (f_s * n))
    return spec * scale


def asd(signal, f_s) -> SpectrumSet:
    """Amplitude spectral density of an (n_ch, N) record (or 1-D signal)."""
    x = np.atleast_2d(np.asarray(signal, dtype=float))
    n = x.shape[-1]
    if n < 2:
        raise EmptySignal("need at least two samples")
    values = _asd_segment(x, f_s)
    freq = np.arange(values.shape[-1]) * (f_s / n)
    return SpectrumSet(freq_hz=freq, values=values, f_s=float(f_s),
                       n_samples=n, n_segments=1)


def welch_asd(signal, f_s, n_segments, window="rect") -> SpectrumSet:
    """Root-mean-square average of per-segment ASDs over equal blocks.

    The signal length must divide exactly into ``n_segments`` non-overlapping
    blocks of at least two samples; one rectangular segment reproduces ``asd``
    bit for bit.  ``window="hann"`` applies a Hann taper normalized to unit
    mean-square, preserving broadband power levels.
    """
    x = np.atleast_2d(np.asarray(signal, dtype=float))
    n = x.shape[-1]
    if n_segments < 1:
        raise BadSegmentation("need at least one segment")
    if n % n_segments != 0:
        raise BadSegmentation(f"{n} samples do not divide into {n_segments} blocks")
    seg_len = n // n_segments
    if seg_len < 2:
        raise BadSegmentation("segments must hold at least two samples")
    if window == "rect":
        taper = None
    elif window == "hann":
        taper = np.hanning(seg_len)
        taper /= np.sqrt(np.mean(taper**2))
    else:
        raise ValueError(f"unknown window {window!r}")
    if n_segments == 1 and taper is None:
        return asd(signal, f_s)
    blocks = x.reshape(x.shape[0], n_segments, seg_len)
    power = np.zeros((x.shape[0], seg_len // 2 + 1))
    for j in range(n_segments):
        block = blocks[:, j, :] if taper is None else blocks[:, j, :] * taper
        power += _asd_segment(block, f_s) ** 2
    values = np.sqrt(power / n_segments)
    freq = np.arange(values.shape[-1]) * (f_s / seg_len)
    return SpectrumSet(freq_hz=freq, values=values, f_s=float(f_s),
                       n_samples=seg_len, n_segments=n_segments)


def ibm(spectrum: SpectrumSet) -> np.ndarray:
    """Integrated motion: per-channel cumulative RMS over frequency.

    ``out[c, p]`` = sqrt((f_s/N) sum_{k=1..p+1} D[c,k]^2), excluding the DC
    bin; the final value equals the mean-removed RMS of the source signal.
    """
    D = spectrum.values
    power = (D[:, 1:] ** 2) * spectrum.bin_width()
    return np.sqrt(np.cumsum(power, axis=1))


def ibm_frequencies(spectrum: SpectrumSet) -> np.ndarray:
    """Frequency axis matching ``ibm`` (DC bin excluded)."""
    return spectrum.freq_hz[1:]


def write_spectrum_csv(path, spectrum: SpectrumSet, curves=None):
    """CSV with `freq_hz, ch_0, ch_1, ...` columns.

    ``curves`` overrides the emitted values (e.g. an IBM array with the
    matching ``ibm_frequencies`` axis).
    """
    if curves is None:
        freq, vals = spectrum.freq_hz, spectrum.values
    else:
        freq, vals = ibm_frequencies(spectrum), curves
    with open(path, "w") as fh:
        fh.write("freq_hz," + ",".join(f"ch_{i}" for i in range(vals.shape[0])) + "\n")
        for k in range(freq.size):
            fh.write(repr(float(freq[k])) + ","
                     + ",".join(repr(float(v)) for v in vals[:, k]) + "\n")


def read_spectrum_csv(path):
    """Return (freq_hz, values) from a spectrum CSV."""
    with open(path) as fh:
        fh.readline()
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(v) for v in row] for row in rows])
    return data[:, 0], data[:, 1:].T


def spectrum_summary(spectrum: SpectrumSet) -> dict:
    """Per-channel peak location/value and final integrated motion."""
    curves = ibm(spectrum)
    k_peak = np.argmax(spectrum.values[:, 1:], axis=1) + 1
    return {
        "f_s": spectrum.f_s,
        "n_samples": spectrum.n_samples,
        "n_segments": spectrum.n_segments,
        "peak_freq_hz": [float(spectrum.freq_hz[k]) for k in k_peak],
        "peak_asd": [float(spectrum.values[c, k]) for c, k in enumerate(k_peak)],
        "final_ibm": [float(v) for v in curves[:, -1]],
    }
