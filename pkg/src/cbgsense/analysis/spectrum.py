"""Spectra of probe time series, Lorentzian resonance fits and Purcell ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NoPeak, SeriesTooShort, ZeroReference
from ..lsq import levenberg_marquardt


@dataclass
class Spectrum:
    """Power (and complex amplitude) versus frequency in 1/nm (f = 1/lambda)."""

    frequencies: np.ndarray
    power: np.ndarray
    amplitude: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        if self.frequencies.shape != self.power.shape:
            raise ValueError("frequency and power arrays differ in shape")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("spectrum frequencies must be strictly increasing")
        if np.any(self.power < 0):
            raise ValueError("spectral power must be non-negative")

    @property
    def wavelengths(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / self.frequencies

    def band(self, lam_min: float, lam_max: float) -> "Spectrum":
        f = self.frequencies
        keep = (f >= 1.0 / lam_max) & (f <= 1.0 / lam_min)
        amp = None if self.amplitude is None else self.amplitude[keep]
        return Spectrum(f[keep], self.power[keep], amp, dict(self.meta))


@dataclass
class ResonanceFit:
    wavelength: float
    q: float
    amplitude: float
    residual: float
    frequency: float
    fwhm: float
    offset: float = 0.0

    def to_dict(self) -> dict:
        return {"wavelength_nm": self.wavelength, "Q": self.q, "amplitude": self.amplitude,
                "residual": self.residual, "frequency_per_nm": self.frequency,
                "fwhm_per_nm": self.fwhm, "offset": self.offset}


def time_to_spectrum(values, dt: float | None = None, *, times=None, window: str = "none",
                     frequencies=None, t_start: float | None = None, pad: int = 1) -> Spectrum:
    """DFT of a uniformly sampled series.

    Either give ``dt`` (samples at k*dt) or explicit ``times``. ``t_start``
    drops earlier samples (e.g. to keep only the ring-down). By default the
    result is on the FFT bins k/(N*pad*dt), k >= 1; passing ``frequencies``
    evaluates the same sum directly at those points instead.
    """
    x = np.asarray(values, dtype=float)
    if times is None:
        if dt is None:
            raise ValueError("need dt or times")
        t = np.arange(x.size) * dt
    else:
        t = np.asarray(times, dtype=float)
        dt = float(t[1] - t[0]) if t.size > 1 else (dt or 1.0)
    if t_start is not None:
        keep = t >= t_start
        x, t = x[keep], t[keep]
    if x.size < 16:
        raise SeriesTooShort(f"series has {x.size} samples (< 16)")
    if window == "hann":
        x = x * np.hanning(x.size)
    elif window not in ("none", None):
        raise ValueError(f"unknown window {window!r}")
    if frequencies is None:
        n = x.size * max(1, int(pad))
        spec = np.fft.rfft(x, n) * dt
        f = np.fft.rfftfreq(n, dt)
        # put the phase reference at the first kept sample's absolute time
        amp = (spec * np.exp(2j * math.pi * f * t[0]))[1:]
        f = f[1:]
    else:
        f = np.asarray(frequencies, dtype=float)
        amp = np.empty(f.size, complex)
        for s in range(0, f.size, 256):
            amp[s:s + 256] = np.exp(2j * math.pi * np.outer(f[s:s + 256], t)) @ x * dt
    return Spectrum(f, np.abs(amp) ** 2, amp, {"window": window or "none", "samples": int(x.size)})


def lorentzian(f, f0, gamma, amp, offset=0.0):
    return amp / (1.0 + ((f - f0) / (0.5 * gamma)) ** 2) + offset


def fit_resonance(spec: Spectrum, band: tuple[float, float] | None = None, *,
                  with_offset: bool = True) -> ResonanceFit:
    """Least-squares Lorentzian (plus constant) fit to the strongest peak in a wavelength band."""
    s = spec if band is None else spec.band(min(band), max(band))
    f, y = s.frequencies, s.power
    if f.size < 5:
        raise NoPeak("fewer than 5 spectral samples in band")
    i = int(np.argmax(y))
    med = float(np.median(y))
    if y[i] <= 0 or y[i] < 3.0 * med:
        raise NoPeak("band maximum below 3x the band median")
    # initial width from the half-maximum crossing around the peak
    half = 0.5 * (y[i] + med) if with_offset else 0.5 * y[i]
    lo = i
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = i
    while hi < y.size - 1 and y[hi] > half:
        hi += 1
    gamma0 = max(f[hi] - f[lo], 2 * np.median(np.diff(f)))
    scale = y[i]
    fs = 1.0 / gamma0  # work in units of the initial width for conditioning
    x = (f - f[i]) * fs

    if with_offset:
        p0 = np.array([0.0, 1.0, 1.0 - med / scale, med / scale])

        def res(p):
            return lorentzian(x, p[0], p[1], p[2], p[3]) - y / scale
    else:
        p0 = np.array([0.0, 1.0, 1.0])

        def res(p):
            return lorentzian(x, p[0], p[1], p[2]) - y / scale

    def jac(p):
        u = (x - p[0]) / (0.5 * p[1])
        d = 1.0 / (1.0 + u * u)
        cols = [p[2] * d * d * 2 * u / (0.5 * p[1]),
                p[2] * d * d * 2 * u * u / p[1],
                d]
        if with_offset:
            cols.append(np.ones_like(x))
        return np.stack(cols, axis=1)

    r = levenberg_marquardt(res, p0, jac)
    x0, g, a = r.params[:3]
    off = r.params[3] if with_offset else 0.0
    f0 = f[i] + x0 / fs
    gamma = abs(g) / fs
    if not (f[0] <= f0 <= f[-1]) or gamma <= 0:
        raise NoPeak("fitted centre falls outside the band")
    rel = float(np.sqrt(r.cost / y.size))
    return ResonanceFit(wavelength=1.0 / f0, q=f0 / gamma, amplitude=a * scale, residual=rel,
                        frequency=f0, fwhm=gamma, offset=off * scale)


def ringdown_q(values, times, f0: float, t_start: float | None = None, periods: int = 4) -> tuple[float, float]:
    """Q and decay time from the envelope of a ring-down demodulated at ``f0``.

    The series is mixed down with exp(2 pi i f0 t) and averaged over blocks of
    ``periods`` optical periods; log|envelope| is then fitted with a line.
    Returns (Q, tau) with amplitude ~ exp(-t/tau) and Q = pi f0 tau.
    """
    x = np.asarray(values, dtype=float)
    t = np.asarray(times, dtype=float)
    if t_start is not None:
        keep = t >= t_start
        x, t = x[keep], t[keep]
    dt = t[1] - t[0]
    block = max(1, int(round(periods / (f0 * dt))))
    nb = x.size // block
    if nb < 4:
        raise SeriesTooShort("ring-down window shorter than four demodulation blocks")
    z = (x[: nb * block] * np.exp(2j * math.pi * f0 * t[: nb * block])).reshape(nb, block).mean(axis=1)
    tb = t[: nb * block].reshape(nb, block).mean(axis=1)
    env = np.abs(z)
    ok = env > 0
    slope = np.polyfit(tb[ok], np.log(env[ok]), 1)[0]
    if slope >= 0:
        return math.inf, math.inf
    tau = -1.0 / slope
    return math.pi * f0 * tau, tau


def purcell_factor(p_cav: float, p_bulk: float) -> float:
    """Radiated-power ratio of the same dipole in two environments."""
    if not p_bulk > 0:
        raise ZeroReference("reference power must be positive")
    return float(p_cav) / float(p_bulk)
