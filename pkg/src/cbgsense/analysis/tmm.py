"""Normal-incidence transfer matrices for planar stacks (validation oracle)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SlabStack:
    """Layers (index, thickness nm) between an incidence medium and a substrate."""

    layers: tuple[tuple[float, float], ...]
    n_in: float = 1.0
    n_out: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple((float(n), float(d)) for n, d in self.layers))
        for n, d in self.layers:
            if d <= 0:
                raise ValueError("layer thickness must be positive")
            if n < 1:
                raise ValueError("layer index must be >= 1")
        if self.n_in < 1 or self.n_out < 1:
            raise ValueError("ambient indices must be >= 1")

    @classmethod
    def quarter_wave(cls, n_high: float, n_low: float, periods: int, design_wavelength: float,
                     n_in: float = 1.0, n_out: float = 1.0) -> "SlabStack":
        pair = ((n_high, design_wavelength / (4 * n_high)), (n_low, design_wavelength / (4 * n_low)))
        return cls(pair * periods, n_in, n_out)

    @property
    def indices(self) -> list[float]:
        return [n for n, _ in self.layers]

    @property
    def thicknesses(self) -> list[float]:
        return [d for _, d in self.layers]


@dataclass
class TmmResult:
    wavelengths: np.ndarray
    r: np.ndarray
    t: np.ndarray
    R: np.ndarray
    T: np.ndarray


def transfer_matrix_spectrum(stack: SlabStack, wavelengths) -> TmmResult:
    """Amplitude and power reflection/transmission via characteristic matrices."""
    lam = np.atleast_1d(np.asarray(wavelengths, dtype=float))
    m11 = np.ones(lam.size, complex)
    m12 = np.zeros(lam.size, complex)
    m21 = np.zeros(lam.size, complex)
    m22 = np.ones(lam.size, complex)
    for n, d in stack.layers:
        delta = 2 * np.pi * n * d / lam
        c, s = np.cos(delta), np.sin(delta)
        a11, a12, a21, a22 = c, 1j * s / n, 1j * n * s, c
        m11, m12, m21, m22 = (m11 * a11 + m12 * a21, m11 * a12 + m12 * a22,
                              m21 * a11 + m22 * a21, m21 * a12 + m22 * a22)
    n0, ns = stack.n_in, stack.n_out
    denom = n0 * m11 + n0 * ns * m12 + m21 + ns * m22
    r = (n0 * m11 + n0 * ns * m12 - m21 - ns * m22) / denom
    t = 2 * n0 / denom
    R = np.abs(r) ** 2
    T = (ns / n0) * np.abs(t) ** 2
    return TmmResult(lam, r, t, R, T)


def stop_band_edges(wavelengths, reflectance, level: float = 0.5, around: float | None = None) -> tuple[float, float]:
    """Wavelengths where R crosses ``level`` on either side of the stop band.

    The band is the contiguous R >= level region containing ``around`` (default:
    the maximum of R). Crossings are linearly interpolated.
    """
    lam = np.asarray(wavelengths, dtype=float)
    R = np.asarray(reflectance, dtype=float)
    order = np.argsort(lam)
    lam, R = lam[order], R[order]
    i = int(np.argmax(R)) if around is None else int(np.argmin(np.abs(lam - around)))
    if R[i] < level:
        raise ValueError("no stop band at the requested level")
    lo = i
    while lo > 0 and R[lo - 1] >= level:
        lo -= 1
    hi = i
    while hi < R.size - 1 and R[hi + 1] >= level:
        hi += 1
    if lo == 0 or hi == R.size - 1:
        raise ValueError("stop band extends past the sampled range")

    def cross(a, b):
        return lam[a] + (level - R[a]) / (R[b] - R[a]) * (lam[b] - lam[a])

    return cross(lo - 1, lo), cross(hi, hi + 1)
