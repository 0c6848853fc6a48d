"""Electric point-dipole source with a Gaussian-modulated sinusoid waveform."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

AXIS_VECTORS = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


@dataclass(frozen=True)
class Pulse:
    """exp(-(t-t0)^2 / 2 tau^2) * sin(2 pi fc (t-t0)), switched off at 2 t0.

    Frequencies are in 1/nm (f = 1/lambda); the spectral standard deviation
    is a quarter of the full fractional band, so the band edges sit at 2 sigma.
    """

    center_wavelength: float = 2.0 / (1 / 700.0 + 1 / 1000.0)
    bandwidth: float = (1 / 700.0 - 1 / 1000.0) / (0.5 * (1 / 700.0 + 1 / 1000.0))

    def __post_init__(self):
        if self.center_wavelength <= 0 or self.bandwidth <= 0:
            raise ValueError("pulse centre wavelength and bandwidth must be positive")

    @classmethod
    def from_band(cls, lam_min: float, lam_max: float) -> "Pulse":
        f_lo, f_hi = 1.0 / lam_max, 1.0 / lam_min
        fc = 0.5 * (f_lo + f_hi)
        return cls(center_wavelength=1.0 / fc, bandwidth=(f_hi - f_lo) / fc)

    @property
    def fc(self) -> float:
        return 1.0 / self.center_wavelength

    @property
    def tau(self) -> float:
        return 1.0 / (2 * math.pi * self.bandwidth * self.fc / 4)

    @property
    def t0(self) -> float:
        return 5.0 * self.tau

    @property
    def t_off(self) -> float:
        return 2.0 * self.t0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        u = t - self.t0
        w = np.exp(-0.5 * (u / self.tau) ** 2) * np.sin(2 * math.pi * self.fc * u)
        return np.where((t >= 0) & (t <= self.t_off), w, 0.0)


@dataclass
class DipoleSource:
    """Soft current source; ``amplitude`` is the current moment (current x length).

    Each polarization component is snapped to its nearest E-component site.
    """

    position: tuple[float, float, float]
    polarization: tuple[float, float, float] | str = "z"
    pulse: Pulse = Pulse()
    amplitude: float = 1.0

    def __post_init__(self):
        if isinstance(self.polarization, str):
            self.polarization = AXIS_VECTORS[self.polarization.lower()]
        p = np.asarray(self.polarization, dtype=float)
        norm = np.linalg.norm(p)
        if p.shape != (3,) or norm == 0:
            raise ValueError("polarization must be a non-zero 3-vector")
        self.polarization = tuple(p / norm)
        self.position = tuple(float(v) for v in self.position) + (0.0,) * (3 - len(self.position))
        self._sites = None

    def sites(self, state) -> list[tuple[int, tuple[int, int, int], float]]:
        """(component, index, weight) triples on the grid of ``state``."""
        out = []
        for c in range(3):
            w = self.polarization[c]
            if w == 0:
                continue
            idx = []
            for a in range(3):
                if not state.active[a]:
                    idx.append(0)
                elif a == c:
                    idx.append(state.cell_index(a, self.position[a]))
                else:
                    idx.append(state.node_index(a, self.position[a]))
            out.append((c, tuple(idx), w))
        return out

    def site_positions(self, state) -> list[tuple[float, float, float]]:
        pos = []
        for c, idx, _ in self.sites(state):
            p = []
            for a in range(3):
                off = 0.5 if (a == c and state.active[a]) else 0.0
                p.append(state.grid.origin[a] + (idx[a] + off) * state.spacing if state.active[a] else 0.0)
            pos.append(tuple(p))
        return pos

    def bind(self, state) -> "DipoleSource":
        self._sites = self.sites(state)
        self._scale = self.amplitude / state.spacing ** state.dimensionality
        return self

    def inject(self, state, t: float) -> None:
        if self._sites is None:
            self.bind(state)
        j = float(self.pulse(t)) * self._scale
        if j == 0.0:
            return
        for c, idx, w in self._sites:
            state.e[c][idx] -= state.ca[c][idx] * (w * j)

    def current_spectrum(self, dt: float, steps: int, freqs) -> np.ndarray:
        """DFT of the injected current moment, sampled at the injection times."""
        t = (np.arange(steps) + 0.5) * dt
        j = self.amplitude * self.pulse(t)
        keep = j != 0
        t, j = t[keep], j[keep]
        f = np.asarray(freqs, dtype=float)
        return (np.exp(2j * math.pi * np.outer(f, t)) @ j) * dt
