"""Spin-1 defect ground state: resonances, Zeeman inversion, ODMR synthesis/fitting, sensitivity."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (InsufficientSpan, InvalidContrast, MissingReference, NonPositiveRate,
                     NoResonance)
from .lsq import levenberg_marquardt

# CODATA 2018 (h is exact in the SI)
MU_B = 9.2740100783e-24  # J/T
PLANCK = 6.62607015e-34  # J s
MU_B_OVER_H = MU_B / PLANCK  # Hz/T
GAUSSIAN_PF = 0.70  # line-shape prefactor of the shot-noise sensitivity for a Gaussian dip
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class SpinParams:
    """Zero-field splitting D, E (GHz), g-factor and quantization axis.

    ``gamma_e`` (MHz/mT) is the rounded gyromagnetic ratio used in the
    sensitivity formula; it must agree with g_e * mu_B / h to 0.1%.
    """

    D: float = 3.45
    E: float = 0.0
    g_e: float = 2.0023
    gamma_e: float = 28.0
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError("D must be positive")
        if abs(self.E) >= self.D:
            raise ValueError("|E| must be smaller than D")
        exact = self.gamma_exact_mhz_per_mt
        if abs(self.gamma_e - exact) > 1e-3 * exact:
            raise ValueError(f"gamma_e {self.gamma_e} MHz/mT disagrees with g_e*mu_B/h = {exact:.4f} by > 0.1%")
        a = np.asarray(self.axis, dtype=float)
        if a.shape != (3,) or np.linalg.norm(a) == 0:
            raise ValueError("axis must be a non-zero 3-vector")

    @property
    def gamma_exact_mhz_per_mt(self) -> float:
        return self.g_e * MU_B_OVER_H * 1e-9  # Hz/T -> MHz/mT

    @property
    def gamma_ghz_per_mt(self) -> float:
        return self.gamma_exact_mhz_per_mt * 1e-3


_SX = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / math.sqrt(2)
_SY = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / math.sqrt(2)
_SZ = np.diag([1.0, 0.0, -1.0]).astype(complex)


def _to_defect_frame(B, axis) -> np.ndarray:
    """Components of B in a frame whose z axis is ``axis``."""
    z = np.asarray(axis, dtype=float)
    z = z / np.linalg.norm(z)
    B = np.asarray(B, dtype=float)
    if np.allclose(z, (0.0, 0.0, 1.0)):
        return B
    ref = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = ref - (ref @ z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.array([B @ x, B @ y, B @ z])


def hamiltonian(p: SpinParams, B) -> np.ndarray:
    """H/h in GHz for field B (mT, lab frame)."""
    b = _to_defect_frame(B, p.axis) * p.gamma_ghz_per_mt
    eye = np.eye(3)
    return (p.D * (_SZ @ _SZ - (2.0 / 3.0) * eye) + p.E * (_SX @ _SX - _SY @ _SY)
            + b[0] * _SX + b[1] * _SY + b[2] * _SZ)


def energy_levels(p: SpinParams, B) -> tuple[np.ndarray, np.ndarray]:
    return np.linalg.eigh(hamiltonian(p, B))


def spin_resonances(p: SpinParams, B) -> tuple[float, float]:
    """The two transition frequencies (GHz) out of the m_s = 0-like level, ascending."""
    w, v = energy_levels(p, B)
    i0 = int(np.argmax(np.abs(v[1, :]) ** 2))
    others = [w[i] - w[i0] for i in range(3) if i != i0]
    lo, hi = sorted(abs(x) for x in others)
    return float(lo), float(hi)


def zeeman_shift(b_mt, p: SpinParams = SpinParams()):
    """Zeeman shift (GHz) for field magnitude ``b_mt`` (mT) along the dipole axis."""
    b = np.asarray(b_mt, dtype=float)
    if np.any(b < 0):
        raise ValueError("field magnitude must be non-negative")
    out = b * p.gamma_ghz_per_mt
    return float(out) if np.ndim(b_mt) == 0 else out


def field_from_shift(dnu_ghz, p: SpinParams = SpinParams()):
    """Field magnitude (mT) that produces the Zeeman shift ``dnu_ghz``."""
    d = np.asarray(dnu_ghz, dtype=float)
    if np.any(d < 0):
        raise ValueError("frequency shift must be non-negative")
    out = d / p.gamma_ghz_per_mt
    return float(out) if np.ndim(dnu_ghz) == 0 else out


@dataclass
class OdmrSpectrum:
    frequencies: np.ndarray  # GHz
    values: np.ndarray  # normalized PL, baseline 1
    rate: float | None = None  # counts/s
    dwell: float | None = None  # s per point
    seed: int | None = None

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.frequencies.shape != self.values.shape:
            raise ValueError("frequency and value arrays differ in length")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("ODMR frequencies must be strictly increasing")
        if np.any(self.values <= 0):
            raise ValueError("ODMR values must be positive")


def double_gaussian(nu, baseline, n1, c1, w1, n2, c2, w2):
    s1, s2 = w1 * FWHM_TO_SIGMA, w2 * FWHM_TO_SIGMA
    return (baseline - c1 * np.exp(-0.5 * ((nu - n1) / s1) ** 2)
            - c2 * np.exp(-0.5 * ((nu - n2) / s2) ** 2))


def synthesize_odmr(p: SpinParams, B, grid, contrast: float, linewidth: float, rate: float,
                    dwell: float, seed: int | None = None, noise: bool = True) -> OdmrSpectrum:
    """Double-Gaussian ODMR trace with per-point Poisson shot noise."""
    if not 0 <= contrast < 1:
        raise InvalidContrast(f"contrast {contrast} outside [0, 1)")
    if not rate > 0 or not dwell > 0:
        raise NonPositiveRate("photon rate and dwell time must be positive")
    if not linewidth > 0:
        raise ValueError("linewidth must be positive")
    nu = np.asarray(grid, dtype=float)
    lo, hi = spin_resonances(p, B)
    ideal = double_gaussian(nu, 1.0, lo, contrast, linewidth, hi, contrast, linewidth)
    if not noise:
        return OdmrSpectrum(nu, ideal, rate, dwell, seed)
    n = rate * dwell
    rng = np.random.default_rng(seed)
    counts = rng.poisson(ideal * n)
    values = np.maximum(counts, 0.5) / n  # a zero-count point would break positivity
    return OdmrSpectrum(nu, values, rate, dwell, seed)


@dataclass
class OdmrFit:
    nu_minus: float
    nu_plus: float
    c_minus: float
    c_plus: float
    lw_minus: float
    lw_plus: float
    baseline: float = 1.0
    covariance: np.ndarray | None = None
    residual: float = 0.0
    iterations: int = 0

    @property
    def params(self) -> np.ndarray:
        return np.array([self.baseline, self.nu_minus, self.c_minus, self.lw_minus,
                         self.nu_plus, self.c_plus, self.lw_plus])

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("nu_minus", "nu_plus", "c_minus", "c_plus",
                                           "lw_minus", "lw_plus", "baseline", "residual", "iterations")}
        if self.covariance is not None:
            d["stderr"] = dict(zip(["baseline", "nu_minus", "c_minus", "lw_minus", "nu_plus", "c_plus", "lw_plus"],
                                   np.sqrt(np.clip(np.diag(self.covariance), 0, None)).tolist()))
        return d


def _moving_average(y, n=5):
    k = np.ones(n) / n
    pad = n // 2
    yp = np.pad(y, pad, mode="edge")
    return np.convolve(yp, k, mode="valid")


def noise_floor(values) -> float:
    """Robust point-to-point noise estimate (MAD of first differences)."""
    d = np.diff(np.asarray(values, dtype=float))
    return float(1.4826 * np.median(np.abs(d - np.median(d))) / math.sqrt(2))


def _baseline(values) -> float:
    # dips can cover much of the sweep, so the median sits below the baseline
    return float(np.percentile(_moving_average(values), 90))


def detect_dips(s: OdmrSpectrum, max_dips: int = 2) -> list[tuple[int, float]]:
    """Local minima of the 5-point smoothed trace deeper than 3x the noise floor.

    Two minima count as separate dips only if the trace recovers between them
    by more than the threshold and by a quarter of the shallower depth. Returns (index, depth) pairs, deepest first.
    """
    y = s.values
    sm = _moving_average(y)
    base = _baseline(y)
    thr = 3.0 * max(noise_floor(y), 1e-12 * base)
    dips = [(i, base - sm[i]) for i in range(1, y.size - 1)
            if sm[i] <= sm[i - 1] and sm[i] < sm[i + 1] and base - sm[i] > thr]
    dips.sort(key=lambda t: -t[1])
    chosen: list[tuple[int, float]] = []
    for i, d in dips:
        distinct = True
        for j, dj in chosen:
            a, b = min(i, j), max(i, j)
            if np.max(sm[a:b + 1]) - max(sm[i], sm[j]) <= max(thr, 0.25 * min(d, dj)):
                distinct = False
                break
        if distinct:
            chosen.append((i, d))
        if len(chosen) == max_dips:
            break
    return chosen


def _half_depth_crossings(nu, sm, i, base):
    half = base - 0.5 * (base - sm[i])
    lo = i
    while lo > 0 and sm[lo] < half:
        lo -= 1
    hi = i
    while hi < sm.size - 1 and sm[hi] < half:
        hi += 1
    return nu[lo], nu[hi]


def initial_guess(s: OdmrSpectrum) -> OdmrFit:
    dips = detect_dips(s)
    if not dips:
        raise NoResonance("no dip deeper than 3x the noise floor")
    nu = s.frequencies
    sm = _moving_average(s.values)
    base = _baseline(s.values)
    floor = 3 * (nu[1] - nu[0])
    if len(dips) == 1:
        # unresolved pair: split the trough into two half-width lines
        i, d = dips[0]
        lo, hi = _half_depth_crossings(nu, sm, i, base)
        w = max(hi - lo, 2 * floor)
        return OdmrFit(lo + w / 4, hi - w / 4, d, d, w / 2, w / 2, base)
    (i, di), (j, dj) = sorted(dips)
    gap = nu[j] - nu[i]
    wi = min(max(np.diff(_half_depth_crossings(nu, sm, i, base))[0], floor), gap)
    wj = min(max(np.diff(_half_depth_crossings(nu, sm, j, base))[0], floor), gap)
    return OdmrFit(nu[i], nu[j], di, dj, wi, wj, base)


def fit_odmr(s: OdmrSpectrum, init: OdmrFit | None = None, max_iter: int = 200) -> OdmrFit:
    """Damped least-squares double-Gaussian fit; auto-initialized when ``init`` is None."""
    guess = init if init is not None else initial_guess(s)
    nu, y = s.frequencies, s.values
    scale = float(np.ptp(nu)) or 1.0
    x = (nu - nu[0]) / scale
    p0 = guess.params.copy()
    p0[[1, 4]] = (p0[[1, 4]] - nu[0]) / scale
    p0[[3, 6]] = p0[[3, 6]] / scale

    def model_parts(p):
        b, n1, c1, w1, n2, c2, w2 = p
        s1, s2 = w1 * FWHM_TO_SIGMA, w2 * FWHM_TO_SIGMA
        u1, u2 = (x - n1) / s1, (x - n2) / s2
        g1, g2 = np.exp(-0.5 * u1 * u1), np.exp(-0.5 * u2 * u2)
        return b, c1, c2, s1, s2, u1, u2, g1, g2

    def res(p):
        b, c1, c2, s1, s2, u1, u2, g1, g2 = model_parts(p)
        return b - c1 * g1 - c2 * g2 - y

    def jac(p):
        b, c1, c2, s1, s2, u1, u2, g1, g2 = model_parts(p)
        return np.stack([
            np.ones_like(x),
            -c1 * g1 * u1 / s1,
            -g1,
            -c1 * g1 * u1 * u1 / p[3],
            -c2 * g2 * u2 / s2,
            -g2,
            -c2 * g2 * u2 * u2 / p[6],
        ], axis=1)

    r = levenberg_marquardt(res, p0, jac, max_iter=max_iter)
    b, n1, c1, w1, n2, c2, w2 = r.params
    w1, w2 = abs(w1), abs(w2)
    # back to GHz; covariance transforms with the same diagonal scaling
    scl = np.array([1, scale, 1, scale, scale, 1, scale])
    cov = r.covariance * np.outer(scl, scl)
    n1, n2 = nu[0] + n1 * scale, nu[0] + n2 * scale
    w1, w2 = w1 * scale, w2 * scale
    if n1 > n2:
        n1, n2, c1, c2, w1, w2 = n2, n1, c2, c1, w2, w1
        perm = [0, 4, 5, 6, 1, 2, 3]
        cov = cov[np.ix_(perm, perm)]
    return OdmrFit(float(n1), float(n2), float(c1), float(c2), float(w1), float(w2), float(b),
                   cov, float(math.sqrt(r.cost / y.size)), r.iterations)


@dataclass
class Sensitivity:
    best: float  # T/sqrt(Hz)
    minus: float
    plus: float

    def to_dict(self) -> dict:
        return {"eta_T_per_rtHz": self.best, "eta_minus_T_per_rtHz": self.minus,
                "eta_plus_T_per_rtHz": self.plus}


def shot_noise_sensitivity(contrast: float, linewidth_ghz: float, rate: float, gamma_mhz_per_mt: float = 28.0,
                           prefactor: float = GAUSSIAN_PF) -> float:
    """prefactor * linewidth / (gamma * C * sqrt(R)) in T/sqrt(Hz)."""
    if not rate > 0:
        raise NonPositiveRate("photon rate must be positive")
    if not 0 < contrast < 1:
        raise InvalidContrast(f"contrast {contrast} outside (0, 1)")
    gamma_hz_per_t = gamma_mhz_per_mt * 1e9
    return prefactor * (linewidth_ghz * 1e9) / (gamma_hz_per_t * contrast * math.sqrt(rate))


def sensitivity(fit: OdmrFit, rate: float, p: SpinParams = SpinParams()) -> Sensitivity:
    em = shot_noise_sensitivity(fit.c_minus, fit.lw_minus, rate, p.gamma_e)
    ep = shot_noise_sensitivity(fit.c_plus, fit.lw_plus, rate, p.gamma_e)
    return Sensitivity(min(em, ep), em, ep)


@dataclass
class ScenarioSeries:
    kind: str  # "thickness_mm" or "angle_deg"
    x: np.ndarray
    freq: np.ndarray  # GHz
    err: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.freq = np.asarray(self.freq, dtype=float)
        if self.err is not None:
            self.err = np.asarray(self.err, dtype=float)
        if self.kind not in ("thickness_mm", "angle_deg"):
            raise ValueError(f"unknown scenario column {self.kind!r}")
        if self.x.size < 2 or self.x.shape != self.freq.shape:
            raise ValueError("scenario needs at least two rows of matching length")
        d = np.diff(self.x)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("scenario independent variable must be strictly monotonic")


def steel_scenario(series: ScenarioSeries, p: SpinParams = SpinParams()) -> list[dict]:
    """Frequency change and field change of every row against the 0 mm row."""
    ref = np.nonzero(series.x == 0.0)[0]
    if ref.size == 0:
        raise MissingReference("no 0 mm reference row")
    nu_ref = series.freq[ref[0]]
    rows = []
    for x, nu in zip(series.x, series.freq):
        dnu = abs(nu_ref - nu)
        rows.append({"thickness_mm": float(x), "freq_ghz": float(nu), "delta_nu_ghz": float(dnu),
                     "delta_b_mt": float(field_from_shift(dnu, p))})
    return rows


@dataclass
class AngleFit:
    field_mt: float
    phase_deg: float
    baseline_ghz: float
    residual: float
    amplitude_ghz: float

    def to_dict(self) -> dict:
        return {"B_mt": self.field_mt, "phase_deg": self.phase_deg, "baseline_ghz": self.baseline_ghz,
                "residual_ghz": self.residual, "amplitude_ghz": self.amplitude_ghz}


def angle_scenario(series: ScenarioSeries, p: SpinParams = SpinParams()) -> AngleFit:
    """Fit nu(theta) = c0 + c1 cos(theta - phi0); B = |c1| / gamma.

    Written as c0 + a cos(theta) + b sin(theta) the model is linear, so the
    least-squares solution is exact (no iteration).
    """
    th = np.radians(series.x)
    if series.x.size < 5:
        raise InsufficientSpan("angle scenario needs at least 5 rows")
    if np.ptp(series.x) < 60.0:
        raise InsufficientSpan("angles must span at least 60 degrees")
    A = np.stack([np.ones_like(th), np.cos(th), np.sin(th)], axis=1)
    w = None
    if series.err is not None and np.all(series.err > 0):
        w = 1.0 / series.err
        coef = np.linalg.lstsq(A * w[:, None], series.freq * w, rcond=None)[0]
    else:
        coef = np.linalg.lstsq(A, series.freq, rcond=None)[0]
    c0, a, b = coef
    amp = math.hypot(a, b)
    phase = math.degrees(math.atan2(b, a)) if amp > 0 else 0.0
    resid = series.freq - A @ coef
    return AngleFit(float(field_from_shift(amp, p)), phase, float(c0),
                    float(math.sqrt(np.mean(resid ** 2))), amp)


# ---- file formats -------------------------------------------------------

def read_scenario_csv(path: str | Path) -> ScenarioSeries:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    cols = rows[0].keys()
    kind = "thickness_mm" if "thickness_mm" in cols else "angle_deg" if "angle_deg" in cols else None
    if kind is None or "freq_ghz" not in cols:
        raise ValueError(f"{path}: need columns thickness_mm|angle_deg and freq_ghz")
    x = [float(r[kind]) for r in rows]
    f = [float(r["freq_ghz"]) for r in rows]
    err = None
    if "freq_err_ghz" in cols and all(r["freq_err_ghz"] not in ("", None) for r in rows):
        err = [float(r["freq_err_ghz"]) for r in rows]
    return ScenarioSeries(kind, x, f, err)


def write_spectrum_csv(s: OdmrSpectrum, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_ghz", "contrast"])
        for f, v in zip(s.frequencies, s.values):
            w.writerow([repr(float(f)), repr(float(v))])


def read_spectrum_csv(path: str | Path) -> OdmrSpectrum:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return OdmrSpectrum([float(r["freq_ghz"]) for r in rows], [float(r["contrast"]) for r in rows])
