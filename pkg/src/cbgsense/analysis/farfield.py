"""Far-field patterns from DFT planes by the vector angular-spectrum method.

The tangential fields on the plane are Fourier transformed at the transverse
wavevectors of each requested direction. With rho = (cos phi, sin phi) the
TM part of the radiated field follows from rho . E_t and the TE part from
rho . H_t, which avoids the 1/cos(theta) blow-up of reconstructing E_z from
E_t alone near grazing angles:

    I(theta, phi) = n k^2 / (8 pi^2) * (|rho . E_t|^2 + |rho . H_t|^2 / n^2)

in units where the vacuum impedance is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from ..errors import EmptyFarField, PlaneTooSmall
from ..fdtd.core import AXES
from ..fdtd.monitors import PlaneRecord, _freq_index


@dataclass
class FarFieldMap:
    """Radiant intensity on a (theta, phi) grid of the upper hemisphere."""

    theta: np.ndarray
    phi: np.ndarray
    intensity: np.ndarray
    wavelength: float
    n_medium: float = 1.0
    reference_power: float | None = None

    def __post_init__(self):
        self.intensity = np.clip(np.asarray(self.intensity, dtype=float), 0.0, None)

    def radial(self) -> np.ndarray:
        """Azimuthal average I(theta)."""
        return self.intensity.mean(axis=1)

    def normalized(self) -> np.ndarray:
        m = self.intensity.max()
        return self.intensity / m if m > 0 else self.intensity


def tukey(x: np.ndarray, lo: float, hi: float, alpha: float) -> np.ndarray:
    """Tapered-cosine window over [lo, hi] evaluated at positions x."""
    if alpha <= 0:
        return ((x >= lo) & (x <= hi)).astype(float)
    u = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    w = np.ones_like(u)
    edge = alpha / 2
    a = u < edge
    b = u > 1 - edge
    w[a] = 0.5 * (1 - np.cos(math.pi * u[a] / edge))
    w[b] = 0.5 * (1 - np.cos(math.pi * (1 - u[b]) / edge))
    return w


def _frame(rec: PlaneRecord):
    """In-plane axes (b, c) so that (axis, b, c) is right-handed."""
    a = rec.axis
    return (a + 1) % 3, (a + 2) % 3


def _transform(field2d, cu, cv, ku, kv, wu, wv, dx):
    """sum_{u,v} w F exp(-i(ku u + kv v)) dx^2 for paired (ku[p], kv[p])."""
    F = field2d * np.outer(wu, wv)
    Au = np.exp(-1j * np.outer(ku, cu))  # (P, Nu)
    Av = np.exp(-1j * np.outer(kv, cv))  # (P, Nv)
    return np.einsum("pv,pv->p", Au @ F, Av) * dx * dx


def plane_extent(rec: PlaneRecord) -> tuple[float, float]:
    """Side lengths (nm) of the plane along its two in-plane axes."""
    sizes = []
    for pos, w in enumerate(rec.tangential):
        x = rec.coords["e" + AXES[w]][pos]
        sizes.append(float(x.max() - x.min()) + rec.spacing)
    return sizes[0], sizes[1]


def near_to_far(rec: PlaneRecord, f: float, n_medium: float | None = None, *,
                n_theta: int = 91, n_phi: int = 72, taper: float = 0.5) -> FarFieldMap:
    """Far-field intensity radiated through ``rec`` towards +axis at frequency ``f``.

    ``taper`` is the Tukey fraction used to apodize the plane edges.
    """
    if not all(rec.active):
        raise ValueError("far-field projection needs a plane from a 3D run")
    fi = _freq_index(rec.frequencies, f)
    n = rec.refractive_index if n_medium is None else float(n_medium)
    lam = 1.0 / rec.frequencies[fi]
    side = min(plane_extent(rec))
    if side < 4 * lam:
        raise PlaneTooSmall(f"plane side {side:.0f} nm is below 4 wavelengths ({4 * lam:.0f} nm)")
    k = 2 * math.pi * n / lam
    theta = np.linspace(0.0, math.pi / 2, n_theta)
    phi = np.arange(n_phi) * (2 * math.pi / n_phi)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    cb, sb = np.cos(P).ravel(), np.sin(P).ravel()
    kb = k * np.sin(T).ravel() * cb
    kc = k * np.sin(T).ravel() * sb

    b, c = _frame(rec)
    u, v = rec.tangential
    spans = {}
    for w in (b, c):
        pos = 0 if u == w else 1
        allx = np.concatenate([rec.coords[key][pos] for key in rec.coords])
        spans[w] = (allx.min() - 0.5 * rec.spacing, allx.max() + 0.5 * rec.spacing)

    def spectrum(key):
        cu, cv = rec.coords[key]
        wu = tukey(cu, *spans[u], taper)
        wv = tukey(cv, *spans[v], taper)
        ku, kv = (kb, kc) if u == b else (kc, kb)
        return _transform(rec.fields[key][fi], cu, cv, ku, kv, wu, wv, rec.spacing)

    eb, ec = spectrum("e" + AXES[b]), spectrum("e" + AXES[c])
    hb, hc = spectrum("h" + AXES[b]), spectrum("h" + AXES[c])
    tm = cb * eb + sb * ec
    te = cb * hb + sb * hc
    inten = 0.5 * n * k * k / (4 * math.pi ** 2) * (np.abs(tm) ** 2 + np.abs(te) ** 2 / n ** 2)
    return FarFieldMap(theta, phi, inten.reshape(T.shape), lam, n)


def _cumulative(ff: FarFieldMap):
    """theta grid and the cumulative power integral from 0 to theta (per steradian units)."""
    g = 2 * math.pi * ff.radial() * np.sin(ff.theta)
    interp = PchipInterpolator(ff.theta, g)
    return interp.antiderivative()


def hemisphere_power(ff: FarFieldMap) -> float:
    return float(_cumulative(ff)(ff.theta[-1]))


def collection_efficiency(ff: FarFieldMap, na, normalization: str = "hemisphere"):
    """Fraction of power inside the cone sin(theta) <= NA / n_medium.

    ``normalization="total"`` divides by ``ff.reference_power`` instead of the
    upper-hemisphere power.
    """
    cum = _cumulative(ff)
    total = float(cum(ff.theta[-1]))
    if normalization == "total":
        if not ff.reference_power or ff.reference_power <= 0:
            raise EmptyFarField("total normalization requires a positive reference power")
        denom = ff.reference_power
    elif normalization == "hemisphere":
        denom = total
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    if not denom > 0 or not math.isfinite(denom):
        raise EmptyFarField("hemisphere integral of the far field is zero")
    na_arr = np.atleast_1d(np.asarray(na, dtype=float))
    if np.any(na_arr < 0):
        raise ValueError("NA must be non-negative")
    s = np.clip(na_arr / ff.n_medium, 0.0, 1.0)
    th = np.arcsin(s)
    # PCHIP keeps the non-negative integrand non-negative, so this is monotone in NA
    vals = np.clip(np.where(s >= 1.0, total, cum(th)) / denom, 0.0, None)
    if normalization == "hemisphere":
        vals = np.minimum(vals, 1.0)
    return float(vals[0]) if np.ndim(na) == 0 else vals


def beam_angles(ff: FarFieldMap, fraction: float = 0.5) -> dict:
    """Half-width at half-maximum of I(theta) and the cone angle holding ``fraction`` of the power."""
    rad = ff.radial()
    peak = rad.max()
    hwhm = float("nan")
    if peak > 0:
        i = int(np.argmax(rad))
        j = i
        while j < rad.size - 1 and rad[j] > 0.5 * peak:
            j += 1
        if rad[j] <= 0.5 * peak and j > i:
            t0, t1, r0, r1 = ff.theta[j - 1], ff.theta[j], rad[j - 1], rad[j]
            hwhm = math.degrees(t0 + (r0 - 0.5 * peak) / (r0 - r1) * (t1 - t0))
    cum = _cumulative(ff)
    total = float(cum(ff.theta[-1]))
    fine = np.linspace(0, ff.theta[-1], 2001)
    frac = cum(fine) / total if total > 0 else np.zeros_like(fine)
    idx = int(np.searchsorted(frac, fraction))
    contain = math.degrees(fine[min(idx, fine.size - 1)])
    return {"hwhm_deg": hwhm, "containment_deg": contain, "containment_fraction": fraction,
            "peak_theta_deg": math.degrees(ff.theta[int(np.argmax(rad))])}


def intensity_map(rec: PlaneRecord, f: float):
    """|E|^2 at the plane's cell centres: (coord_u, coord_v, map)."""
    fi = _freq_index(rec.frequencies, f)
    u, v = rec.tangential
    a = rec.axis
    eu = rec.fields["e" + AXES[u]][fi]
    ev = rec.fields["e" + AXES[v]][fi]
    ea = rec.fields["e" + AXES[a]][fi]

    def along_v(x):
        return 0.5 * (x[:, 1:] + x[:, :-1]) if x.shape[1] > 1 else x

    def along_u(x):
        return 0.5 * (x[1:, :] + x[:-1, :]) if x.shape[0] > 1 else x

    m = np.abs(along_v(eu)) ** 2 + np.abs(along_u(ev)) ** 2 + np.abs(along_u(along_v(ea))) ** 2
    cu = rec.coords["e" + AXES[u]][0]
    cv = rec.coords["e" + AXES[v]][1]
    return cu, cv, m
