"""Analytic-oracle checks of the solver and analysis chain.

Each check returns a :class:`Check` with the measured figure(s), the
tolerance it is judged against and the wall time. The heavy ones take
minutes; ``run_all(quick=True)`` skips them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .analysis.farfield import collection_efficiency, near_to_far
from .analysis.spectrum import fit_resonance, time_to_spectrum
from .analysis.tmm import SlabStack, stop_band_edges, transfer_matrix_spectrum
from .fdtd import (CpmlParams, DftPlane, DipoleSource, FluxBox, Pulse, Scene, TimeProbe, flux, init_state,
                   run)
from .geometry import homogeneous, layered_line
from .spin import SpinParams, field_from_shift, shot_noise_sensitivity, spin_resonances, zeeman_shift

CENTER_WAVELENGTH = 1000.0 * 700.0 * 2 / 1700.0  # centre of the default 700-1000 nm band (f = 1/lambda)


@dataclass
class Check:
    name: str
    passed: bool
    values: dict
    tolerance: dict
    runtime_s: float = 0.0
    notes: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "values": self.values,
                "tolerance": self.tolerance, "runtime_s": self.runtime_s, "notes": self.notes}


def dipole_power_ratio(resolution: int, cells: int | None = None, box_half: int | None = None,
                             wavelength: float = CENTER_WAVELENGTH) -> float:
    """Flux-box power of a z-dipole in vacuum over the analytic |J|^2 w^2 / (12 pi), at ``wavelength``."""
    dx = wavelength / resolution
    b = box_half if box_half is not None else max(5, resolution // 4)
    n = cells if cells is not None else 2 * b + 2 * 10 + 20
    grid = homogeneous(1.0, (n, n, n), dx)
    src = DipoleSource((0.0, 0.0, 0.0), "z", Pulse())
    s = init_state(grid)
    p = src.site_positions(s)[0]
    # box faces on nodes, the Ez site sits midway between two z nodes
    lo = [round((p[0] - b * dx) / dx) * dx, round((p[1] - b * dx) / dx) * dx, round((p[2] - (b + 0.5) * dx) / dx) * dx]
    hi = [round((p[0] + b * dx) / dx) * dx, round((p[1] + b * dx) / dx) * dx, round((p[2] + (b + 0.5) * dx) / dx) * dx]
    f = 1.0 / wavelength
    box = FluxBox("box", tuple(lo), tuple(hi), (f,))
    rec = run(Scene(grid, [src], [box], steps=int(20000 / s.dt), early_stop=1e-8))["box"]
    w = 2 * math.pi * f
    analytic = abs(rec.source_spectrum[0]) ** 2 * w * w / (12 * math.pi)
    return float(flux(rec)[0] / analytic)


def check_dipole_power() -> Check:
    t0 = time.time()
    e20 = abs(dipole_power_ratio(20, 60, 5) - 1)
    e40 = abs(dipole_power_ratio(40, 100, 10) - 1)
    ratio = e20 / e40 if e40 > 0 else math.inf
    ok = e20 < 0.02 and 3 <= ratio <= 5
    return Check("dipole_power", ok, {"error_lambda20": e20, "error_lambda40": e40, "ratio": ratio},
                 {"error_lambda20": 0.02, "ratio": [3, 5]}, time.time() - t0)


def cpml_reflection(resolution: int = 20, near_cells: int = 60, far_cells: int = 6000, probe_offset: int = 10,
                    courant: float = 0.99, steps: int = 3000, cpml: CpmlParams = CpmlParams()) -> float:
    """Peak |difference| between a small CPML-terminated line and a reference long enough to be reflection-free, over the reference peak."""
    dx = CENTER_WAVELENGTH / resolution
    src = DipoleSource((0.0,), "z", Pulse())
    probe = TimeProbe("p", "ez", (probe_offset * dx,))

    def trace(n):
        g = homogeneous(1.0, (n,), dx)
        return run(Scene(g, [src], [probe], cpml=cpml, courant=courant, steps=steps, early_stop=None))["p"].values

    a, b = trace(near_cells), trace(far_cells)
    return float(np.abs(a - b).max() / np.abs(b).max())


def check_cpml() -> Check:
    t0 = time.time()
    r = {"ahead": cpml_reflection(probe_offset=10), "behind": cpml_reflection(probe_offset=-10)}
    return Check("cpml_reflection", max(r.values()) < 1e-4, r, {"max": 1e-4}, time.time() - t0)


def far_field_patterns(resolution: int = 20, plane_wavelengths: float = 16.0, duration: float = 25000.0,
                       taper: float = 0.5) -> dict:
    """RMS deviation of z- and x-dipole far fields from sin^2(theta) and 1 - sin^2(theta)cos^2(phi).

    Both maps are scaled to the hemisphere power of the reference before
    comparing, so the figure measures shape only.
    """
    lam = CENTER_WAVELENGTH
    dx = lam / resolution
    n = int(round(plane_wavelengths * lam / dx)) + 20
    out = {}
    for pol in ("z", "x"):
        grid = homogeneous(1.0, (n, n, 27), dx)
        src = DipoleSource((0.0, 0.0, 0.0), pol, Pulse())
        s = init_state(grid)
        zp = src.site_positions(s)[0][2] + dx
        rec = run(Scene(grid, [src], [DftPlane("ff", "z", zp, (1.0 / lam,))], steps=int(duration / s.dt),
                        early_stop=None))["ff"]
        ff = near_to_far(rec, rec.frequencies[0], taper=taper)
        T, P = np.meshgrid(ff.theta, ff.phi, indexing="ij")
        ref = np.sin(T) ** 2 if pol == "z" else 1 - np.sin(T) ** 2 * np.cos(P) ** 2
        w = np.sin(T)  # hemisphere power weights on the (theta, phi) grid
        scale = (ref * w).sum() / (ff.intensity * w).sum()
        out[f"rms_{pol}"] = float(np.sqrt(np.mean((ff.intensity * scale - ref) ** 2)))
        if pol == "z":
            out["eta_z_na05"] = float(collection_efficiency(ff, 0.5))
    return out


def eta_z_dipole_closed_form(na: float) -> float:
    """Upper-hemisphere fraction of a z-dipole's power inside sin(theta) <= NA (vacuum)."""
    c = math.sqrt(1 - na * na)
    # integral of sin^3 from 0 to theta over the hemisphere value 2/3
    return (2 / 3 - c + c ** 3 / 3) / (2 / 3)


def check_far_field() -> Check:
    t0 = time.time()
    r = far_field_patterns()
    ref = eta_z_dipole_closed_form(0.5)
    r["eta_z_na05_closed_form"] = ref
    ok = r["rms_z"] < 0.02 and r["rms_x"] < 0.02 and abs(r["eta_z_na05"] - ref) <= 0.001
    return Check("far_field", ok, r, {"rms": 0.02, "eta_abs": 0.001}, time.time() - t0)


def bragg_reflectance(resolution: float = 81.0, periods: int = 4, design_wavelength: float = 850.0,
                      n_high: float = 2.1, n_low: float = 1.0, duration: float = 60000.0) -> dict:
    """FDTD versus transfer-matrix reflectance of a quarter-wave stack at normal incidence.

    ``resolution`` is cells per design wavelength in vacuum; 81 gives 30
    cells per in-material wavelength at the short stop-band edge.
    """
    stack = SlabStack.quarter_wave(n_high, n_low, periods, design_wavelength)
    dx = design_wavelength / resolution
    before = after = 3000.0
    g = layered_line(stack.indices, stack.thicknesses, dx, before, after, subsamples=16)
    gr = layered_line([1.0], [sum(stack.thicknesses)], dx, before, after)
    pulse = Pulse.from_band(550.0, 1500.0)
    xs = -before + 20 * dx
    src = DipoleSource((xs,), "z", pulse)
    probe = TimeProbe("p", "ez", (xs + 10 * dx,))

    def trace(grid):
        return run(Scene(grid, [src], [probe], duration=duration, early_stop=None))["p"]

    a, b = trace(g), trace(gr)
    lam = np.linspace(560.0, 1450.0, 2000)
    f = (1.0 / lam)[::-1]
    sa = time_to_spectrum(a.values - b.values, times=a.times, frequencies=f)
    sb = time_to_spectrum(b.values, times=b.times, frequencies=f)
    R = (sa.power / sb.power)[::-1]
    tmm = transfer_matrix_spectrum(stack, lam).R
    e_fdtd = stop_band_edges(lam, R)
    e_tmm = stop_band_edges(lam, tmm)
    plateau = tmm >= 0.9
    half = tmm >= 0.5
    rel = np.abs(R - tmm) / tmm
    return {"edges_fdtd": e_fdtd, "edges_tmm": e_tmm,
            "edge_rel_error": [abs(x - y) / y for x, y in zip(e_fdtd, e_tmm)],
            "max_rel_error_plateau": float(rel[plateau].max()),
            "max_rel_error_half_max": float(rel[half].max()),
            "max_abs_error_half_max": float(np.abs(R - tmm)[half].max()),
            "wavelengths": lam, "R_fdtd": R, "R_tmm": tmm}


def check_bragg() -> Check:
    t0 = time.time()
    r = bragg_reflectance()
    ok = max(r["edge_rel_error"]) < 0.01 and r["max_rel_error_plateau"] < 0.02
    vals = {k: v for k, v in r.items() if k not in ("wavelengths", "R_fdtd", "R_tmm")}
    return Check("bragg", ok, vals, {"edge_rel": 0.01, "plateau_rel": 0.02}, time.time() - t0,
                 "reflectance compared where the transfer-matrix R >= 0.9")


def synthetic_ringdown(f0: float, tau: float, dt: float, n: int, phase: float = 0.3) -> tuple[np.ndarray, np.ndarray]:
    t = np.arange(n) * dt
    return t, np.exp(-t / tau) * np.cos(2 * math.pi * f0 * t + phase)


def check_q_identity() -> Check:
    t0 = time.time()
    f0, tau = 1 / 850.0, 60000.0
    t, x = synthetic_ringdown(f0, tau, 25.0, 40000)
    spec = time_to_spectrum(x, times=t, frequencies=np.linspace(1 / 900, 1 / 800, 4001))
    q = fit_resonance(spec).q
    ref = math.pi * f0 * tau
    err = abs(q - ref) / ref
    return Check("q_identity", err < 0.02, {"Q": q, "Q_expected": ref, "rel_error": err}, {"rel": 0.02},
                 time.time() - t0)


def check_spin() -> Check:
    t0 = time.time()
    rng = np.random.default_rng(12345)
    p = SpinParams()
    b = rng.uniform(0, 200, 1000)
    rt = float(np.max(np.abs(field_from_shift(zeeman_shift(b)) - b) / np.maximum(b, 1e-300)))
    worst = 0.0
    for _ in range(200):
        d, bz = rng.uniform(1, 5), rng.uniform(0, 50)
        q = SpinParams(D=d)
        lo, hi = spin_resonances(q, (0, 0, bz))
        g = q.gamma_ghz_per_mt
        exp_lo, exp_hi = sorted((abs(d - g * bz), d + g * bz))
        worst = max(worst, abs(lo - exp_lo) / exp_lo, abs(hi - exp_hi) / exp_hi)
    shift = zeeman_shift(10.9, p) * 1e3
    eta = shot_noise_sensitivity(0.03, 0.3, 1e6, p.gamma_e)
    ok = rt < 1e-12 and worst < 1e-9 and abs(shift - 305.5) <= 0.1 and abs(eta / 250e-6 - 1) < 1e-6
    return Check("spin", ok, {"roundtrip_rel": rt, "resonance_rel": worst, "shift_10p9_mT_MHz": shift,
                              "eta_T_per_rtHz": eta}, {"roundtrip": 1e-12, "resonance": 1e-9, "shift": 0.1,
                                                        "eta_rel": 1e-6}, time.time() - t0)


QUICK = (check_q_identity, check_spin, check_cpml)
SLOW = (check_dipole_power, check_bragg, check_far_field)


def run_all(quick: bool = False) -> list[Check]:
    checks = QUICK if quick else QUICK + SLOW
    return [c() for c in checks]
