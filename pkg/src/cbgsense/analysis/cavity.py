"""Cavity evaluation pipeline: geometry -> FDTD -> resonance, far field, Purcell ratio."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..errors import CbgError, NoPeak
from ..fdtd import CpmlParams, DftPlane, DipoleSource, FluxBox, Pulse, Scene, TimeProbe, flux, run
from ..geometry import CavityDesign, generate_layout, homogeneous, pristine_slab, rasterize
from .farfield import beam_angles, collection_efficiency, near_to_far
from .spectrum import fit_resonance, purcell_factor, ringdown_q, time_to_spectrum

log = logging.getLogger(__name__)

# Probe offsets (nm) inside the central disk; several points avoid sitting on a field node.
MIN_FWHM_BINS = 8
PROBE_OFFSETS = ((0.0, 0.0), (130.0, 70.0), (310.0, -200.0), (-420.0, 160.0), (60.0, -330.0))


@dataclass(frozen=True)
class SimPreset:
    """Resolution, domain and run-length settings for one cavity evaluation.

    ``lateral_margin`` and ``vertical_margin`` are the air gaps (nm) between the
    structure and the absorbing layers.
    """

    spacing: float = 25.0
    dtype: str = "float32"
    band: tuple[float, float] = (700.0, 1000.0)
    duration: float = 60000.0
    lateral_margin: float = 500.0
    vertical_margin: float = 600.0
    ff_band: tuple[float, float] = (760.0, 960.0)
    ff_count: int = 41
    dft_stride: int = 3
    courant: float = 0.99
    subsamples: int = 4
    polarization: str = "x"
    na_list: tuple[float, ...] = (0.1, 0.22, 0.5, 0.9)
    fit_band: tuple[float, float] | None = None
    purcell: bool = True
    far_field: bool = True
    taper: float = 0.5
    purcell_reference: str = "bulk"
    cpml: CpmlParams = field(default_factory=CpmlParams)

    def __post_init__(self):
        if self.purcell_reference not in ("bulk", "slab"):
            raise ValueError(f"purcell_reference must be 'bulk' or 'slab', got {self.purcell_reference!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SimPreset":
        d = dict(d)
        if "cpml" in d and isinstance(d["cpml"], dict):
            d["cpml"] = CpmlParams(**d["cpml"])
        for k in ("band", "ff_band", "fit_band", "na_list"):
            if k in d and d[k] is not None:
                d[k] = tuple(d[k])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def pulse(self) -> Pulse:
        return Pulse.from_band(*self.band)

    def ff_frequencies(self) -> tuple[float, ...]:
        lo, hi = self.ff_band
        return tuple(np.linspace(1.0 / hi, 1.0 / lo, self.ff_count))

    def flux_frequencies(self) -> tuple[float, ...]:
        lo, hi = self.band
        return tuple(np.linspace(1.0 / hi, 1.0 / lo, 301))


def _cpml_width(p: SimPreset) -> float:
    return p.cpml.layers * p.spacing


def build_grid(design: CavityDesign, preset: SimPreset, *, slab: bool = False):
    design.validate()
    half_w = design.outer_radius + preset.lateral_margin + _cpml_width(preset)
    pad_z = preset.vertical_margin + _cpml_width(preset)
    if slab:
        return pristine_slab(design.t, design.n_hbn, design.n_env, preset.spacing, pad_z,
                             subsamples=preset.subsamples, half_width=half_w)
    layout = generate_layout(design)
    return rasterize(design, layout, preset.spacing, pad_z, subsamples=preset.subsamples, half_width=half_w)


def plane_height(design: CavityDesign, preset: SimPreset) -> float:
    """Far-field plane: half a centre wavelength above the membrane top, snapped up to a node."""
    lam_c = preset.pulse.center_wavelength
    z = design.t / 2 + lam_c / 2
    return math.ceil(z / preset.spacing) * preset.spacing


def build_scene(design: CavityDesign, preset: SimPreset, *, slab: bool = False, far_field: bool | None = None,
                ff_frequencies=None, flux_box: bool | None = None, threads: int | None = None) -> Scene:
    grid = build_grid(design, preset, slab=slab)
    src = DipoleSource((0.0, 0.0, 0.0), preset.polarization, preset.pulse)
    comp = "e" + preset.polarization
    monitors: list = [TimeProbe(f"probe{i}", comp, (x, y, 0.0)) for i, (x, y) in enumerate(PROBE_OFFSETS)]
    if far_field if far_field is not None else preset.far_field:
        freqs = ff_frequencies if ff_frequencies is not None else preset.ff_frequencies()
        monitors.append(DftPlane("farfield", "z", plane_height(design, preset), tuple(freqs)))
    if flux_box if flux_box is not None else preset.purcell:
        monitors.append(_purcell_box(preset))
    return Scene(grid, [src], monitors, cpml=preset.cpml, courant=preset.courant, duration=preset.duration,
                 early_stop=1e-7, dft_stride=preset.dft_stride, dtype=preset.dtype, threads=threads)


def _purcell_box(preset: SimPreset) -> FluxBox:
    h = 3 * preset.spacing
    return FluxBox("dipole_box", (-h, -h, -h), (h, h, h), preset.flux_frequencies())


def combined_spectrum(records, t_start: float, freqs, window: str = "hann"):
    """Sum of probe power spectra (ring-down part only)."""
    total = None
    for name, rec in sorted(records.probes.items()):
        s = time_to_spectrum(rec.values, times=rec.times, window=window, t_start=t_start, frequencies=freqs)
        total = s if total is None else type(s)(s.frequencies, total.power + s.power, None, s.meta)
    return total


def resonance_from_records(records, preset: SimPreset, t_start: float):
    lo, hi = preset.fit_band or preset.band
    freqs = np.linspace(1.0 / hi, 1.0 / lo, 1500)
    spec = combined_spectrum(records, t_start, freqs)
    fit = fit_resonance(spec, (lo, hi))
    probe = records.probes[sorted(records.probes)[0]]
    try:
        q_rd, tau = ringdown_q(probe.values, probe.times, fit.frequency, t_start=t_start)
    except CbgError:
        q_rd, tau = float("nan"), float("nan")
    window = probe.times[-1] - t_start
    return spec, fit, {"q_ringdown": q_rd, "tau_nm": tau, "window_nm": window,
                       "fwhm_bins": fit.fwhm * window,
                       # the DFT of the ring-down window cannot resolve the line below ~8 bins
                       "window_limited": bool(fit.fwhm * window < MIN_FWHM_BINS)}


_BULK_CACHE: dict = {}


def bulk_reference(preset: SimPreset, n: float) -> tuple[np.ndarray, np.ndarray]:
    """(frequencies, P/|J|^2) of the preset's dipole in homogeneous material of index n."""
    key = (preset.spacing, n, preset.band, preset.dtype, preset.polarization, preset.cpml)
    if key in _BULK_CACHE:
        return _BULK_CACHE[key]
    cells = 2 * preset.cpml.layers + 24
    grid = homogeneous(n, (cells, cells, cells), preset.spacing)
    box = _purcell_box(preset)
    src = DipoleSource((0.0, 0.0, 0.0), preset.polarization, preset.pulse)
    sc = Scene(grid, [src], [box], cpml=preset.cpml, courant=preset.courant, duration=4 * src.pulse.t_off,
               early_stop=1e-9, dtype="float64")
    rec = run(sc)[box.name]
    out = (rec.frequencies, flux(rec) / np.abs(rec.source_spectrum) ** 2)
    _BULK_CACHE[key] = out
    return out


def slab_reference(design: CavityDesign, preset: SimPreset, threads: int | None = None):
    """(frequencies, P/|J|^2) of the preset's dipole in the unpatterned membrane of the same thickness."""
    key = ("slab", design.t, design.n_hbn, design.n_env, design.outer_radius, preset.spacing, preset.band,
           preset.dtype, preset.polarization, preset.cpml, preset.lateral_margin, preset.vertical_margin)
    if key in _BULK_CACHE:
        return _BULK_CACHE[key]
    scene = build_scene(design, preset, slab=True, far_field=False, flux_box=True, threads=threads)
    rec = run(scene)["dipole_box"]
    out = (rec.frequencies, flux(rec) / np.abs(rec.source_spectrum) ** 2)
    _BULK_CACHE[key] = out
    return out


def _normalized_power(rec, f):
    i = int(np.argmin(np.abs(rec.frequencies - f)))
    return float(flux(rec, rec.frequencies[i]) / abs(rec.source_spectrum[i]) ** 2)


def evaluate_design(design: CavityDesign, preset: SimPreset = SimPreset(), *, slab: bool = False,
                    wavelength: float | None = None, fallback_wavelength: float | None = None,
                    threads: int | None = None) -> dict:
    """Run one design and return its figures of merit.

    For ``slab=True`` the pristine membrane is simulated instead; if
    ``wavelength`` is given, the far field is evaluated there (no resonance
    fit needed). ``fallback_wavelength`` is used for the far field and the
    Purcell ratio when no resonance is found.
    """
    t0 = time.time()
    ff_freqs = None if wavelength is None else (1.0 / wavelength,)
    if wavelength is None and fallback_wavelength is not None:
        ff_freqs = tuple(sorted(set(preset.ff_frequencies()) | {1.0 / fallback_wavelength}))
    scene = build_scene(design, preset, slab=slab, ff_frequencies=ff_freqs, threads=threads)
    records = run(scene)
    t_off = scene.sources[0].pulse.t_off
    out: dict = {"design": asdict(design), "slab": slab, "steps": records.steps,
                 "stopped_early": records.stopped_early}
    lam0 = wavelength
    try:
        spec, fit, extra = resonance_from_records(records, preset, t_off)
        out["resonance"] = fit.to_dict()
        out.update(extra)
        if lam0 is None:
            lam0 = fit.wavelength
    except NoPeak as exc:
        out["resonance"] = None
        out["resonance_error"] = f"{exc.code}: {exc}"
        lam0 = lam0 if lam0 is not None else fallback_wavelength
    if "farfield" in records.planes and lam0 is not None:
        plane = records.planes["farfield"]
        i = int(np.argmin(np.abs(plane.frequencies - 1.0 / lam0)))
        f_ff = plane.frequencies[i]
        ff = near_to_far(plane, f_ff, taper=preset.taper)
        out["farfield_wavelength"] = 1.0 / f_ff
        out["eta"] = {f"{na:g}": float(collection_efficiency(ff, na)) for na in preset.na_list}
        grid = np.round(np.linspace(0.0, 1.0, 51), 2)
        out["eta_curve"] = {"na": grid.tolist(), "eta": collection_efficiency(ff, grid).tolist()}
        out["beam"] = beam_angles(ff)
        out["_farfield"] = ff
    if "dipole_box" in records.fluxes and lam0 is not None:
        rec = records.fluxes["dipole_box"]
        if preset.purcell_reference == "slab" and slab:
            f_bulk, p_bulk = rec.frequencies, flux(rec) / np.abs(rec.source_spectrum) ** 2
        elif preset.purcell_reference == "slab":
            f_bulk, p_bulk = slab_reference(design, preset, threads)
        else:
            f_bulk, p_bulk = bulk_reference(preset, design.n_hbn)
        out["purcell_reference"] = preset.purcell_reference
        p_cav = _normalized_power(rec, 1.0 / lam0)
        out["purcell"] = purcell_factor(p_cav, float(np.interp(1.0 / lam0, f_bulk, p_bulk)))
    out["wall_time_s"] = time.time() - t0
    out["_records"] = records
    return out


def mode_vs_thickness(design: CavityDesign, thicknesses, preset: SimPreset = SimPreset(),
                      threads: int | None = None) -> list[tuple[float, float]]:
    """Fitted resonance wavelength for each membrane thickness (probe-only runs)."""
    quick = replace(preset, far_field=False, purcell=False)
    rows = []
    for t in thicknesses:
        res = evaluate_design(design.with_(t=float(t)), quick, threads=threads)
        if res["resonance"] is None:
            raise NoPeak(f"no resonance at t = {t} nm")
        rows.append((float(t), res["resonance"]["wavelength_nm"]))
    return rows
