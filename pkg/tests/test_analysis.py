import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbgsense.analysis.farfield import (FarFieldMap, beam_angles, collection_efficiency, hemisphere_power,
                                        intensity_map, near_to_far)
from cbgsense.analysis.spectrum import (Spectrum, fit_resonance, lorentzian, purcell_factor, ringdown_q,
                                        time_to_spectrum)
from cbgsense.analysis.tmm import SlabStack, stop_band_edges, transfer_matrix_spectrum
from cbgsense.errors import EmptyFarField, FrequencyNotRecorded, NoPeak, PlaneTooSmall, SeriesTooShort, ZeroReference
from cbgsense.fdtd import DftPlane, DipoleSource, Pulse, Scene, flux, run
from cbgsense.fdtd.monitors import PlaneRecord
from cbgsense.geometry import homogeneous


# --- spectra ---------------------------------------------------------------

def test_pure_tone_lands_in_one_bin():
    n, dt = 1024, 1.0
    k = 37
    t = np.arange(n) * dt
    s = time_to_spectrum(np.cos(2 * math.pi * k / n * t), dt)
    i = int(np.argmax(s.power))
    assert s.frequencies[i] == pytest.approx(k / n)
    others = np.delete(s.power, i)
    assert others.max() < 1e-20 * s.power[i]


def test_damped_tone_width():
    tau, f0, dt = 40000.0, 1 / 800, 10.0
    t = np.arange(200_000) * dt
    s = time_to_spectrum(np.exp(-t / tau) * np.cos(2 * math.pi * f0 * t), dt)
    fit = fit_resonance(s, (780, 820))
    # power spectrum of an exp(-t/tau) envelope has FWHM 1/(pi tau)
    assert fit.fwhm == pytest.approx(1 / (math.pi * tau), rel=1e-3)
    # the negative-frequency image pulls the centre by ~1e-5
    assert 1 / fit.wavelength == pytest.approx(f0, rel=5e-5)


def test_zero_series_gives_zero_power():
    s = time_to_spectrum(np.zeros(64), 1.0)
    assert np.all(s.power == 0)


def test_short_series_rejected():
    with pytest.raises(SeriesTooShort):
        time_to_spectrum(np.ones(10), 1.0)


def test_explicit_frequencies_match_fft_bins():
    rng = np.random.default_rng(3)
    x = rng.normal(size=256)
    a = time_to_spectrum(x, 2.0)
    b = time_to_spectrum(x, 2.0, frequencies=a.frequencies[:40])
    np.testing.assert_allclose(b.power, a.power[:40], rtol=1e-9)


def _lorentz_spec(f0=1 / 850, q=300, amp=2.0, offset=0.01, n=400):
    f = np.linspace(1 / 1000, 1 / 700, n)
    return Spectrum(f, lorentzian(f, f0, f0 / q, amp, offset))


def test_fit_recovers_lorentzian():
    fit = fit_resonance(_lorentz_spec())
    assert fit.wavelength == pytest.approx(850, rel=1e-6)
    assert fit.q == pytest.approx(300, rel=1e-6)
    assert fit.amplitude == pytest.approx(2.0, rel=1e-6)


def test_flat_spectrum_has_no_peak():
    f = np.linspace(1 / 1000, 1 / 700, 100)
    with pytest.raises(NoPeak):
        fit_resonance(Spectrum(f, np.ones_like(f)))


@settings(max_examples=25, deadline=None)
@given(st.floats(-3e-5, 3e-5))
def test_fit_is_shift_equivariant(shift):
    base = _lorentz_spec(f0=1 / 850, q=120, offset=0.0)
    moved = Spectrum(base.frequencies + shift, base.power)
    a, b = fit_resonance(base), fit_resonance(moved)
    assert b.frequency - a.frequency == pytest.approx(shift, abs=1e-12)
    assert b.fwhm == pytest.approx(a.fwhm, rel=1e-8)


def test_ringdown_and_linewidth_q_agree():
    f0, q = 1 / 850, 200
    tau = q / (math.pi * f0)
    dt = 5.0
    t = np.arange(60_000) * dt
    x = np.exp(-t / tau) * np.cos(2 * math.pi * f0 * t)
    q_ring, tau_ring = ringdown_q(x, t, f0)
    q_fit = fit_resonance(time_to_spectrum(x, dt), (800, 900)).q
    assert q_ring == pytest.approx(q, rel=1e-3)
    assert tau_ring == pytest.approx(tau, rel=1e-3)
    assert q_fit == pytest.approx(q, rel=1e-3)


def test_purcell_ratio():
    assert purcell_factor(9.0, 3.0) == 3.0
    with pytest.raises(ZeroReference):
        purcell_factor(1.0, 0.0)


# --- transfer matrices -----------------------------------------------------

@pytest.mark.parametrize("n1,n2", [(1.0, 1.5), (1.0, 2.1), (2.1, 1.0)])
def test_single_interface_fresnel(n1, n2):
    # an infinitesimal layer of the substrate index leaves a bare interface
    res = transfer_matrix_spectrum(SlabStack(((n2, 1e-9),), n1, n2), [800.0])
    assert res.R[0] == pytest.approx(((n1 - n2) / (n1 + n2)) ** 2, abs=1e-12)


def test_energy_conserved_lossless():
    stack = SlabStack(((2.1, 120.0), (1.45, 300.0), (2.1, 57.0)), 1.0, 1.5)
    res = transfer_matrix_spectrum(stack, np.linspace(400, 1200, 301))
    np.testing.assert_allclose(res.R + res.T, 1.0, atol=1e-12)


def test_quarter_wave_peak_reflectance():
    nh, nl = 2.1, 1.45
    stack = SlabStack.quarter_wave(nh, nl, 4, 850.0)
    r = transfer_matrix_spectrum(stack, [850.0]).R[0]
    y = (nh / nl) ** 8
    assert r == pytest.approx(((1 - y) / (1 + y)) ** 2, abs=1e-9)


def test_stop_band_contains_design_wavelength():
    lam = np.linspace(600, 1200, 2001)
    res = transfer_matrix_spectrum(SlabStack.quarter_wave(2.1, 1.0, 6, 850.0), lam)
    lo, hi = stop_band_edges(lam, res.R, around=850.0)
    assert lo < 850 < hi


# --- far field -------------------------------------------------------------

def _aperture_record(diameter, lam, side, dx):
    """Uniform x-polarized plane wave through a circular hole in a z plane."""
    n = int(round(side / dx))
    cells = (np.arange(n) + 0.5) * dx - side / 2
    nodes = np.arange(n + 1) * dx - side / 2

    def disk(cx, cy):
        X, Y = np.meshgrid(cx, cy, indexing="ij")
        return ((X ** 2 + Y ** 2) <= (diameter / 2) ** 2).astype(complex)[None]

    fields = {"ex": disk(cells, nodes), "hy": disk(cells, nodes),
              "ey": 0 * disk(nodes, cells), "hx": 0 * disk(nodes, cells), "ez": 0 * disk(nodes, nodes)}
    coords = {"ex": (cells, nodes), "hy": (cells, nodes), "ey": (nodes, cells), "hx": (nodes, cells),
              "ez": (nodes, nodes)}
    return PlaneRecord("ap", 2, 0, 0.0, (0, 1), np.array([1 / lam]), dx, (True, True, True), fields, coords)


def test_aperture_first_null():
    lam, d = 500.0, 3000.0
    rec = _aperture_record(d, lam, 4000.0, 10.0)
    ff = near_to_far(rec, 1 / lam, n_theta=901, n_phi=8, taper=0.0)
    rad = ff.radial()
    i = next(j for j in range(1, rad.size - 1) if rad[j] < rad[j - 1] and rad[j] <= rad[j + 1])
    assert math.sin(ff.theta[i]) == pytest.approx(1.22 * lam / d, rel=0.05)


def test_hemisphere_power_matches_plane_flux():
    lam = 500.0
    rec = _aperture_record(3000.0, lam, 4000.0, 10.0)
    ff = near_to_far(rec, 1 / lam, n_theta=361, n_phi=72, taper=0.0)
    assert hemisphere_power(ff) == pytest.approx(flux(rec, 1 / lam), rel=0.03)


def test_small_plane_rejected():
    rec = _aperture_record(1000.0, 500.0, 1500.0, 10.0)
    with pytest.raises(PlaneTooSmall):
        near_to_far(rec, 1 / 500)


def test_unrecorded_frequency():
    rec = _aperture_record(3000.0, 500.0, 4000.0, 20.0)
    with pytest.raises(FrequencyNotRecorded):
        near_to_far(rec, 1 / 501)


def _lambert(n_theta=181):
    theta = np.linspace(0, math.pi / 2, n_theta)
    phi = np.linspace(0, 2 * math.pi, 36, endpoint=False)
    return FarFieldMap(theta, phi, np.cos(theta)[:, None] * np.ones(phi.size), 850.0)


def test_efficiency_monotone_and_complete():
    ff = _lambert()
    na = np.linspace(0, 1, 101)
    eta = collection_efficiency(ff, na)
    assert np.all(np.diff(eta) >= 0)
    assert eta[-1] == 1.0
    # cos(theta) emitter: eta = NA^2
    assert collection_efficiency(ff, 0.5) == pytest.approx(0.25, abs=1e-3)


def test_empty_far_field():
    ff = _lambert()
    ff.intensity[:] = 0
    with pytest.raises(EmptyFarField):
        collection_efficiency(ff, 0.5)


def test_beam_angles_of_lambertian():
    b = beam_angles(_lambert(901))
    assert b["hwhm_deg"] == pytest.approx(60.0, abs=0.2)
    assert b["containment_deg"] == pytest.approx(45.0, abs=0.2)


def test_dipole_intensity_map_centred_and_symmetric():
    dx = 40.0
    g = homogeneous(1.0, (30, 30, 30), dx)
    f = 1 / 850
    rec = run(Scene(g, [DipoleSource((0, 0, 0), "z", Pulse())], [DftPlane("pl", "z", 3 * dx, (f,))],
                    duration=20000, early_stop=1e-6))
    cu, cv, m = intensity_map(rec["pl"], f)
    np.testing.assert_allclose(cu, -cu[::-1], atol=1e-9)
    np.testing.assert_allclose(cv, -cv[::-1], atol=1e-9)
    i, j = np.unravel_index(np.argmax(m), m.shape)
    assert abs(cu[i]) <= dx and abs(cv[j]) <= dx
    scale = m.max()
    assert np.max(np.abs(m - m[::-1, :])) <= 0.01 * scale
    assert np.max(np.abs(m - m[:, ::-1])) <= 0.01 * scale
