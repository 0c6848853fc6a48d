"""Acceptance criteria, one test each.

Run time is dominated by criterion 6 (three 3D cavity runs, about half an hour
on one core). Every test also records a one-line summary printed at the end of
the session.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from cbgsense import cli
from cbgsense.analysis.cavity import SimPreset, evaluate_design, mode_vs_thickness
from cbgsense.analysis.spectrum import fit_resonance, time_to_spectrum
from cbgsense.geometry import CavityDesign
from cbgsense.io import GridDump, read_grid, write_grid
from cbgsense.spin import (ScenarioSeries, SpinParams, angle_scenario, field_from_shift, fit_odmr,
                           shot_noise_sensitivity, spin_resonances, synthesize_odmr, zeeman_shift)
from cbgsense.sweep import ResultStore, SweepSpec, evaluate, expand, resume, run_sweep
from cbgsense.validation import (bragg_reflectance, cpml_reflection, dipole_power_ratio, eta_z_dipole_closed_form,
                                 far_field_patterns, synthetic_ringdown)

pytestmark = pytest.mark.acceptance


def test_c01_dipole_power(criterion):
    t0 = time.time()
    e20 = abs(dipole_power_ratio(20, 60, 5) - 1)
    e40 = abs(dipole_power_ratio(40, 100, 10) - 1)
    ratio = e20 / e40
    dt = time.time() - t0
    ok = e20 < 0.02 and 3 <= ratio <= 5 and dt <= 300
    assert criterion(1, ok, f"error l/20 {e20:.3%}, l/40 {e40:.3%}, ratio {ratio:.2f}, {dt:.0f} s")


def test_c02_cpml_reflection(criterion):
    t0 = time.time()
    ahead, behind = cpml_reflection(probe_offset=10), cpml_reflection(probe_offset=-10)
    dt = time.time() - t0
    ok = max(ahead, behind) < 1e-4 and dt <= 120
    assert criterion(2, ok, f"reflection {ahead:.2e} (ahead), {behind:.2e} (behind), {dt:.0f} s")


def test_c03_far_field(criterion):
    t0 = time.time()
    r = far_field_patterns()
    ref = eta_z_dipole_closed_form(0.5)
    dt = time.time() - t0
    ok = r["rms_z"] < 0.02 and r["rms_x"] < 0.02 and abs(r["eta_z_na05"] - ref) <= 0.001 and dt <= 300
    assert criterion(3, ok, f"rms z {r['rms_z']:.3%}, x {r['rms_x']:.3%}; eta(0.5) {r['eta_z_na05']:.3%} "
                            f"vs {ref:.3%}; {dt:.0f} s")


def test_c04_bragg_stack(criterion):
    t0 = time.time()
    r = bragg_reflectance()
    dt = time.time() - t0
    edge = max(r["edge_rel_error"])
    ok = edge < 0.01 and r["max_rel_error_plateau"] < 0.02 and dt <= 300
    assert criterion(4, ok, f"edges {edge:.2%}, R on plateau (TMM R >= 0.9) {r['max_rel_error_plateau']:.2%}, "
                            f"R where TMM R >= 0.5 {r['max_rel_error_half_max']:.1%}; {dt:.0f} s")


def test_c05_q_identity(criterion):
    f0, tau = 1 / 850.0, 60000.0
    t, x = synthetic_ringdown(f0, tau, 25.0, 40000)
    q = fit_resonance(time_to_spectrum(x, times=t, frequencies=np.linspace(1 / 900, 1 / 800, 4001))).q
    err = abs(q / (math.pi * f0 * tau) - 1)
    assert criterion(5, err < 0.02, f"Q {q:.1f} vs pi f0 tau {math.pi * f0 * tau:.1f} ({err:.2e})")


def test_c06_desk_scale_cavity(criterion):
    t0 = time.time()
    design = CavityDesign(R=645, r=498, l=224, a=75, t=200)
    preset = SimPreset()
    cav = evaluate_design(design, preset)
    lam0 = cav["resonance"]["wavelength_nm"]
    slab = evaluate_design(design, replace(preset, purcell=False), slab=True, wavelength=cav["farfield_wavelength"])
    ratio = cav["eta"]["0.22"] / slab["eta"]["0.22"]
    others = dict(mode_vs_thickness(design, [160.0, 240.0], preset))
    series = [others[160.0], lam0, others[240.0]]
    dt = time.time() - t0
    ok_a = 800 <= lam0 <= 900
    ok_b = ratio >= 3
    ok_c = series[0] < series[1] < series[2]
    ok = ok_a and ok_b and ok_c and dt <= 45 * 60
    assert criterion(6, ok, f"(a) lambda0 {lam0:.1f} nm, Q {cav['resonance']['Q']:.0f}; (b) eta(0.22) "
                            f"{cav['eta']['0.22']:.3f} vs slab {slab['eta']['0.22']:.3f} = x{ratio:.1f}; (c) "
                            f"lambda0(160/200/240) {series[0]:.0f}/{series[1]:.0f}/{series[2]:.0f} nm; "
                            f"F_P {cav.get('purcell', float('nan')):.1f}; {dt / 60:.1f} min")


def test_c07_zeeman_round_trip(criterion):
    rng = np.random.default_rng(7)
    b = rng.uniform(0, 1000, 1000)
    rt = float(np.max(np.abs(field_from_shift(zeeman_shift(b)) / b - 1)))
    shift = zeeman_shift(10.9) * 1e3
    back = field_from_shift(0.3055)
    ok = rt < 1e-12 and abs(shift - 305.5) <= 0.1 and abs(back - 10.9) <= 0.05
    assert criterion(7, ok, f"round trip {rt:.1e}; 10.9 mT -> {shift:.3f} MHz; 305.5 MHz -> {back:.3f} mT")


def test_c08_spin_closed_form(criterion):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        d, bz = rng.uniform(1, 5), rng.uniform(0, 50)
        p = SpinParams(D=d)
        g = p.gamma_ghz_per_mt
        lo, hi = spin_resonances(p, (0, 0, bz))
        exp_lo, exp_hi = sorted((abs(d - g * bz), d + g * bz))
        worst = max(worst, abs(lo / exp_lo - 1), abs(hi / exp_hi - 1))
    lo, hi = spin_resonances(SpinParams(E=0.05), (0, 0, 0))
    split = abs((hi - lo) - 0.1)
    assert criterion(8, worst < 1e-9 and split < 1e-9, f"max rel error {worst:.1e}; 2E error {split:.1e}")


def test_c09_sensitivity(criterion):
    eta = shot_noise_sensitivity(0.03, 0.3, 1e6, 28.0)
    rel = abs(eta / 250e-6 - 1)
    sqrt_r = shot_noise_sensitivity(0.03, 0.3, 4e6, 28.0) / eta
    lin = shot_noise_sensitivity(0.03, 0.9, 1e6, 28.0) / eta
    ok = rel < 1e-6 and abs(sqrt_r - 0.5) < 1e-15 and abs(lin - 3) < 1e-14
    assert criterion(9, ok, f"eta {eta * 1e6:.6f} uT/rtHz; x4 rate -> x{sqrt_r}; x3 linewidth -> x{lin}")


def test_c10_odmr_monte_carlo(criterion):
    t0 = time.time()
    p = SpinParams()
    field = (0, 0, 5.353)
    lo, hi = spin_resonances(p, field)
    grid = np.linspace(2.9, 4.0, 201)
    good = 0
    for seed in range(200):
        f = fit_odmr(synthesize_odmr(p, field, grid, 0.03, 0.3, 1e5, 1.0, seed=seed))
        good += (abs(f.nu_minus / lo - 1) < 0.01 and abs(f.nu_plus / hi - 1) < 0.01
                 and abs(f.c_minus / 0.03 - 1) < 0.1 and abs(f.c_plus / 0.03 - 1) < 0.1)
    dt = time.time() - t0
    assert criterion(10, good >= 190 and dt <= 120, f"{good}/200 trials within tolerance; {dt:.1f} s")


def test_c11_angle_scenario(criterion):
    angles = np.arange(0, 91, 15.0)
    clean = 3.45 + zeeman_shift(8.0) * np.cos(np.radians(angles))
    exact = abs(angle_scenario(ScenarioSeries("angle_deg", angles, clean)).field_mt / 8.0 - 1)
    good = 0
    for seed in range(200):
        noisy = clean + np.random.default_rng(seed).normal(0, 0.5e-3, angles.size)
        good += abs(angle_scenario(ScenarioSeries("angle_deg", angles, noisy)).field_mt / 8.0 - 1) < 0.02
    assert criterion(11, exact < 1e-6 and good >= 190, f"noiseless error {exact:.1e}; {good}/200 within 2%")


def _fake(design, preset, *, slab=False, fallback_wavelength=None, **kw):
    return {"resonance": {"wavelength_nm": 650.0 + design.t, "Q": 40.0},
            "eta": {f"{na:g}": 0.5 for na in preset.na_list}, "purcell": 2.0}


def test_c12_infrastructure(criterion, tmp_path):
    rng = np.random.default_rng(12)
    data = rng.normal(size=(7, 5, 3)) * 10.0 ** rng.integers(-300, 300, size=(7, 5, 3))
    write_grid(GridDump(data, 25.0, (-1.0, 0.0, 2.5), "ez", "a.u."), tmp_path / "g.grid")
    bit_exact = read_grid(tmp_path / "g.grid").data.tobytes() == data.tobytes()

    spec = SweepSpec([("R", [600.0, 645.0, 700.0]), ("t", [180.0, 200.0])])
    jobs = expand(spec)
    store = ResultStore(tmp_path / "s.jsonl")
    for j in jobs[:3]:
        store.append(evaluate(j, evaluator=_fake))
    done = {r["key"] for r in store.rows() if r["status"] == "ok"}
    diff_ok = {j.key for j in resume(jobs, store.rows())} == {j.key for j in jobs} - done
    run_sweep(spec, store, evaluator=_fake)
    once = store.path.read_bytes()
    run_sweep(spec, store, evaluator=_fake)
    idempotent = store.path.read_bytes() == once

    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert cli.main(["odmr", "synth", "--seed", "7", "--out-dir", str(o)]) == 0
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()
               for n in ("odmr.csv", "odmr-synth.json", "effective-config.json"))
    ok = bit_exact and diff_ok and idempotent and same
    assert criterion(12, ok, f"grid bit-exact {bit_exact}; resume set-difference {diff_ok}; "
                             f"idempotent {idempotent}; odmr synth byte-identical {same}")
