"""Command-line interface.

Exit codes: 0 success, 1 domain error, 2 usage error. Failures print a JSON
error report (``{"error": {"code": ..., "message": ...}}``) to stderr and,
when an output directory is known, to ``error.json`` there.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, derive_seed, parse_config, write_sidecar
from .errors import CbgError, DomainError, NoMonitor, UsageError
from .io import GridDump, load_records, save_records, to_jsonable, write_csv, write_grid, write_json

log = logging.getLogger("cbgsense")


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageExit(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration key, e.g. design.R=700 (repeatable)")
    p.add_argument("--out-dir", default=".", help="directory for outputs (default: current)")
    p.add_argument("--seed", type=int, help="master random seed")
    p.add_argument("--threads", type=int, help="worker threads for the field solver")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="cbgsense", description="Bullseye-cavity FDTD and spin-defect magnetometry toolkit")
    top.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run the cavity scene and store monitor records")
    _common(p)
    p.add_argument("--slab", action="store_true", help="simulate the unpatterned membrane instead")
    p.add_argument("--no-farfield", action="store_true", help="skip the far-field plane")
    p.add_argument("--no-purcell", action="store_true", help="skip the flux box around the dipole")

    for name, text in (("spectrum", "probe spectrum and resonance fit"),
                       ("farfield", "far-field pattern and collection efficiency"),
                       ("nearfield", "|E|^2 map on the far-field plane")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("records", help="records.npz written by 'simulate'")
        if name != "spectrum":
            p.add_argument("--wavelength", type=float, help="wavelength in nm (default: resonance)")
            p.add_argument("--plane", default=None, help="plane monitor name (default: the only one)")

    sw = sub.add_parser("sweep", help="design sweeps").add_subparsers(dest="action", required=True,
                                                                     parser_class=_Parser)
    p = sw.add_parser("run", help="evaluate outstanding sweep jobs")
    _common(p)
    p.add_argument("--store", help="result store (default: OUT_DIR/results.jsonl)")
    p.add_argument("--retry-failed", type=int, help="retries allowed for failed rows (default from config)")
    p.add_argument("--refine", type=int, help="greedy refinement rounds after the grid")
    p.add_argument("--workers", type=int, help="parallel jobs")
    p.add_argument("--control", action="store_true", help="add the unpatterned-membrane control job")
    for action in ("export", "rank"):
        p = sw.add_parser(action, help=f"{action} a result store")
        _common(p)
        p.add_argument("store", help="results.jsonl")

    od = sub.add_parser("odmr", help="spin-defect ODMR tools").add_subparsers(dest="action", required=True,
                                                                          parser_class=_Parser)
    p = od.add_parser("synth", help="synthesize an ODMR spectrum")
    _common(p)
    p.add_argument("--noiseless", action="store_true")
    p = od.add_parser("fit", help="fit a double-Gaussian ODMR spectrum")
    _common(p)
    p.add_argument("input", help="CSV with freq_ghz,contrast")
    p.add_argument("--rate", type=float, help="photon rate (counts/s) for the sensitivity estimate")
    for action, text in (("sense-steel", "field change versus shielding thickness"),
                         ("sense-angle", "field magnitude from a rotation series")):
        p = od.add_parser(action, help=text)
        _common(p)
        p.add_argument("input", help="scenario CSV")

    p = sub.add_parser("validate", help="run the analytic-oracle checks")
    _common(p)
    p.add_argument("--quick", action="store_true", help="skip the multi-minute 3D checks")
    return top


def _config(args) -> RunConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    return parse_config(args.config, overrides)


def _threads(cfg: RunConfig):
    return cfg.tree["threads"] or None


# ---- commands -----------------------------------------------------------

def cmd_simulate(args, cfg, out: Path) -> dict:
    from dataclasses import replace

    from .analysis.cavity import build_scene
    from .fdtd import run
    preset = cfg.preset()
    if args.no_farfield:
        preset = replace(preset, far_field=False)
    if args.no_purcell:
        preset = replace(preset, purcell=False)
    scene = build_scene(cfg.design(), preset, slab=args.slab, threads=_threads(cfg))
    records = run(scene)
    meta = {"slab": args.slab, "t_off": scene.sources[0].pulse.t_off, "n_hbn": cfg.design().n_hbn,
            "design": cfg.tree["design"]}
    save_records(records, out / "records.npz", meta)
    summary = {"steps": records.steps, "dt": records.dt, "stopped_early": records.stopped_early,
               "probes": sorted(records.probes), "planes": sorted(records.planes),
               "fluxes": sorted(records.fluxes)}
    write_json(summary, out / "simulate.json")
    return summary


def cmd_spectrum(args, cfg, out: Path) -> dict:
    from .analysis.cavity import resonance_from_records
    records, meta = load_records(args.records)
    if not records.probes:
        raise NoMonitor("records contain no time probes")
    spec, fit, extra = resonance_from_records(records, cfg.preset(), meta.get("t_off", 0.0))
    # ascending wavelength; value is the summed probe power
    write_csv(out / "spectrum.csv", ["wavelength_nm", "value"], zip(spec.wavelengths[::-1], spec.power[::-1]))
    report = {"resonance": fit.to_dict(), **extra}
    write_json(report, out / "resonance.json")
    return report


def _plane(records, name):
    if not records.planes:
        raise NoMonitor("records contain no DFT-plane monitor")
    if name is None:
        if len(records.planes) > 1:
            raise UsageError(f"several planes recorded ({', '.join(records.planes)}); pick one with --plane")
        return next(iter(records.planes.values()))
    if name not in records.planes:
        raise NoMonitor(f"no plane monitor named {name!r}")
    return records.planes[name]


def _plane_frequency(plane, wavelength, records, cfg, meta) -> float:
    if wavelength is None:
        from .analysis.cavity import resonance_from_records
        _, fit, _ = resonance_from_records(records, cfg.preset(), meta.get("t_off", 0.0))
        wavelength = fit.wavelength
    i = int(np.argmin(np.abs(plane.frequencies - 1.0 / wavelength)))
    return float(plane.frequencies[i])


def cmd_farfield(args, cfg, out: Path) -> dict:
    from .analysis.farfield import beam_angles, collection_efficiency, near_to_far
    records, meta = load_records(args.records)
    plane = _plane(records, args.plane)
    f = _plane_frequency(plane, args.wavelength, records, cfg, meta)
    opts = cfg.tree["farfield"]
    ff = near_to_far(plane, f, n_theta=opts["n_theta"], n_phi=opts["n_phi"], taper=cfg.tree["sim"]["taper"])
    T, P = np.meshgrid(np.degrees(ff.theta), np.degrees(ff.phi), indexing="ij")
    write_csv(out / "farfield.csv", ["theta_deg", "phi_deg", "intensity"],
              zip(T.ravel(), P.ravel(), ff.intensity.ravel()))
    na = np.round(np.linspace(0.0, 1.0, 101), 2)
    eta = collection_efficiency(ff, na, opts["normalization"])
    write_csv(out / "eta.csv", ["na", "eta"], zip(na, eta))
    dtheta = float(np.degrees(ff.theta[1] - ff.theta[0]))
    write_grid(GridDump(ff.intensity, dtheta, (0.0, 0.0), "farfield_intensity", "W/sr (scaled)",
                        {"wavelength_nm": ff.wavelength, "axes": ["theta", "phi"]}), out / "farfield.grid")
    write_json({"theta_deg": np.degrees(ff.theta), "phi_deg": np.degrees(ff.phi), "wavelength_nm": ff.wavelength,
                "n_medium": ff.n_medium, "grid": "farfield.grid"}, out / "farfield.grid.json")
    report = {"wavelength_nm": ff.wavelength, "beam": beam_angles(ff),
              "eta": {f"{x:g}": float(collection_efficiency(ff, x, opts["normalization"]))
                      for x in cfg.tree["sim"]["na_list"]}}
    write_json(report, out / "farfield.json")
    return report


def cmd_nearfield(args, cfg, out: Path) -> dict:
    from .analysis.farfield import intensity_map
    records, meta = load_records(args.records)
    plane = _plane(records, args.plane)
    f = _plane_frequency(plane, args.wavelength, records, cfg, meta)
    cu, cv, m = intensity_map(plane, f)
    U, V = np.meshgrid(cu, cv, indexing="ij")
    write_csv(out / "nearfield.csv", ["u_nm", "v_nm", "intensity"], zip(U.ravel(), V.ravel(), m.ravel()))
    report = {"wavelength_nm": 1.0 / f, "shape": list(m.shape), "peak": float(m.max())}
    write_json(report, out / "nearfield.json")
    return report


def cmd_sweep(args, cfg, out: Path) -> dict:
    from .sweep import (ResultStore, export_csv, objective_from_config, rank, refine, run_sweep,
                        spec_from_config)
    objective = objective_from_config(cfg)
    if args.action == "run":
        store = ResultStore(args.store or out / "results.jsonl")
        spec = spec_from_config(cfg)
        spec.include_control = args.control
        retry = args.retry_failed if args.retry_failed is not None else cfg.tree["sweep"]["retry_failed"]
        workers = args.workers or cfg.tree["sweep"]["workers"]
        rows = run_sweep(spec, store, objective, retry_cap=retry, workers=workers)
        rounds = args.refine if args.refine is not None else cfg.tree["sweep"]["refine_rounds"]
        best = refine(spec, store, objective, rounds=rounds, retry_cap=retry) if rounds else None
        rows = store.rows()
        return {"store": str(store.path), "rows": len(rows),
                "ok": sum(r["status"] == "ok" for r in rows), "best": best and best["key"]}
    store = ResultStore(args.store)
    rows = store.rows()
    if args.action == "export":
        export_csv(rows, out / "sweep.csv")
        return {"rows": len(rows), "csv": str(out / "sweep.csv")}
    ranked = rank(rows, objective)
    write_json(ranked, out / "ranked.json")
    return {"best": ranked[0]["key"], "score": ranked[0]["score"], "rows": len(ranked)}


def cmd_odmr(args, cfg, out: Path) -> dict:
    from . import spin
    p = cfg.spin()
    o = cfg.tree["odmr"]
    if args.action == "synth":
        seed = derive_seed(cfg.tree["seed"], "odmr.synth")
        grid = np.linspace(o["f_start"], o["f_stop"], o["points"])
        s = spin.synthesize_odmr(p, o["field_mt"], grid, o["contrast"], o["linewidth"], o["rate"], o["dwell"],
                                 seed=seed, noise=o["noise"] and not args.noiseless)
        spin.write_spectrum_csv(s, out / "odmr.csv")
        lo, hi = spin.spin_resonances(p, o["field_mt"])
        report = {"seed": seed, "nu_minus_ghz": lo, "nu_plus_ghz": hi, "points": int(grid.size)}
        write_json(report, out / "odmr-synth.json")
        return report
    if args.action == "fit":
        s = spin.read_spectrum_csv(args.input)
        fit = spin.fit_odmr(s, max_iter=o["max_iter"])
        rate = args.rate if args.rate is not None else o["rate"]
        sens = spin.sensitivity(fit, rate, p)
        report = {"fit": fit.to_dict(), "sensitivity": sens.to_dict(),
                  "inputs": {"rate_counts_per_s": rate, "gamma_e_mhz_per_mt": p.gamma_e,
                             "prefactor": spin.GAUSSIAN_PF, "contrast": [fit.c_minus, fit.c_plus],
                             "linewidth_ghz": [fit.lw_minus, fit.lw_plus]}}
        write_json(report, out / "odmr-fit.json")
        return report
    series = spin.read_scenario_csv(args.input)
    if args.action == "sense-steel":
        if series.kind != "thickness_mm":
            raise UsageError("sense-steel needs a thickness_mm column")
        rows = spin.steel_scenario(series, p)
        write_csv(out / "steel.csv", list(rows[0]), [list(r.values()) for r in rows])
        report = {"rows": rows}
        write_json(report, out / "steel.json")
        return report
    if series.kind != "angle_deg":
        raise UsageError("sense-angle needs an angle_deg column")
    report = spin.angle_scenario(series, p).to_dict()
    write_json(report, out / "angle.json")
    return report


def cmd_validate(args, cfg, out: Path) -> dict:
    from .validation import run_all
    checks = [c.to_dict() for c in run_all(quick=args.quick)]
    report = {"passed": all(c["passed"] for c in checks), "checks": checks}
    write_json(report, out / "validate.json")
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  ({c['runtime_s']:.1f} s)")
    return report


COMMANDS = {"simulate": cmd_simulate, "spectrum": cmd_spectrum, "farfield": cmd_farfield,
            "nearfield": cmd_nearfield, "sweep": cmd_sweep, "odmr": cmd_odmr, "validate": cmd_validate}


def _report(code: str, message: str, exit_code: int, out: Path | None) -> None:
    doc = {"error": {"code": code, "message": message, "exit_code": exit_code}}
    print(json.dumps(doc), file=sys.stderr)
    if out is not None:
        try:
            write_json(doc, out / "error.json")
        except OSError:
            pass


def main(argv=None) -> int:
    parser = build_parser()
    out = None
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cfg = _config(args)
        write_sidecar(cfg, out)
        result = COMMANDS[args.command](args, cfg, out)
        if args.command != "validate":
            print(json.dumps(to_jsonable(_short(result)), default=str))
        if args.command == "validate" and not result["passed"]:
            return 1
        return 0
    except _UsageExit as exc:
        _report("E_USAGE", str(exc), 2, None)
        return 2
    except UsageError as exc:
        _report(exc.code, str(exc), 2, out)
        return 2
    except DomainError as exc:
        _report(exc.code, str(exc), 1, out)
        return 1
    except CbgError as exc:
        _report(getattr(exc, "code", "E_ERROR"), str(exc), 1, out)
        return 1
    except (FileNotFoundError, IsADirectoryError) as exc:
        _report("E_NO_INPUT", str(exc), 2, out)
        return 2
    except ValueError as exc:
        _report("E_INVALID_INPUT", str(exc), 1, out)
        return 1


def _short(result):
    """Summary for stdout: drop bulky lists."""
    if isinstance(result, dict):
        return {k: v for k, v in result.items() if not (isinstance(v, list) and len(v) > 20)}
    return result


if __name__ == "__main__":
    sys.exit(main())
