"""Parameter sweeps over cavity designs: expansion, evaluation, a JSONL result store, ranking."""

from __future__ import annotations

import itertools
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .analysis.cavity import SimPreset, evaluate_design
from .errors import CbgError, CorruptStore, EmptySpec, InvalidDesign, NoSuccessfulJobs
from .geometry import CavityDesign
from .io import to_jsonable, write_csv

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PARAMETERS = ("R", "r", "l", "a", "t", "n_rings")
# failures that a rerun cannot change
PERMANENT = ("E_INVALID_DESIGN", "E_NO_PEAK")
_DESIGN_FIELDS = tuple(f.name for f in fields(CavityDesign))


@dataclass(frozen=True)
class Objective:
    """Score = eta(NA) - weight * |lambda0 - target| (weight in 1/nm)."""

    target_wavelength: float = 850.0
    na: float = 0.22
    weight: float = 0.002

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("objective weight must be non-negative")
        if not 0 < self.na <= 1:
            raise ValueError("objective NA must be in (0, 1]")

    def score(self, eta: float, lam0: float) -> float:
        return float(eta - self.weight * abs(lam0 - self.target_wavelength))


@dataclass
class SweepSpec:
    axes: list[tuple[str, list[float]]]
    fixed: dict = field(default_factory=dict)
    preset: SimPreset = field(default_factory=SimPreset)
    include_control: bool = False

    def __post_init__(self):
        self.axes = [(str(n), list(v)) for n, v in (self.axes.items() if isinstance(self.axes, dict) else self.axes)]
        names = [n for n, _ in self.axes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate sweep axis")
        for n, v in self.axes:
            if n not in PARAMETERS:
                raise ValueError(f"cannot sweep {n!r}; choose from {', '.join(PARAMETERS)}")
            if not v:
                raise EmptySpec(f"axis {n!r} has no values")
        for k in self.fixed:
            if k not in _DESIGN_FIELDS:
                raise ValueError(f"unknown design parameter {k!r}")


@dataclass(frozen=True)
class Job:
    design: dict
    slab: bool = False
    invalid: str | None = None  # reason when the design breaks a geometry invariant

    @property
    def key(self) -> str:
        return job_key(self.design, self.slab)


def job_key(design: dict, slab: bool = False) -> str:
    vals = [design[k] for k in _DESIGN_FIELDS]
    return json.dumps(vals + (["slab"] if slab else []))


def key_tuple(key: str) -> tuple:
    v = json.loads(key)
    return tuple((1, x) if isinstance(x, str) else (0, float(x)) for x in v)


def expand(spec: SweepSpec) -> list[Job]:
    """Cartesian product of the axes merged with the fixed overrides."""
    if not spec.axes:
        raise EmptySpec("sweep has no axes")
    base = asdict(CavityDesign())
    base.update(spec.fixed)
    names = [n for n, _ in spec.axes]
    jobs = []
    for combo in itertools.product(*[v for _, v in spec.axes]):
        d = dict(base)
        d.update(zip(names, combo))
        d = _normalize(d)
        try:
            CavityDesign(**d).validate()
            jobs.append(Job(d))
        except InvalidDesign as exc:
            jobs.append(Job(d, invalid=str(exc)))
    if spec.include_control:
        jobs.append(Job(_normalize(base), slab=True))
    return jobs


def _normalize(d: dict) -> dict:
    out = {k: float(d[k]) for k in _DESIGN_FIELDS}
    if float(out["n_rings"]).is_integer():
        out["n_rings"] = int(out["n_rings"])
    return out


Evaluator = Callable[..., dict]


def _preset_for(preset: SimPreset, objective: Objective) -> SimPreset:
    from dataclasses import replace
    nas = tuple(sorted(set(preset.na_list) | {objective.na}))
    return replace(preset, na_list=nas)


def evaluate(job: Job, preset: SimPreset = SimPreset(), objective: Objective = Objective(),
             evaluator: Evaluator = evaluate_design, attempts: int = 1) -> dict:
    """One result row; every failure is captured in the row instead of raised."""
    row = {"schema": SCHEMA_VERSION, "key": job.key, "design": job.design, "slab": job.slab,
           "status": "ok", "reason": None, "attempts": attempts, "lambda0_nm": None, "Q": None,
           "q_ringdown": None, "window_limited": None, "purcell": None, "eta": {}, "eta_curve": None, "score": None, "wall_time_s": 0.0}
    if job.invalid is not None:
        row.update(status="failed", reason=f"E_INVALID_DESIGN: {job.invalid}")
        return row
    t0 = time.time()
    try:
        res = evaluator(CavityDesign(**job.design), _preset_for(preset, objective), slab=job.slab,
                        fallback_wavelength=objective.target_wavelength)
        row["eta"] = res.get("eta", {})
        row["eta_curve"] = res.get("eta_curve")
        row["purcell"] = res.get("purcell")
        if res.get("resonance") is None:
            row.update(status="failed", reason=res.get("resonance_error", "E_NO_PEAK: no resonance"))
        else:
            row["lambda0_nm"] = res["resonance"]["wavelength_nm"]
            row["Q"] = res["resonance"]["Q"]
            row["q_ringdown"] = res.get("q_ringdown")
            row["window_limited"] = res.get("window_limited")
            row["score"] = objective.score(row["eta"][f"{objective.na:g}"], row["lambda0_nm"])
    except CbgError as exc:
        row.update(status="failed", reason=f"{exc.code}: {exc}")
    except Exception as exc:  # row isolation: a crash in one job must not end the sweep
        row.update(status="failed", reason=f"E_INTERNAL: {type(exc).__name__}: {exc}")
    row["wall_time_s"] = time.time() - t0
    return row


# ---- result store -------------------------------------------------------

_ROW_KEYS = {"schema": int, "key": str, "design": dict, "slab": bool, "status": str, "attempts": int}


def _check_row(row, where: str) -> dict:
    if not isinstance(row, dict):
        raise CorruptStore(f"{where}: row is not an object")
    for k, typ in _ROW_KEYS.items():
        if k not in row or not isinstance(row[k], typ):
            raise CorruptStore(f"{where}: missing or mistyped field {k!r}")
    if row["schema"] != SCHEMA_VERSION:
        raise CorruptStore(f"{where}: schema version {row['schema']} (expected {SCHEMA_VERSION})")
    if row["status"] not in ("ok", "failed"):
        raise CorruptStore(f"{where}: bad status {row['status']!r}")
    if set(row["design"]) != set(_DESIGN_FIELDS) or job_key(row["design"], row["slab"]) != row["key"]:
        raise CorruptStore(f"{where}: key does not match design")
    return row


class ResultStore:
    """Append-only JSON-lines file; the latest row per key is the current one."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, row: dict) -> None:
        line = json.dumps(to_jsonable(row), sort_keys=True, allow_nan=False) + "\n"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        # one write per row on an O_APPEND descriptor keeps rows whole
        fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        try:
            os.write(fd, line.encode())
            os.fsync(fd)
        finally:
            os.close(fd)

    def history(self) -> list[dict]:
        if not self.path.exists():
            return []
        rows = []
        with open(self.path) as fh:
            for n, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorruptStore(f"{self.path}:{n}: {exc.msg}") from exc
                rows.append(_check_row(row, f"{self.path}:{n}"))
        return rows

    def rows(self) -> list[dict]:
        latest: dict[str, dict] = {}
        for r in self.history():
            latest[r["key"]] = r
        return [latest[k] for k in sorted(latest, key=key_tuple)]


def resume(jobs: list[Job], rows: list[dict], retry_cap: int = 1) -> list[Job]:
    """Jobs still to run: not stored as ok, and failed fewer than 1 + ``retry_cap`` times.

    Permanent failures (invalid geometry, no resonance) are never retried.
    """
    for i, r in enumerate(rows):
        _check_row(r, f"row {i}")
    latest = {r["key"]: r for r in rows}
    out = []
    for j in jobs:
        r = latest.get(j.key)
        if r is None:
            out.append(j)
        elif r["status"] == "failed":
            permanent = (r.get("reason") or "").split(":")[0] in PERMANENT
            if not permanent and r["attempts"] <= retry_cap:
                out.append(j)
    return out


def _attempts(rows: list[dict], key: str) -> int:
    for r in rows:
        if r["key"] == key:
            return r["attempts"] + 1
    return 1


def _evaluate_star(args):
    return evaluate(*args)


def run_sweep(spec: SweepSpec, store: ResultStore, objective: Objective = Objective(), *,
              evaluator: Evaluator = evaluate_design, retry_cap: int = 1, workers: int = 1) -> list[dict]:
    """Evaluate every outstanding job of ``spec`` and append the rows to ``store``."""
    jobs = expand(spec)
    stored = store.rows()
    todo = resume(jobs, stored, retry_cap)
    log.info("sweep: %d jobs, %d to run", len(jobs), len(todo))
    args = [(j, spec.preset, objective, evaluator, _attempts(stored, j.key)) for j in todo]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(_evaluate_star, args):
                store.append(row)
    else:
        for a in args:
            store.append(evaluate(*a))
    return store.rows()


def rank(rows: list[dict], objective: Objective = Objective()) -> list[dict]:
    """ok rows by descending score (ties by parameter tuple), then failed rows by key."""
    ok = [r for r in rows if r["status"] == "ok"]
    if not ok:
        raise NoSuccessfulJobs("no successful rows to rank")

    def score(r):
        eta = r["eta"].get(f"{objective.na:g}")
        if eta is None and r.get("eta_curve"):
            eta = float(np.interp(objective.na, r["eta_curve"]["na"], r["eta_curve"]["eta"]))
        if eta is None:
            raise ValueError(f"row {r['key']} has no efficiency at NA {objective.na:g}")
        return objective.score(eta, r["lambda0_nm"])

    scored = sorted(ok, key=lambda r: (-score(r), key_tuple(r["key"])))
    failed = sorted((r for r in rows if r["status"] != "ok"), key=lambda r: key_tuple(r["key"]))
    return scored + failed


def export_csv(rows: list[dict], path: str | Path, na_list=None) -> None:
    nas = sorted({k for r in rows for k in r["eta"]}, key=float) if na_list is None else [f"{x:g}" for x in na_list]
    header = list(_DESIGN_FIELDS) + ["slab", "status", "reason", "lambda0_nm", "Q", "purcell"] + \
        [f"eta_{na}" for na in nas] + ["score", "wall_time_s"]
    out = []
    for r in sorted(rows, key=lambda r: key_tuple(r["key"])):
        out.append([r["design"][k] for k in _DESIGN_FIELDS] + [r["slab"], r["status"], r["reason"] or "",
                   _blank(r["lambda0_nm"]), _blank(r["Q"]), _blank(r["purcell"])] +
                   [_blank(r["eta"].get(na)) for na in nas] + [_blank(r["score"]), r["wall_time_s"]])
    write_csv(path, header, out)


def _blank(x):
    return "" if x is None else x


def refine(spec: SweepSpec, store: ResultStore, objective: Objective = Objective(), *, rounds: int = 1,
           evaluator: Evaluator = evaluate_design, retry_cap: int = 1) -> dict:
    """Greedy coordinate refinement around the best stored design.

    Each round visits the swept axes in order and evaluates the incumbent and
    its two neighbours at +-step (step = smallest gap in that axis's grid),
    moving to the best; steps halve after every round.
    """
    best = rank(store.rows(), objective)[0]
    steps = {}
    for name, vals in spec.axes:
        v = sorted(set(float(x) for x in vals))
        steps[name] = min(np.diff(v)) if len(v) > 1 else 0.05 * abs(v[0]) or 1.0
    for _ in range(rounds):
        for name, _vals in spec.axes:
            centre = best["design"][name]
            pts = [centre - steps[name], centre, centre + steps[name]]
            if name == "n_rings":
                pts = sorted({max(0, int(round(p))) for p in pts})
            sub = SweepSpec([(name, pts)], {k: v for k, v in best["design"].items() if k != name}, spec.preset)
            rows = run_sweep(sub, store, objective, evaluator=evaluator, retry_cap=retry_cap)
            best = rank(rows, objective)[0]
        steps = {k: (s / 2 if k != "n_rings" else s) for k, s in steps.items()}
    return best


def spec_from_config(cfg) -> SweepSpec:
    axes = cfg.require("sweep.axes")
    fixed = dict(cfg.tree["design"])
    for name in axes:
        fixed.pop(name, None)
    return SweepSpec(list(axes.items()), fixed, cfg.preset())


def objective_from_config(cfg) -> Objective:
    o = cfg.tree["objective"]
    return Objective(o["target_wavelength"], o["na"], o["weight"])
