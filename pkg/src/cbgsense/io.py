"""On-disk formats: grid dumps, monitor-record archives, CSV and JSON helpers."""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadGridDump
from .fdtd.monitors import FluxRecord, PlaneRecord, ProbeRecord
from .fdtd.run import MonitorRecords

GRID_MAGIC = b"CBGGRID1\n"


@dataclass
class GridDump:
    """A scalar field on a regular grid: JSON header plus little-endian float64 payload."""

    data: np.ndarray
    spacing: float
    origin: tuple[float, ...]
    component: str = "eps"
    units: str = "1"
    extra: dict = field(default_factory=dict)

    def header(self) -> dict:
        return {"dims": list(self.data.shape), "spacing_nm": float(self.spacing),
                "origin_nm": [float(o) for o in self.origin], "component": self.component,
                "units": self.units, "endianness": "little", "dtype": "float64",
                "order": "C", "extra": self.extra}


def write_grid(dump: GridDump, path: str | Path) -> None:
    arr = np.ascontiguousarray(dump.data, dtype="<f8")
    head = json.dumps(dump.header(), sort_keys=True).encode() + b"\n"
    with atomic_open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(head)
        fh.write(arr.tobytes(order="C"))


def read_grid(path: str | Path) -> GridDump:
    raw = Path(path).read_bytes()
    if not raw.startswith(GRID_MAGIC):
        raise BadGridDump(f"{path}: missing grid-dump signature")
    end = raw.find(b"\n", len(GRID_MAGIC))
    if end < 0:
        raise BadGridDump(f"{path}: unterminated header")
    try:
        head = json.loads(raw[len(GRID_MAGIC):end])
        dims = tuple(int(d) for d in head["dims"])
        spacing = float(head["spacing_nm"])
        origin = tuple(float(o) for o in head["origin_nm"])
    except (ValueError, KeyError, TypeError) as exc:
        raise BadGridDump(f"{path}: bad header ({exc})") from exc
    if head.get("endianness") != "little" or head.get("dtype", "float64") != "float64":
        raise BadGridDump(f"{path}: unsupported payload encoding")
    payload = raw[end + 1:]
    expected = math.prod(dims) * 8
    if len(payload) != expected:
        raise BadGridDump(f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    return GridDump(data, spacing, origin, head.get("component", ""), head.get("units", ""),
                    head.get("extra", {}))


class atomic_open:
    """Write to a temporary file in the target directory, rename on success."""

    def __init__(self, path, mode="w", **kw):
        self.path = Path(path)
        self.mode = mode
        self.kw = kw

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, self.tmp = tempfile.mkstemp(dir=self.path.parent, prefix=f".{self.path.name}.")
        self.fh = os.fdopen(fd, self.mode, **self.kw)
        return self.fh

    def __exit__(self, exc_type, exc, tb):
        self.fh.close()
        if exc_type is None:
            os.replace(self.tmp, self.path)
        else:
            os.unlink(self.tmp)
        return False


def write_json(obj, path: str | Path) -> None:
    with atomic_open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, complex):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None  # strict JSON has no inf/nan
    return obj


def write_csv(path: str | Path, header, rows) -> None:
    with atomic_open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


# ---- monitor records ----------------------------------------------------

def _plane_arrays(prefix: str, rec: PlaneRecord, arrays: dict) -> dict:
    for k, v in rec.fields.items():
        arrays[f"{prefix}/field/{k}"] = v
    for k, (cu, cv) in rec.coords.items():
        arrays[f"{prefix}/coord_u/{k}"] = cu
        arrays[f"{prefix}/coord_v/{k}"] = cv
    arrays[f"{prefix}/frequencies"] = rec.frequencies
    if rec.source_spectrum is not None:
        arrays[f"{prefix}/source_spectrum"] = rec.source_spectrum
    return {"name": rec.name, "axis": rec.axis, "index": rec.index, "position": rec.position,
            "tangential": list(rec.tangential), "spacing": rec.spacing, "active": list(rec.active),
            "sign": rec.sign, "refractive_index": rec.refractive_index,
            "components": sorted(rec.fields), "has_source": rec.source_spectrum is not None}


def _plane_from(prefix: str, meta: dict, z) -> PlaneRecord:
    fields = {k: z[f"{prefix}/field/{k}"] for k in meta["components"]}
    coords = {k: (z[f"{prefix}/coord_u/{k}"], z[f"{prefix}/coord_v/{k}"]) for k in meta["components"]}
    src = z[f"{prefix}/source_spectrum"] if meta["has_source"] else None
    return PlaneRecord(meta["name"], meta["axis"], meta["index"], meta["position"], tuple(meta["tangential"]),
                       z[f"{prefix}/frequencies"], meta["spacing"], tuple(meta["active"]), fields, coords,
                       meta["sign"], src, meta["refractive_index"])


def save_records(records: MonitorRecords, path: str | Path, meta: dict | None = None) -> None:
    """Store monitor records as a compressed .npz archive with a JSON index."""
    arrays: dict[str, np.ndarray] = {}
    index = {"steps": records.steps, "dt": records.dt, "stopped_early": records.stopped_early,
             "energy_trace": [list(e) for e in records.energy_trace], "probes": {}, "planes": {},
             "fluxes": {}, "meta": meta or {}}
    for name, p in records.probes.items():
        arrays[f"probe/{name}/times"] = p.times
        arrays[f"probe/{name}/values"] = p.values
        index["probes"][name] = {"component": p.component, "position": list(p.position)}
    for name, p in records.planes.items():
        index["planes"][name] = _plane_arrays(f"plane/{name}", p, arrays)
    for name, fx in records.fluxes.items():
        faces = [_plane_arrays(f"flux/{name}/{i}", f, arrays) for i, f in enumerate(fx.faces)]
        arrays[f"flux/{name}/frequencies"] = fx.frequencies
        if fx.source_spectrum is not None:
            arrays[f"flux/{name}/source_spectrum"] = fx.source_spectrum
        index["fluxes"][name] = {"faces": faces, "has_source": fx.source_spectrum is not None}
    arrays["__index__"] = np.frombuffer(json.dumps(to_jsonable(index)).encode(), dtype=np.uint8)
    buf = _io.BytesIO()
    np.savez_compressed(buf, **arrays)
    with atomic_open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_records(path: str | Path) -> tuple[MonitorRecords, dict]:
    with np.load(path, allow_pickle=False) as z:
        index = json.loads(z["__index__"].tobytes())
        probes = {n: ProbeRecord(n, m["component"], tuple(m["position"]), z[f"probe/{n}/times"],
                                 z[f"probe/{n}/values"]) for n, m in index["probes"].items()}
        planes = {n: _plane_from(f"plane/{n}", m, z) for n, m in index["planes"].items()}
        fluxes = {}
        for n, m in index["fluxes"].items():
            faces = [_plane_from(f"flux/{n}/{i}", fm, z) for i, fm in enumerate(m["faces"])]
            src = z[f"flux/{n}/source_spectrum"] if m["has_source"] else None
            fluxes[n] = FluxRecord(n, z[f"flux/{n}/frequencies"], faces, src)
    rec = MonitorRecords(probes, planes, fluxes, index["steps"], index["dt"], index["stopped_early"],
                         [tuple(e) for e in index["energy_trace"]])
    return rec, index.get("meta", {})
