"""Hierarchical run configuration: defaults <- file (TOML or JSON) <- dotted overrides."""

from __future__ import annotations

import copy
import hashlib
import json
import re
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import MissingRequired, ParseError, UnknownKey
from .fdtd.core import CpmlParams
from .geometry import CavityDesign
from .spin import SpinParams

SIDECAR_NAME = "effective-config.json"
SWEEP_PARAMETERS = ("R", "r", "l", "a", "t", "n_rings")


def _sim_defaults() -> dict:
    from .analysis.cavity import SimPreset
    d = SimPreset().to_dict()
    d["fit_band"] = None
    return d


def default_tree() -> dict:
    """The full default configuration. ``None`` marks keys that must be supplied when used."""
    return {
        "seed": 0,
        "threads": 0,  # 0 = library default
        "design": asdict(CavityDesign()),
        "sim": _sim_defaults(),
        "farfield": {"n_theta": 91, "n_phi": 72, "normalization": "hemisphere", "wavelength": None},
        "spin": {"D": 3.45, "E": 0.0, "g_e": 2.0023, "gamma_e": 28.0, "axis": [0.0, 0.0, 1.0]},
        "odmr": {"field_mt": [0.0, 0.0, 5.353], "f_start": 2.9, "f_stop": 4.0, "points": 201,
                 "contrast": 0.03, "linewidth": 0.3, "rate": 1e5, "dwell": 1.0, "noise": True,
                 "max_iter": 200},
        "objective": {"target_wavelength": 850.0, "na": 0.22, "weight": 0.002},
        "sweep": {"axes": {}, "retry_failed": 1, "workers": 1, "refine_rounds": 0},
    }


# subtrees whose keys are free-form (validated elsewhere)
_OPEN_TABLES = {("sweep", "axes")}


@dataclass
class RunConfig:
    tree: dict

    def get(self, dotted: str):
        node = self.tree
        for part in dotted.split("."):
            node = node[part]
        return node

    def require(self, dotted: str):
        try:
            v = self.get(dotted)
        except KeyError:
            v = None
        if v is None or (isinstance(v, (dict, list)) and not v):
            raise MissingRequired(f"configuration key {dotted!r} is required here")
        return v

    def design(self) -> CavityDesign:
        return CavityDesign(**self.tree["design"])

    def preset(self):
        from .analysis.cavity import SimPreset
        return SimPreset.from_dict(self.tree["sim"])

    def spin(self) -> SpinParams:
        d = dict(self.tree["spin"])
        d["axis"] = tuple(d["axis"])
        return SpinParams(**d)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.tree)

    def __eq__(self, other):
        return isinstance(other, RunConfig) and _canon(self.tree) == _canon(other.tree)


def _canon(x):
    return json.loads(json.dumps(x, sort_keys=True))


def _load_file(path: Path) -> dict:
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from exc
        if not isinstance(data, dict):
            raise ParseError(f"{path}: top level must be an object", 1, 1)
        return data
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        if line is None:
            m = re.search(r"line (\d+), column (\d+)", str(exc))
            line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        msg = getattr(exc, "msg", str(exc))
        raise ParseError(f"{path}: {msg}", line, col) from exc


def _coerce(value, default, key: str):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ParseError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ParseError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, (list, tuple)):
        if not isinstance(value, (list, tuple)):
            raise ParseError(f"{key}: expected a list, got {value!r}")
        if default and all(isinstance(x, float) for x in default):
            return [_coerce(x, 0.0, key) for x in value]
        return list(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ParseError(f"{key}: expected a string, got {value!r}")
    return value


def _merge(base: dict, update: dict, path: tuple = ()) -> None:
    for k, v in update.items():
        here = path + (k,)
        name = ".".join(here)
        if path in _OPEN_TABLES:
            _check_open(path, k, v)
            base[k] = v
            continue
        if k not in base:
            raise UnknownKey(f"unknown configuration key {name!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ParseError(f"{name}: expected a table")
            _merge(base[k], v, here)
        else:
            base[k] = _coerce(v, base[k], name)


def _check_open(path: tuple, k: str, v) -> None:
    if path == ("sweep", "axes"):
        if k not in SWEEP_PARAMETERS:
            raise UnknownKey(f"sweep axis {k!r} is not one of {', '.join(SWEEP_PARAMETERS)}")
        if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            raise ParseError(f"sweep.axes.{k}: expected a list of numbers")


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(tree: dict, item: str) -> None:
    """Apply one ``dotted.key=value`` override; the value is read as a TOML literal."""
    if "=" not in item:
        raise ParseError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    value = _parse_value(raw.strip())
    nested: dict = value
    for p in reversed(parts):
        nested = {p: nested}
    _merge(tree, nested)


def parse_config(path: str | Path | None = None, overrides=()) -> RunConfig:
    tree = default_tree()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise MissingRequired(f"config file {p} does not exist")
        _merge(tree, _load_file(p))
    for item in overrides:
        apply_override(tree, item)
    _validate(tree)
    return RunConfig(tree)


def _validate(tree: dict) -> None:
    names = {f.name for f in fields(CavityDesign)}
    if set(tree["design"]) != names:
        raise MissingRequired(f"design needs exactly the keys {sorted(names)}")
    choices = {("sim", "purcell_reference"): ("bulk", "slab"), ("sim", "dtype"): ("float32", "float64"),
               ("sim", "polarization"): ("x", "y", "z"), ("farfield", "normalization"): ("hemisphere", "total")}
    for (sec, key), allowed in choices.items():
        if tree[sec][key] not in allowed:
            raise ParseError(f"{sec}.{key} must be one of {', '.join(allowed)}; got {tree[sec][key]!r}")
    cp = tree["sim"].get("cpml")
    if isinstance(cp, dict):
        CpmlParams(**cp).validate()


def derive_seed(master: int, label: str) -> int:
    """Sub-seed from (master seed, task label); independent of how many other tasks exist."""
    h = hashlib.sha256(f"{int(master)}:{label}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def write_sidecar(cfg: RunConfig, out_dir: str | Path) -> Path:
    from .io import write_json
    path = Path(out_dir) / SIDECAR_NAME
    write_json(cfg.tree, path)
    return path
