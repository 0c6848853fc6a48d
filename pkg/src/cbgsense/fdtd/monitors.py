"""Time probes, DFT planes and flux boxes.

Monitor specs are plain descriptions; :func:`attach` turns them into
accumulators bound to a :class:`YeeState`, and each accumulator's
``record()`` produces the immutable result.

DFT convention: X(f) = sum_n x(t_n) exp(+2 pi i f t_n) dt, with E sampled at
n*dt and H at (n - 1/2)*dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import FrequencyNotRecorded
from . import _kernels as K
from .core import AXES, YeeState

COMPONENTS = ("ex", "ey", "ez", "hx", "hy", "hz")


def _axis(a) -> int:
    return AXES.index(a) if isinstance(a, str) else int(a)


def _check_freqs(freqs) -> np.ndarray:
    f = np.atleast_1d(np.asarray(freqs, dtype=float))
    if f.size == 0 or np.any(f <= 0) or np.any(np.diff(f) <= 0):
        raise ValueError("frequency list must be positive and strictly increasing")
    return f


@dataclass(frozen=True)
class TimeProbe:
    name: str
    component: str
    position: tuple[float, float, float]


@dataclass(frozen=True)
class DftPlane:
    """Tangential E/H phasors on a node plane normal to ``axis``.

    ``extent`` gives (lo, hi) in nm for the two in-plane axes in increasing
    axis order; None spans the interior region.
    """

    name: str
    axis: int | str
    position: float
    frequencies: tuple
    extent: tuple | None = None


@dataclass(frozen=True)
class FluxBox:
    """Closed box of six DFT planes (faces along degenerate axes are dropped)."""

    name: str
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    frequencies: tuple


@dataclass
class ProbeRecord:
    name: str
    component: str
    position: tuple[float, float, float]
    times: np.ndarray
    values: np.ndarray


@dataclass
class PlaneRecord:
    name: str
    axis: int
    index: int
    position: float
    tangential: tuple[int, int]
    frequencies: np.ndarray
    spacing: float
    active: tuple[bool, bool, bool]
    fields: dict[str, np.ndarray]
    coords: dict[str, tuple[np.ndarray, np.ndarray]]
    sign: float = 1.0
    source_spectrum: np.ndarray | None = None
    refractive_index: float = 1.0


@dataclass
class FluxRecord:
    name: str
    frequencies: np.ndarray
    faces: list[PlaneRecord]
    source_spectrum: np.ndarray | None = None


def _freq_index(freqs: np.ndarray, f: float) -> int:
    i = int(np.argmin(np.abs(freqs - f)))
    if abs(freqs[i] - f) > 1e-9 * max(abs(f), 1e-300):
        raise FrequencyNotRecorded(f"frequency {f:g} not in monitor list")
    return i


def _weights(n: int, node: bool, dx: float, active: bool) -> np.ndarray:
    if not active:
        return np.ones(1)
    w = np.full(n, dx)
    if node:
        w[0] *= 0.5
        w[-1] *= 0.5
    return w


def plane_flux(rec: PlaneRecord, fi) -> np.ndarray:
    """Power through the plane along +axis (times ``rec.sign``) at frequency indices ``fi``."""
    a = rec.axis
    u, v = rec.tangential
    # (a, u, v) cyclic -> S_a = E_u H_v - E_v H_u
    cyc = 1.0 if (a, u, v) in ((0, 1, 2), (1, 2, 0), (2, 0, 1)) else -1.0
    eu, ev = rec.fields["e" + AXES[u]][fi], rec.fields["e" + AXES[v]][fi]
    hu, hv = rec.fields["h" + AXES[u]][fi], rec.fields["h" + AXES[v]][fi]
    dx = rec.spacing
    # E_u, H_v: cells along u, nodes along v; E_v, H_u: nodes along u, cells along v
    w1 = np.outer(_weights(eu.shape[-2], False, dx, rec.active[u]), _weights(eu.shape[-1], True, dx, rec.active[v]))
    w2 = np.outer(_weights(ev.shape[-2], True, dx, rec.active[u]), _weights(ev.shape[-1], False, dx, rec.active[v]))
    s1 = np.sum(eu * np.conj(hv) * w1, axis=(-2, -1))
    s2 = np.sum(ev * np.conj(hu) * w2, axis=(-2, -1))
    return 0.5 * rec.sign * cyc * np.real(s1 - s2)


def flux(record, f: float | None = None):
    """Net outward power of a flux box (or +axis power of a plane) at frequency ``f``.

    With ``f=None`` returns the whole spectrum.
    """
    freqs = record.frequencies
    fi = slice(None) if f is None else _freq_index(freqs, f)
    if isinstance(record, PlaneRecord):
        return plane_flux(record, fi)
    return sum(plane_flux(face, fi) for face in record.faces)


class _ProbeAcc:
    def __init__(self, spec: TimeProbe, s: YeeState):
        self.spec = spec
        comp = spec.component.lower()
        if comp not in COMPONENTS:
            raise ValueError(f"unknown field component {spec.component!r}")
        c = AXES.index(comp[1])
        is_e = comp[0] == "e"
        idx = []
        for a in range(3):
            if not s.active[a]:
                idx.append(0)
            elif (a == c) == is_e:
                idx.append(s.cell_index(a, spec.position[a]))
            else:
                idx.append(s.node_index(a, spec.position[a]))
        self.index = tuple(idx)
        self.array = s.fields()[comp]
        self.offset = 0.0 if is_e else -0.5
        self.times: list[float] = []
        self.values: list[float] = []

    def accumulate(self, s: YeeState) -> None:
        self.times.append((s.n + self.offset) * s.dt)
        self.values.append(float(self.array[self.index]))

    def record(self, s: YeeState, sources) -> ProbeRecord:
        return ProbeRecord(self.spec.name, self.spec.component.lower(), self.spec.position,
                           np.array(self.times), np.array(self.values))


class _PlaneAcc:
    """Accumulates the five plane components of one face."""

    def __init__(self, name: str, s: YeeState, axis: int, position: float, freqs, extent,
                 sign: float = 1.0, stride: int = 1):
        a = axis
        if not s.active[a]:
            raise ValueError(f"plane normal {AXES[a]} is along a degenerate axis")
        p = s.node_index(a, position)
        if p < 1 or p > s.dims[a] - 1:
            raise ValueError(f"plane {name} at {position} nm lies outside the grid")
        self.name, self.axis, self.index, self.sign = name, a, p, sign
        self.freqs = _check_freqs(freqs)
        self.stride = max(1, int(stride))
        u, v = [b for b in range(3) if b != a]
        self.tangential = (u, v)
        lo_i, hi_i = s.interior
        ranges = {}
        for w, ext in zip((u, v), extent if extent is not None else (None, None)):
            if not s.active[w]:
                ranges[w] = (slice(0, 1), slice(0, 1))
                continue
            if ext is None:
                i0, i1 = lo_i[w], hi_i[w]
            else:
                i0, i1 = s.node_index(w, ext[0]), s.node_index(w, ext[1])
            i0, i1 = max(i0, 0), min(i1, s.dims[w])
            if i1 <= i0:
                raise ValueError(f"plane {name} has an empty extent along {AXES[w]}")
            ranges[w] = (slice(i0, i1), slice(i0, i1 + 1))  # cells, nodes
        self.ranges = ranges
        org = s.grid.origin
        dx = s.spacing

        def coords(w, node):
            if not s.active[w]:
                return np.zeros(1)
            sl = ranges[w][1 if node else 0]
            idx = np.arange(sl.start, sl.stop)
            return org[w] + (idx + (0.0 if node else 0.5)) * dx

        self.views = {}
        self.coords = {}
        fields = s.fields()
        for comp in range(3):
            for kind in "eh":
                name_c = kind + AXES[comp]
                if comp == a and kind == "h":
                    continue
                # E_c sits on a half index along c, H_c on half indices along the other two
                node_u = (u != comp) if kind == "e" else (u == comp)
                node_v = (v != comp) if kind == "e" else (v == comp)
                averaged = (kind == "h") or comp == a
                su = ranges[u][1 if node_u else 0]
                sv = ranges[v][1 if node_v else 0]
                arr = fields[name_c]

                def view(k, arr=arr, su=su, sv=sv):
                    sl = [None, None, None]
                    sl[a], sl[u], sl[v] = k, su, sv
                    return arr[tuple(sl)]

                first = view(p - 1) if averaged else view(p)
                second = view(p)
                self.views[name_c] = (kind, first, second)
                self.coords[name_c] = (coords(u, node_u), coords(v, node_v))
        self.acc = {k: np.zeros((self.freqs.size,) + v[1].shape, complex) for k, v in self.views.items()}
        self.dx, self.active = dx, s.active
        self.position = org[a] + p * dx

    def accumulate(self, s: YeeState) -> None:
        if s.n % self.stride:
            return
        w = self.stride * s.dt
        ph_e = w * np.exp(2j * math.pi * self.freqs * (s.n * s.dt))
        ph_h = w * np.exp(2j * math.pi * self.freqs * ((s.n - 0.5) * s.dt))
        for k, (kind, a, b) in self.views.items():
            K.dft_accumulate(self.acc[k], a, b, ph_e if kind == "e" else ph_h)

    def record(self, s: YeeState, sources) -> PlaneRecord:
        src = _source_spectrum(s, sources, self.freqs)
        n_medium = _plane_index(s, self.axis, self.index, self.ranges)
        return PlaneRecord(self.name, self.axis, self.index, self.position, self.tangential, self.freqs,
                           self.dx, self.active, {k: v.copy() for k, v in self.acc.items()},
                           dict(self.coords), self.sign, src, n_medium)


def _plane_index(s: YeeState, axis: int, p: int, ranges) -> float:
    """Mean refractive index of the cells adjacent to a plane."""
    eps = s.grid.eps
    sl = [None, None, None]
    sl[axis] = slice(max(p - 1, 0), min(p + 1, s.dims[axis]))
    for w, (cells, _) in ranges.items():
        sl[w] = cells
    return float(np.sqrt(np.mean(eps[tuple(sl)])))


def _source_spectrum(s: YeeState, sources, freqs) -> np.ndarray | None:
    if not sources:
        return None
    return sum(src.current_spectrum(s.dt, s.n, freqs) for src in sources)


class _BoxAcc:
    def __init__(self, spec: FluxBox, s: YeeState, stride: int = 1):
        self.spec = spec
        self.freqs = _check_freqs(spec.frequencies)
        lo = tuple(spec.lo) + (0.0,) * (3 - len(spec.lo))
        hi = tuple(spec.hi) + (0.0,) * (3 - len(spec.hi))
        self.faces = []
        for a in range(3):
            if not s.active[a]:
                continue
            ext = tuple((lo[b], hi[b]) for b in range(3) if b != a)
            for pos, sign, tag in ((lo[a], -1.0, "lo"), (hi[a], 1.0, "hi")):
                self.faces.append(_PlaneAcc(f"{spec.name}.{AXES[a]}{tag}", s, a, pos, self.freqs, ext, sign, stride))

    def accumulate(self, s: YeeState) -> None:
        for f in self.faces:
            f.accumulate(s)

    def record(self, s: YeeState, sources) -> FluxRecord:
        return FluxRecord(self.spec.name, self.freqs, [f.record(s, None) for f in self.faces],
                          _source_spectrum(s, sources, self.freqs))


def attach(monitors, s: YeeState, stride: int = 1) -> list:
    accs = []
    for m in monitors:
        if isinstance(m, TimeProbe):
            accs.append(_ProbeAcc(m, s))
        elif isinstance(m, DftPlane):
            accs.append(_PlaneAcc(m.name, s, _axis(m.axis), m.position, m.frequencies, m.extent, stride=stride))
        elif isinstance(m, FluxBox):
            accs.append(_BoxAcc(m, s, stride))
        else:
            raise TypeError(f"unsupported monitor {m!r}")
    return accs
