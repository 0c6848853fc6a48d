"""Run a scene to completion and collect monitor records."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from ..geometry import PermittivityGrid
from .core import CpmlParams, YeeState, check_finite, init_state, naive_energy, set_threads, step
from .monitors import FluxRecord, PlaneRecord, ProbeRecord, attach
from .sources import DipoleSource

log = logging.getLogger(__name__)


@dataclass
class Scene:
    """Everything needed for one simulation.

    Give either ``duration`` (c*t in nm) or ``steps``. With ``early_stop`` set,
    the run ends once all sources are off and the interior energy has fallen
    below that fraction of its peak.
    """

    grid: PermittivityGrid
    sources: list[DipoleSource] = field(default_factory=list)
    monitors: list = field(default_factory=list)
    cpml: CpmlParams | None = field(default_factory=CpmlParams)
    courant: float = 0.99
    duration: float | None = None
    steps: int | None = None
    early_stop: float | None = 1e-7
    check_every: int = 50
    dft_stride: int = 1
    dtype: str = "float64"
    guard: float = 1e12
    threads: int | None = None


@dataclass
class MonitorRecords:
    probes: dict[str, ProbeRecord]
    planes: dict[str, PlaneRecord]
    fluxes: dict[str, FluxRecord]
    steps: int
    dt: float
    stopped_early: bool
    energy_trace: list[tuple[int, float]]

    def __getitem__(self, name: str):
        for d in (self.probes, self.planes, self.fluxes):
            if name in d:
                return d[name]
        raise KeyError(name)

    @property
    def empty(self) -> bool:
        return self.steps == 0


def total_steps(scene: Scene, dt: float) -> int:
    if scene.steps is not None:
        return max(0, int(scene.steps))
    if scene.duration is None:
        raise ValueError("scene needs a duration or a step count")
    return max(0, int(math.ceil(scene.duration / dt - 1e-9)))


def run(scene: Scene, state: YeeState | None = None) -> MonitorRecords:
    set_threads(scene.threads)
    s = state if state is not None else init_state(scene.grid, scene.cpml, scene.courant, scene.dtype)
    sources = [src.bind(s) for src in scene.sources]
    for src in sources:
        _check_inside(s, src)
    accs = attach(scene.monitors, s, scene.dft_stride)
    n_total = total_steps(scene, s.dt)
    t_off = max((src.pulse.t_off for src in sources), default=0.0)
    peak = 0.0
    trace: list[tuple[int, float]] = []
    stopped = False
    start = s.n
    while s.n - start < n_total:
        step(s, sources, accs)
        if (s.n - start) % scene.check_every == 0:
            check_finite(s, scene.guard)
            if scene.early_stop is not None:
                w = naive_energy(s)
                trace.append((s.n, w))
                peak = max(peak, w)
                if s.n * s.dt > t_off and peak > 0 and w < scene.early_stop * peak:
                    stopped = True
                    log.info("early stop at step %d (energy %.3g of peak)", s.n, w / peak)
                    break
    if s.n - start:
        check_finite(s, scene.guard)
    probes, planes, fluxes = {}, {}, {}
    for acc in accs:
        rec = acc.record(s, sources)
        target = probes if isinstance(rec, ProbeRecord) else planes if isinstance(rec, PlaneRecord) else fluxes
        target[rec.name] = rec
    return MonitorRecords(probes, planes, fluxes, s.n - start, s.dt, stopped, trace)


def _check_inside(s: YeeState, src: DipoleSource) -> None:
    lo, hi = s.interior
    for _, idx, _ in src.sites(s):
        for a in range(3):
            if s.active[a] and not (lo[a] <= idx[a] < hi[a]):
                raise ValueError(f"source at {src.position} lies outside the non-absorbing region")
