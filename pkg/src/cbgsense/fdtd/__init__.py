from .core import CpmlParams, YeeState, energy, init_state, naive_energy, set_threads, step
from .monitors import DftPlane, FluxBox, FluxRecord, PlaneRecord, ProbeRecord, TimeProbe, attach, flux
from .run import MonitorRecords, Scene, run
from .sources import DipoleSource, Pulse

__all__ = [
    "CpmlParams", "YeeState", "energy", "init_state", "naive_energy", "set_threads", "step",
    "DftPlane", "FluxBox", "FluxRecord", "PlaneRecord", "ProbeRecord", "TimeProbe", "attach", "flux",
    "MonitorRecords", "Scene", "run", "DipoleSource", "Pulse",
]
