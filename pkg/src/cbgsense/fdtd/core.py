"""Yee-grid state, CPML absorber setup and the leapfrog step.

Units: lengths in nm, c = eps0 = mu0 = 1, so time is measured as c*t in nm
and the vacuum impedance is 1. Grids of lower dimensionality are run as 3D
grids with single-cell (degenerate) axes that carry no derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from ..errors import CourantViolation, DomainTooSmall, NumericalBlowup
from ..geometry import PermittivityGrid
from . import _kernels as K

AXES = "xyz"


@dataclass(frozen=True)
class CpmlParams:
    """Graded convolutional PML.

    ``alpha_max`` is the complex-frequency-shift at the inner interface in
    units of 1/cell (alpha * dx / c), decreasing linearly to zero at the wall.
    """

    layers: int = 10
    order: float = 3.0
    reflection: float = 1e-8
    kappa_max: float = 5.0
    alpha_max: float = 0.05

    def validate(self) -> "CpmlParams":
        if int(self.layers) != self.layers or self.layers < 5:
            raise ValueError("CPML needs at least 5 integer layers")
        if min(self.order, self.reflection, self.kappa_max, self.alpha_max) <= 0:
            raise ValueError("CPML parameters must be positive")
        if self.reflection >= 1:
            raise ValueError("CPML target reflection must be below 1")
        if self.kappa_max < 1:
            raise ValueError("kappa_max must be >= 1")
        return self


@dataclass
class _PmlAxis:
    axis: int
    layers: int
    be: np.ndarray
    ce: np.ndarray
    bh: np.ndarray
    ch: np.ndarray
    psi_e: tuple[np.ndarray, np.ndarray]
    psi_h: tuple[np.ndarray, np.ndarray]


@dataclass
class YeeState:
    """Fields, material coefficients and absorber memory of one simulation."""

    grid: PermittivityGrid
    dims: tuple[int, int, int]
    active: tuple[bool, bool, bool]
    spacing: float
    dt: float
    courant: float
    e: list[np.ndarray]
    h: list[np.ndarray]
    ca: list[np.ndarray]
    de: list[np.ndarray]
    dh: list[np.ndarray]
    pml: list[_PmlAxis]
    npml: tuple[int, int, int]
    cpml: CpmlParams | None
    dtype: np.dtype
    n: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def dimensionality(self) -> int:
        return int(sum(self.active))

    @property
    def time(self) -> float:
        """Time of the current E field (c*t, nm)."""
        return self.n * self.dt

    @property
    def interior(self) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
        """Index box [lo, hi) of the non-absorbing cells."""
        lo = tuple(self.npml[a] for a in range(3))
        hi = tuple(self.dims[a] - self.npml[a] for a in range(3))
        return lo, hi

    def node_index(self, axis: int, x: float) -> int:
        if not self.active[axis]:
            return 0
        return int(round((x - self.grid.origin[axis]) / self.spacing))

    def cell_index(self, axis: int, x: float) -> int:
        if not self.active[axis]:
            return 0
        return int(math.floor((x - self.grid.origin[axis]) / self.spacing))

    def fields(self) -> dict[str, np.ndarray]:
        names = ["ex", "ey", "ez", "hx", "hy", "hz"]
        return dict(zip(names, self.e + self.h))


def _edge_average(eps: np.ndarray, axis: int) -> np.ndarray:
    """Average of the two cells sharing each node plane along ``axis`` (n+1 planes)."""
    n = eps.shape[axis]
    lo = np.take(eps, np.r_[0, np.arange(n)], axis=axis)
    hi = np.take(eps, np.r_[np.arange(n), n - 1], axis=axis)
    return 0.5 * (lo + hi)


def _component_eps(eps: np.ndarray, comp: int, active) -> np.ndarray:
    """Permittivity at the E_comp sites, shape (nx+1, ny+1, nz+1)."""
    out = eps
    for a in range(3):
        if a != comp and active[a]:
            out = _edge_average(out, a)
    pad = [(0, 1) if (a == comp or not active[a]) else (0, 0) for a in range(3)]
    return np.pad(out, pad, mode="edge")


def _profiles(n: int, npml: int, spacing: float, dt: float, p: CpmlParams, half: bool):
    """kappa, b, c along one axis at node (half=False) or half-cell positions.

    Profiles are averaged over the cell centred on each sample rather than
    point-sampled, which lowers the discretization reflection of the grading.
    """
    pos = np.arange(n + 1) + (0.5 if half else 0.0)
    depth = np.maximum(npml - pos, pos - (n - npml))

    def cell_mean(power):
        # mean of (d/npml)**power over [depth - 1/2, depth + 1/2] clipped to the layer
        lo = np.clip(depth - 0.5, 0.0, npml)
        hi = np.clip(depth + 0.5, 0.0, npml)
        return (hi ** (power + 1) - lo ** (power + 1)) / ((power + 1) * npml ** power)

    width = npml * spacing
    sigma_max = -(p.order + 1) * math.log(p.reflection) / (2.0 * width)
    sigma = sigma_max * cell_mean(p.order)
    kappa = 1.0 + (p.kappa_max - 1.0) * cell_mean(p.order)
    alpha = np.where(sigma > 0, (p.alpha_max / spacing) * (cell_mean(0) - cell_mean(1)), 0.0)
    b = np.exp(-(sigma / kappa + alpha) * dt)
    denom = sigma * kappa + kappa ** 2 * alpha
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(sigma > 0, sigma / denom * (b - 1.0), 0.0) / spacing
    return kappa, b, c


def init_state(grid: PermittivityGrid, cpml: CpmlParams | None = CpmlParams(), courant: float = 0.99,
               dtype: str | np.dtype = "float64") -> YeeState:
    """Allocate fields and precompute coefficients; ``cpml=None`` gives a PEC box."""
    if not 0 < courant <= 1:
        raise CourantViolation(f"Courant number {courant} outside (0, 1]")
    g = grid.as3d()
    dims = tuple(int(d) for d in g.dims)
    active = tuple(d > 1 for d in dims)
    if not any(active):
        raise DomainTooSmall("grid has no axis longer than one cell")
    dim = sum(active)
    dx = float(g.spacing)
    dt = courant * dx / math.sqrt(dim)
    dtype = np.dtype(dtype)
    if cpml is not None:
        cpml.validate()
    npml = tuple(int(cpml.layers) if (cpml is not None and active[a]) else 0 for a in range(3))
    for a in range(3):
        if active[a] and dims[a] - 2 * npml[a] < 4:
            raise DomainTooSmall(f"interior along {AXES[a]} has {dims[a] - 2 * npml[a]} cells (< 4)")

    shape = tuple(d + 1 for d in dims)
    e = [np.zeros(shape, dtype) for _ in range(3)]
    h = [np.zeros(shape, dtype) for _ in range(3)]
    eps = np.asarray(g.eps, dtype=float)
    ca = []
    for c in range(3):
        ec = _component_eps(eps, c, active)
        ca.append(np.ascontiguousarray(dt / ec, dtype=dtype))

    de, dh, pml = [], [], []
    for a in range(3):
        n = dims[a]
        if not active[a]:
            de.append(np.zeros(n + 1, dtype))
            dh.append(np.zeros(n + 1, dtype))
            continue
        if npml[a]:
            ke, be, ce = _profiles(n, npml[a], dx, dt, cpml, half=False)
            kh, bh, ch = _profiles(n, npml[a], dx, dt, cpml, half=True)
            pshape = list(shape)
            pshape[a] = 2 * npml[a]
            pml.append(_PmlAxis(
                axis=a, layers=npml[a],
                be=be.astype(dtype), ce=ce.astype(dtype), bh=bh.astype(dtype), ch=ch.astype(dtype),
                psi_e=(np.zeros(pshape, dtype), np.zeros(pshape, dtype)),
                psi_h=(np.zeros(pshape, dtype), np.zeros(pshape, dtype)),
            ))
        else:
            ke = kh = np.ones(n + 1)
        de.append((1.0 / (ke * dx)).astype(dtype))
        dh.append((dt / (kh * dx)).astype(dtype))

    return YeeState(grid=g, dims=dims, active=active, spacing=dx, dt=dt, courant=courant,
                    e=e, h=h, ca=ca, de=de, dh=dh, pml=pml, npml=npml, cpml=cpml, dtype=dtype,
                    meta={"source_dims": grid.dimensionality})


def set_threads(n: int | None) -> None:
    """Worker count for the compiled loops (results do not depend on it)."""
    if n is None:
        return
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _update_h(s: YeeState) -> None:
    ex, ey, ez = s.e
    hx, hy, hz = s.h
    K.update_h(ex, ey, ez, hx, hy, hz, *s.dh)
    dt = s.dtype.type(s.dt)
    for p in s.pml:
        if p.axis == 0:
            K.cpml_h_x(ey, ez, hy, hz, p.psi_h[0], p.psi_h[1], p.layers, p.bh, p.ch, dt)
        elif p.axis == 1:
            K.cpml_h_y(ex, ez, hx, hz, p.psi_h[0], p.psi_h[1], p.layers, p.bh, p.ch, dt)
        else:
            K.cpml_h_z(ex, ey, hx, hy, p.psi_h[0], p.psi_h[1], p.layers, p.bh, p.ch, dt)


def _update_e(s: YeeState) -> None:
    ex, ey, ez = s.e
    hx, hy, hz = s.h
    cax, cay, caz = s.ca
    K.update_e(ex, ey, ez, hx, hy, hz, cax, cay, caz, *s.de)
    for p in s.pml:
        if p.axis == 0:
            K.cpml_e_x(hy, hz, ey, ez, cay, caz, p.psi_e[0], p.psi_e[1], p.layers, p.be, p.ce)
        elif p.axis == 1:
            K.cpml_e_y(hx, hz, ex, ez, cax, caz, p.psi_e[0], p.psi_e[1], p.layers, p.be, p.ce)
        else:
            K.cpml_e_z(hx, hy, ex, ey, cax, cay, p.psi_e[0], p.psi_e[1], p.layers, p.be, p.ce)
    # PEC walls on the low index planes (the high ones are the untouched ghosts)
    x, y, z = s.active
    if y:
        ex[:, 0, :] = 0
        ez[:, 0, :] = 0
    if z:
        ex[:, :, 0] = 0
        ey[:, :, 0] = 0
    if x:
        ey[0, :, :] = 0
        ez[0, :, :] = 0


def check_finite(s: YeeState, guard: float = 1e12) -> None:
    for name, arr in s.fields().items():
        m = float(np.max(np.abs(arr)))
        if not math.isfinite(m) or m > guard:
            raise NumericalBlowup(f"|{name}| reached {m:g} at step {s.n}")


def step(s: YeeState, sources=(), monitors=()) -> YeeState:
    """Advance one leapfrog step: H to n+1/2, E to n+1 with sources at n+1/2.

    ``monitors`` are accumulators returned by :func:`monitors.attach`.
    """
    _update_h(s)
    _update_e(s)
    t_src = (s.n + 0.5) * s.dt
    for src in sources:
        src.inject(s, t_src)
    s.n += 1
    for m in monitors:
        m.accumulate(s)
    return s


def energy(s: YeeState) -> float:
    """Electromagnetic energy in the interior region.

    Uses the time-centred form 1/2 eps E^n.E^n + 1/2 H^(n-1/2).H^(n+1/2), which
    the Yee scheme conserves exactly in a lossless closed box.
    """
    ex, ey, ez = s.e
    hx, hy, hz = s.h
    gx, gy, gz = hx.copy(), hy.copy(), hz.copy()
    K.update_h(ex, ey, ez, gx, gy, gz, *s.dh)
    lo, hi = s.interior
    lo = np.array(lo, dtype=np.int64)
    hi = np.array(hi, dtype=np.int64)
    se, sh = K.energy_sums(ex, ey, ez, *s.ca, hx, hy, hz, gx, gy, gz, lo, hi)
    vol = s.spacing ** s.dimensionality
    return 0.5 * vol * (se * s.dt + sh)


def naive_energy(s: YeeState) -> float:
    """1/2 sum(eps E^2 + H^2) over the interior; cheap, used for stopping decisions."""
    lo, hi = s.interior
    sl = tuple(slice(lo[a], hi[a]) for a in range(3))
    total = 0.0
    for f, ca in zip(s.e, s.ca):
        v = f[sl].astype(float)
        total += float(np.sum(v * v / ca[sl])) * s.dt
    for f in s.h:
        v = f[sl].astype(float)
        total += float(np.sum(v * v))
    return 0.5 * total * s.spacing ** s.dimensionality
