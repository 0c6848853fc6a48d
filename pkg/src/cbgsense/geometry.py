"""Hole-based circular Bragg grating layouts and their permittivity grids.

All lengths are in nanometres. Grids are node-centred: every axis holds an
even number of cells and the design centre (x = y = 0, mid-membrane z = 0)
falls on a grid node, so a layout that is mirror symmetric about the x axis
rasterizes to a bit-exactly symmetric grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidDesign, ResolutionTooCoarse

DEFAULT_SUBSAMPLES = 4


@dataclass(frozen=True)
class CavityDesign:
    """Parametric hole-CBG: central disk surrounded by rings of nanoholes.

    R is the central disk radius, r the radial period of the hole rings, l the
    tangential hole spacing, a the hole radius and t the membrane thickness.
    """

    R: float = 645.0
    r: float = 498.0
    l: float = 224.0
    a: float = 75.0
    t: float = 200.0
    n_rings: int = 6
    n_hbn: float = 2.1
    n_env: float = 1.0

    def validate(self) -> "CavityDesign":
        for name in ("R", "r", "l", "a", "t"):
            if not getattr(self, name) > 0:
                raise InvalidDesign(f"{name} must be strictly positive, got {getattr(self, name)}")
        if int(self.n_rings) != self.n_rings or self.n_rings < 0:
            raise InvalidDesign(f"n_rings must be a non-negative integer, got {self.n_rings}")
        if not 2 * self.a < self.l:
            raise InvalidDesign(f"holes overlap tangentially: 2a={2 * self.a} >= l={self.l}")
        if not 2 * self.a < self.r:
            raise InvalidDesign(f"holes overlap radially: 2a={2 * self.a} >= r={self.r}")
        if not self.n_hbn >= self.n_env >= 1.0:
            raise InvalidDesign(f"need n_hbn >= n_env >= 1, got {self.n_hbn}, {self.n_env}")
        return self

    @property
    def outer_radius(self) -> float:
        """Radius of the released CBG disk (outer edge of the last ring cell)."""
        return self.R + self.n_rings * self.r

    def with_(self, **changes) -> "CavityDesign":
        return replace(self, **changes)

    def key(self) -> tuple:
        return (self.R, self.r, self.l, self.a, self.t, self.n_rings, self.n_hbn, self.n_env)


@dataclass(frozen=True)
class Ring:
    radius: float
    count: int
    offset: float = 0.0


@dataclass(frozen=True)
class HoleLayout:
    rings: tuple[Ring, ...]
    hole_radius: float

    @property
    def n_holes(self) -> int:
        return sum(ring.count for ring in self.rings)

    def ring_centers(self, ring: Ring) -> np.ndarray:
        # Signed indices keep mirrored holes bit-exact: sin(-x) is computed as -sin(x).
        m = np.arange(ring.count)
        signed = np.where(m <= ring.count // 2, m, m - ring.count)
        if ring.offset == 0.0:
            angle = 2 * np.pi * np.abs(signed) / ring.count
            x = ring.radius * np.cos(angle)
            y = np.sign(signed) * ring.radius * np.sin(angle)
        else:
            angle = ring.offset + 2 * np.pi * signed / ring.count
            x = ring.radius * np.cos(angle)
            y = ring.radius * np.sin(angle)
        return np.column_stack([x, y])

    @property
    def centers(self) -> np.ndarray:
        if not self.rings:
            return np.zeros((0, 2))
        return np.vstack([self.ring_centers(ring) for ring in self.rings])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ring", "index", "x_nm", "y_nm", "radius_nm"])
            for k, ring in enumerate(self.rings, start=1):
                for idx, (x, y) in enumerate(self.ring_centers(ring)):
                    writer.writerow([k, idx, repr(float(x)), repr(float(y)), repr(self.hole_radius)])


def generate_layout(design: CavityDesign, offsets: list[float] | None = None) -> HoleLayout:
    """Place ring k at R + (k - 1/2) r with round(2 pi rho_k / l) equally spaced holes."""
    design.validate()
    rings = []
    for k in range(1, design.n_rings + 1):
        rho = design.R + (k - 0.5) * design.r
        count = int(round(2 * math.pi * rho / design.l))
        if count < 4:
            raise InvalidDesign(f"ring {k} holds only {count} holes (need >= 4); l={design.l} too large")
        chord = 2 * rho * math.sin(math.pi / count)
        if chord < 2 * design.a:
            raise InvalidDesign(f"ring {k}: hole spacing {chord:.2f} nm below 2a={2 * design.a}")
        offset = 0.0 if offsets is None else float(offsets[k - 1])
        rings.append(Ring(radius=rho, count=count, offset=offset))
    return HoleLayout(rings=tuple(rings), hole_radius=design.a)


@dataclass
class PermittivityGrid:
    """Cell-averaged relative permittivity on a uniform grid.

    ``eps`` has shape ``dims``; cell (i, j, k) spans
    ``origin + [i, i+1] * spacing`` along each axis.
    """

    eps: np.ndarray
    spacing: float
    origin: tuple[float, ...]
    meta: dict = field(default_factory=dict)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.eps.shape

    @property
    def dimensionality(self) -> int:
        return self.eps.ndim

    def cell_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.spacing

    def nodes(self, axis: int) -> np.ndarray:
        return self.origin[axis] + np.arange(self.dims[axis] + 1) * self.spacing

    def as3d(self) -> "PermittivityGrid":
        """View padded to three axes (missing axes become single cells)."""
        eps = self.eps.reshape(self.eps.shape + (1,) * (3 - self.eps.ndim))
        origin = tuple(self.origin) + (0.0,) * (3 - len(self.origin))
        return PermittivityGrid(eps=eps, spacing=self.spacing, origin=origin, meta=dict(self.meta))


def _centered_cells(half_extent: float, spacing: float) -> int:
    return 2 * max(1, int(math.ceil(half_extent / spacing - 1e-9)))


def _subsample_coords(n: int, s: int, spacing: float) -> np.ndarray:
    # Odd integers symmetric about zero, so mirrored subsamples are exact negatives.
    u = 2 * np.arange(n * s) + 1 - n * s
    return u * (spacing / (2 * s))


def _slab_fraction(nz: int, s: int, spacing: float, t: float) -> np.ndarray:
    z = _subsample_coords(nz, s, spacing)
    inside = np.abs(z) <= t / 2
    return inside.reshape(nz, s).sum(axis=1)


def _inplane_counts(layout: HoleLayout | None, nx: int, ny: int, s: int, spacing: float,
                    disk_radius: float | None) -> np.ndarray:
    """Number of membrane subsamples (out of s*s) in each in-plane cell."""
    x = _subsample_coords(nx, s, spacing)
    y = _subsample_coords(ny, s, spacing)
    if disk_radius is None:
        solid = np.ones((nx * s, ny * s), dtype=bool)
    else:
        solid = (x[:, None] ** 2 + y[None, :] ** 2) <= disk_radius ** 2
    if layout is not None and layout.n_holes:
        a = layout.hole_radius
        step = spacing / s
        x0 = x[0]
        y0 = y[0]
        for cx, cy in layout.centers:
            i0 = max(0, int(math.floor((cx - a - x0) / step)))
            i1 = min(nx * s, int(math.ceil((cx + a - x0) / step)) + 1)
            j0 = max(0, int(math.floor((cy - a - y0) / step)))
            j1 = min(ny * s, int(math.ceil((cy + a - y0) / step)) + 1)
            if i0 >= i1 or j0 >= j1:
                continue
            hole = (x[i0:i1, None] - cx) ** 2 + (y[None, j0:j1] - cy) ** 2 < a * a
            solid[i0:i1, j0:j1] &= ~hole
    return solid.reshape(nx, s, ny, s).sum(axis=(1, 3))


def rasterize(design: CavityDesign, layout: HoleLayout, spacing: float, padding: float, *,
              dimensionality: int = 3, subsamples: int = DEFAULT_SUBSAMPLES,
              half_width: float | None = None, released: bool = True) -> PermittivityGrid:
    """Volume-averaged permittivity grid of a hole-CBG membrane.

    The membrane is a disk of radius ``design.outer_radius`` (the released
    device) unless ``released`` is False, in which case it fills the whole
    lateral domain. ``dimensionality=2`` returns the mid-membrane xy slice.
    """
    design.validate()
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if layout.n_holes and spacing > layout.hole_radius:
        raise ResolutionTooCoarse(f"spacing {spacing} nm exceeds hole radius {layout.hole_radius} nm")
    s = int(subsamples)
    lateral = design.outer_radius + padding if half_width is None else half_width
    nx = ny = _centered_cells(lateral, spacing)
    disk = design.outer_radius if released else None
    counts_xy = _inplane_counts(layout, nx, ny, s, spacing, disk)
    lo, hi = design.n_env ** 2, design.n_hbn ** 2
    origin_xy = (-nx * spacing / 2, -ny * spacing / 2)
    meta = {"kind": "cbg", "design": design.key(), "subsamples": s, "released": released}
    if dimensionality == 2:
        eps = lo + (hi - lo) * (counts_xy / (s * s))
        return PermittivityGrid(eps=eps, spacing=spacing, origin=origin_xy, meta=meta)
    if dimensionality != 3:
        raise ValueError("dimensionality must be 2 or 3")
    nz = _centered_cells(design.t / 2 + padding, spacing)
    counts_z = _slab_fraction(nz, s, spacing, design.t)
    frac = (counts_xy[:, :, None] * counts_z[None, None, :]) / (s ** 3)
    eps = lo + (hi - lo) * frac
    return PermittivityGrid(eps=eps, spacing=spacing, origin=origin_xy + (-nz * spacing / 2,), meta=meta)


def pristine_slab(t: float, n_hbn: float, n_env: float, spacing: float, padding: float, *,
                  dimensionality: int = 3, subsamples: int = DEFAULT_SUBSAMPLES,
                  half_width: float | None = None) -> PermittivityGrid:
    """Unpatterned membrane filling the lateral domain (half width defaults to ``padding``)."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if t < 0:
        raise InvalidDesign("thickness must be non-negative")
    s = int(subsamples)
    lateral = padding if half_width is None else half_width
    nx = ny = _centered_cells(lateral, spacing)
    lo, hi = n_env ** 2, n_hbn ** 2
    origin_xy = (-nx * spacing / 2, -ny * spacing / 2)
    meta = {"kind": "slab", "t": t, "n_hbn": n_hbn, "n_env": n_env, "subsamples": s}
    if dimensionality == 2:
        value = hi if t > 0 else lo
        return PermittivityGrid(eps=np.full((nx, ny), value), spacing=spacing, origin=origin_xy, meta=meta)
    nz = _centered_cells(t / 2 + padding, spacing)
    counts_z = _slab_fraction(nz, s, spacing, t) if t > 0 else np.zeros(nz, dtype=int)
    column = lo + (hi - lo) * (counts_z / s)
    eps = np.broadcast_to(column, (nx, ny, nz)).copy()
    return PermittivityGrid(eps=eps, spacing=spacing, origin=origin_xy + (-nz * spacing / 2,), meta=meta)


def homogeneous(n: float, dims: tuple[int, ...], spacing: float) -> PermittivityGrid:
    dims = tuple(int(d) for d in dims)
    origin = tuple(-d * spacing / 2 for d in dims)
    return PermittivityGrid(eps=np.full(dims, float(n) ** 2), spacing=spacing, origin=origin,
                            meta={"kind": "homogeneous", "n": n})


def layered_line(indices: list[float], thicknesses: list[float], spacing: float,
                 before: float, after: float, n_before: float = 1.0, n_after: float = 1.0,
                 subsamples: int = 16) -> PermittivityGrid:
    """1D grid of a planar stack along x, starting at x = 0 after ``before`` nm of ambient."""
    edges = np.concatenate([[0.0], np.cumsum(thicknesses)])
    total = before + edges[-1] + after
    n = int(math.ceil(total / spacing))
    origin = -before
    s = int(subsamples)
    x = origin + (np.arange(n * s) + 0.5) * (spacing / s)
    eps_sub = np.where(x < 0, n_before ** 2, n_after ** 2).astype(float)
    for k, n_layer in enumerate(indices):
        inside = (x >= edges[k]) & (x < edges[k + 1])
        eps_sub[inside] = n_layer ** 2
    eps = eps_sub.reshape(n, s).mean(axis=1)
    return PermittivityGrid(eps=eps, spacing=spacing, origin=(origin,),
                            meta={"kind": "stack", "indices": list(indices), "thicknesses": list(thicknesses)})
