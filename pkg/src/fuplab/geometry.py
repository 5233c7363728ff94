"""Cube-list fractal sets: Cantor products, Koch curves, neighborhoods, affine images."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IncompatibleError, OutOfBoundsError, ValidationError

CURVE_BOX = ((0.0, 0.0), 10.0)  # the cube circumscribing B(0, 5)


def _cells_array(cells, d):
    arr = np.asarray(cells, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, d), dtype=np.int64)
    arr = arr.reshape(-1, d)
    return np.unique(arr, axis=0)


@dataclass(frozen=True, eq=False)
class DyadicSet:
    """Union of closed grid cubes of side ``side * base**-depth`` inside a bounding cube.

    Cell ``(i_1, .., i_d)`` is the cube ``lower + w * [i, i+1]`` with ``w`` the cell side
    and ``lower = center - side/2``.
    """

    d: int
    base: int
    depth: int
    center: tuple
    side: float
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValidationError(f"dimension must be 1 or 2, got {self.d}")
        if int(self.base) < 2 or int(self.depth) < 0:
            raise ValidationError("base must be >= 2 and depth >= 0")
        if not (self.side > 0 and math.isfinite(self.side)):
            raise ValidationError("bounding cube side must be positive")
        center = tuple(float(c) for c in np.broadcast_to(np.asarray(self.center, float), (self.d,)))
        cells = _cells_array(self.cells, self.d)
        n = self.base ** self.depth
        if cells.size and (cells.min() < 0 or cells.max() >= n):
            raise OutOfBoundsError("cell index outside the bounding cube")
        cells.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "side", float(self.side))
        object.__setattr__(self, "base", int(self.base))
        object.__setattr__(self, "depth", int(self.depth))
        object.__setattr__(self, "cells", cells)

    @property
    def n_axis(self) -> int:
        return self.base ** self.depth

    @property
    def width(self) -> float:
        return self.side / self.n_axis

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.center) - self.side / 2

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.center) + self.side / 2

    def __len__(self):
        return len(self.cells)

    def __eq__(self, other):
        if not isinstance(other, DyadicSet):
            return NotImplemented
        return (self.grid_key() == other.grid_key()
                and self.cells.shape == other.cells.shape
                and bool(np.all(self.cells == other.cells)))

    def __hash__(self):
        return hash((self.grid_key(), self.cells.tobytes()))

    def grid_key(self):
        return (self.d, self.base, self.depth, self.center, self.side)

    def with_cells(self, cells) -> "DyadicSet":
        return DyadicSet(self.d, self.base, self.depth, self.center, self.side, cells)

    def cell_lower(self) -> np.ndarray:
        return self.lower + self.width * self.cells

    def cell_centers(self) -> np.ndarray:
        return self.lower + self.width * (self.cells + 0.5)

    def measure(self) -> float:
        return len(self.cells) * self.width ** self.d

    def occupancy(self) -> np.ndarray:
        """Dense boolean grid of occupied cells, indexed ``occ[i_1, .., i_d]``."""
        occ = np.zeros((self.n_axis,) * self.d, dtype=bool)
        if len(self.cells):
            occ[tuple(self.cells.T)] = True
        return occ

    def contains_points(self, pts) -> np.ndarray:
        """Membership of points in the closed cell union."""
        pts = np.asarray(pts, float).reshape(-1, self.d)
        u = (pts - self.lower) / self.width
        occ = self.occupancy()
        n = self.n_axis
        hit = np.zeros(len(pts), dtype=bool)
        base = np.floor(u).astype(np.int64)
        for off in itertools.product((0, -1), repeat=self.d):
            idx = base + np.asarray(off)
            ok = np.all((idx >= 0) & (idx < n), axis=1)
            # a point on a cell face also belongs to the neighbouring closed cell
            ok &= np.all((u - idx >= 0) & (u - idx <= 1), axis=1)
            sel = np.flatnonzero(ok)
            hit[sel] |= occ[tuple(idx[sel].T)]
        return hit

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "base": self.base,
            "depth": self.depth,
            "bbox": {"center": list(self.center), "side": self.side},
            "cells": self.cells.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DyadicSet":
        try:
            d = int(obj["d"])
            bbox = obj["bbox"]
            return cls(d, int(obj["base"]), int(obj["depth"]), tuple(bbox["center"]),
                       float(bbox["side"]), obj["cells"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed set document: {exc}") from exc


@dataclass(frozen=True)
class IFSSpec:
    base: int
    kept: tuple  # one tuple of digits per axis
    depth: int

    def __post_init__(self):
        kept = tuple(tuple(sorted(set(int(k) for k in ax))) for ax in self.kept)
        if not kept or len(kept) > 2:
            raise ValidationError("kept digits needed for 1 or 2 axes")
        for ax in kept:
            if not ax or len(ax) >= self.base or ax[0] < 0 or ax[-1] >= self.base:
                raise ValidationError(
                    f"kept digits {ax} must be a nonempty proper subset of 0..{self.base - 1}")
        if self.base < 2 or self.depth < 0:
            raise ValidationError("base must be >= 2 and depth >= 0")
        object.__setattr__(self, "kept", kept)


class ClosedPolyline:
    """Closed planar polygon; the closing edge from the last vertex back to the first is implicit."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValidationError("a closed curve needs at least 3 planar vertices")
        if np.any(np.all(v == np.roll(v, -1, axis=0), axis=1)):
            raise ValidationError("consecutive vertices must differ (first != last)")
        v.setflags(write=False)
        self.vertices = v

    def __len__(self):
        return len(self.vertices)

    def segments(self):
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    def reversed(self) -> "ClosedPolyline":
        return ClosedPolyline(self.vertices[::-1].copy())


def _digits_to_index(kept, base, depth):
    idx = np.zeros(1, dtype=np.int64)
    k = np.asarray(kept, dtype=np.int64)
    for _ in range(depth):
        idx = (idx[:, None] * base + k[None, :]).ravel()
    return idx


def build_cantor(spec: IFSSpec, center=None, side=2.0) -> DyadicSet:
    """Digit-restricted set in [0,1]^d, placed in [-1,1]^d unless another cube is given."""
    d = len(spec.kept)
    axes = [_digits_to_index(k, spec.base, spec.depth) for k in spec.kept]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    return DyadicSet(d, spec.base, spec.depth, (0.0,) * d if center is None else center,
                     side, grid)


def middle_thirds(depth: int, d: int = 1, center=None, side=2.0) -> DyadicSet:
    return build_cantor(IFSSpec(3, ((0, 2),) * d, depth), center=center, side=side)


def product_set(a: DyadicSet, b: DyadicSet) -> DyadicSet:
    if a.d != 1 or b.d != 1:
        raise IncompatibleError("product_set takes two 1D sets")
    if a.base != b.base or a.depth != b.depth or a.side != b.side:
        raise IncompatibleError("factors must share base, depth and cube side")
    ia, ib = a.cells[:, 0], b.cells[:, 0]
    grid = np.stack(np.meshgrid(ia, ib, indexing="ij"), axis=-1).reshape(-1, 2)
    return DyadicSet(2, a.base, a.depth, (a.center[0], b.center[0]), a.side, grid)


def build_koch(depth: int) -> ClosedPolyline:
    """Koch snowflake over the equilateral triangle inscribed in the unit circle."""
    if depth < 0:
        raise ValidationError("depth must be >= 0")
    ang = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    v = np.stack([np.cos(ang), np.sin(ang)], axis=1)  # counterclockwise
    c, s = 0.5, -math.sqrt(3) / 2  # rotation by -60 degrees points the bump outward
    rot = np.array([[c, -s], [s, c]])
    for _ in range(depth):
        a = v
        e = (np.roll(v, -1, axis=0) - a) / 3
        p1 = a + e
        peak = p1 + e @ rot.T
        p2 = a + 2 * e
        v = np.stack([a, p1, peak, p2], axis=1).reshape(-1, 2)
    return ClosedPolyline(v)


def regular_polygon(m: int, radius: float = 1.0, center=(0.0, 0.0)) -> ClosedPolyline:
    t = 2 * np.pi * np.arange(m) / m
    return ClosedPolyline(np.asarray(center) + radius * np.stack([np.cos(t), np.sin(t)], axis=1))


def _segment_hits_boxes(p0, p1, lo):
    """Liang-Barsky test of segments p0->p1 against closed unit boxes [lo, lo+1] (grid units)."""
    t0 = np.zeros(len(p0))
    t1 = np.ones(len(p0))
    ok = np.ones(len(p0), dtype=bool)
    for ax in range(p0.shape[1]):
        dx = p1[:, ax] - p0[:, ax]
        a = lo[:, ax] - p0[:, ax]
        b = lo[:, ax] + 1 - p0[:, ax]
        flat = dx == 0
        ok &= ~flat | ((a <= 0) & (b >= 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = np.where(flat, -np.inf, a / np.where(flat, 1, dx))
            tb = np.where(flat, np.inf, b / np.where(flat, 1, dx))
        t0 = np.maximum(t0, np.where(flat, t0, np.minimum(ta, tb)))
        t1 = np.minimum(t1, np.where(flat, t1, np.maximum(ta, tb)))
    return ok & (t0 <= t1)


def discretize_curve(curve: ClosedPolyline, base: int, depth: int, center=None,
                     side=None) -> DyadicSet:
    """All closed grid cells met by some edge of the curve (default cube circumscribes B(0,5))."""
    if center is None:
        center = CURVE_BOX[0]
    if side is None:
        side = CURVE_BOX[1]
    lower = np.asarray(center, float) - side / 2
    v = curve.vertices
    if np.any(v < lower) or np.any(v > lower + side):
        raise OutOfBoundsError("curve leaves the bounding cube")
    n = base ** depth
    w = side / n
    a, b = curve.segments()
    # orient every edge canonically so the result cannot depend on traversal direction
    swap = (a[:, 0] > b[:, 0]) | ((a[:, 0] == b[:, 0]) & (a[:, 1] > b[:, 1]))
    p0 = np.where(swap[:, None], b, a)
    p1 = np.where(swap[:, None], a, b)
    u0 = (p0 - lower) / w
    u1 = (p1 - lower) / w
    pieces = np.maximum(1, np.ceil(np.linalg.norm(u1 - u0, axis=1)).astype(np.int64))
    seg = np.repeat(np.arange(len(u0)), pieces)
    first = np.repeat(np.cumsum(pieces) - pieces, pieces)
    j = np.arange(len(seg)) - first
    t = j / pieces[seg]
    start = u0[seg] + t[:, None] * (u1[seg] - u0[seg])
    base_idx = np.floor(np.minimum(start, (u0[seg] + (j + 1)[:, None] / pieces[seg][:, None]
                                           * (u1[seg] - u0[seg])))).astype(np.int64)
    found = []
    for off in itertools.product((-1, 0, 1), repeat=2):
        lo = base_idx + np.asarray(off)
        keep = np.all((lo >= 0) & (lo < n), axis=1)
        hit = keep.copy()
        hit[keep] = _segment_hits_boxes(u0[seg][keep], u1[seg][keep], lo[keep].astype(float))
        found.append(lo[hit])
    return DyadicSet(2, base, depth, tuple(center), side, np.concatenate(found))


def box_counting_dimension(curve: ClosedPolyline, depths, base: int = 2, center=None,
                           side=None):
    """Least-squares slope of log N(eps) against log(1/eps) over the given grid depths."""
    eps, counts = [], []
    for n in depths:
        s = discretize_curve(curve, base, n, center=center, side=side)
        eps.append(s.width)
        counts.append(len(s))
    slope = np.polyfit(-np.log(eps), np.log(counts), 1)[0]
    return float(slope), np.asarray(eps), np.asarray(counts)


def _offsets_within(r: float, w: float, d: int) -> np.ndarray:
    """Cell offsets whose cube lies at distance < r from the origin cube."""
    k = int(math.ceil(r / w)) + 1
    rng = np.arange(-k, k + 1)
    offs = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), axis=-1).reshape(-1, d)
    gap = np.maximum(np.abs(offs) - 1, 0) * w
    return offs[np.sqrt(np.sum(gap ** 2, axis=1)) < r]


def neighborhood(s: DyadicSet, r: float) -> DyadicSet:
    """Grid cells meeting the open r-neighborhood of the set; r = 0 returns the set itself."""
    if r < 0:
        raise ValidationError("radius must be >= 0")
    if r == 0 or len(s) == 0:
        return s
    offs = _offsets_within(r, s.width, s.d)
    cand = (s.cells[:, None, :] + offs[None, :, :]).reshape(-1, s.d)
    cand = cand[np.all((cand >= 0) & (cand < s.n_axis), axis=1)]
    return s.with_cells(cand)


def affine_image(s: DyadicSet, scale: float, shift=None, depth: int | None = None,
                 center=None, side: float | None = None, tol: float = 1e-9) -> DyadicSet:
    """Cells of the target grid whose interiors meet ``scale * S + shift``.

    The target grid shares the base of ``s``; depth and bounding cube default to those of ``s``.
    Image cells falling outside the target cube are dropped.
    """
    if not scale > 0:
        raise ValidationError("scale must be positive")
    shift = np.zeros(s.d) if shift is None else np.broadcast_to(np.asarray(shift, float), (s.d,))
    depth = s.depth if depth is None else depth
    center = s.center if center is None else center
    side = s.side if side is None else side
    out = DyadicSet(s.d, s.base, depth, center, side, [])
    if len(s) == 0:
        return out
    lo = (scale * s.cell_lower() + shift - out.lower) / out.width
    hi = lo + scale * s.width / out.width
    first = np.floor(lo + tol).astype(np.int64)
    last = np.ceil(hi - tol).astype(np.int64) - 1
    span = last - first + 1
    kmax = int(span.max())
    found = []
    for off in itertools.product(range(kmax), repeat=s.d):
        off = np.asarray(off)
        ok = np.all(off < span, axis=1)
        found.append(first[ok] + off)
    cand = np.concatenate(found)
    cand = cand[np.all((cand >= 0) & (cand < out.n_axis), axis=1)]
    return out.with_cells(cand)


def rebase(s: DyadicSet, base: int) -> DyadicSet:
    """The same cells on a coarser-base grid, base = s.base**k with k dividing the depth."""
    k = round(math.log(base) / math.log(s.base))
    if k < 1 or s.base ** k != base or s.depth % k:
        raise IncompatibleError(f"base {base} is not a power of {s.base} dividing depth {s.depth}")
    return DyadicSet(s.d, base, s.depth // k, s.center, s.side, s.cells)


def set_from_spec(spec: dict) -> DyadicSet:
    """Build a DyadicSet from the JSON set-spec document."""
    kind = spec.get("kind")
    try:
        base = int(spec.get("base", 3))
        depth = int(spec["depth"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"set spec needs integer base/depth: {exc}") from exc
    bbox = spec.get("bbox") or {}
    if kind in ("cantor", "product"):
        kept = spec.get("kept") or [[0, 2]]
        if kind == "product" and len(kept) == 1:
            kept = kept * 2
        center = bbox.get("center", [0.0] * len(kept))
        side = float(bbox.get("side", 2.0))
        if kind == "product":
            a = build_cantor(IFSSpec(base, (kept[0],), depth), center=center[:1], side=side)
            b = build_cantor(IFSSpec(base, (kept[1],), depth), center=center[1:2], side=side)
            return product_set(a, b)
        return build_cantor(IFSSpec(base, tuple(kept), depth), center=center, side=side)
    if kind in ("koch", "curve-grid"):
        if kind == "koch":
            curve = build_koch(int(spec.get("curve_depth", 4)))
        else:
            curve = ClosedPolyline(spec["vertices"])
        return discretize_curve(curve, base, depth, center=bbox.get("center"), side=bbox.get("side"))
    raise ValidationError(f"unknown set kind {kind!r}")
