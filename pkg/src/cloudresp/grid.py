"""Hierarchical icosahedral sphere mesh: construction, resampling, masks, weights.

Level L has 10*4**L + 2 vertices. The base icosahedron is oriented with one
vertex at the north pole so vertex ordering is reproducible. Each subdivision
appends edge midpoints (projected to the unit sphere) after the inherited
vertices, so the vertices of level L-1 are an exact prefix of level L.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import SphericalVoronoi, cKDTree

from .errors import (
    CorruptFileError,
    FormatError,
    InvalidArgumentError,
    NotFoundError,
    ShapeError,
)

MAX_LEVEL = 5
EARTH_RADIUS_KM = 6371.0

# Conventional stratocumulus-deck boxes (lat_min, lat_max, lon_min, lon_max).
DEFAULT_REGIONS = {
    "NEP": (15.0, 35.0, -140.0, -110.0),
    "SEP": (-30.0, 0.0, -110.0, -70.0),
    "SEA": (-30.0, 0.0, -15.0, 15.0),
}

_GRID_MAGIC = b"ICOG"
_GRID_VERSION = 1


def vertex_count(level: int) -> int:
    return 10 * 4**level + 2


@dataclass(frozen=True)
class IcosahedralGrid:
    level: int
    lat: np.ndarray          # degrees, [-90, 90]
    lon: np.ndarray          # degrees, [-180, 180)
    unit_xyz: np.ndarray     # [n, 3]
    area_weights: np.ndarray # fractions of sphere area, sum 1
    parent_map: np.ndarray   # index into level-1 grid; level 0 maps to itself
    faces: np.ndarray        # [n_faces, 3] vertex indices
    neighbors: tuple = field(repr=False, default=())

    @property
    def n_vertices(self) -> int:
        return self.unit_xyz.shape[0]

    def smooth_once(self, values: np.ndarray) -> np.ndarray:
        """One pass of neighbor averaging: mean over the vertex and its ring."""
        values = np.asarray(values, dtype=np.float64)
        out = np.empty_like(values)
        for v, nbrs in enumerate(self.neighbors):
            idx = (v,) + nbrs
            out[..., v] = values[..., idx].mean(axis=-1)
        return out


def _base_icosahedron():
    """12 vertices with the first at the north pole; 20 faces."""
    lat_ring = math.degrees(math.atan(0.5))
    lats = [90.0]
    lons = [0.0]
    for i in range(5):
        lats.append(lat_ring)
        lons.append(-180.0 + ((72.0 * i + 180.0) % 360.0))
    for i in range(5):
        lats.append(-lat_ring)
        lons.append(-180.0 + ((36.0 + 72.0 * i + 180.0) % 360.0))
    lats.append(-90.0)
    lons.append(0.0)
    xyz = latlon_to_xyz(np.array(lats), np.array(lons))
    faces = []
    for i in range(5):
        j = (i + 1) % 5
        faces.append((0, 1 + i, 1 + j))
        faces.append((1 + i, 6 + i, 1 + j))
        faces.append((1 + j, 6 + i, 6 + j))
        faces.append((11, 6 + j, 6 + i))
    return xyz, np.array(faces, dtype=np.int64)


def latlon_to_xyz(lat_deg, lon_deg):
    lat = np.radians(np.asarray(lat_deg, dtype=np.float64))
    lon = np.radians(np.asarray(lon_deg, dtype=np.float64))
    cl = np.cos(lat)
    return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)


def xyz_to_latlon(xyz):
    xyz = np.asarray(xyz, dtype=np.float64)
    lat = np.degrees(np.arcsin(np.clip(xyz[..., 2], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(xyz[..., 1], xyz[..., 0]))
    lon = np.where(lon >= 180.0, lon - 360.0, lon)
    return lat, lon


def normalize_lon(lon):
    """Map longitudes to [-180, 180)."""
    return (np.asarray(lon, dtype=np.float64) + 180.0) % 360.0 - 180.0


def _subdivide(xyz, faces):
    """Bisect every edge, project midpoints to the sphere, split each face in 4.

    New vertices are appended in face-traversal order; a midpoint's parent is
    the smaller of its two edge endpoints (endpoints are always coarse
    vertices), which partitions fine vertices among coarse ones for coarsen().
    """
    verts = list(xyz)
    parents = []
    cache = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        idx = cache.get(key)
        if idx is None:
            m = verts[a] + verts[b]
            m /= np.linalg.norm(m)
            idx = len(verts)
            verts.append(m)
            parents.append(key[0])
            cache[key] = idx
        return idx

    new_faces = []
    for a, b, c in faces:
        mab = midpoint(a, b)
        mbc = midpoint(b, c)
        mca = midpoint(c, a)
        new_faces.extend([(a, mab, mca), (b, mbc, mab), (c, mca, mbc), (mab, mbc, mca)])
    return np.array(verts), np.array(new_faces, dtype=np.int64), np.array(parents, dtype=np.int64)


def _neighbors_from_faces(n, faces):
    nbrs = [set() for _ in range(n)]
    for a, b, c in faces:
        nbrs[a].update((b, c))
        nbrs[b].update((a, c))
        nbrs[c].update((a, b))
    return tuple(tuple(sorted(s)) for s in nbrs)


def compute_area_weights(unit_xyz: np.ndarray) -> np.ndarray:
    """Spherical-Voronoi cell areas normalized to sum exactly 1."""
    sv = SphericalVoronoi(unit_xyz, radius=1.0)
    areas = sv.calculate_areas()
    return areas / areas.sum()


def build_grid(level: int) -> IcosahedralGrid:
    """Build the icosahedral grid at a subdivision level in 0..5."""
    if not isinstance(level, (int, np.integer)) or not 0 <= level <= MAX_LEVEL:
        raise InvalidArgumentError(f"level must be an integer in 0..{MAX_LEVEL}, got {level!r}")
    xyz, faces = _base_icosahedron()
    parent = np.arange(12, dtype=np.int64)
    for _ in range(level):
        n_prev = xyz.shape[0]
        xyz, faces, new_parents = _subdivide(xyz, faces)
        parent = np.concatenate([np.arange(n_prev, dtype=np.int64), new_parents])
    lat, lon = xyz_to_latlon(xyz)
    weights = compute_area_weights(xyz)
    nbrs = _neighbors_from_faces(xyz.shape[0], faces)
    return IcosahedralGrid(
        level=int(level), lat=lat, lon=lon, unit_xyz=xyz,
        area_weights=weights, parent_map=parent, faces=faces, neighbors=nbrs,
    )


_grid_cache: dict[int, IcosahedralGrid] = {}


def get_grid(level: int) -> IcosahedralGrid:
    """Cached build_grid; grids are immutable and shared."""
    if level not in _grid_cache:
        _grid_cache[level] = build_grid(level)
    return _grid_cache[level]


# ---------------------------------------------------------------------------
# Resampling from regular lat-lon grids


def resample_latlon(field, lats, lons, grid: IcosahedralGrid, method: str = "nearest"):
    """Resample a 2-D [lat, lon] field onto grid vertices.

    nearest: value of the great-circle-nearest cell center.
    inverse_distance: 1/d-weighted mean of the 4 nearest centers, with an
    exact-hit short circuit at d < 1e-9 rad.
    """
    field = np.asarray(field, dtype=np.float64)
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    if field.size == 0:
        raise InvalidArgumentError("empty field")
    if field.shape != (lats.size, lons.size):
        raise ShapeError(f"field shape {field.shape} != (n_lat={lats.size}, n_lon={lons.size})")
    for name, ax in (("lat", lats), ("lon", lons)):
        d = np.diff(ax)
        if ax.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise InvalidArgumentError(f"{name} axis must be strictly monotone")
    if not np.all(np.isfinite(field)):
        raise InvalidArgumentError("field contains non-finite values")
    if method not in ("nearest", "inverse_distance"):
        raise InvalidArgumentError(f"unknown method {method!r}")

    glon, glat = np.meshgrid(normalize_lon(lons), lats)
    centers = latlon_to_xyz(glat.ravel(), glon.ravel())
    tree = cKDTree(centers)
    flat = field.ravel()
    if method == "nearest":
        _, idx = tree.query(grid.unit_xyz, k=1)
        return flat[idx]
    k = min(4, centers.shape[0])
    chord, idx = tree.query(grid.unit_xyz, k=k)
    chord = np.atleast_2d(chord)
    idx = np.atleast_2d(idx)
    d = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))  # great-circle distance
    exact = d[:, 0] < 1e-9
    with np.errstate(divide="ignore"):
        w = 1.0 / d
    w[~np.isfinite(w)] = 0.0
    out = (w * flat[idx]).sum(axis=1) / np.where(w.sum(axis=1) > 0, w.sum(axis=1), 1.0)
    out[exact] = flat[idx[exact, 0]]
    return out


# ---------------------------------------------------------------------------
# Region specs and masks


@dataclass(frozen=True)
class RegionSpec:
    kind: str                      # named | latlon_box | polygon
    name: str | None = None
    box: tuple | None = None       # (lat_min, lat_max, lon_min, lon_max)
    polygon: tuple | None = None   # ((lat, lon), ...)

    def __post_init__(self):
        if self.kind == "named":
            if not self.name or self.box is not None or self.polygon is not None:
                raise InvalidArgumentError("named region requires exactly `name`")
        elif self.kind == "latlon_box":
            if self.box is None or self.name is not None or self.polygon is not None:
                raise InvalidArgumentError("latlon_box region requires exactly `box`")
            lat_min, lat_max, _, _ = self.box
            if not lat_min < lat_max:
                raise InvalidArgumentError(f"box needs lat_min < lat_max, got {self.box}")
        elif self.kind == "polygon":
            if self.polygon is None or self.name is not None or self.box is not None:
                raise InvalidArgumentError("polygon region requires exactly `polygon`")
            if len(self.polygon) < 3:
                raise InvalidArgumentError("polygon needs at least 3 vertices")
        else:
            raise InvalidArgumentError(f"unknown region kind {self.kind!r}")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.name is not None:
            d["name"] = self.name
        if self.box is not None:
            d["box"] = list(self.box)
        if self.polygon is not None:
            d["polygon"] = [list(p) for p in self.polygon]
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or "kind" not in d:
            raise InvalidArgumentError("region must be an object with a `kind`")
        return cls(
            kind=d["kind"],
            name=d.get("name"),
            box=tuple(d["box"]) if d.get("box") is not None else None,
            polygon=tuple(tuple(p) for p in d["polygon"]) if d.get("polygon") is not None else None,
        )


def _box_mask(grid, lat_min, lat_max, lon_min, lon_max):
    full_span = lon_max - lon_min >= 360.0
    lon_min_n = float(normalize_lon(lon_min))
    lon_max_n = float(normalize_lon(lon_max))
    in_lat = (grid.lat >= lat_min) & (grid.lat <= lat_max)
    if full_span or (lon_min == -180.0 and lon_max == 180.0):
        in_lon = np.ones_like(in_lat)
    elif lon_min_n <= lon_max_n:
        in_lon = (grid.lon >= lon_min_n) & (grid.lon <= lon_max_n)
    else:  # wraps the dateline
        in_lon = (grid.lon >= lon_min_n) | (grid.lon <= lon_max_n)
    return in_lat & in_lon


def _polygon_mask(grid, polygon):
    """Spherical winding-number test.

    For each query point, accumulate the wrapped longitude swept by the
    boundary in that point's tangent frame. The interior is the region to the
    left of the directed boundary (winding +2*pi); polygons enclosing an
    antipodal point pair are not supported.
    """
    poly = latlon_to_xyz([p[0] for p in polygon], [normalize_lon(p[1]) for p in polygon])
    u = grid.unit_xyz
    # Per-vertex tangent basis (e1, e2) orthogonal to u.
    ref = np.zeros_like(u)
    ref[:, 2] = 1.0
    near_pole = np.abs(u[:, 2]) > 0.9
    ref[near_pole] = [1.0, 0.0, 0.0]
    e1 = np.cross(ref, u)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(u, e1)

    def lons_of(q):
        return np.arctan2(e2 @ q, e1 @ q)

    winding = np.zeros(u.shape[0])
    prev = lons_of(poly[-1])
    for q in poly:
        cur = lons_of(q)
        d = cur - prev
        d = (d + np.pi) % (2 * np.pi) - np.pi
        winding += d
        prev = cur
    return winding > np.pi  # +2*pi inside (left of boundary), else ~0 or -2*pi


def region_mask(grid: IcosahedralGrid, region: RegionSpec,
                named_regions: dict | None = None) -> np.ndarray:
    """Boolean per-vertex membership mask for a region."""
    if region.kind == "named":
        table = named_regions if named_regions is not None else DEFAULT_REGIONS
        if region.name not in table:
            raise NotFoundError(f"unknown named region {region.name!r}")
        return _box_mask(grid, *table[region.name])
    if region.kind == "latlon_box":
        return _box_mask(grid, *region.box)
    return _polygon_mask(grid, region.polygon)


def taper_weights(grid: IcosahedralGrid, mask: np.ndarray, width_km: float) -> np.ndarray:
    """Cosine edge taper: 1 inside beyond `width_km` of the boundary, 0 outside.

    Weight ramps from 0 to 1 over the band of in-mask vertices within
    width_km of the nearest out-of-mask vertex.
    """
    w = mask.astype(np.float64)
    if width_km <= 0 or mask.all() or not mask.any():
        return w
    outside = grid.unit_xyz[~mask]
    tree = cKDTree(outside)
    chord, _ = tree.query(grid.unit_xyz[mask])
    d_km = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0)) * EARTH_RADIUS_KM
    ramp = np.clip(d_km / width_km, 0.0, 1.0)
    w[mask] = 0.5 * (1.0 - np.cos(np.pi * ramp))
    return w


# ---------------------------------------------------------------------------
# Coarsening


def coarsen(values: np.ndarray, grid_fine: IcosahedralGrid,
            grid_coarse: IcosahedralGrid) -> np.ndarray:
    """Area-weighted mean of fine vertices onto their parent coarse vertex."""
    if grid_fine.level != grid_coarse.level + 1:
        raise InvalidArgumentError(
            f"coarsen needs consecutive levels, got {grid_fine.level} -> {grid_coarse.level}")
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != grid_fine.n_vertices:
        raise ShapeError(
            f"field has {values.shape[-1]} values, grid level {grid_fine.level} "
            f"has {grid_fine.n_vertices} vertices")
    w = grid_fine.area_weights
    nc = grid_coarse.n_vertices
    wsum = np.bincount(grid_fine.parent_map, weights=w, minlength=nc)
    flat = values.reshape(-1, grid_fine.n_vertices)
    out = np.empty((flat.shape[0], nc))
    for i, row in enumerate(flat):
        out[i] = np.bincount(grid_fine.parent_map, weights=w * row, minlength=nc) / wsum
    return out.reshape(values.shape[:-1] + (nc,))


def coarsen_to(values: np.ndarray, grid: IcosahedralGrid, target_level: int) -> np.ndarray:
    """Coarsen repeatedly down to target_level (no-op when equal)."""
    if target_level > grid.level:
        raise InvalidArgumentError(
            f"cannot refine: field at level {grid.level}, requested {target_level}")
    out = np.asarray(values, dtype=np.float64)
    g = grid
    while g.level > target_level:
        gc = get_grid(g.level - 1)
        out = coarsen(out, g, gc)
        g = gc
    return out


# ---------------------------------------------------------------------------
# Grid cache file (binary, little-endian)


def save_grid_cache(grid: IcosahedralGrid, path):
    with open(path, "wb") as f:
        f.write(_GRID_MAGIC)
        f.write(struct.pack("<III", _GRID_VERSION, grid.level, grid.n_vertices))
        np.stack([grid.lat, grid.lon], axis=1).astype("<f8").tofile(f)
        grid.area_weights.astype("<f8").tofile(f)


def load_grid_cache(path):
    """Read back (level, lat, lon, weights) from a grid cache file."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _GRID_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {_GRID_MAGIC!r}")
        header = f.read(12)
        if len(header) != 12:
            raise CorruptFileError("truncated grid cache header")
        version, level, count = struct.unpack("<III", header)
        if version != _GRID_VERSION:
            raise FormatError(f"unsupported grid cache version {version}")
        coords = np.fromfile(f, dtype="<f8", count=2 * count)
        weights = np.fromfile(f, dtype="<f8", count=count)
    if coords.size != 2 * count or weights.size != count:
        raise CorruptFileError("truncated grid cache body")
    coords = coords.reshape(count, 2)
    return level, coords[:, 0], coords[:, 1], weights
