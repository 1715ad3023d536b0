"""Icosahedral grid: construction invariants, resampling, masks, coarsening."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudresp import grid as gridmod
from cloudresp.errors import (
    CorruptFileError,
    FormatError,
    InvalidArgumentError,
    NotFoundError,
)
from cloudresp.grid import (
    RegionSpec,
    build_grid,
    coarsen,
    coarsen_to,
    get_grid,
    latlon_to_xyz,
    load_grid_cache,
    region_mask,
    resample_latlon,
    save_grid_cache,
    taper_weights,
    vertex_count,
)


def fibonacci_sphere(n):
    """Deterministic quasi-uniform sphere sampling (golden-angle lattice)."""
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta),
                     np.cos(phi)], axis=1)


class TestConstruction:
    @pytest.mark.parametrize("level,count", [(0, 12), (1, 42), (2, 162),
                                             (3, 642), (4, 2562), (5, 10242)])
    def test_vertex_counts(self, level, count):
        assert vertex_count(level) == count
        assert get_grid(level).n_vertices == count

    def test_level_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            build_grid(-1)
        with pytest.raises(InvalidArgumentError):
            build_grid(6)

    def test_unit_norms(self, grid3):
        norms = np.linalg.norm(grid3.unit_xyz, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-12

    def test_north_pole_first(self, grid0):
        assert grid0.lat[0] == pytest.approx(90.0)
        assert grid0.lat[-1] == pytest.approx(-90.0)

    @pytest.mark.parametrize("level", [1, 2, 3, 4, 5])
    def test_hierarchy_nesting(self, level):
        fine = get_grid(level)
        coarse = get_grid(level - 1)
        n = coarse.n_vertices
        assert np.max(np.abs(fine.unit_xyz[:n] - coarse.unit_xyz)) < 1e-12

    def test_deterministic(self):
        a = build_grid(2)
        b = build_grid(2)
        assert np.array_equal(a.unit_xyz, b.unit_xyz)
        assert np.array_equal(a.faces, b.faces)

    def test_parent_map_points_into_coarse(self, grid2, grid1):
        assert grid2.parent_map.max() < grid1.n_vertices
        # inherited vertices map to themselves
        n = grid1.n_vertices
        assert np.array_equal(grid2.parent_map[:n], np.arange(n))


class TestAreaWeights:
    @pytest.mark.parametrize("level", [0, 1, 2, 3, 4, 5])
    def test_sum_and_positivity(self, level):
        w = get_grid(level).area_weights
        assert abs(w.sum() - 1.0) <= 1e-12
        assert np.all(w > 0)

    def test_level0_exactly_uniform(self, grid0):
        assert np.max(np.abs(grid0.area_weights - 1.0 / 12.0)) < 1e-15

    def test_level4_matches_monte_carlo_oracle(self):
        # Independent nearest-vertex cell-area estimate on a deterministic
        # quasi-uniform sphere sampling; 1e6 points suffice for the max/min
        # weight ratio at this resolution.
        g = get_grid(4)
        from scipy.spatial import cKDTree

        pts = fibonacci_sphere(1_000_000)
        _, idx = cKDTree(g.unit_xyz).query(pts)
        est = np.bincount(idx, minlength=g.n_vertices) / pts.shape[0]
        ratio = g.area_weights.max() / g.area_weights.min()
        ratio_est = est.max() / est.min()
        assert abs(ratio - ratio_est) / ratio_est < 0.02


class TestResample:
    def test_constant_preserved(self, grid1):
        lats = np.linspace(-89, 89, 30)
        lons = np.linspace(-179, 179, 60)
        fld = np.full((30, 60), 5.0)
        for method in ("nearest", "inverse_distance"):
            out = resample_latlon(fld, lats, lons, grid1, method)
            assert np.allclose(out, 5.0, atol=1e-12)

    def test_latitude_field_nearest(self, grid2):
        lats = np.arange(-89.5, 90.0, 1.0)
        lons = np.arange(-179.5, 180.0, 1.0)
        fld = np.repeat(lats[:, None], lons.size, axis=1)
        out = resample_latlon(fld, lats, lons, grid2, "nearest")
        assert np.max(np.abs(out - grid2.lat)) <= 1.0

    def test_single_cell_nearest_matches_brute_force(self, grid1):
        lats = np.linspace(-80, 80, 9)
        lons = np.linspace(-170, 170, 18)
        fld = np.zeros((9, 18))
        fld[4, 7] = 1.0
        out = resample_latlon(fld, lats, lons, grid1, "nearest")
        glon, glat = np.meshgrid(lons, lats)
        centers = latlon_to_xyz(glat.ravel(), glon.ravel())
        # brute-force: max dot product = nearest on the sphere
        nearest = np.argmax(grid1.unit_xyz @ centers.T, axis=1)
        expect = (nearest == 4 * 18 + 7).astype(float)
        assert np.array_equal(out, expect)

    def test_exact_hit_short_circuit(self, grid1):
        # cell centers exactly at two grid vertices
        lats = np.array([grid1.lat[0], grid1.lat[5]])
        lons = np.array([grid1.lon[0], grid1.lon[5]])
        fld = np.array([[3.0, 3.0], [7.0, 7.0]])
        out = resample_latlon(fld, lats, lons, grid1, "inverse_distance")
        assert out[0] == 3.0

    def test_empty_field_rejected(self, grid1):
        with pytest.raises(InvalidArgumentError):
            resample_latlon(np.zeros((0, 0)), [], [], grid1)

    def test_nonmonotone_axis_rejected(self, grid1):
        with pytest.raises(InvalidArgumentError):
            resample_latlon(np.zeros((3, 2)), [0, 2, 1], [0, 1], grid1)


class TestRegionMask:
    def test_whole_globe_box(self, grid2):
        mask = region_mask(grid2, RegionSpec(kind="latlon_box",
                                             box=(-90, 90, -180, 180)))
        assert mask.all()

    def test_hemisphere_polygon_fraction(self):
        g = get_grid(5)
        # equator traversed eastward: the interior (left of the boundary)
        # is the northern hemisphere
        poly = tuple((0.0, lon) for lon in range(-180, 180, 10))
        mask = region_mask(g, RegionSpec(kind="polygon", polygon=poly))
        frac = g.area_weights[mask].sum()
        assert abs(frac - 0.5) <= 0.02
        assert np.mean(g.lat[mask] > 0) > 0.99

    def test_named_sep_matches_brute_force(self, grid3):
        mask = region_mask(grid3, RegionSpec(kind="named", name="SEP"))
        lat_min, lat_max, lon_min, lon_max = gridmod.DEFAULT_REGIONS["SEP"]
        expect = np.array([
            lat_min <= la <= lat_max and lon_min <= lo <= lon_max
            for la, lo in zip(grid3.lat, grid3.lon)])
        assert np.array_equal(mask, expect)
        assert mask.any()

    def test_unknown_named_region(self, grid1):
        with pytest.raises(NotFoundError):
            region_mask(grid1, RegionSpec(kind="named", name="NOPE"))

    def test_dateline_wrapping_box(self, grid3):
        mask = region_mask(grid3, RegionSpec(kind="latlon_box",
                                             box=(-10, 10, 170, -170)))
        sel_lon = grid3.lon[mask]
        assert mask.any()
        assert np.all((sel_lon >= 170) | (sel_lon <= -170))

    def test_box_complement_partitions_sphere(self, grid2):
        box = RegionSpec(kind="latlon_box", box=(-90, 90, -40, 60))
        comp_a = RegionSpec(kind="latlon_box", box=(-90, 90, 60.0001, 180))
        comp_b = RegionSpec(kind="latlon_box", box=(-90, 90, -180, -40.0001))
        m = region_mask(grid2, box)
        mc = region_mask(grid2, comp_a) | region_mask(grid2, comp_b)
        assert not np.any(m & mc)
        assert np.all(m | mc)

    @settings(max_examples=30, deadline=None)
    @given(lat_min=st.floats(-89, 80), dlat=st.floats(1, 100),
           lon_min=st.floats(-180, 179), dlon=st.floats(1, 359))
    def test_box_mask_matches_predicate(self, lat_min, dlat, lon_min, dlon):
        g = get_grid(1)
        lat_max = min(lat_min + dlat, 90.0)
        lon_max = lon_min + dlon
        mask = region_mask(g, RegionSpec(kind="latlon_box",
                                         box=(lat_min, lat_max, lon_min, lon_max)))
        lo_n = gridmod.normalize_lon(lon_min)
        hi_n = gridmod.normalize_lon(lon_max)
        for v in range(g.n_vertices):
            in_lat = lat_min <= g.lat[v] <= lat_max
            if lon_max - lon_min >= 360:
                in_lon = True
            elif lo_n <= hi_n:
                in_lon = lo_n <= g.lon[v] <= hi_n
            else:
                in_lon = g.lon[v] >= lo_n or g.lon[v] <= hi_n
            assert mask[v] == (in_lat and in_lon)

    def test_region_spec_validation(self):
        with pytest.raises(InvalidArgumentError):
            RegionSpec(kind="named")
        with pytest.raises(InvalidArgumentError):
            RegionSpec(kind="latlon_box", box=(10, 5, 0, 20))
        with pytest.raises(InvalidArgumentError):
            RegionSpec(kind="polygon", polygon=((0, 0), (1, 1)))
        with pytest.raises(InvalidArgumentError):
            RegionSpec(kind="blob")
        with pytest.raises(InvalidArgumentError):
            RegionSpec(kind="named", name="SEP", box=(0, 1, 0, 1))

    def test_region_spec_dict_round_trip(self):
        for r in (RegionSpec(kind="named", name="NEP"),
                  RegionSpec(kind="latlon_box", box=(0.0, 10.0, -20.0, 20.0)),
                  RegionSpec(kind="polygon",
                             polygon=((0.0, 0.0), (10.0, 0.0), (0.0, 10.0)))):
            assert RegionSpec.from_dict(r.to_dict()) == r


class TestTaper:
    def test_taper_bounds_and_support(self, grid2):
        mask = region_mask(grid2, RegionSpec(kind="latlon_box",
                                             box=(-30, 30, -60, 60)))
        w = taper_weights(grid2, mask, 1500.0)
        assert np.all(w[~mask] == 0.0)
        assert np.all((w >= 0) & (w <= 1))
        assert w[mask].max() == pytest.approx(1.0)

    def test_zero_width_is_hard_mask(self, grid2):
        mask = region_mask(grid2, RegionSpec(kind="named", name="SEP"))
        assert np.array_equal(taper_weights(grid2, mask, 0.0),
                              mask.astype(float))


class TestCoarsen:
    def test_constant_preserved(self, grid1, grid0):
        out = coarsen(np.full(grid1.n_vertices, 4.5), grid1, grid0)
        assert np.allclose(out, 4.5, atol=1e-12)

    def test_single_vertex_against_child_enumeration(self, grid1, grid0):
        fld = np.zeros(grid1.n_vertices)
        fld[3] = 2.0
        out = coarsen(fld, grid1, grid0)
        for c in range(grid0.n_vertices):
            kids = np.flatnonzero(grid1.parent_map == c)
            w = grid1.area_weights[kids]
            assert out[c] == pytest.approx(np.sum(w * fld[kids]) / w.sum(),
                                           abs=1e-15)

    def test_coarsen_twice_equals_coarsen_to(self, grid2, grid1, grid0):
        rng = np.random.default_rng(1)
        fld = rng.standard_normal(grid2.n_vertices)
        twice = coarsen(coarsen(fld, grid2, grid1), grid1, grid0)
        assert np.array_equal(coarsen_to(fld, grid2, 0), twice)

    def test_level_mismatch_rejected(self, grid2, grid0):
        with pytest.raises(InvalidArgumentError):
            coarsen(np.zeros(grid2.n_vertices), grid2, grid0)
        with pytest.raises(InvalidArgumentError):
            coarsen_to(np.zeros(grid0.n_vertices), grid0, 2)

    def test_smooth_once_constant(self, grid1):
        assert np.allclose(grid1.smooth_once(np.full(grid1.n_vertices, 3.0)),
                           3.0, atol=1e-12)


class TestGridCacheFile:
    def test_round_trip(self, grid1, tmp_path):
        p = tmp_path / "g1.icog"
        save_grid_cache(grid1, p)
        level, lat, lon, w = load_grid_cache(p)
        assert level == 1
        assert np.array_equal(lat, grid1.lat)
        assert np.array_equal(lon, grid1.lon)
        assert np.array_equal(w, grid1.area_weights)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.icog"
        p.write_bytes(b"NOPE" + b"\0" * 16)
        with pytest.raises(FormatError):
            load_grid_cache(p)

    def test_truncated(self, grid1, tmp_path):
        p = tmp_path / "g1.icog"
        save_grid_cache(grid1, p)
        blob = p.read_bytes()
        p.write_bytes(blob[:len(blob) // 2])
        with pytest.raises(CorruptFileError):
            load_grid_cache(p)
