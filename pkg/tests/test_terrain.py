import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathloss_aug.errors import NodataError, OutOfBoundsError, RasterFormatError
from pathloss_aug.terrain import (TerrainStack, TxSite, extract_profile, generate_synthetic_terrain,
                                  load_ascii_grid, profile_distances, sample, sample_many,
                                  save_ascii_grid)

from conftest import make_raster, make_stack

GRID_2X2 = """ncols 2
nrows 2
xllcorner 100
yllcorner 200
cellsize 5
NODATA_value -9999
1 2
3 4
"""


class TestAsciiGrid:
    def test_north_west_cell(self):
        r = load_ascii_grid(GRID_2X2)
        assert r.values[0, 0] == 1
        assert r.cell_center(0, 0) == (102.5, 207.5)
        assert sample(r, 102.5, 207.5, "nearest") == 1
        assert sample(r, 107.5, 202.5, "nearest") == 4

    def test_missing_cellsize(self):
        text = GRID_2X2.replace("cellsize 5\n", "")
        with pytest.raises(RasterFormatError, match="missing required key"):
            load_ascii_grid(text)

    def test_round_trip_fixpoint(self):
        r = load_ascii_grid(GRID_2X2)
        text = save_ascii_grid(r)
        r2 = load_ascii_grid(text)
        assert r2 == r
        assert save_ascii_grid(r2) == text

    def test_case_insensitive_and_center_origin(self):
        text = GRID_2X2.replace("xllcorner 100", "XLLCENTER 102.5").replace("NODATA_value", "nodata_VALUE")
        r = load_ascii_grid(text)
        assert r.xll == 100.0

    def test_default_nodata(self):
        r = load_ascii_grid(GRID_2X2.replace("NODATA_value -9999\n", ""))
        assert r.nodata == -9999.0

    @pytest.mark.parametrize("text,line", [
        (GRID_2X2.replace("3 4", "3 x"), "line 8"),
        (GRID_2X2.replace("3 4", "3"), "expected 4 values"),
        (GRID_2X2.replace("ncols 2", "ncols two"), "line 1"),
        (GRID_2X2.replace("cellsize 5", "cellsize 5\ncellsize 5"), "duplicate"),
    ])
    def test_errors_locate_problem(self, text, line):
        with pytest.raises(RasterFormatError, match=line):
            load_ascii_grid(text)

    def test_too_small(self):
        with pytest.raises(RasterFormatError):
            make_raster([[1.0, 2.0]])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**31 - 1))
    def test_round_trip_random(self, nr, nc, seed):
        rng = np.random.default_rng(seed)
        vals = rng.normal(0, 1e3, (nr, nc))
        vals[rng.random((nr, nc)) < 0.2] = -9999.0
        r = make_raster(vals, cellsize=float(rng.uniform(0.1, 30)), xll=float(rng.normal(0, 1e5)))
        r2 = load_ascii_grid(save_ascii_grid(r))
        assert r2 == r


class TestSampling:
    def test_constant_field(self, backend):
        r = make_raster(np.full((6, 7), 200.0))
        rng = np.random.default_rng(1)
        xs = rng.uniform(0, 35, 500)
        ys = rng.uniform(0, 30, 500)
        assert np.all(sample_many(r, xs, ys) == 200.0)

    def test_cell_centers_exact(self, backend):
        vals = np.random.default_rng(2).normal(100, 30, (5, 8))
        r = make_raster(vals, cellsize=3.0, xll=10.0, yll=-4.0)
        for row in range(5):
            for col in range(8):
                x, y = r.cell_center(col, row)
                for mode in ("bilinear", "nearest"):
                    got = sample(r, x, y, mode)
                    assert abs(got - vals[row, col]) <= 1e-9 * abs(vals[row, col])

    def test_ramp_midpoint(self, backend):
        r = make_raster([[0.0, 10.0], [0.0, 10.0]])
        assert sample(r, 5.0, 2.5) == pytest.approx(5.0, abs=1e-12)

    def test_out_of_bounds(self):
        r = make_raster(np.zeros((3, 3)))
        with pytest.raises(OutOfBoundsError):
            sample(r, -0.1, 1.0)
        with pytest.raises(OutOfBoundsError):
            sample(r, 1.0, 15.1)

    def test_nodata_cell_raises(self, backend):
        vals = np.zeros((3, 3))
        vals[1, 1] = -9999.0
        r = make_raster(vals)
        with pytest.raises(NodataError):
            sample(r, 7.5, 7.5)

    def test_nodata_neighbour_falls_back_to_nearest(self, backend):
        vals = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, -9999.0], [7.0, 8.0, 9.0]])
        r = make_raster(vals)
        # between centers of (row1,col1)=5 and (row1,col2)=nodata, nearer to the valid cell
        assert sample(r, 8.0, 7.5) == 5.0

    def test_backends_agree(self):
        from pathloss_aug import _core
        from conftest import BACKENDS
        if len(BACKENDS) < 2:
            pytest.skip("compiled extension not built")
        rng = np.random.default_rng(3)
        vals = rng.normal(0, 50, (40, 30))
        vals[rng.random(vals.shape) < 0.05] = -9999.0
        xs = rng.uniform(0, 150, 5000)
        ys = rng.uniform(0, 200, 5000)
        a = _core.get_backend("python").bilinear(vals, -9999.0, 0.0, 200.0, 5.0, xs, ys)
        b = _core.get_backend("cython").bilinear(vals, -9999.0, 0.0, 200.0, 5.0, xs, ys)
        assert np.array_equal(a, b, equal_nan=True)


class TestStack:
    def test_identity_exact(self):
        stack = generate_synthetic_terrain(7, 33, 5.0, 40.0, 0.2, base_elevation=123.456)
        g, h, s = stack.ground.values, stack.dhm.values, stack.dsm.values
        assert np.array_equal(g + h, s)

    def test_negative_dhm_clamped_with_warning(self):
        dsm = make_raster(np.full((3, 3), 100.0))
        dhm_vals = np.zeros((3, 3))
        dhm_vals[0, 0] = -2.0
        dhm_vals[2, 2] = -0.5
        with pytest.warns(UserWarning, match="clamped 2"):
            stack = TerrainStack.from_rasters(dsm, make_raster(dhm_vals))
        assert stack.dhm.values.min() == 0.0
        assert stack.ground.values[0, 0] == 100.0

    def test_grid_mismatch(self):
        with pytest.raises(RasterFormatError):
            TerrainStack.from_rasters(make_raster(np.zeros((3, 3))), make_raster(np.zeros((3, 4))))

    def test_tx_requires_frequency(self):
        with pytest.raises(ValueError):
            TxSite(0, 0, 30, ())


class TestProfile:
    def test_flat(self):
        stack = make_stack(0.0, 0.0, shape=(30, 30))
        prof = extract_profile(stack, (10, 10), (120, 90), 10)
        assert np.all(prof.ground == 0) and np.all(prof.surface == 0)

    def test_sampling_rule(self):
        d = profile_distances(95.0, 10.0)
        assert d.tolist() == [0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 95]
        stack = make_stack(0.0, 0.0, shape=(30, 30))
        prof = extract_profile(stack, (20, 20), (20, 115), 10)
        assert len(prof.distance) == 11

    def test_ramp_midpoint(self):
        cs = 5.0
        xs = (np.arange(40) + 0.5) * cs
        ground = np.tile(xs / xs[-1] * 100.0, (10, 1))
        stack = make_stack(ground, cellsize=cs)
        a, b = (xs[0], 25.0), (xs[-1], 25.0)
        prof = extract_profile(stack, a, b, 1.0)
        mid = int(np.argmin(np.abs(prof.distance - (b[0] - a[0]) / 2)))
        assert abs(prof.ground[mid] - 50.0) <= 100.0 / 39

    def test_default_step_is_cellsize(self):
        stack = make_stack(0.0, 0.0, cellsize=8.0, shape=(20, 20))
        prof = extract_profile(stack, (10, 10), (10, 90))
        assert prof.distance[1] == 8.0

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 200), st.floats(0, 200), st.floats(0, 200), st.floats(0, 200),
           st.floats(0.5, 40))
    def test_distances_increasing(self, ax, ay, bx, by, step):
        if math.hypot(bx - ax, by - ay) < 1e-6:
            return
        stack = make_stack(0.0, 0.0, shape=(40, 40))
        d = extract_profile(stack, (ax, ay), (bx, by), step).distance
        assert np.all(np.diff(d) > 0)
        assert abs(d[-1] - math.hypot(bx - ax, by - ay)) <= 1e-9

    def test_endpoint_out_of_bounds(self):
        stack = make_stack(0.0, 0.0, shape=(10, 10))
        with pytest.raises(OutOfBoundsError):
            extract_profile(stack, (5, 5), (500, 5))


class TestSynthetic:
    def test_degenerate_flat(self):
        stack = generate_synthetic_terrain(1, 17, 5.0, 0.0, 0.0)
        assert np.all(stack.dsm.values == stack.dsm.values[0, 0])
        assert np.all(stack.dhm.values == 0)

    def test_deterministic(self):
        a = generate_synthetic_terrain(42, 65, 5.0, 30.0, 0.1)
        b = generate_synthetic_terrain(42, 65, 5.0, 30.0, 0.1)
        for name in ("dsm", "dhm", "ground"):
            assert getattr(a, name).values.tobytes() == getattr(b, name).values.tobytes()

    def test_relief_span(self):
        for seed in range(5):
            stack = generate_synthetic_terrain(seed, 65, 5.0, 40.0, 0.1)
            span = np.ptp(stack.ground.values)
            assert 20.0 <= span <= 40.0 + 1e-9

    def test_clutter_density(self):
        stack = generate_synthetic_terrain(3, 129, 5.0, 10.0, 0.2, (5.0, 15.0))
        covered = np.mean(stack.dhm.values > 0)
        assert 0.2 <= covered < 0.35
        assert stack.dhm.values.max() <= 15.0

    def test_bad_size(self):
        with pytest.raises(ValueError):
            generate_synthetic_terrain(0, 100, 5.0, 10.0, 0.1)

    def test_no_spurious_warnings(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            generate_synthetic_terrain(0, 33, 5.0, 10.0, 0.1)
