import numpy as np
import pytest

from pathloss_aug import _core
from pathloss_aug.terrain import Raster, TerrainStack


def make_raster(values, cellsize=5.0, xll=0.0, yll=0.0, nodata=-9999.0):
    values = np.asarray(values, dtype=float)
    return Raster(values.shape[1], values.shape[0], xll, yll, cellsize, nodata, values)


def make_stack(ground, clutter=0.0, cellsize=5.0, shape=None):
    """Stack from ground and clutter arrays (scalars broadcast to ``shape``)."""
    if shape is not None:
        ground = np.broadcast_to(np.asarray(ground, dtype=float), shape)
        clutter = np.broadcast_to(np.asarray(clutter, dtype=float), shape)
    ground = np.asarray(ground, dtype=float)
    clutter = np.broadcast_to(np.asarray(clutter, dtype=float), ground.shape)
    tmpl = make_raster(ground, cellsize)
    return TerrainStack.from_ground(tmpl, ground, clutter)


def _backends():
    names = ["python"]
    try:
        _core.get_backend("cython")
        names.append("cython")
    except ImportError:
        pass
    return names


BACKENDS = _backends()


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    monkeypatch.setattr(_core, "_impl", _core.get_backend(request.param))
    return request.param


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
