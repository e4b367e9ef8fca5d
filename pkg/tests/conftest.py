from __future__ import annotations

import numpy as np
import pytest

from anisomhd.solver import MHDState
from anisomhd.spectral import Grid, VectorField, _leray_arrays, random_vector_field


def fd_derivative(values: np.ndarray, axis: int, h: float, order: int = 1) -> np.ndarray:
    """Periodic 8th-order central finite difference, applied ``order`` times."""
    c = {1: 4 / 5, 2: -1 / 5, 3: 4 / 105, 4: -1 / 280}
    out = values
    for _ in range(order):
        d = np.zeros_like(out)
        for s, w in c.items():
            d += w * (np.roll(out, -s, axis=axis) - np.roll(out, s, axis=axis))
        out = d / h
    return out


def solenoidal_band_field(grid: Grid, rng: np.random.Generator, band: int | None = None) -> VectorField:
    """Random divergence-free field in the dealiased band (or in ``|m| <= band``)."""
    v = random_vector_field(grid, rng, band=band)
    data = v.data if band is not None else v.data * grid.dealias_mask
    return VectorField(grid, _leray_arrays(data, grid))


def random_state(grid: Grid, rng: np.random.Generator, scale: float = 1.0, band: int | None = None) -> MHDState:
    u = solenoidal_band_field(grid, rng, band) * scale
    b = solenoidal_band_field(grid, rng, band) * scale
    return MHDState(u, b, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid16():
    return Grid.cube(16)


@pytest.fixture(scope="session")
def grid32():
    return Grid.cube(32)


# ---------------------------------------------------------------- acceptance reporting

_CRITERIA: dict = {}


@pytest.fixture
def record(request):
    """Attach a one-line measurement summary to the running acceptance test."""
    def _record(detail: str) -> None:
        request.node.user_properties.append(("detail", detail))
    return _record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
    _CRITERIA[marker.args[0]] = ("PASS" if rep.passed else "FAIL", item.name, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, name, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2} {status}  {name}: {detail}")
