import json

import numpy as np
import pytest

from cartoflow.geometry import MapDocument, Region, Ring, normalize_to_box


def square(x, y, w=1.0, h=None):
    h = w if h is None else h
    return np.array([[x, y], [x + w, y], [x + w, y + h], [x, y + h]], dtype=float)


def square_region(rid, x, y, target, w=1.0, h=None):
    return Region(rid, ((Ring.oriented(square(x, y, w, h)),),), target)


def checkerboard(L=128, boost=4.0, cell=(1, 2)):
    """16 unit squares in a 4x4 block, one of them with ``boost`` times the target."""
    regions = []
    for i in range(4):
        for j in range(4):
            target = boost if (i, j) == cell else 1.0
            regions.append(square_region(f"r{i}{j}", i, j, target))
    return normalize_to_box(MapDocument(tuple(regions)), L)


def feature_collection(polys: dict) -> str:
    feats = []
    for rid, rings in polys.items():
        coords = [[list(map(float, p)) for p in np.vstack([r, r[:1]])] for r in rings]
        feats.append(
            {"type": "Feature", "properties": {"id": rid}, "geometry": {"type": "Polygon", "coordinates": coords}}
        )
    return json.dumps({"type": "FeatureCollection", "features": feats})


def single_mode_density(L, eps=0.1):
    x = np.arange(L) + 0.5
    return np.outer(1.0 + eps * np.cos(np.pi * x / L), np.ones(L))


def bump_density(L):
    x = (np.arange(L) + 0.5) / L
    X, Y = np.meshgrid(x, x, indexing="ij")
    return 1.0 + 2.0 * np.exp(-((X - 0.45) ** 2 + (Y - 0.55) ** 2) / (2 * 0.1**2))


# -- independent direct-summation references ------------------------------------


def direct_forward(grid):
    lx, ly = grid.shape
    cx = np.cos(np.pi * np.outer(np.arange(lx), np.arange(lx) + 0.5) / lx)  # [m, i]
    cy = np.cos(np.pi * np.outer(np.arange(ly), np.arange(ly) + 0.5) / ly)  # [n, j]
    out = np.zeros((lx, ly))
    for m in range(lx):
        for n in range(ly):
            s = 0.0
            for i in range(lx):
                for j in range(ly):
                    s += grid[i, j] * cx[m, i] * cy[n, j]
            out[m, n] = 4.0 * s / ((2 if m == 0 else 1) * (2 if n == 0 else 1))
    return out


def direct_synthesis(coeffs, fx, fy, skip_m0=False, skip_n0=False):
    lx, ly = coeffs.shape
    out = np.zeros((lx, ly))
    for i in range(lx):
        for j in range(ly):
            x, y = i + 0.5, j + 0.5
            s = 0.0
            for m in range(1 if skip_m0 else 0, lx):
                bx = fx(m * np.pi * x / lx)
                for n in range(1 if skip_n0 else 0, ly):
                    s += coeffs[m, n] * bx * fy(n * np.pi * y / ly)
            out[i, j] = s
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def checker128():
    return checkerboard(128)


@pytest.fixture(scope="session")
def solved_checker(checker128):
    from cartoflow.solver import SolveOptions, solve_cartogram

    return solve_cartogram(checker128, SolveOptions(workers=1))


# -- acceptance summary -------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[number] = (bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
