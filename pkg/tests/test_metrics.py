import json
import math

import numpy as np
import pytest
import shapely.affinity as sa
import shapely.geometry as sg

from cartoflow.geometry import GeometryError, GridSpec, Region, Ring, normalize_to_box
from cartoflow.metrics import (
    FIELDS,
    aggregate,
    aspect_ratio,
    distortion_fields,
    distortion_report,
    hamming_distance,
    local_distortion,
    relative_position_error,
    report_for,
    tissot_axes,
)
from cartoflow.projection import ProjectionMap

from conftest import checkerboard, square


def affine_map(L, A, shift=(0.0, 0.0)):
    I = ProjectionMap.identity(GridSpec(L, L)).corners
    return ProjectionMap(I @ np.asarray(A, dtype=float).T + np.asarray(shift))


def rot(deg):
    t = math.radians(deg)
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def region(rid, pts):
    return Region(rid, ((Ring.oriented(np.asarray(pts, dtype=float)),),), 1.0)


# -- Tissot indicatrix ---------------------------------------------------------


def test_tissot_axes_of_affine_maps():
    assert tissot_axes(affine_map(8, np.eye(2)), (4.0, 4.0)) == pytest.approx((1.0, 1.0), abs=1e-12)
    assert tissot_axes(affine_map(8, [[2, 0], [0, 1]]), (3.3, 5.1)) == pytest.approx((2.0, 1.0), abs=1e-12)
    assert tissot_axes(affine_map(8, rot(30)), (4.0, 2.5)) == pytest.approx((1.0, 1.0), abs=1e-12)
    # shear [[1, 1], [0, 1]]: singular values are the golden ratio and its inverse
    phi = (1 + 5**0.5) / 2
    assert tissot_axes(affine_map(8, [[1, 1], [0, 1]]), (4.0, 4.0)) == pytest.approx((phi, 1 / phi), abs=1e-12)


def test_tissot_rejects_edge_points():
    with pytest.raises(ValueError):
        tissot_axes(affine_map(8, np.eye(2)), (0.5, 4.0))


def test_identity_fields_vanish():
    e, et = distortion_fields(affine_map(16, np.eye(2)))
    assert np.abs(e).max() < 1e-12 and np.abs(et).max() < 1e-12


def test_stretch_fields_are_constant():
    e, et = distortion_fields(affine_map(16, [[2, 0], [0, 1]]))
    assert np.abs(e - math.log(2)).max() < 1e-9
    assert np.abs(et - 2 * math.asin(1 / 3)).max() < 1e-9


def test_collapsed_cells_give_infinite_e():
    e, et = distortion_fields(affine_map(8, [[1, 0], [0, 0]]))
    assert np.isinf(e).all()
    assert np.allclose(et, np.pi)


def test_aggregates():
    assert aggregate(np.full((4, 4), 0.3)) == pytest.approx((0.3, 0.3))
    spike = np.zeros((10, 10))
    spike[3, 7] = 5.0
    assert aggregate(spike) == pytest.approx((0.05, 5.0))


def test_e_invariant_under_rigid_motion_of_image(solved_checker):
    T = solved_checker.projection
    moved = ProjectionMap(T.corners @ rot(41).T + [7.0, -3.0])
    e1, et1 = distortion_fields(T)
    e2, et2 = distortion_fields(moved)
    assert np.abs(e1 - e2).max() < 1e-9 and np.abs(et1 - et2).max() < 1e-9


def test_local_distortion_of_real_solve(solved_checker):
    d = local_distortion(solved_checker.projection)
    assert 0 < d["e_a"] < d["e_inf"] < 5
    assert 0 < d["etilde_a"] < d["etilde_inf"] < np.pi


# -- aspect ratio ----------------------------------------------------------------


def brute_force_aspect(pts, step_deg=0.01):
    best = None
    for deg in np.arange(0.0, 90.0, step_deg):
        q = pts @ rot(deg).T
        w, h = np.ptp(q, axis=0)
        if best is None or w * h < best[0]:
            best = (w * h, max(w, h) / min(w, h))
    return best[1]


def test_aspect_ratio_simple_shapes():
    assert aspect_ratio(square(0, 0)) == pytest.approx(1.0, abs=1e-12)
    assert aspect_ratio(square(0, 0, 2, 1)) == pytest.approx(2.0, abs=1e-12)


def test_rotated_rectangle():
    pts = square(-1.5, -0.5, 3, 1) @ rot(37).T
    assert abs(aspect_ratio(pts) - 3.0) < 1e-9
    assert abs(brute_force_aspect(pts) - 3.0) < 1e-3


def test_aspect_ratio_matches_angle_sweep(rng):
    pts = rng.normal(size=(12, 2)) * [3.0, 1.0]
    hull = np.array(sg.MultiPoint(pts).convex_hull.exterior.coords)[:-1]
    assert aspect_ratio(hull) == pytest.approx(brute_force_aspect(hull), rel=2e-3)


def test_aspect_ratio_rotation_and_scale_invariant(rng):
    pts = rng.random((9, 2))
    a = aspect_ratio(pts)
    assert aspect_ratio(3.5 * pts @ rot(123).T + 4) == pytest.approx(a, rel=1e-9)


def test_degenerate_aspect_ratio():
    with pytest.raises(GeometryError):
        aspect_ratio(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))


# -- Hamming distance ----------------------------------------------------------


def test_hamming_identical_and_moved():
    sq = square(0, 0, 2)
    assert hamming_distance(sq, sq) < 1e-9
    # translation and uniform scaling are factored out
    assert hamming_distance(sq, 3 * sq + [10.0, -4.0]) < 1e-6


def test_hamming_rectangle_vs_square():
    # equal areas, best overlap is centered: (4 - 2 + 4 - 2) / (4 + 4)
    h = hamming_distance(square(0, 0, 2), square(0, 0, 4, 1))
    assert h == pytest.approx(0.5, abs=1e-3)


def test_hamming_square_vs_disc_matches_polygon_clipping():
    sq = sg.box(0, 0, 1, 1)
    disc = sg.Point(0.5, 0.5).buffer(1 / math.sqrt(math.pi), 256)
    disc = sa.scale(disc, *(2 * [math.sqrt(1 / disc.area)]), origin=(0.5, 0.5))
    oracle = sq.symmetric_difference(disc).area / (sq.area + disc.area)
    pts = np.array(disc.exterior.coords)[:-1]
    h = hamming_distance(square(0, 0), pts)
    assert h == pytest.approx(oracle, abs=1e-3)


def test_hamming_symmetric(rng):
    t = np.sort(rng.uniform(0, 2 * np.pi, 15))
    blob = np.column_stack([np.cos(t), 0.6 * np.sin(t)]) * rng.uniform(0.8, 1.2, (15, 1))
    tri = np.array([[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]])
    assert hamming_distance(blob, tri) == pytest.approx(hamming_distance(tri, blob), abs=2e-3)


def test_hamming_bounds(rng):
    tri = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 0.2]])
    h = hamming_distance(square(0, 0), tri)
    assert 0.0 < h < 1.0


# -- relative position error -------------------------------------------------------


def test_theta_identity_and_reversal():
    c = np.array([[0.0, 0.0], [1.0, 0.0], [0.3, 2.0]])
    assert relative_position_error(c, c) == 0.0
    assert relative_position_error([[0, 0], [1, 0]], [[1, 0], [0, 0]]) == 1.0


def test_theta_invariances(rng):
    c = rng.random((6, 2))
    d = c + rng.normal(scale=0.05, size=c.shape)
    th = relative_position_error(c, d)
    assert 0 < th < 0.5
    assert relative_position_error(c, 2.5 * d) == pytest.approx(th, rel=1e-12)
    assert relative_position_error(c, d + [3.0, -1.0]) == pytest.approx(th, rel=1e-9)


def test_theta_needs_two_points():
    with pytest.raises(ValueError):
        relative_position_error([[0, 0]], [[1, 1]])


def test_theta_skips_coincident_pairs(caplog):
    th = relative_position_error([[0, 0], [1, 0], [0, 1]], [[0, 0], [0, 0], [0, 1]])
    assert "coincident" in caplog.text
    assert 0 <= th <= 1


# -- reports ------------------------------------------------------------------------


def test_identity_report_is_zero():
    doc = normalize_to_box(checkerboard(32), 32)
    r = distortion_report(ProjectionMap.identity(doc.grid), doc, doc, resolution=128)
    for k in ("e_a", "e_inf", "etilde_a", "etilde_inf", "delta", "theta"):
        assert abs(getattr(r, k)) < 1e-9, k
    assert r.alpha == pytest.approx(1.0)


def test_report_fields_and_formats(solved_checker):
    r = report_for(solved_checker, resolution=128)
    d = json.loads(r.to_json())
    assert list(d) == list(FIELDS)
    assert d["max_area_error"] == solved_checker.max_area_error
    assert d["delta"] > 0 and 0 < d["theta"] < 0.1 and d["alpha"] >= 1
    lines = r.to_table().splitlines()
    assert len(lines) == len(FIELDS)
    assert lines[0].split() == ["e_a", f"{r.e_a:.6g}"]


def test_multipolygon_regions_use_all_parts():
    a = region("a", square(0, 0))
    two = Region(
        "b", ((Ring.oriented(square(0, 0)),), (Ring.oriented(square(3, 0)),)), 1.0
    )
    # two unit squares three apart: hull-based rectangle is 4 x 1
    assert aspect_ratio(two) == pytest.approx(4.0)
    assert aspect_ratio(a) == pytest.approx(1.0)
