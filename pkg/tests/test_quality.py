import numpy as np
import pytest

from polyagg.mesh import make_cell
from polyagg.quality import (
    mesh_quality_report,
    rho,
    rho1,
    rho2,
    rho3,
    rho4,
    scores_from_points,
)

from conftest import (
    NON_STAR_POLY,
    equilateral_cell,
    grid_mesh,
    kernel_sampling_oracle,
    random_polygon,
    square_cell,
    tri_grid_mesh,
    unit_triangle_cell,
)
from polyagg import geometry


def combined(r1, r2, r3, r4):
    return np.sqrt(r1 * (r2 + r3 + r4) / 3.0)


def test_rho1_square():
    assert rho1(square_cell()) == pytest.approx(1.0, abs=1e-12)


def test_rho1_non_star_shaped_zero():
    c = make_cell(NON_STAR_POLY)
    assert rho1(c) == 0.0
    assert not kernel_sampling_oracle(NON_STAR_POLY)


def test_rho1_concave_quad():
    c = make_cell([[0, 0], [2, 0], [2, 2], [1, 0.5]])
    v = rho1(c)
    # kernel area 5/6 by half-plane clipping, cell area 3/2
    assert 0.0 < v < 1.0
    assert v == pytest.approx((5.0 / 6.0) / 1.5, rel=1e-9)


def test_rho2_square():
    assert rho2(square_cell()) == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-12)


def test_rho2_equilateral():
    expected = np.sqrt(np.sqrt(3.0) / 4.0)  # sqrt(area), below the unit edge
    assert rho2(equilateral_cell()) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.65804, abs=5e-6)


def test_rho2_square_with_midside_node():
    c = make_cell([[0, 0], [0.5, 0], [1, 0], [1, 1], [0, 1]])
    assert rho2(c) == pytest.approx(0.5 / np.sqrt(2.0), abs=1e-12)
    assert rho2(c) == pytest.approx(0.35355, abs=5e-6)


def test_rho3_values():
    assert rho3(unit_triangle_cell()) == 1.0
    assert rho3(square_cell()) == 0.75
    hexagon = make_cell(
        [[np.cos(t), np.sin(t)] for t in np.linspace(0, 2 * np.pi, 7)[:-1]]
    )
    assert rho3(hexagon) == 0.5


def test_rho4_square_and_triangle():
    assert rho4(square_cell()) == 1.0
    assert rho4(unit_triangle_cell()) == 1.0


def test_rho4_split_edge():
    c = make_cell([[0, 0], [0.25, 0], [2, 0], [2, 1], [0, 1]])
    assert rho4(c) == pytest.approx(0.25 / 1.75, rel=1e-12)
    assert rho4(c) == pytest.approx(1.0 / 7.0, rel=1e-9)


def test_rho_square():
    s = rho(square_cell())
    assert s.rho == pytest.approx(combined(1, 1 / np.sqrt(2), 0.75, 1), abs=1e-12)
    assert s.rho == pytest.approx(0.905006, abs=1e-6)


def test_rho_equilateral():
    s = rho(equilateral_cell())
    r2 = np.sqrt(np.sqrt(3.0) / 4.0)
    assert s.rho == pytest.approx(combined(1, r2, 1, 1), abs=1e-12)
    assert s.rho == pytest.approx(0.941282, abs=1e-6)


def test_rho_zero_iff_not_star_shaped():
    s = rho(make_cell(NON_STAR_POLY))
    assert s.rho == 0.0 and s.rho1 == 0.0


def test_monotone_hanging_node():
    base = rho(square_cell())
    split = rho(make_cell([[0, 0], [0.3, 0], [1, 0], [1, 1], [0, 1]]))
    assert split.rho2 < base.rho2
    assert split.rho3 < base.rho3
    assert split.rho4 < base.rho4
    assert split.rho < base.rho


def test_invariances(rng):
    checked = 0
    for _ in range(120):
        poly = random_polygon(rng)
        if not geometry.is_simple_polygon(poly):
            continue
        poly = geometry.ensure_ccw(poly)
        base = scores_from_points(poly)
        for t in base.as_tuple():
            assert 0.0 <= t <= 1.0
        s, ang, shift = 2.7, 0.61, np.array([3.2, -1.4])
        R = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        moved = scores_from_points(s * poly @ R.T + shift)
        assert np.allclose(moved.as_tuple(), base.as_tuple(), atol=1e-12)
        checked += 1
    assert checked > 60


def test_rho_zero_matches_combination_rule(rng):
    for _ in range(80):
        poly = random_polygon(rng, kind=2)
        if not geometry.is_simple_polygon(poly):
            continue
        poly = geometry.ensure_ccw(poly)
        s = scores_from_points(poly)
        assert (s.rho == 0.0) == (s.rho1 == 0.0)


def test_mesh_report_uniform_grid():
    m = grid_mesh(4, 4)
    rep = mesh_quality_report(m)
    vals = np.array([s.rho for s in rep.scores])
    assert np.allclose(vals, vals[0], atol=1e-12)
    assert rep.min_rho == pytest.approx(0.905006, abs=1e-6)


def test_mesh_report_triangles():
    m = tri_grid_mesh(2, 2)
    rep = mesh_quality_report(m)
    # right isoceles triangle: rho2 = sqrt(area)/hyp with legs 0.5
    r2 = np.sqrt(0.125) / np.sqrt(0.5)
    expected = combined(1.0, r2, 1.0, 1.0)
    assert rep.min_rho == pytest.approx(expected, rel=1e-12)
    assert rep.mean_rho == pytest.approx(expected, rel=1e-12)


def test_mesh_report_with_bad_cell():
    pts = np.vstack([NON_STAR_POLY, [[10, 0], [11, 0], [11, 1], [10, 1]]])
    m_cells = [list(range(8)), [8, 9, 10, 11]]
    from polyagg.mesh import build_mesh

    m = build_mesh(pts, m_cells)
    rep = mesh_quality_report(m)
    assert rep.min_rho == 0.0


def test_quality_csv(tmp_path):
    from polyagg.quality import write_quality_csv

    m = grid_mesh(2, 2)
    rep = mesh_quality_report(m)
    path = tmp_path / "q.csv"
    write_quality_csv(rep, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "cell_id,rho1,rho2,rho3,rho4,rho"
    assert len(lines) == 5
