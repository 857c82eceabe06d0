import numpy as np
import pytest

from polyagg.mesh import (
    MergeDisconnectedError,
    MergeHoleError,
    MeshError,
    MeshFormatError,
    build_mesh,
    load_mesh,
    merge_cells,
    save_mesh,
    simplify_aligned_edges,
)

from conftest import grid_mesh


TWO_SQUARES = dict(
    points=[[0, 0], [1, 0], [2, 0], [2, 1], [1, 1], [0, 1]],
    cells=[[0, 1, 4, 5], [1, 2, 3, 4]],
)


def test_single_cell_mesh():
    m = build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]])
    assert m.n_edges == 4
    assert m.adjacency_pairs() == []
    assert m.h == pytest.approx(np.sqrt(2))


def test_two_squares_adjacency():
    m = build_mesh(**TWO_SQUARES)
    assert m.adjacency_pairs() == [(0, 1)]


def test_constrained_edge_breaks_adjacency():
    m = build_mesh(**TWO_SQUARES, constrained_edges=[(1, 4)])
    assert m.adjacency_pairs() == []
    assert m.vertex_constrained[1] and m.vertex_constrained[4]


def test_adjacency_symmetry():
    m = grid_mesh(4, 3)
    for c, nbs in enumerate(m.neighbors):
        for nb in nbs:
            assert c in m.neighbors[nb]


def test_build_rejects_dangling_index():
    with pytest.raises(MeshError, match="missing vertex"):
        build_mesh([[0, 0], [1, 0], [1, 1]], [[0, 1, 5]])


def test_build_rejects_nonsimple_cell():
    with pytest.raises(MeshError, match="cell 0"):
        build_mesh([[0, 0], [1, 1], [1, 0], [0, 1]], [[0, 1, 2, 3]])


def test_build_rejects_overused_edge():
    pts = [[0, 0], [1, 0], [1, 1], [0, 1], [2, 0.5], [0.5, -1]]
    cells = [[0, 1, 2, 3], [1, 4, 2], [5, 2, 1]]
    with pytest.raises(MeshError, match="shared by more than 2"):
        build_mesh(pts, cells)


def test_cw_cell_is_reversed():
    m = build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[3, 2, 1, 0]])
    assert m.cell_area[0] > 0


def test_tiling_total_area():
    m = grid_mesh(5, 4, 2.0, 1.0)
    assert m.total_area == pytest.approx(2.0, rel=1e-12)


def test_merge_two_squares():
    m = build_mesh(**TWO_SQUARES)
    cell = merge_cells(m, [0, 1])
    assert cell.n_vertices == 6  # midside nodes retained
    assert cell.area == pytest.approx(2.0, rel=1e-12)


def test_merge_singleton_identity():
    m = build_mesh(**TWO_SQUARES)
    cell = merge_cells(m, [0])
    assert cell.n_vertices == 4
    assert cell.area == pytest.approx(1.0)


def test_merge_disconnected_raises():
    m = grid_mesh(3, 1)
    with pytest.raises(MergeDisconnectedError):
        merge_cells(m, [0, 2])


def test_merge_ring_hole_raises():
    m = grid_mesh(3, 3)
    ring = [0, 1, 2, 3, 5, 6, 7, 8]  # all but the center cell
    with pytest.raises(MergeHoleError):
        merge_cells(m, ring)


def test_merge_not_connected_across_constraint():
    m = build_mesh(**TWO_SQUARES, constrained_edges=[(1, 4)])
    with pytest.raises(MergeDisconnectedError):
        merge_cells(m, [0, 1])


def test_merge_area_additivity():
    m = grid_mesh(3, 2)
    cell = merge_cells(m, [0, 1, 3, 4])
    assert cell.area == pytest.approx(float(m.cell_area[[0, 1, 3, 4]].sum()), rel=1e-12)


def test_simplify_removes_unshared_midside():
    pts = [[0, 0], [1, 0], [2, 0], [2, 1], [1, 1], [0, 1]]
    m = build_mesh(pts, [[0, 1, 2, 3, 4, 5]])
    out = simplify_aligned_edges(m)
    assert out.n_vertices == 4
    assert out.total_area == pytest.approx(2.0, rel=1e-12)


def test_simplify_keeps_shared_midside():
    # vertex 1 is also used by the lower neighbor: three incident edges
    pts = [[0, 0], [1, 0], [2, 0], [2, 1], [0, 1], [1, -1]]
    m = build_mesh(pts, [[0, 1, 2, 3, 4], [0, 5, 1], [5, 2, 1]])
    out = simplify_aligned_edges(m)
    assert out.n_vertices == m.n_vertices


def test_simplify_keeps_constrained_midside():
    pts = [[0, 0], [1, 0], [2, 0], [2, 1], [0, 1]]
    m = build_mesh(pts, [[0, 1, 2, 3, 4]], constrained_edges=[(0, 1)])
    out = simplify_aligned_edges(m)
    assert out.n_vertices == 5


def test_simplify_idempotent():
    pts = [[0, 0], [1, 0], [2, 0], [2, 1], [1, 1], [0, 1]]
    m = build_mesh(pts, [[0, 1, 2, 3, 4, 5]])
    once = simplify_aligned_edges(m)
    twice = simplify_aligned_edges(once)
    assert once.n_vertices == twice.n_vertices
    assert [list(c) for c in once.cells] == [list(c) for c in twice.cells]


def test_simplify_preserves_area_on_grid():
    m = grid_mesh(4, 4, jitter=0.3, seed=3)
    out = simplify_aligned_edges(m)
    assert out.total_area == pytest.approx(m.total_area, rel=1e-10)


def test_mesh_io_roundtrip(tmp_path):
    m = build_mesh(**TWO_SQUARES, constrained_edges=[(1, 4)])
    path = tmp_path / "two.mesh"
    save_mesh(m, path)
    m2 = load_mesh(path)
    assert m2.n_cells == m.n_cells
    assert np.allclose(m2.points, m.points)
    assert m2.adjacency_pairs() == m.adjacency_pairs()
    assert m2.constrained_edge_pairs() == m.constrained_edge_pairs()
    assert np.array_equal(m2.vertex_constrained, m.vertex_constrained)


def test_mesh_io_comments_and_flags(tmp_path):
    path = tmp_path / "m.mesh"
    path.write_text(
        "# a comment\nV 4\n0 0\n1 0 1\n1 1\n0 1\nC 1\n0 1 2 3\n"
    )
    m = load_mesh(path)
    assert m.vertex_constrained[1]
    assert m.n_cells == 1


def test_mesh_io_error_has_line(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("V 2\n0 0\nnope 1\n")
    with pytest.raises(MeshFormatError, match="line 3"):
        load_mesh(path)
