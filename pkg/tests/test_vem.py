import numpy as np
import pytest
import scipy.sparse as sps

from polyagg.agglomerate import AgglomerationConfig, agglomerate
from polyagg.mesh import build_mesh
from polyagg.solutions import CATALOG, polynomial_of_degree
from polyagg import vem
from polyagg.vem import (
    SolverError,
    assemble,
    build_dof_map,
    build_element,
    condition_estimate,
    error_norms,
    local_load,
    local_stiffness,
    monomial_dim,
    projector_discrepancies,
    solve_spd,
)

from conftest import grid_mesh, tri_grid_mesh

SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
TRIANGLE = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("poly", [SQUARE, TRIANGLE], ids=["square", "triangle"])
def test_projector_identity(k, poly):
    el = build_element(poly, k)
    dn, d0 = projector_discrepancies(el)
    assert dn <= 1e-11
    assert d0 <= 1e-11


@pytest.mark.parametrize("k", [1, 2])
def test_pi_nabla_equals_pi0_below_order3(k):
    poly = np.array([[0, 0], [2, 0], [2.5, 1.5], [1, 2.5], [-0.5, 1]], dtype=float)
    el = build_element(poly, k)
    assert np.allclose(el.pins, el.pi0s, atol=1e-12)


def test_pi_nabla_differs_from_pi0_at_order3():
    poly = np.array([[0, 0], [2, 0], [2.5, 1.5], [1, 2.5], [-0.5, 1]], dtype=float)
    el = build_element(poly, 3)
    assert not np.allclose(el.pins, el.pi0s, atol=1e-8)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_gradient_projection_of_constant_vanishes(k):
    el = build_element(SQUARE, k)
    const_dofs = el.D[:, 0]  # dof vector of the constant monomial
    for c in range(2):
        assert np.allclose(el.pigrad[c] @ const_dofs, 0.0, atol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_polynomial_reproduction(k):
    poly = np.array([[0, 0], [1.3, 0.1], [1.7, 1.2], [0.4, 1.6]], dtype=float)
    el = build_element(poly, k)
    nk = monomial_dim(k)
    for j in range(nk):
        coef = np.zeros(nk)
        coef[j] = 1.0
        dofs = el.D @ coef
        assert np.allclose(el.pins @ dofs, coef, atol=1e-10)
        assert np.allclose(el.pi0s @ dofs, coef, atol=1e-10)


def test_local_stiffness_triangle_matches_fem():
    el = build_element(TRIANGLE, 1)
    A = local_stiffness(el, np.eye(2))
    fem = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    # k=1 on a triangle: projector is exact interpolation, stabilization zero
    assert np.allclose(A, fem, atol=1e-13)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_stiffness_kernel_constants(k):
    el = build_element(SQUARE, k)
    A = local_stiffness(el)
    const_dofs = el.D[:, 0]
    assert np.abs(A @ const_dofs).max() <= 1e-12
    # strictly positive energy orthogonal to constants
    rng = np.random.default_rng(1)
    v = rng.standard_normal(el.ndof)
    v -= (v @ const_dofs) / (const_dofs @ const_dofs) * const_dofs
    assert v @ A @ v > 0


def test_stiffness_row_sums_zero_square_k1():
    el = build_element(SQUARE, 1)
    A = local_stiffness(el, np.eye(2))
    assert np.abs(A.sum(axis=1)).max() <= 1e-12


@pytest.mark.parametrize("k", [1, 2, 3])
def test_energy_of_linear_function_is_area(k):
    poly = np.array([[0, 0], [2, 0], [2.5, 1.5], [1, 2.5], [-0.5, 1]], dtype=float)
    el = build_element(poly, k)
    A = local_stiffness(el)
    nk = monomial_dim(k)
    coef = np.zeros(nk)
    coef[0] = el.centroid[0]
    coef[1] = el.diameter  # x = x_E + h * m_(1,0)
    dofs = el.D @ coef
    assert dofs @ A @ dofs == pytest.approx(el.area, rel=1e-12)


def test_stiffness_scales_linearly_with_k():
    el = build_element(SQUARE, 2)
    A1 = local_stiffness(el, np.eye(2))
    A2 = local_stiffness(el, 3.0 * np.eye(2))
    assert np.allclose(A2, 3.0 * A1, rtol=1e-13)


def test_stiffness_rejects_non_spd():
    el = build_element(SQUARE, 1)
    with pytest.raises(ValueError):
        local_stiffness(el, np.array([[1.0, 2.0], [2.0, 1.0]]))  # indefinite


def test_local_load_constant():
    el = build_element(SQUARE, 1)
    b = local_load(el, lambda p: np.ones(len(p)))
    # (1, Pi0_0 phi_j) = mean of phi_j times area; row sums to the area
    assert b.sum() == pytest.approx(el.area, rel=1e-12)


def test_dof_map_counts():
    m = grid_mesh(2, 2)
    for k, nmom in ((1, 0), (2, 1), (3, 3)):
        dm = build_dof_map(m, k)
        expected = m.n_vertices + m.n_edges * (k - 1) + m.n_cells * nmom
        assert dm.total == expected
        for ci, ids in enumerate(m.cells):
            assert len(dm.cell_dofs[ci]) == len(ids) * k + nmom


def test_shared_edge_dofs_identical():
    m = grid_mesh(2, 1)
    dm = build_dof_map(m, 3)
    # the shared vertical edge contributes the same two global slots to both cells
    shared = set(dm.cell_dofs[0]) & set(dm.cell_dofs[1])
    assert len(shared) == 2 + 2  # two shared vertices + two edge slots


def test_assemble_patch_empty_interior():
    m = build_mesh(
        [[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]]
    )
    ms = CATALOG["linear"]
    system, elements = assemble(m, 1, f=ms.f, dirichlet=ms.u)
    assert len(system.free_idx) == 0
    x = solve_spd(system)
    assert np.allclose(x, m.points[:, 0] + 2 * m.points[:, 1], atol=1e-14)


def test_assemble_requires_dirichlet():
    m = grid_mesh(2, 2)
    with pytest.raises(Exception, match="boundary data missing"):
        assemble(m, 1, f=lambda p: np.zeros(len(p)), dirichlet=None)


def test_assemble_symmetry_and_nnz():
    m = grid_mesh(3, 3, jitter=0.3, seed=5)
    ms = CATALOG["quadratic"]
    system, _ = assemble(m, 2, f=ms.f, dirichlet=ms.u)
    diff = (system.A - system.A.T)
    assert abs(diff).max() == 0.0
    assert system.nnz > 0
    Af = system.reduced_matrix()
    assert (abs(Af - Af.T)).max() == 0.0


@pytest.mark.parametrize("k", [1, 2, 3])
def test_patch_test_distorted_mesh(k):
    m = grid_mesh(4, 4, jitter=0.35, seed=11)
    ms = polynomial_of_degree(k)
    system, elements = assemble(m, k, f=ms.f, dirichlet=ms.u)
    x = solve_spd(system)
    l2, h1 = error_norms(m, k, elements, system.dofmap, x, ms.u, ms.grad)
    assert l2 <= 1e-10
    assert h1 <= 1e-10


@pytest.mark.parametrize("k", [1, 2, 3])
def test_patch_test_agglomerated_mesh(k):
    base = tri_grid_mesh(5, 5)
    res = agglomerate(base, AgglomerationConfig(lam=1.0))
    m = res.mesh
    assert m.n_cells < base.n_cells
    ms = polynomial_of_degree(k)
    system, elements = assemble(m, k, f=ms.f, dirichlet=ms.u)
    x = solve_spd(system)
    l2, h1 = error_norms(m, k, elements, system.dofmap, x, ms.u, ms.grad)
    assert l2 <= 1e-9
    assert h1 <= 1e-9


def _solve_sin(n, k):
    m = grid_mesh(n, n)
    ms = CATALOG["sinsin"]
    system, elements = assemble(m, k, f=ms.f, dirichlet=ms.u)
    x = solve_spd(system)
    return error_norms(m, k, elements, system.dofmap, x, ms.u, ms.grad)


def test_convergence_rates_k1():
    errs = [_solve_sin(n, 1) for n in (8, 16, 32)]
    for (l2a, h1a), (l2b, h1b) in zip(errs, errs[1:]):
        assert l2a / l2b == pytest.approx(4.0, rel=0.15)
        assert h1a / h1b == pytest.approx(2.0, rel=0.15)


def test_convergence_rates_k2():
    errs = [_solve_sin(n, 2) for n in (4, 8, 16)]
    for (l2a, h1a), (l2b, h1b) in zip(errs, errs[1:]):
        assert l2a / l2b == pytest.approx(8.0, rel=0.2)
        assert h1a / h1b == pytest.approx(4.0, rel=0.15)


def test_solve_spd_one_by_one():
    A = sps.csr_matrix(np.array([[2.0]]))
    system = vem.SparseSpdSystem(
        A, np.array([4.0]), np.array([], dtype=np.int64), np.array([]),
        np.array([0], dtype=np.int64), None,
    )
    assert solve_spd(system)[0] == pytest.approx(2.0)


def test_solve_residual_contract():
    m = grid_mesh(6, 6)
    ms = CATALOG["sinsin"]
    system, _ = assemble(m, 1, f=ms.f, dirichlet=ms.u)
    x = solve_spd(system)
    free = system.free_idx
    bI = system.b[free] - system.A[free][:, system.dirichlet_idx] @ system.dirichlet_val
    res = np.linalg.norm(system.reduced_matrix() @ x[free] - bI)
    assert res <= 1e-12 * np.linalg.norm(bI)


def test_condition_identity_and_diag():
    assert condition_estimate(sps.eye(5, format="csc")).cond == pytest.approx(1.0, rel=1e-4)
    D = sps.diags([1.0, 10.0, 100.0]).tocsc()
    est = condition_estimate(D)
    assert est.cond == pytest.approx(100.0, rel=0.01)


def test_condition_tridiagonal_laplacian():
    n = 10
    A = sps.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsc()
    eigs = 2.0 - 2.0 * np.cos(np.arange(1, n + 1) * np.pi / (n + 1))
    exact = eigs.max() / eigs.min()
    est = condition_estimate(A)
    assert exact == pytest.approx(48.37, abs=0.01)
    assert est.cond == pytest.approx(exact, rel=0.01)


def test_projection_discrepancy_square_vs_sliver():
    square = build_element(SQUARE, 1)
    assert max(projector_discrepancies(square)) <= 1e-12
    sliver = build_element(
        np.array([[0, 0], [1000, 0], [1000, 1], [0, 1]], dtype=float), 3
    )
    nice = build_element(SQUARE, 3)
    assert projector_discrepancies(sliver)[0] > projector_discrepancies(nice)[0]
