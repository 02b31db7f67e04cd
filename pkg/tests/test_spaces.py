import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bfmixed.mesh import from_cells, generate_structured
from bfmixed.quadrature import gauss_line, physical_points, physical_weights, rule_for_degree
from bfmixed.spaces import StressSpace, VelocitySpace, interpolate_stress, project_velocity, rt_basis_eval

from oracles import random_poly_tensor

MESH = generate_structured(4, 3, ((0.0, 1.5), (-0.5, 0.5)))


def const_tensor(T):
    T = np.asarray(T, dtype=float)
    return lambda x: np.broadcast_to(T, x.shape[:-1] + (2, 2)).copy()


def cell_rule(mesh, degree=6):
    rule = rule_for_degree(degree)
    return physical_points(mesh.vertices[mesh.cells], rule), physical_weights(mesh.areas, rule)


def edge_points(mesh, edges, s):
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    return a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]


@pytest.mark.parametrize("k", [0, 1])
def test_dimensions(k):
    X, M = StressSpace(MESH, k), VelocitySpace(MESH, k)
    n_rt = MESH.n_edges if k == 0 else 2 * MESH.n_edges + 2 * MESH.n_cells
    assert X.n_rt == n_rt and X.n_dofs == 2 * n_rt
    assert X.n_local == (3 if k == 0 else 8)
    assert M.n_p == (1 if k == 0 else 3)
    assert M.n_dofs == 2 * MESH.n_cells * M.n_p
    assert X.cell_dof_map.shape == (MESH.n_cells, 2 * X.n_local)


@pytest.mark.parametrize("k", [0, 1])
def test_unisolvence_gram_identity(k):
    X = StressSpace(MESH, k)
    G = np.einsum("cij,cjl->cil", X._dof_matrix(), X._coeffs)
    np.testing.assert_allclose(G, np.broadcast_to(np.eye(X.n_local), G.shape), atol=1e-12)


@pytest.mark.parametrize("k", [0, 1])
def test_dofs_of_physical_basis(k):
    """Apply the DOF functionals directly to the evaluated basis: identity."""
    X = StressSpace(MESH, k)
    s, ws = gauss_line(4)
    q = [np.ones_like(s), 2 * s - 1][: k + 1]
    for c in range(MESH.n_cells):
        D = np.zeros((X.n_local, X.n_local))
        for i, e in enumerate(MESH.cell_edges[c]):
            x = edge_points(MESH, np.array([e]), s)
            phi, _ = X.eval_cells(np.array([c]), x)
            flux = phi[0] @ MESH.edge_normals[e]  # (ns, m)
            for m in range(k + 1):
                D[i * (k + 1) + m] = MESH.edge_lengths[e] * (ws * q[m]) @ flux
        if k == 1:
            rule = rule_for_degree(4)
            x = physical_points(MESH.vertices[MESH.cells[[c]]], rule)
            w = physical_weights(MESH.areas[[c]], rule)
            phi, _ = X.eval_cells(np.array([c]), x)
            D[6:] = np.einsum("q,qjd->dj", w[0], phi[0])
        np.testing.assert_allclose(D, np.eye(X.n_local), atol=1e-12)


def test_rt0_unit_flux_divergence():
    X = StressSpace(MESH, 0)
    x, w = cell_rule(MESH, 2)
    _, dphi = X.eval_cells(np.arange(MESH.n_cells), x)
    integ = np.einsum("cq,cqj->cj", w, dphi)
    np.testing.assert_allclose(integ, MESH.cell_edge_signs, atol=1e-13)


def test_rt0_vanishes_at_opposite_vertex():
    mesh = from_cells([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    X = StressSpace(mesh, 0)
    vals, divs = rt_basis_eval(X, 0, [1.0, 0.0, 0.0])  # vertex (0, 0)
    # local edge 0 (hypotenuse) is opposite vertex 0; row 0 and row 1 copies
    np.testing.assert_allclose(vals[0], 0.0, atol=1e-14)
    np.testing.assert_allclose(vals[3], 0.0, atol=1e-14)
    assert vals.shape == (6, 2, 2) and divs.shape == (6, 2)
    # normal trace on its edge is 1/|e| (global normal points outward here)
    vals_mid, _ = rt_basis_eval(X, 0, [0.0, 0.5, 0.5])
    n = np.array([1.0, 1.0]) / np.sqrt(2)
    assert vals_mid[0, 0] @ n == pytest.approx(1 / np.sqrt(2), rel=1e-13)
    with pytest.raises(ValueError):
        rt_basis_eval(X, 1, [1 / 3, 1 / 3, 1 / 3])


def test_rt1_divergence_is_linear():
    X = StressSpace(MESH, 1)
    rng = np.random.default_rng(3)
    for c in range(0, MESH.n_cells, 5):
        lam = rng.dirichlet(np.ones(3), size=7)
        x = (lam @ MESH.vertices[MESH.cells[c]])[None]
        phi, dphi = X.eval_cells(np.array([c]), x)
        assert phi.shape[2] == 8
        A = np.column_stack([np.ones(7), x[0]])
        coef, *_ = np.linalg.lstsq(A, dphi[0], rcond=None)
        np.testing.assert_allclose(A @ coef, dphi[0], atol=1e-10 * np.abs(dphi).max())


@pytest.mark.parametrize("k", [0, 1])
def test_interpolate_identity(k):
    X = StressSpace(MESH, k)
    coef = interpolate_stress(X, const_tensor(np.eye(2)))
    x, _ = cell_rule(MESH)
    s, d = X.evaluate(coef, np.arange(MESH.n_cells), x)
    np.testing.assert_allclose(s, np.broadcast_to(np.eye(2), s.shape), atol=1e-12)
    np.testing.assert_allclose(d, 0.0, atol=1e-10)


def test_interpolate_linear_k1():
    X = StressSpace(MESH, 1)
    field = lambda x: np.stack([np.stack([x[..., 0], x[..., 1]], -1),
                                np.stack([2 * x[..., 1] - 1, 3 * x[..., 0]], -1)], -2)
    x, _ = cell_rule(MESH)
    s, _ = X.evaluate(X.interpolate(field), np.arange(MESH.n_cells), x)
    np.testing.assert_allclose(s, field(x), atol=1e-12)


def test_commuting_quadratic_k0():
    X = StressSpace(MESH, 0)
    field = lambda x: np.stack([np.stack([x[..., 0] ** 2, 0 * x[..., 0]], -1),
                                np.stack([0 * x[..., 0], x[..., 1] ** 2], -1)], -2)
    x, w = cell_rule(MESH)
    _, d = X.evaluate(X.interpolate(field), np.arange(MESH.n_cells), x)
    mean = np.einsum("cq,cqd->cd", w, np.stack([2 * x[..., 0], 2 * x[..., 1]], -1)) / MESH.areas[:, None]
    np.testing.assert_allclose(d, np.broadcast_to(mean[:, None, :], d.shape), atol=1e-12)


def commuting_defect(mesh, k, field, div):
    X, M = StressSpace(mesh, k), VelocitySpace(mesh, k)
    x, w = cell_rule(mesh)
    cells = np.arange(mesh.n_cells)
    _, d_int = X.evaluate(X.interpolate(field), cells, x)
    d_proj = M.evaluate(M.project(div), cells, x)
    return np.sqrt((w * ((d_int - d_proj) ** 2).sum(-1)).sum())


@pytest.mark.parametrize("k", [0, 1])
def test_commuting_diagram_random(k, rng):
    mesh = generate_structured(8, 8)
    for _ in range(10):
        field, div = random_poly_tensor(rng, 3)
        assert commuting_defect(mesh, k, field, div) <= 1e-11


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0, 1]), st.integers(0, 3))
def test_commuting_diagram_property(seed, k, degree):
    field, div = random_poly_tensor(np.random.default_rng(seed), degree)
    assert commuting_defect(MESH, k, field, div) <= 1e-11


@pytest.mark.parametrize("k", [0, 1])
def test_hdiv_conformity(k, rng):
    X = StressSpace(MESH, k)
    coef = rng.standard_normal(X.n_dofs)
    ec = MESH.edge_cells
    interior = np.array([e for e in range(MESH.n_edges) if e not in MESH.boundary_tags])
    s, _ = gauss_line(4)
    x = edge_points(MESH, interior, s)
    n = MESH.edge_normals[interior]
    s0, _ = X.evaluate(coef, ec[interior, 0], x)
    s1, _ = X.evaluate(coef, ec[interior, 1], x)
    t0 = np.einsum("eqrd,ed->eqr", s0, n)
    t1 = np.einsum("eqrd,ed->eqr", s1, n)
    np.testing.assert_allclose(t0, t1, atol=1e-12 * max(1.0, np.abs(t0).max()))


def test_project_constant_and_linear():
    M0 = VelocitySpace(MESH, 0)
    u = project_velocity(M0, lambda x: np.broadcast_to([1.0, 2.0], x.shape).copy())
    np.testing.assert_allclose(u.reshape(-1, 2), np.broadcast_to([1.0, 2.0], (MESH.n_cells, 2)), atol=1e-14)
    u = M0.project(lambda x: np.stack([x[..., 0], 0 * x[..., 0]], -1))
    np.testing.assert_allclose(u.reshape(-1, 2), np.column_stack([MESH.centroids[:, 0], np.zeros(MESH.n_cells)]),
                               atol=1e-14)


def test_project_orthogonality_k1():
    M = VelocitySpace(MESH, 1)
    f = lambda x: np.stack([x[..., 0] ** 2, x[..., 1] ** 2], -1)
    u = M.project(f)
    x, w = cell_rule(MESH)
    cells = np.arange(MESH.n_cells)
    res = f(x) - M.evaluate(u, cells, x)
    psi = M.eval_cells(cells, x)
    mom = np.einsum("cq,cqa,cqd->cda", w, psi, res)
    assert np.abs(mom).max() <= 1e-12


def test_velocity_mass_block_diagonal():
    M = VelocitySpace(MESH, 1)
    blocks = M.local_mass()
    assert blocks.shape == (MESH.n_cells, 3, 3)
    assert (np.linalg.eigvalsh(blocks) > 0).all()


def test_invalid_order():
    with pytest.raises(ValueError):
        StressSpace(MESH, 2)
    with pytest.raises(ValueError):
        VelocitySpace(MESH, -1)
