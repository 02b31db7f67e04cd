"""Row-wise Raviart-Thomas tensor space and discontinuous vector P_k space.

Local RT_k bases are built cell by cell as the dual basis of the degrees of
freedom: a prime basis of RT_k(K) in centred, scaled coordinates is
evaluated against the DOF functionals and the resulting matrix inverted.

Degrees of freedom of one scalar RT_k row:
  * edge moments  int_e (phi . n_e) q_m ds, with n_e the global edge normal
    and q_0 = 1, q_1 = 2s - 1 where s runs from the lower to the higher
    vertex index of the edge (k = 1 only);
  * interior moments  int_K phi . e_d dx,  d = x, y  (k = 1 only).

Field callables take points shaped (..., 2) and return (..., 2) for vector
fields or (..., 2, 2) for tensor fields (row index first).
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh
from .quadrature import gauss_line, physical_points, physical_weights, rule_for_degree


def _rt_prime(xi: np.ndarray, k: int):
    """Prime RT_k basis at scaled coordinates ``xi`` (..., 2).

    Returns values (..., m, 2) and divergences w.r.t. ``xi`` (..., m).
    """
    x, y = xi[..., 0], xi[..., 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    if k == 0:
        vals = [(one, zero), (zero, one), (x, y)]
        divs = [zero, zero, 2 * one]
    elif k == 1:
        vals = [
            (one, zero), (x, zero), (y, zero),
            (zero, one), (zero, x), (zero, y),
            (x * x, x * y), (x * y, y * y),
        ]
        divs = [zero, one, zero, zero, zero, one, 3 * x, 3 * y]
    else:
        raise ValueError(f"order k={k} not supported (0 or 1)")
    values = np.stack([np.stack(v, axis=-1) for v in vals], axis=-2)
    return values, np.stack(divs, axis=-1)


def _pk_prime(xi: np.ndarray, k: int) -> np.ndarray:
    x = xi[..., 0]
    if k == 0:
        return np.ones_like(x)[..., None]
    return np.stack([np.ones_like(x), x, xi[..., 1]], axis=-1)


def _edge_weight_fn(k: int, s: np.ndarray) -> np.ndarray:
    """Edge test polynomials q_m(s), shape (k+1, ns)."""
    if k == 0:
        return np.ones((1, len(s)))
    return np.stack([np.ones_like(s), 2.0 * s - 1.0])


class _CellScaling:
    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.center = mesh.centroids
        self.scale = mesh.diameters

    def scaled(self, cells: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Map physical points of ``cells`` to centred, diameter-scaled coords.

        ``cells`` broadcasts against the leading axes of ``x``.
        """
        c = self.center[cells]
        s = self.scale[cells]
        while c.ndim < x.ndim:
            c, s = c[:, None], s[:, None]
        return (x - c) / s[..., None]


class StressSpace(_CellScaling):
    """Tensor space whose two rows are independent scalar RT_k fields.

    Global ordering is row-major: scalar RT index ``j`` of row ``r`` is
    ``r * n_rt + j``.
    """

    def __init__(self, mesh: Mesh, k: int):
        if k not in (0, 1):
            raise ValueError(f"order k={k} not supported (0 or 1)")
        super().__init__(mesh)
        self.k = k
        self.n_edge_dofs = k + 1
        self.n_interior = 2 * k
        self.n_local = 3 * self.n_edge_dofs + self.n_interior
        self.n_rt = mesh.n_edges * self.n_edge_dofs + mesh.n_cells * self.n_interior
        self.n_dofs = 2 * self.n_rt

        m = self.n_edge_dofs
        edge_part = mesh.cell_edges[:, :, None] * m + np.arange(m)[None, None, :]
        parts = [edge_part.reshape(mesh.n_cells, -1)]
        if self.n_interior:
            base = mesh.n_edges * m
            parts.append(base + 2 * np.arange(mesh.n_cells)[:, None] + np.arange(2)[None, :])
        self.cell_dofs = np.hstack(parts)
        self.cell_dof_map = np.concatenate([self.cell_dofs, self.cell_dofs + self.n_rt], axis=1)
        self._coeffs = np.linalg.inv(self._dof_matrix())

    def _dof_matrix(self) -> np.ndarray:
        """D[c, i, l] = DOF_i applied to prime function l on cell c."""
        mesh, k = self.mesh, self.k
        nc = mesh.n_cells
        D = np.zeros((nc, self.n_local, self.n_local))
        s, ws = gauss_line(2 * k + 2)
        q = _edge_weight_fn(k, s)
        normals = mesh.edge_normals
        lengths = mesh.edge_lengths
        cells = np.arange(nc)
        for i in range(3):
            e = mesh.cell_edges[:, i]
            a = mesh.vertices[mesh.edges[e, 0]]
            b = mesh.vertices[mesh.edges[e, 1]]
            x = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
            vals, _ = _rt_prime(self.scaled(cells, x), k)  # (nc, ns, m, 2)
            flux = np.einsum("csld,cd->csl", vals, normals[e])
            for mm in range(self.n_edge_dofs):
                D[:, i * self.n_edge_dofs + mm, :] = lengths[e][:, None] * np.einsum(
                    "s,csl->cl", ws * q[mm], flux
                )
        if self.n_interior:
            rule = rule_for_degree(2 * k + 2)
            x = physical_points(mesh.vertices[mesh.cells], rule)
            w = physical_weights(mesh.areas, rule)
            vals, _ = _rt_prime(self.scaled(cells, x), k)
            D[:, 3 * self.n_edge_dofs:, :] = np.einsum("cq,cqld->cdl", w, vals)
        return D

    # -- evaluation -----------------------------------------------------

    def eval_cells(self, cells: np.ndarray, x: np.ndarray):
        """Local scalar RT basis at physical points.

        ``cells`` has shape (n,), ``x`` shape (n, nq, 2).  Returns values
        (n, nq, m, 2) and divergences (n, nq, m).
        """
        cells = np.asarray(cells)
        vals, divs = _rt_prime(self.scaled(cells, x), self.k)
        C = self._coeffs[cells]
        inv_s = 1.0 / self.scale[cells]
        phi = np.einsum("nqld,nlj->nqjd", vals, C)
        dphi = np.einsum("nql,nlj->nqj", divs, C) * inv_s[:, None, None]
        return phi, dphi

    def eval_rule(self, rule):
        """Basis on every cell at the points of a triangle rule."""
        x = physical_points(self.mesh.vertices[self.mesh.cells], rule)
        phi, dphi = self.eval_cells(np.arange(self.mesh.n_cells), x)
        return x, phi, dphi

    def evaluate(self, coeffs: np.ndarray, cells: np.ndarray, x: np.ndarray):
        """Tensor field and row divergence at points ``x`` (n, nq, 2) of ``cells``.

        Returns sigma (n, nq, 2, 2) and div (n, nq, 2).
        """
        phi, dphi = self.eval_cells(cells, x)
        rows = coeffs[self.cell_dofs[cells]], coeffs[self.cell_dofs[cells] + self.n_rt]
        sigma = np.stack([np.einsum("nqjd,nj->nqd", phi, r) for r in rows], axis=-2)
        div = np.stack([np.einsum("nqj,nj->nq", dphi, r) for r in rows], axis=-1)
        return sigma, div

    # -- interpolation --------------------------------------------------

    def interpolate(self, field) -> np.ndarray:
        """Canonical RT moments of a tensor field, row by row."""
        mesh, k = self.mesh, self.k
        out = np.zeros(self.n_dofs)
        s, ws = gauss_line(2 * k + 2)
        q = _edge_weight_fn(k, s)
        a = mesh.vertices[mesh.edges[:, 0]]
        b = mesh.vertices[mesh.edges[:, 1]]
        x = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        vals = np.asarray(field(x), dtype=float)  # (ne, ns, 2, 2)
        flux = np.einsum("esrd,ed->esr", vals, mesh.edge_normals)
        m = self.n_edge_dofs
        for r in range(2):
            for mm in range(m):
                out[r * self.n_rt + mm: r * self.n_rt + mesh.n_edges * m: m] = (
                    mesh.edge_lengths * np.einsum("s,es->e", ws * q[mm], flux[:, :, r])
                )
        if self.n_interior:
            rule = rule_for_degree(2 * k + 2)
            xc = physical_points(mesh.vertices[mesh.cells], rule)
            w = physical_weights(mesh.areas, rule)
            v = np.asarray(field(xc), dtype=float)  # (nc, nq, 2, 2)
            mom = np.einsum("cq,cqrd->crd", w, v)
            base = mesh.n_edges * m
            for r in range(2):
                out[r * self.n_rt + base: (r + 1) * self.n_rt] = mom[:, r, :].ravel()
        return out


class VelocitySpace(_CellScaling):
    """Discontinuous [P_k]^2; index ``cell * 2 * nP + comp * nP + a``."""

    def __init__(self, mesh: Mesh, k: int):
        if k not in (0, 1):
            raise ValueError(f"order k={k} not supported (0 or 1)")
        super().__init__(mesh)
        self.k = k
        self.n_p = 1 if k == 0 else 3
        self.n_local = 2 * self.n_p
        self.n_dofs = mesh.n_cells * self.n_local
        self.cell_dof_map = np.arange(self.n_dofs).reshape(mesh.n_cells, self.n_local)

    def eval_cells(self, cells: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Scalar P_k basis at points (n, nq, 2) -> (n, nq, nP)."""
        return _pk_prime(self.scaled(np.asarray(cells), x), self.k)

    def evaluate(self, coeffs: np.ndarray, cells: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Velocity at points (n, nq, 2) of ``cells`` -> (n, nq, 2)."""
        psi = self.eval_cells(cells, x)
        c = coeffs[self.cell_dof_map[cells]].reshape(len(cells), 2, self.n_p)
        return np.einsum("nqa,nca->nqc", psi, c)

    def local_mass(self, degree: int = None) -> np.ndarray:
        """Scalar mass blocks (nc, nP, nP)."""
        rule = rule_for_degree(degree or 2 * self.k + 2)
        x = physical_points(self.mesh.vertices[self.mesh.cells], rule)
        w = physical_weights(self.mesh.areas, rule)
        psi = self.eval_cells(np.arange(self.mesh.n_cells), x)
        return np.einsum("cq,cqa,cqb->cab", w, psi, psi)

    def project(self, field, degree: int = 6) -> np.ndarray:
        """Cell-wise L2 projection of a vector field."""
        rule = rule_for_degree(degree)
        x = physical_points(self.mesh.vertices[self.mesh.cells], rule)
        w = physical_weights(self.mesh.areas, rule)
        psi = self.eval_cells(np.arange(self.mesh.n_cells), x)
        f = np.asarray(field(x), dtype=float)  # (nc, nq, 2)
        rhs = np.einsum("cq,cqa,cqd->cda", w, psi, f)
        M = np.einsum("cq,cqa,cqb->cab", w, psi, psi)
        sol = np.linalg.solve(M[:, None], rhs[..., None])[..., 0]
        return sol.reshape(-1)


def rt_basis_eval(space: StressSpace, cell: int, point):
    """Tensor basis of one cell at a barycentric point.

    Returns values (2m, 2, 2) and row divergences (2m, 2) ordered as in
    ``space.cell_dof_map`` (all row-0 functions, then row-1).
    """
    mesh = space.mesh
    if not 0 <= cell < mesh.n_cells:
        raise ValueError(f"cell index {cell} out of range")
    lam = np.asarray(point, dtype=float)
    x = lam @ mesh.vertices[mesh.cells[cell]]
    phi, dphi = space.eval_cells(np.array([cell]), x[None, None, :])
    phi, dphi = phi[0, 0], dphi[0, 0]
    m = space.n_local
    values = np.zeros((2 * m, 2, 2))
    divs = np.zeros((2 * m, 2))
    for r in range(2):
        values[r * m:(r + 1) * m, r, :] = phi
        divs[r * m:(r + 1) * m, r] = dphi
    return values, divs


def interpolate_stress(space: StressSpace, field) -> np.ndarray:
    return space.interpolate(field)


def project_velocity(space: VelocitySpace, field) -> np.ndarray:
    return space.project(field)
