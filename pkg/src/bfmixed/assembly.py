"""Discrete operators of the pseudostress-velocity Brinkman-Forchheimer system.

Matrix blocks (``X`` = stress space, ``M`` = velocity space):

    A   (nX, nX)  (1/nu) (sigma^d, tau^d)
    B   (nM, nX)  (div tau, v)
    E   (nM, nM)  (u, v)
    t   (nX,)     int tr(tau)
    C(u)          alpha (u, v) + F (|u|^{p-2} u, v), with Jacobian DC(u)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .quadrature import gauss_line, physical_points, physical_weights, rule_for_degree
from .spaces import StressSpace, VelocitySpace

NONLINEAR_DEGREE = 6
DYADIC_CUTOFF = 1e-14

VectorField = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    """Physical and numerical data of one Brinkman-Forchheimer problem.

    ``alpha`` and ``forch`` are either scalars or mappings from region label
    to value; in the latter case ``regions`` resolves cell centroids
    (n, 2) to labels.  Source and boundary callables take ``(x, t)`` with
    ``x`` shaped (..., 2) and return (..., 2).
    """

    nu: float = 1.0
    p: float = 3.0
    alpha: object = 1.0
    forch: object = 10.0
    source: Optional[VectorField] = None
    dirichlet_data: dict = field(default_factory=dict)
    stress_zero_tags: frozenset = frozenset()
    u0: Optional[Callable] = None
    laplacian_u0: Optional[Callable] = None
    dt: float = 1e-3
    T: float = 0.01
    k: int = 0
    regions: Optional[Callable] = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not 3 <= self.p <= 4:
            raise ValueError(f"Forchheimer exponent p must lie in [3, 4], got {self.p}")
        for name in ("alpha", "forch"):
            val = getattr(self, name)
            vals = val.values() if isinstance(val, dict) else [val]
            if any(not v > 0 for v in vals):
                raise ValueError(f"{name} must be strictly positive, got {val}")
            if isinstance(val, dict) and self.regions is None:
                raise ValueError(f"region-wise {name} requires a region map")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        self.n_steps  # validates T = N dt
        if self.k not in (0, 1):
            raise ValueError(f"order k must be 0 or 1, got {self.k}")
        object.__setattr__(self, "stress_zero_tags", frozenset(self.stress_zero_tags))

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def n_steps(self) -> int:
        n = int(round(self.T / self.dt))
        if n < 1 or abs(n * self.dt - self.T) > 1e-9 * max(self.T, 1.0):
            raise ValueError(f"T={self.T} is not a positive integer multiple of dt={self.dt}")
        return n

    def cell_coefficients(self, mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell Darcy and Forchheimer coefficients."""
        labels = None
        if self.regions is not None:
            labels = np.asarray(self.regions(mesh.centroids))
        out = []
        for val in (self.alpha, self.forch):
            if isinstance(val, dict):
                out.append(np.array([val[lab] for lab in labels], dtype=float))
            else:
                out.append(np.full(mesh.n_cells, float(val)))
        return out[0], out[1]


class Discretization:
    """Spaces, constant blocks and cached quadrature data for one mesh."""

    def __init__(self, spec: ProblemSpec, mesh: Mesh):
        self.spec = spec
        self.mesh = mesh
        self.X = StressSpace(mesh, spec.k)
        self.M = VelocitySpace(mesh, spec.k)
        self.alpha, self.forch = spec.cell_coefficients(mesh)

        lin = rule_for_degree(2 * spec.k + 2)
        self.x_lin, self.phi, self.dphi = self.X.eval_rule(lin)
        self.w_lin = physical_weights(mesh.areas, lin)
        self.psi_lin = self.M.eval_cells(np.arange(mesh.n_cells), self.x_lin)

        nl = rule_for_degree(NONLINEAR_DEGREE)
        self.x_nl = physical_points(mesh.vertices[mesh.cells], nl)
        self.w_nl = physical_weights(mesh.areas, nl)
        self.psi_nl = self.M.eval_cells(np.arange(mesh.n_cells), self.x_nl)

        nc, nloc = mesh.n_cells, self.M.n_local
        dofs = self.M.cell_dof_map
        self._mm_rows = np.repeat(dofs, nloc, axis=1).ravel()
        self._mm_cols = np.tile(dofs, (1, nloc)).ravel()
        assert self._mm_rows.size == nc * nloc * nloc

        self.A = assemble_A(spec, self.X, self)
        self.B = assemble_B(self.X, self.M, self)
        self.E = assemble_E(self.M, self)
        self.trace = assemble_trace_constraint(self.X, self)

    def velocity_blocks_to_sparse(self, blocks: np.ndarray) -> sp.csr_matrix:
        """Scatter cell blocks (nc, 2nP, 2nP) into an (nM, nM) matrix."""
        n = self.M.n_dofs
        return sp.csr_matrix((blocks.ravel(), (self._mm_rows, self._mm_cols)), shape=(n, n))

    def velocity_at_nl(self, u: np.ndarray) -> np.ndarray:
        """u_h at the nonlinear quadrature points, (nc, nq, 2)."""
        c = u.reshape(self.mesh.n_cells, 2, self.M.n_p)
        return np.einsum("cqa,cda->cqd", self.psi_nl, c)


def assemble_A(spec: ProblemSpec, Xh: StressSpace, disc: Discretization = None) -> sp.csr_matrix:
    """Deviatoric mass matrix (1/nu)(sigma^d, tau^d)."""
    if disc is not None:
        w, phi = disc.w_lin, disc.phi
    else:
        rule = rule_for_degree(2 * Xh.k + 2)
        _, phi, _ = Xh.eval_rule(rule)
        w = physical_weights(Xh.mesh.areas, rule)
    m = Xh.n_local
    nc = Xh.mesh.n_cells
    full = np.einsum("cq,cqid,cqjd->cij", w, phi, phi)
    tr = np.einsum("cq,cqir,cqjs->cirjs", w, phi, phi)  # phi_i[r] phi_j[s]
    blocks = np.zeros((nc, 2, m, 2, m))
    for r in range(2):
        blocks[:, r, :, r, :] += full
        for s in range(2):
            blocks[:, r, :, s, :] -= 0.5 * tr[:, :, r, :, s]
    blocks /= spec.nu
    dofs = Xh.cell_dof_map  # (nc, 2m), row-major local order
    rows = np.repeat(dofs, 2 * m, axis=1).ravel()
    cols = np.tile(dofs, (1, 2 * m)).ravel()
    n = Xh.n_dofs
    return sp.csr_matrix((blocks.reshape(nc, -1).ravel(), (rows, cols)), shape=(n, n))


def assemble_B(Xh: StressSpace, Mh: VelocitySpace, disc: Discretization = None) -> sp.csr_matrix:
    """Divergence coupling (div tau_j, v_i); rows index M_h, columns X_h."""
    if disc is not None:
        w, dphi, psi = disc.w_lin, disc.dphi, disc.psi_lin
    else:
        rule = rule_for_degree(2 * Xh.k + 2)
        x, _, dphi = Xh.eval_rule(rule)
        w = physical_weights(Xh.mesh.areas, rule)
        psi = Mh.eval_cells(np.arange(Xh.mesh.n_cells), x)
    nc, m, npk = Xh.mesh.n_cells, Xh.n_local, Mh.n_p
    loc = np.einsum("cq,cqa,cqj->caj", w, psi, dphi)  # (nc, nP, m)
    rows, cols, vals = [], [], []
    for r in range(2):
        vdofs = Mh.cell_dof_map[:, r * npk:(r + 1) * npk]  # (nc, nP)
        sdofs = Xh.cell_dofs + r * Xh.n_rt  # (nc, m)
        rows.append(np.repeat(vdofs, m, axis=1).ravel())
        cols.append(np.tile(sdofs, (1, npk)).ravel())
        vals.append(loc.ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(Mh.n_dofs, Xh.n_dofs),
    )


def _velocity_blocks(Mh: VelocitySpace, w: np.ndarray, psi: np.ndarray, tensor: np.ndarray) -> np.ndarray:
    """Cell blocks of int (K(x) u) . v for a pointwise 2x2 tensor K, (nc, nq, 2, 2)."""
    nc, npk = Mh.mesh.n_cells, Mh.n_p
    blk = np.einsum("cq,cqa,cqb,cqde->cdaeb", w, psi, psi, tensor)
    return blk.reshape(nc, 2 * npk, 2 * npk)


def assemble_E(Mh: VelocitySpace, disc: Discretization = None) -> sp.csr_matrix:
    """Block-diagonal velocity mass matrix."""
    mass = Mh.local_mass()  # (nc, nP, nP)
    nc, npk = Mh.mesh.n_cells, Mh.n_p
    blocks = np.zeros((nc, 2, npk, 2, npk))
    blocks[:, 0, :, 0, :] = mass
    blocks[:, 1, :, 1, :] = mass
    dofs = Mh.cell_dof_map
    rows = np.repeat(dofs, 2 * npk, axis=1).ravel()
    cols = np.tile(dofs, (1, 2 * npk)).ravel()
    return sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=(Mh.n_dofs, Mh.n_dofs))


def assemble_trace_constraint(Xh: StressSpace, disc: Discretization = None) -> np.ndarray:
    """Vector t with t . sigma = int_Omega tr(sigma_h)."""
    if disc is not None:
        w, phi = disc.w_lin, disc.phi
    else:
        rule = rule_for_degree(2 * Xh.k + 2)
        _, phi, _ = Xh.eval_rule(rule)
        w = physical_weights(Xh.mesh.areas, rule)
    loc = np.einsum("cq,cqjr->crj", w, phi)  # component r of phi_j
    t = np.zeros(Xh.n_dofs)
    for r in range(2):
        np.add.at(t, Xh.cell_dofs + r * Xh.n_rt, loc[:, r, :])
    return t


def _nl_data(spec, Mh, disc):
    if disc is None:
        disc = Discretization(spec, Mh.mesh)
    return disc


def forchheimer_residual(spec: ProblemSpec, Mh: VelocitySpace, u: np.ndarray,
                         disc: Discretization = None) -> np.ndarray:
    """Vector of alpha (u_h, v_i) + F (|u_h|^{p-2} u_h, v_i)."""
    disc = _nl_data(spec, Mh, disc)
    uq = disc.velocity_at_nl(u)
    speed = np.linalg.norm(uq, axis=-1)
    g = disc.alpha[:, None, None] * uq + disc.forch[:, None, None] * speed[..., None] ** (spec.p - 2) * uq
    r = np.einsum("cq,cqa,cqd->cda", disc.w_nl, disc.psi_nl, g)
    return r.reshape(-1)


def forchheimer_pointwise_jacobian(p: float, alpha, forch, uq: np.ndarray) -> np.ndarray:
    """alpha I + F (|u|^{p-2} I + (p-2)|u|^{p-4} u u^T) at each point."""
    speed = np.linalg.norm(uq, axis=-1)
    alpha = np.asarray(alpha)[:, None] if np.ndim(alpha) else alpha
    forch = np.asarray(forch)[:, None] if np.ndim(forch) else forch
    safe = np.where(speed < DYADIC_CUTOFF, 1.0, speed)
    dyad_coef = np.where(speed < DYADIC_CUTOFF, 0.0, (p - 2.0) * safe ** (p - 4.0))
    eye = np.eye(2)
    iso = alpha + forch * speed ** (p - 2.0)
    return (iso[..., None, None] * eye
            + (forch * dyad_coef)[..., None, None] * uq[..., :, None] * uq[..., None, :])


def forchheimer_jacobian(spec: ProblemSpec, Mh: VelocitySpace, u: np.ndarray,
                         disc: Discretization = None) -> sp.csr_matrix:
    """Jacobian of ``forchheimer_residual`` with respect to the coefficients."""
    disc = _nl_data(spec, Mh, disc)
    return disc.velocity_blocks_to_sparse(forchheimer_blocks(disc, u))


def forchheimer_blocks(disc: Discretization, u: np.ndarray) -> np.ndarray:
    uq = disc.velocity_at_nl(u)
    K = forchheimer_pointwise_jacobian(disc.spec.p, disc.alpha, disc.forch, uq)
    return _velocity_blocks(disc.M, disc.w_nl, disc.psi_nl, K)


def assemble_load(spec: ProblemSpec, Mh: VelocitySpace, t: float,
                  disc: Discretization = None) -> np.ndarray:
    """G_i = int f(., t) . v_i by degree-6 quadrature."""
    if spec.source is None:
        return np.zeros(Mh.n_dofs)
    disc = _nl_data(spec, Mh, disc)
    f = np.asarray(spec.source(disc.x_nl, t), dtype=float)
    return velocity_moments(disc, f)


def velocity_moments(disc: Discretization, values: np.ndarray) -> np.ndarray:
    """int g . v_i for g sampled at the nonlinear quadrature points."""
    return np.einsum("cq,cqa,cqd->cda", disc.w_nl, disc.psi_nl, values).reshape(-1)


def assemble_dirichlet_rhs(spec: ProblemSpec, Xh: StressSpace, t: float) -> np.ndarray:
    """d_j = int_{Gamma_D} (tau_j n) . g ds over tagged boundary edges."""
    mesh = Xh.mesh
    d = np.zeros(Xh.n_dofs)
    s, ws = gauss_line(2 * Xh.k + 2)
    ec = mesh.edge_cells
    for tag, g in spec.dirichlet_data.items():
        if tag in spec.stress_zero_tags or g is None:
            continue
        edges = mesh.boundary_edges(tag)
        if edges.size == 0:
            warnings.warn(f"Dirichlet tag {tag!r} has no boundary edges", stacklevel=2)
            continue
        cells = ec[edges, 0]
        a = mesh.vertices[mesh.edges[edges, 0]]
        b = mesh.vertices[mesh.edges[edges, 1]]
        x = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        local = np.argmax(mesh.cell_edges[cells] == edges[:, None], axis=1)
        sign = mesh.cell_edge_signs[cells, local]
        n_out = mesh.edge_normals[edges] * sign[:, None]
        phi, _ = Xh.eval_cells(cells, x)  # (ne, ns, m, 2)
        flux = np.einsum("esjd,ed->esj", phi, n_out)
        gv = np.asarray(g(x, t), dtype=float)  # (ne, ns, 2)
        L = mesh.edge_lengths[edges]
        for r in range(2):
            vals = L[:, None] * np.einsum("s,esj,es->ej", ws, flux, gv[..., r])
            np.add.at(d, Xh.cell_dofs[cells] + r * Xh.n_rt, vals)
    return d


def stress_bc_dofs(Xh: StressSpace, tags) -> np.ndarray:
    """All stress DOFs (both rows, all moments) on edges carrying ``tags``."""
    if not tags:
        return np.zeros(0, dtype=np.int64)
    edges = Xh.mesh.boundary_edges(tags)
    m = Xh.n_edge_dofs
    rt = (edges[:, None] * m + np.arange(m)[None, :]).ravel()
    return np.sort(np.concatenate([rt, rt + Xh.n_rt]))


def apply_stress_bc(matrix, rhs: np.ndarray, dofs: np.ndarray):
    """Row/column elimination of ``dofs`` with unit diagonal and zero value.

    Returns the modified (csc matrix, rhs).  With no DOFs both are returned
    as given.
    """
    if len(dofs) == 0:
        return matrix, rhs
    n = matrix.shape[0]
    keep = np.ones(n)
    keep[dofs] = 0.0
    P = sp.diags(keep)
    out = (P @ matrix @ P + sp.diags(1.0 - keep)).tocsc()
    rhs = rhs.copy()
    rhs[dofs] = 0.0
    return out, rhs
