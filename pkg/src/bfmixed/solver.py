"""Backward Euler time stepping with a Newton loop on the bordered saddle system.

Unknown vector per time level: ``[sigma (nX), u (nM), lambda (0 or 1)]``.
Linearized system at iterate ``(sigma, u)``::

    [ A    B^T              t ] [d_sigma ]     [ R1 ]
    [ B   -(E/dt + DC(u))   0 ] [d_u     ] = - [ R2 ]
    [ t^T  0                0 ] [d_lambda]     [ R3 ]

with residuals

    R1 = A sigma + B^T u + t lambda - d(t_n)
    R2 = B sigma - E (u - u_prev)/dt - C(u) + G(t_n)
    R3 = t . sigma

The ``1/dt`` terms are dropped in steady mode.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    Discretization,
    ProblemSpec,
    apply_stress_bc,
    assemble_dirichlet_rhs,
    assemble_load,
    forchheimer_blocks,
    forchheimer_residual,
    stress_bc_dofs,
    velocity_moments,
)

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-6
MAX_NEWTON_ITERATIONS = 25
DIVERGENCE_FACTOR = 1e4
LINEAR_RESIDUAL_TOL = 1e-10


class SingularSystemError(RuntimeError):
    pass


class NewtonError(RuntimeError):
    """Newton failed to converge; carries the report and the time step."""

    def __init__(self, message, report=None, step=None):
        super().__init__(message)
        self.report = report
        self.step = step


@dataclass(frozen=True)
class SystemState:
    step: int
    t: float
    sigma: np.ndarray
    u: np.ndarray
    lam: Optional[float] = None


@dataclass(frozen=True)
class NewtonReport:
    iterations: int
    relative_update: float
    converged: bool
    updates: tuple = ()


def factorize(matrix, quasidefinite: bool = False):
    """Sparse LU factorization.

    With ``quasidefinite`` the matrix is assumed symmetric quasi-definite
    (positive definite and negative definite diagonal blocks), which admits
    a symmetric ordering without pivoting.
    """
    K = sp.csc_matrix(matrix)
    opts = {}
    if quasidefinite:
        opts = dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                    options=dict(SymmetricMode=True))
    try:
        return spla.splu(K, **opts)
    except RuntimeError as exc:
        raise SingularSystemError(f"factorization failed: {exc}") from exc


def _refine(apply, solve, b, tol=LINEAR_RESIDUAL_TOL, steps=3):
    x = solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("factorization produced non-finite values")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0.0
    res = np.linalg.norm(b - apply(x)) / bnorm
    for _ in range(steps):
        if res <= tol:
            break
        x = x + solve(b - apply(x))
        res = np.linalg.norm(b - apply(x)) / bnorm
    return x, res


def linear_solve(matrix, rhs: np.ndarray) -> np.ndarray:
    """Direct sparse LU solve (partial pivoting) with iterative refinement."""
    K = sp.csc_matrix(matrix)
    lu = factorize(K)
    x, res = _refine(lambda v: K @ v, lu.solve, np.asarray(rhs, dtype=float))
    if res > LINEAR_RESIDUAL_TOL:
        log.warning("linear solve relative residual %.3e exceeds %.0e", res, LINEAR_RESIDUAL_TOL)
    return x


class BorderedSolve:
    """Solve [[Q, T], [T^T, 0]] [x; lam] = [b; c] where Q z = 0 for known z.

    Q itself is singular along ``z`` (the identity-tensor mode), so the
    factorized matrix is Q + gamma e_j e_j^T with z_j != 0.  Any solution of
    the pinned system with right-hand side orthogonal to z also solves Q;
    the multiplier and the z-component are then fixed by the two scalar
    conditions z . (b - T lam) = 0 and T . x = c.
    """

    def __init__(self, Q, T: np.ndarray, z: np.ndarray):
        self.Q = sp.csc_matrix(Q)
        self.T, self.z = T, z
        j = int(np.argmax(np.abs(z)))
        gamma = float(np.abs(self.Q.diagonal()).max())
        pin = sp.csc_matrix(([gamma], ([j], [j])), shape=Q.shape)
        self.lu = factorize(self.Q + pin, quasidefinite=True)
        self.zT = float(z @ T)

    def apply(self, xl: np.ndarray) -> np.ndarray:
        x, lam = xl[:-1], xl[-1]
        return np.concatenate([self.Q @ x + self.T * lam, [self.T @ x]])

    def _solve_once(self, bc: np.ndarray) -> np.ndarray:
        b, c = bc[:-1], bc[-1]
        lam = (self.z @ b) / self.zT
        xp = self.lu.solve(b - self.T * lam)
        beta = (c - self.T @ xp) / self.zT
        return np.concatenate([xp + beta * self.z, [lam]])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x, res = _refine(self.apply, self._solve_once, rhs)
        if res > LINEAR_RESIDUAL_TOL:
            log.warning("bordered solve relative residual %.3e exceeds %.0e", res, LINEAR_RESIDUAL_TOL)
        return x


def _quasidefinite_solve(Q, b: np.ndarray) -> np.ndarray:
    Q = sp.csc_matrix(Q)
    lu = factorize(Q, quasidefinite=True)
    x, res = _refine(lambda v: Q @ v, lu.solve, b)
    if res > LINEAR_RESIDUAL_TOL:
        x = linear_solve(Q, b)
    return x


class Solver:
    """Newton and time-stepping driver bound to one discretization."""

    def __init__(self, spec: ProblemSpec, disc: Discretization):
        self.spec = spec
        self.disc = disc
        self.nX = disc.X.n_dofs
        self.nM = disc.M.n_dofs
        self.bc_dofs = stress_bc_dofs(disc.X, spec.stress_zero_tags)
        self.use_multiplier = len(self.bc_dofs) == 0
        self.n = self.nX + self.nM + int(self.use_multiplier)
        self.initial_report = None

        self._K_static = sp.bmat([[disc.A, disc.B.T],
                                  [disc.B, sp.csr_matrix((self.nM, self.nM))]], format="csr")
        if self.use_multiplier:
            identity = disc.X.interpolate(
                lambda x: np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)))
            self._kernel = np.concatenate([identity, np.zeros(self.nM)])
            self._border = np.concatenate([disc.trace, np.zeros(self.nM)])

    # -- vector helpers -------------------------------------------------

    def split(self, x: np.ndarray):
        sigma = x[: self.nX]
        u = x[self.nX: self.nX + self.nM]
        lam = float(x[-1]) if self.use_multiplier else None
        return sigma, u, lam

    def join(self, sigma, u, lam=None) -> np.ndarray:
        parts = [sigma, u]
        if self.use_multiplier:
            parts.append([0.0 if lam is None else lam])
        return np.concatenate(parts)

    def _embed_velocity(self, mat) -> sp.csr_matrix:
        off, n = self.nX, self.nX + self.nM
        mat = sp.coo_matrix(mat)
        return sp.csr_matrix((mat.data, (mat.row + off, mat.col + off)), shape=(n, n))

    # -- equations ------------------------------------------------------

    def residual(self, x, u_prev, t_n, steady, rhs_stress=None, rhs_velocity=None):
        disc = self.disc
        sigma, u, lam = self.split(x)
        if rhs_stress is None:
            rhs_stress = assemble_dirichlet_rhs(self.spec, disc.X, t_n)
        if rhs_velocity is None:
            rhs_velocity = assemble_load(self.spec, disc.M, t_n, disc)
        R1 = disc.A @ sigma + disc.B.T @ u - rhs_stress
        if self.use_multiplier:
            R1 = R1 + disc.trace * lam
        R2 = disc.B @ sigma - forchheimer_residual(self.spec, disc.M, u, disc) + rhs_velocity
        if not steady:
            R2 -= disc.E @ (u - u_prev) / self.spec.dt
        parts = [R1, R2]
        if self.use_multiplier:
            parts.append([disc.trace @ sigma])
        return np.concatenate(parts)

    def jacobian(self, x, steady):
        """Linearized (sigma, u) block; the trace border is handled in ``solve_linearized``."""
        _, u, _ = self.split(x)
        disc = self.disc
        vel = disc.velocity_blocks_to_sparse(forchheimer_blocks(disc, u))
        if not steady:
            vel = vel + disc.E / self.spec.dt
        return (self._K_static - self._embed_velocity(vel)).tocsc()

    def solve_linearized(self, Q, rhs: np.ndarray) -> np.ndarray:
        """Direct solve of the (bordered, constrained) linearized system."""
        if self.use_multiplier:
            return BorderedSolve(Q, self._border, self._kernel).solve(rhs)
        Q, rhs = apply_stress_bc(Q, rhs, self.bc_dofs)
        return _quasidefinite_solve(Q, rhs)

    def newton(self, x0, u_prev, t_n, steady=False, rhs_stress=None, rhs_velocity=None):
        """Newton iteration from ``x0``; returns (x, NewtonReport)."""
        if rhs_stress is None:
            rhs_stress = assemble_dirichlet_rhs(self.spec, self.disc.X, t_n)
        if rhs_velocity is None:
            rhs_velocity = assemble_load(self.spec, self.disc.M, t_n, self.disc)
        x = np.array(x0, dtype=float)
        x[self.bc_dofs] = 0.0
        updates = []
        rel = np.inf
        for it in range(1, MAX_NEWTON_ITERATIONS + 1):
            R = self.residual(x, u_prev, t_n, steady, rhs_stress, rhs_velocity)
            dx = self.solve_linearized(self.jacobian(x, steady), -R)
            x = x + dx
            dnorm, xnorm = np.linalg.norm(dx), np.linalg.norm(x)
            rel = 0.0 if dnorm == 0.0 else (dnorm / xnorm if xnorm > 0 else np.inf)
            updates.append(rel)
            log.debug("newton it=%d rel_update=%.3e", it, rel)
            if rel <= NEWTON_TOL:
                return x, NewtonReport(it, rel, True, tuple(updates))
            if it > 1 and updates[-1] > DIVERGENCE_FACTOR * updates[0]:
                break
        report = NewtonReport(len(updates), rel, False, tuple(updates))
        raise NewtonError(f"Newton did not converge (last relative update {rel:.3e})", report)

    # -- public operations ---------------------------------------------

    def newton_solve(self, previous: SystemState, t_n: float, steady: bool = False):
        """One fully discrete step (or a steady solve) warm-started from ``previous``."""
        x0 = self.join(previous.sigma, previous.u, previous.lam)
        x, report = self.newton(x0, previous.u, t_n, steady)
        sigma, u, lam = self.split(x)
        step = previous.step if steady else previous.step + 1
        return SystemState(step, t_n, sigma, u, lam), report

    def solve_initial(self):
        """Compatible discrete initial state.

        Solves the steady system with right-hand side
        G_0 = -nu Delta u_0 + C(u_0) starting from (0, P_h u_0).  Without
        ``u0`` the initial condition is zero and returned as is.
        """
        spec, disc = self.spec, self.disc
        zero = SystemState(0, 0.0, np.zeros(self.nX), np.zeros(self.nM),
                           0.0 if self.use_multiplier else None)
        if spec.u0 is None:
            # zero initial condition: taken as given, boundary data enters from step 1
            self.initial_report = NewtonReport(0, 0.0, True, ())
            return zero
        if spec.laplacian_u0 is None:
            raise ValueError("a nonzero initial velocity requires its analytic Laplacian")
        x = disc.x_nl
        u0 = np.asarray(spec.u0(x), dtype=float)
        lap = np.asarray(spec.laplacian_u0(x), dtype=float)
        speed = np.linalg.norm(u0, axis=-1)[..., None]
        c_u0 = disc.alpha[:, None, None] * u0 + disc.forch[:, None, None] * speed ** (spec.p - 2) * u0
        G0 = velocity_moments(disc, -spec.nu * lap + c_u0)
        start = SystemState(0, 0.0, np.zeros(self.nX), disc.M.project(spec.u0),
                            0.0 if self.use_multiplier else None)
        return self._steady_from(start, G0)

    def _steady_from(self, start: SystemState, G0: np.ndarray):
        x0 = self.join(start.sigma, start.u, start.lam)
        d0 = assemble_dirichlet_rhs(self.spec, self.disc.X, 0.0)
        try:
            x, report = self.newton(x0, start.u, 0.0, steady=True, rhs_stress=d0, rhs_velocity=G0)
        except NewtonError as exc:
            exc.step = 0
            raise
        self.initial_report = report
        sigma, u, lam = self.split(x)
        return SystemState(0, 0.0, sigma, u, lam)

    def time_loop(self, initial: SystemState, n_steps: int = None, callback=None):
        """Advance ``n_steps`` (default T/dt) backward Euler steps.

        Returns (states, reports) with ``states[0] is initial``.
        """
        n_steps = self.spec.n_steps if n_steps is None else n_steps
        states, reports = [initial], []
        for n in range(1, n_steps + 1):
            t_n = n * self.spec.dt
            try:
                state, report = self.newton_solve(states[-1], t_n)
            except NewtonError as exc:
                exc.step = n
                raise
            states.append(state)
            reports.append(report)
            if callback is not None:
                callback(state, report)
        return states, reports


def solve_initial(spec: ProblemSpec, disc: Discretization):
    return Solver(spec, disc).solve_initial()


def time_loop(spec: ProblemSpec, disc: Discretization, initial: SystemState):
    return Solver(spec, disc).time_loop(initial)
