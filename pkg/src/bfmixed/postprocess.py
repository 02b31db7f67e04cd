"""Post-processed pressure and velocity gradient, error norms, rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .quadrature import physical_points, physical_weights, rule_for_degree

CHANNELS = ("e_sigma_X", "e_u_M", "e_u_infL2", "e_p", "e_Gu")


def pressure_from_stress(sigma_values: np.ndarray) -> np.ndarray:
    """p_h = -tr(sigma_h) / 2 for tensor values (..., 2, 2)."""
    s = np.asarray(sigma_values, dtype=float)
    return -0.5 * (s[..., 0, 0] + s[..., 1, 1])


def deviatoric(sigma_values: np.ndarray) -> np.ndarray:
    s = np.asarray(sigma_values, dtype=float)
    tr = s[..., 0, 0] + s[..., 1, 1]
    return s - 0.5 * tr[..., None, None] * np.eye(2)


def gradient_from_stress(nu: float, sigma_values: np.ndarray) -> np.ndarray:
    """Gu_h = sigma_h^d / nu."""
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    return deviatoric(sigma_values) / nu


def stress_fields_at(X, sigma: np.ndarray, points: np.ndarray):
    """Evaluate sigma_h at arbitrary points (n, 2) -> (n, 2, 2)."""
    cells, bary = X.mesh.locate(points)
    x = np.einsum("ni,nid->nd", bary, X.mesh.vertices[X.mesh.cells[cells]])
    s, _ = X.evaluate(sigma, cells, x[:, None, :])
    return s[:, 0]


def lp_norm(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    """Product-space L^p norm (sum_i ||v_i||_p^p)^(1/p) of samples (nc, nq, ...).

    Components are summed separately; for p = 2 this is the Frobenius norm.
    """
    v = np.abs(np.asarray(values, dtype=float)).reshape(np.shape(values)[:2] + (-1,))
    return float(((weights[..., None] * v ** p).sum()) ** (1.0 / p))


def _rule_data(mesh, degree=6):
    rule = rule_for_degree(degree)
    x = physical_points(mesh.vertices[mesh.cells], rule)
    return x, physical_weights(mesh.areas, rule)


def norm_Lp_velocity(M, u, p: float, t: float = 0.0) -> float:
    """L^p norm of a discrete velocity (coefficients) or of a callable field.

    Callables are evaluated as ``u(x)`` with x shaped (nc, nq, 2).
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    x, w = _rule_data(M.mesh)
    if callable(u):
        vals = u(x)
    else:
        vals = M.evaluate(np.asarray(u), np.arange(M.mesh.n_cells), x)
    return lp_norm(vals, w, p)


def norm_X_stress(X, tau, q: float) -> float:
    """sqrt(||tau||_0^2 + ||div tau||_{L^q}^2).

    ``tau`` is a coefficient vector of ``X`` or a pair of callables
    ``(tensor_field, row_divergence)`` of points (nc, nq, 2).
    """
    x, w = _rule_data(X.mesh)
    if isinstance(tau, tuple):
        vals, div = tau[0](x), tau[1](x)
    else:
        vals, div = X.evaluate(np.asarray(tau), np.arange(X.mesh.n_cells), x)
    return math.hypot(lp_norm(vals, w, 2.0), lp_norm(div, w, q))


def time_norms(values, dt: float, initial=None) -> tuple[float, float]:
    """Discrete l2(0,T) and l_inf(0,T) norms.

    ``values`` are the spatial norms at steps 1..N; ``initial`` (step 0), when
    given, enters only the maximum.
    """
    v = np.asarray(values, dtype=float)
    l2 = math.sqrt(dt * float((v ** 2).sum()))
    linf = float(v.max()) if v.size else 0.0
    if initial is not None:
        linf = max(linf, float(initial))
    return l2, linf


def compute_rate(e_coarse: float, e_fine: float, h_coarse: float, h_fine: float) -> float:
    """log(e_c/e_f) / log(h_c/h_f); NaN when an error is not positive."""
    if not (e_coarse > 0 and e_fine > 0):
        return float("nan")
    if not h_coarse > h_fine > 0:
        raise ValueError(f"need h_coarse > h_fine > 0, got {h_coarse}, {h_fine}")
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


@dataclass
class StepErrors:
    sigma_L2: float
    div_Lq: float
    u_Lp: float
    u_L2: float
    p_L2: float
    Gu_L2: float

    @property
    def sigma_X(self) -> float:
        return math.hypot(self.sigma_L2, self.div_Lq)


def step_errors(disc, exact, state) -> StepErrors:
    """Errors of one state against a manufactured solution at ``state.t``.

    Exact fields are sampled at the degree-6 points, never interpolated.
    """
    spec = disc.spec
    cells = np.arange(disc.mesh.n_cells)
    x, w, t = disc.x_nl, disc.w_nl, state.t
    s_h, div_h = disc.X.evaluate(state.sigma, cells, x)
    u_h = disc.M.evaluate(state.u, cells, x)
    e_s = exact.sigma(x, t) - s_h
    e_div = exact.div_sigma(x, t) - div_h
    e_u = exact.u(x, t) - u_h
    e_p = exact.p(x, t) - pressure_from_stress(s_h)
    e_G = exact.grad_u(x, t) - gradient_from_stress(spec.nu, s_h)
    return StepErrors(
        sigma_L2=lp_norm(e_s, w, 2.0),
        div_Lq=lp_norm(e_div, w, spec.q),
        u_Lp=lp_norm(e_u, w, spec.p),
        u_L2=lp_norm(e_u, w, 2.0),
        p_L2=float(np.sqrt((w * e_p ** 2).sum())),
        Gu_L2=lp_norm(e_G, w, 2.0),
    )


@dataclass
class LevelErrors:
    n: int
    dof_count: int
    h: float
    e_sigma_X: float
    e_u_M: float
    e_u_infL2: float
    e_p: float
    e_Gu: float
    avg_newton_iters: float
    newton_iters: list = field(default_factory=list)

    def value(self, channel: str) -> float:
        return getattr(self, channel)


def trajectory_errors(disc, exact, states, reports, n: int = 0) -> LevelErrors:
    """Aggregate per-step errors into the five table channels."""
    dt = disc.spec.dt
    errs = [step_errors(disc, exact, s) for s in states]
    later = errs[1:]
    e_sig, _ = time_norms([e.sigma_X for e in later], dt)
    e_uM, _ = time_norms([e.u_Lp for e in later], dt)
    _, e_inf = time_norms([e.u_L2 for e in later], dt, initial=errs[0].u_L2)
    e_p, _ = time_norms([e.p_L2 for e in later], dt)
    e_G, _ = time_norms([e.Gu_L2 for e in later], dt)
    iters = [r.iterations for r in reports]
    return LevelErrors(
        n=n, dof_count=disc.X.n_dofs + disc.M.n_dofs, h=disc.mesh.h,
        e_sigma_X=e_sig, e_u_M=e_uM, e_u_infL2=e_inf, e_p=e_p, e_Gu=e_G,
        avg_newton_iters=float(np.mean(iters)) if iters else 0.0, newton_iters=iters,
    )


@dataclass
class ErrorReport:
    levels: list

    def rates(self, channel: str) -> list:
        """Rates per adjacent level pair (length ``len(levels) - 1``)."""
        out = []
        for a, b in zip(self.levels[:-1], self.levels[1:]):
            out.append(compute_rate(a.value(channel), b.value(channel), a.h, b.h))
        return out

    def finest_rate(self, channel: str) -> float:
        return self.rates(channel)[-1]

    def rows(self):
        """Table rows (DOF, h, error/rate pairs per channel, iter); rate None on the first row."""
        rates = {c: [None] + self.rates(c) for c in CHANNELS}
        for i, lev in enumerate(self.levels):
            row = [lev.dof_count, lev.h]
            for c in CHANNELS:
                row += [lev.value(c), rates[c][i]]
            row.append(lev.avg_newton_iters)
            yield row


def cell_fields(disc, state) -> dict:
    """Per-cell (centroid) values for visualization output."""
    mesh = disc.mesh
    cells = np.arange(mesh.n_cells)
    x = mesh.centroids[:, None, :]
    u = disc.M.evaluate(state.u, cells, x)[:, 0]
    s, _ = disc.X.evaluate(state.sigma, cells, x)
    s = s[:, 0]
    G = gradient_from_stress(disc.spec.nu, s)
    return {
        "u_magnitude": np.linalg.norm(u, axis=1),
        "u_x": u[:, 0],
        "u_y": u[:, 1],
        "pressure": pressure_from_stress(s),
        "Gu_00": np.abs(G[:, 0, 0]),
        "Gu_01": np.abs(G[:, 0, 1]),
        "Gu_10": np.abs(G[:, 1, 0]),
        "Gu_11": np.abs(G[:, 1, 1]),
        "sigma_row0_magnitude": np.linalg.norm(s[:, 0, :], axis=1),
        "sigma_row1_magnitude": np.linalg.norm(s[:, 1, :], axis=1),
    }
