"""Concrete problems: manufactured solution, lid-driven cavity, channel network."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import sympy as sym

from .assembly import ProblemSpec
from .mesh import Mesh, generate_structured

_x, _y, _t = sym.symbols("x y t", real=True)


def _vectorize(expr_list, shape):
    """Lambdify sympy expressions into a callable (x[..., 2], t) -> (..., *shape)."""
    fns = [sym.lambdify((_x, _y, _t), e, "numpy") for e in expr_list]

    def call(x, t=0.0):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        vals = [np.broadcast_to(np.asarray(f(X, Y, t), dtype=float), X.shape) for f in fns]
        return np.stack(vals, axis=-1).reshape(X.shape + shape)

    return call


class ManufacturedSolution:
    """Exact (u, p) pair with every derived field needed for sources and errors.

    ``u`` and ``p`` are sympy expressions in x, y, t.  Derived:
    sigma = nu grad(u) - p I (row i is the gradient of u_i scaled by nu,
    minus p e_i) and f = u_t - nu Lap u + alpha u + F |u|^{p-2} u + grad p.
    """

    def __init__(self, u, p, nu, alpha, forch, p_exp):
        self.u_expr = [sym.sympify(c) for c in u]
        self.p_expr = sym.sympify(p)
        grad = [[sym.diff(ui, v) for v in (_x, _y)] for ui in self.u_expr]
        lap = [sym.diff(ui, _x, 2) + sym.diff(ui, _y, 2) for ui in self.u_expr]
        gp = [sym.diff(self.p_expr, v) for v in (_x, _y)]
        speed = sym.sqrt(self.u_expr[0] ** 2 + self.u_expr[1] ** 2)
        sigma = [[nu * grad[i][j] - (self.p_expr if i == j else 0) for j in range(2)] for i in range(2)]
        f = [
            sym.diff(self.u_expr[i], _t) - nu * lap[i] + alpha * self.u_expr[i]
            + forch * speed ** (p_exp - 2) * self.u_expr[i] + gp[i]
            for i in range(2)
        ]
        self.div_u_expr = sym.simplify(grad[0][0] + grad[1][1])
        self.f_expr = f
        self.sigma_expr = sigma
        self.params = dict(nu=nu, alpha=alpha, forch=forch, p=p_exp)

        self.u = _vectorize(self.u_expr, (2,))
        self.p = _vectorize([self.p_expr], ())
        self.grad_u = _vectorize([g for row in grad for g in row], (2, 2))
        self.sigma = _vectorize([s for row in sigma for s in row], (2, 2))
        self.div_sigma = _vectorize([nu * lap[i] - gp[i] for i in range(2)], (2,))
        self.f = _vectorize(f, (2,))
        self.u_t = _vectorize([sym.diff(c, _t) for c in self.u_expr], (2,))
        self.laplacian_u = _vectorize(lap, (2,))
        self.grad_p = _vectorize(gp, (2,))
        self.div_u = _vectorize([self.div_u_expr], ())

    def u0(self, x):
        return self.u(x, 0.0)

    def laplacian_u0(self, x):
        return self.laplacian_u(x, 0.0)


@dataclass(frozen=True)
class RegionMap:
    """Axis-aligned rectangles ``(label, (x0, x1, y0, y1))``, first match wins."""

    rectangles: tuple = ()
    default: str = "background"

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        labels = np.full(len(points), self.default, dtype=object)
        assigned = np.zeros(len(points), dtype=bool)
        for label, (x0, x1, y0, y1) in self.rectangles:
            inside = ((points[:, 0] > x0) & (points[:, 0] < x1)
                      & (points[:, 1] > y0) & (points[:, 1] < y1) & ~assigned)
            labels[inside] = label
            assigned |= inside
        return labels


DEFAULT_CHANNELS = (
    ("channel", (-1.0, 1.0, -0.05, 0.05)),
    ("channel", (-0.55, -0.45, -1.0, 1.0)),
    ("channel", (0.45, 0.55, -1.0, 1.0)),
)


@dataclass
class Problem:
    name: str
    spec: ProblemSpec
    mesh: Mesh
    exact: Optional[ManufacturedSolution] = None
    regions: Optional[RegionMap] = None
    info: dict = field(default_factory=dict)


def _constant(value):
    value = np.asarray(value, dtype=float)

    def g(x, t=0.0):
        return np.broadcast_to(value, np.shape(x)[:-1] + (2,)).copy()

    return g


def example1_exact(nu=1.0, alpha=1.0, forch=10.0, p_exp=3):
    u = (sym.exp(_t) * sym.sin(sym.pi * _x) * sym.cos(sym.pi * _y),
         -sym.exp(_t) * sym.cos(sym.pi * _x) * sym.sin(sym.pi * _y))
    p = sym.exp(_t) * sym.cos(sym.pi * _x) * sym.sin(sym.pi * _y / 2)
    return ManufacturedSolution(u, p, nu, alpha, forch, p_exp)


def example1_spec(n: int, k: int, dt: float = 1e-3, T: float = 0.01,
                  nu=1.0, alpha=1.0, forch=10.0, p_exp=3) -> Problem:
    """Smooth manufactured solution on the unit square with full Dirichlet data."""
    if n < 2:
        raise ValueError(f"example1 needs n >= 2, got {n}")
    exact = example1_exact(nu, alpha, forch, p_exp)
    g = exact.u
    spec = ProblemSpec(
        nu=nu, p=p_exp, alpha=alpha, forch=forch, source=exact.f,
        dirichlet_data={tag: g for tag in ("left", "right", "bottom", "top")},
        u0=exact.u0, laplacian_u0=exact.laplacian_u0, dt=dt, T=T, k=k,
    )
    return Problem("example1", spec, generate_structured(n, n), exact=exact)


def example3_spec(alpha: float, F: float, n: int, k: int, dt: float = 1e-2, T: float = 1.0) -> Problem:
    """Lid-driven cavity: u = (1, 0) on the top side, zero elsewhere, f = 0."""
    if not (alpha > 0 and F > 0):
        raise ValueError(f"alpha and F must be positive, got alpha={alpha}, F={F}")
    spec = ProblemSpec(
        nu=1.0, p=3, alpha=alpha, forch=F, source=None,
        dirichlet_data={"top": _constant((1.0, 0.0))},
        dt=dt, T=T, k=k,
    )
    return Problem("cavity", spec, generate_structured(n, n), info={"alpha": alpha, "F": F})


def example4_spec(n: int, k: int, dt: float = 1e-2, T: float = 1.0,
                  channels=DEFAULT_CHANNELS, inside=(1.0, 10.0), outside=(1000.0, 1.0),
                  inflow=0.2) -> Problem:
    """Channel network in (-1, 1)^2: inflow on the left, zero traction elsewhere."""
    regions = RegionMap(tuple(channels), default="background")
    spec = ProblemSpec(
        nu=1.0, p=3,
        alpha={"channel": inside[0], "background": outside[0]},
        forch={"channel": inside[1], "background": outside[1]},
        source=None,
        dirichlet_data={"left": _constant((inflow, 0.0))},
        stress_zero_tags=frozenset({"right", "top", "bottom"}),
        dt=dt, T=T, k=k, regions=regions,
    )
    mesh = generate_structured(n, n, ((-1.0, 1.0), (-1.0, 1.0)))
    return Problem("channel", spec, mesh, regions=regions)


def velocity_at(disc, state, points: np.ndarray) -> np.ndarray:
    """Evaluate u_h at arbitrary points (n, 2) -> (n, 2)."""
    cells, bary = disc.mesh.locate(points)
    x = np.einsum("ni,nid->nd", bary, disc.mesh.vertices[disc.mesh.cells[cells]])
    return disc.M.evaluate(state.u, cells, x[:, None, :])[:, 0, :]


def centerline_profile(disc, state, x: float = 0.5, samples: int = 64, eps: float = 1e-9):
    """(y, u_x) along a vertical line, averaging the one-sided cell values.

    Samples sit at y_i = y0 + (i + 1/2) (y1 - y0) / samples.
    """
    (_, _), (y0, y1) = disc.mesh.domain
    ys = y0 + (np.arange(samples) + 0.5) * (y1 - y0) / samples
    left = velocity_at(disc, state, np.column_stack([np.full(samples, x - eps), ys]))
    right = velocity_at(disc, state, np.column_stack([np.full(samples, x + eps), ys]))
    return np.column_stack([ys, 0.5 * (left[:, 0] + right[:, 0])])


def midheight_speed(disc, state, x: float = 0.5) -> float:
    """|u_x| at the cavity centre, averaged over the cells touching it."""
    pts = np.array([[x - 1e-9, 0.5 - 1e-9], [x + 1e-9, 0.5 + 1e-9],
                    [x - 1e-9, 0.5 + 1e-9], [x + 1e-9, 0.5 - 1e-9]])
    return float(abs(velocity_at(disc, state, pts)[:, 0].mean()))


def region_mean_speed(disc, state, regions: RegionMap) -> dict:
    """Area-weighted mean |u_h| per region label."""
    speed = np.linalg.norm(disc.velocity_at_nl(state.u), axis=-1)
    cell_int = (disc.w_nl * speed).sum(axis=1)
    labels = regions(disc.mesh.centroids)
    areas = disc.mesh.areas
    return {lab: float(cell_int[labels == lab].sum() / areas[labels == lab].sum())
            for lab in np.unique(labels)}
