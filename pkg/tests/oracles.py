"""Independent reference computations used by the tests.

Nothing here reuses the assembled operators; integrals are formed from
pointwise evaluations on refined sub-triangles or by finite differences.
"""

import numpy as np

from bfmixed.mesh import cross2
from bfmixed.quadrature import rule_for_degree


def refined_points(mesh, levels=2, degree=6):
    """Quadrature on each cell split uniformly into 4**levels sub-triangles.

    Returns points (nc, nsub*nq, 2) and weights of the same leading shape.
    """
    sub = [np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])]
    for _ in range(levels):
        nxt = []
        for t in sub:
            a, b, c = t
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            nxt += [np.array(v) for v in ([a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca])]
        sub = nxt
    rule = rule_for_degree(degree)
    ref_pts, ref_w = [], []
    for t in sub:
        ref_pts.append(rule.points @ t)
        area = 0.5 * abs(cross2(t[1] - t[0], t[2] - t[0]))
        ref_w.append(rule.weights * area / 0.5)
    ref_pts = np.concatenate(ref_pts)  # reference (xi, eta)
    ref_w = np.concatenate(ref_w)
    P = mesh.vertices[mesh.cells]
    x = (P[:, None, 0] + ref_pts[None, :, :1] * (P[:, None, 1] - P[:, None, 0])
         + ref_pts[None, :, 1:] * (P[:, None, 2] - P[:, None, 0]))
    w = 2.0 * mesh.areas[:, None] * ref_w[None, :]
    return x, w


def random_poly_tensor(rng, degree):
    """Random polynomial 2x2 tensor field and its row divergence."""
    exps = [(a, b) for a in range(degree + 1) for b in range(degree + 1 - a)]
    c = rng.standard_normal((2, 2, len(exps)))

    def field(x):
        X, Y = x[..., 0], x[..., 1]
        mon = np.stack([X ** a * Y ** b for a, b in exps], axis=-1)
        return np.einsum("...m,ijm->...ij", mon, c)

    def div(x):
        X, Y = x[..., 0], x[..., 1]
        dx = np.stack([a * X ** max(a - 1, 0) * Y ** b for a, b in exps], axis=-1)
        dy = np.stack([b * X ** a * Y ** max(b - 1, 0) for a, b in exps], axis=-1)
        return np.einsum("...m,im->...i", dx, c[:, 0]) + np.einsum("...m,im->...i", dy, c[:, 1])

    return field, div


def fd_jacobian(fun, u, step=1e-6):
    """Central-difference Jacobian (dense)."""
    n = u.size
    J = np.zeros((fun(u).size, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        J[:, j] = (fun(u + e) - fun(u - e)) / (2 * step)
    return J


def forch_integrand(u, alpha, forch, p):
    speed = np.linalg.norm(u, axis=-1)[..., None]
    return alpha * u + forch * speed ** (p - 2) * u


def cell_momentum_residual(disc, state, prev, f_fn, levels=0):
    """Per cell and component: (d_t u, 1)_K - (div sigma, 1)_K + (C(u), 1)_K - (f, 1)_K.

    Evaluated from pointwise field values on (optionally refined) degree-6 quadrature.
    Returns (residual, scale), both (nc, 2).
    """
    mesh, spec = disc.mesh, disc.spec
    x, w = refined_points(mesh, levels=levels)
    cells = np.arange(mesh.n_cells)
    u = disc.M.evaluate(state.u, cells, x)
    u_old = disc.M.evaluate(prev.u, cells, x)
    _, div = disc.X.evaluate(state.sigma, cells, x)
    c = forch_integrand(u, disc.alpha[:, None, None], disc.forch[:, None, None], spec.p)
    f = f_fn(x, state.t) if f_fn is not None else np.zeros_like(u)
    terms = [(u - u_old) / spec.dt, -div, c, -f]
    ints = [np.einsum("cq,cqd->cd", w, t) for t in terms]
    return sum(ints), sum(np.abs(i) for i in ints)
