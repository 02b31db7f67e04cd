"""Conforming triangulations of rectangles with globally oriented edges.

Local edge ``i`` of a cell is the edge opposite its vertex ``i``, traversed
from vertex ``i+1`` to vertex ``i+2`` (indices mod 3).  Every global edge is
stored with its lower vertex index first and carries the normal obtained by
rotating that direction 90 degrees clockwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class Mesh:
    """Immutable triangle mesh.

    Attributes:
        vertices: (nv, 2) coordinates.
        cells: (nc, 3) vertex indices, counter-clockwise.
        edges: (ne, 2) vertex indices, lower index first.
        cell_edges: (nc, 3) global edge index of each local edge.
        cell_edge_signs: (nc, 3) +1 where the outward normal of the cell
            coincides with the global edge normal, -1 otherwise.
        boundary_tags: boundary edge index -> tag.
        domain: ((x0, x1), (y0, y1)) bounding rectangle.
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    cell_edge_signs: np.ndarray
    boundary_tags: dict[int, str]
    domain: tuple[tuple[float, float], tuple[float, float]]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            p = self.vertices[self.cells]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.cells]
        lengths = np.linalg.norm(p[:, [1, 2, 0]] - p[:, [2, 0, 1]], axis=2)
        return lengths.max(axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    @property
    def edge_normals(self) -> np.ndarray:
        """Global unit normals, (ne, 2)."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @property
    def edge_cells(self) -> np.ndarray:
        """(ne, 2) adjacent cells; second column is -1 on the boundary.

        The first column is the cell whose outward normal matches the global
        normal where such a cell exists.
        """
        if "edge_cells" not in self._cache:
            ec = -np.ones((self.n_edges, 2), dtype=np.int64)
            for c in range(self.n_cells):
                for i in range(3):
                    e = self.cell_edges[c, i]
                    slot = 0 if self.cell_edge_signs[c, i] > 0 else 1
                    ec[e, slot] = c
            # boundary edges seen only from the "minus" side
            swap = ec[:, 0] < 0
            ec[swap] = ec[swap][:, ::-1]
            self._cache["edge_cells"] = ec
        return self._cache["edge_cells"]

    def boundary_edges(self, tags=None) -> np.ndarray:
        """Sorted indices of boundary edges, optionally restricted to ``tags``."""
        if tags is None:
            idx = list(self.boundary_tags)
        else:
            tags = {tags} if isinstance(tags, str) else set(tags)
            idx = [e for e, t in self.boundary_tags.items() if t in tags]
        return np.array(sorted(idx), dtype=np.int64)

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Find a containing cell and barycentric coordinates for each point.

        Points on shared edges go to the lowest-index containing cell.
        Raises ValueError for points outside the mesh.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        p = self.vertices[self.cells]
        cells = np.empty(len(points), dtype=np.int64)
        bary = np.empty((len(points), 3))
        for i, x in enumerate(points):
            lam = _barycentric(p, x)
            inside = np.nonzero(lam.min(axis=1) >= -1e-12)[0]
            if inside.size == 0:
                raise ValueError(f"point {x} lies outside the mesh")
            cells[i] = inside[0]
            bary[i] = np.clip(lam[inside[0]], 0.0, 1.0)
            bary[i] /= bary[i].sum()
        return cells, bary

    def dump(self, path) -> None:
        """Plain-text dump of vertices, cells and boundary tags."""
        with open(path, "w") as fh:
            fh.write(f"vertices {self.n_vertices}\n")
            for x, y in self.vertices:
                fh.write(f"{x!r} {y!r}\n")
            fh.write(f"cells {self.n_cells}\n")
            for a, b, c in self.cells:
                fh.write(f"{a} {b} {c}\n")
            fh.write(f"boundary_edges {len(self.boundary_tags)}\n")
            for e in sorted(self.boundary_tags):
                a, b = self.edges[e]
                fh.write(f"{e} {a} {b} {self.boundary_tags[e]}\n")


def cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """z-component of the cross product of planar vectors (..., 2)."""
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _barycentric(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    r = x - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


def from_cells(vertices, cells, domain=None) -> Mesh:
    """Build edge connectivity, orientation signs and boundary tags."""
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    if domain is None:
        lo, hi = vertices.min(axis=0), vertices.max(axis=0)
        domain = ((float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1])))

    # local edge i runs from vertex i+1 to vertex i+2
    start = cells[:, [1, 2, 0]]
    stop = cells[:, [2, 0, 1]]
    pairs = np.stack([np.minimum(start, stop), np.maximum(start, stop)], axis=-1)
    edges, inverse = np.unique(pairs.reshape(-1, 2), axis=0, return_inverse=True)
    cell_edges = inverse.reshape(-1, 3)
    signs = np.where(start < stop, 1, -1).astype(np.int64)

    counts = np.bincount(cell_edges.ravel(), minlength=len(edges))
    (x0, x1), (y0, y1) = domain
    mid = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    tags: dict[int, str] = {}
    for e in np.nonzero(counts == 1)[0]:
        mx, my = mid[e]
        if abs(mx - x0) < BOUNDARY_TOL:
            tags[int(e)] = "left"
        elif abs(mx - x1) < BOUNDARY_TOL:
            tags[int(e)] = "right"
        elif abs(my - y0) < BOUNDARY_TOL:
            tags[int(e)] = "bottom"
        elif abs(my - y1) < BOUNDARY_TOL:
            tags[int(e)] = "top"
        else:
            tags[int(e)] = "boundary"
    return Mesh(vertices, cells, edges, cell_edges, signs, tags, domain)


def generate_structured(nx: int, ny: int, domain=((0.0, 1.0), (0.0, 1.0))) -> Mesh:
    """Right-diagonal triangulation of an ``nx`` by ``ny`` grid.

    Each grid square is split along its lower-left to upper-right diagonal.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"subdivision counts must be positive integers, got nx={nx}, ny={ny}")
    (x0, x1), (y0, y1) = domain
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate domain {domain}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return from_cells(vertices, cells, domain=((float(x0), float(x1)), (float(y0), float(y1))))


def cell_geometry(mesh: Mesh, cell: int):
    """Area, local edge lengths and outward unit normals of one cell."""
    if not 0 <= cell < mesh.n_cells:
        raise ValueError(f"cell index {cell} out of range [0, {mesh.n_cells})")
    p = mesh.vertices[mesh.cells[cell]]
    d = p[[2, 0, 1]] - p[[1, 2, 0]]
    lengths = np.linalg.norm(d, axis=1)
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]
    area = 0.5 * abs(cross2(p[1] - p[0], p[2] - p[0]))
    return float(area), lengths, normals
