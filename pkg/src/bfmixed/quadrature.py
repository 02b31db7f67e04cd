"""Symmetric quadrature rules on the reference triangle and on edges.

Triangle rules are stored in barycentric coordinates with weights summing
to 1/2, the area of the reference triangle (0,0), (1,0), (0,1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def xy(self) -> np.ndarray:
        """Reference-triangle Cartesian coordinates, (nq, 2)."""
        return self.points[:, 1:]


def _s3(w):
    return [((1 / 3, 1 / 3, 1 / 3), w)]


def _s21(w, a):
    b = 1.0 - 2.0 * a
    return [(p, w) for p in ((a, a, b), (a, b, a), (b, a, a))]


def _s111(w, a, b):
    c = 1.0 - a - b
    return [(p, w) for p in sorted(set(permutations((a, b, c))))]


# Weights normalized to unit total; scaled by 1/2 on construction.
_ORBITS = {
    1: _s3(1.0),
    2: _s21(1 / 3, 1 / 6),
    3: _s3(-27 / 48) + _s21(25 / 48, 0.2),
    4: _s21(0.22338158967801146570, 0.44594849091596488632)
    + _s21(0.10995174365532186764, 0.091576213509770743460),
    5: _s3(9 / 40)
    + _s21((155 - np.sqrt(15)) / 1200, (6 - np.sqrt(15)) / 21)
    + _s21((155 + np.sqrt(15)) / 1200, (6 + np.sqrt(15)) / 21),
    6: _s21(0.11678627572637936603, 0.24928674517091042129)
    + _s21(0.050844906370206816921, 0.063089014491502228340)
    + _s111(0.082851075618373575194, 0.31035245103378440542, 0.053145049844816947353),
}


@lru_cache(maxsize=None)
def rule_for_degree(degree: int) -> QuadratureRule:
    """Smallest implemented rule integrating polynomials of ``degree`` exactly."""
    if int(degree) != degree or degree < 1 or degree > 6:
        raise ValueError(f"unsupported quadrature degree {degree}; expected 1..6")
    orbits = _ORBITS[int(degree)]
    points = np.array([p for p, _ in orbits], dtype=float)
    weights = 0.5 * np.array([w for _, w in orbits], dtype=float)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, int(degree))


@lru_cache(maxsize=None)
def gauss_line(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1] exact up to ``degree``; weights sum to 1."""
    n = max(1, (int(degree) + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    s, ws = 0.5 * (x + 1.0), 0.5 * w
    s.setflags(write=False)
    ws.setflags(write=False)
    return s, ws


def physical_points(vertices: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """Map rule points onto cells: ``vertices`` (nc, 3, 2) -> (nc, nq, 2)."""
    return np.einsum("qi,cid->cqd", rule.points, vertices)


def physical_weights(areas: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """Affine-mapped weights, (nc, nq)."""
    return 2.0 * areas[:, None] * rule.weights[None, :]
