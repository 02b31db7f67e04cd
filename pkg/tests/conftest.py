import functools
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from bfmixed import problems  # noqa: E402
from bfmixed.assembly import Discretization  # noqa: E402
from bfmixed.solver import Solver  # noqa: E402


@functools.lru_cache(maxsize=None)
def example1_run(n, k):
    """Full Example 1 trajectory, cached across test modules."""
    pb = problems.example1_spec(n, k)
    disc = Discretization(pb.spec, pb.mesh)
    solver = Solver(pb.spec, disc)
    initial = solver.solve_initial()
    states, reports = solver.time_loop(initial)
    return pb, disc, solver, states, reports


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
