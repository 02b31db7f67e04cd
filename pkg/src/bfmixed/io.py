"""Legacy ASCII VTK and CSV writers."""

from __future__ import annotations

import csv
import os

import numpy as np

VTK_HEADER = "# vtk DataFile Version 3.0"
VTK_TRIANGLE = 5


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_vtk(mesh, cell_data: dict, path, title: str = "bfmixed output", vectors: dict = None) -> None:
    """Unstructured grid of triangles with CELL_DATA scalars (and vectors)."""
    nv, nc = mesh.n_vertices, mesh.n_cells
    lines = [VTK_HEADER, title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nc} {4 * nc}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    lines.append(f"CELL_TYPES {nc}")
    lines += [str(VTK_TRIANGLE)] * nc
    lines.append(f"CELL_DATA {nc}")
    for name, values in cell_data.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (nc,):
            raise ValueError(f"cell array {name!r} has shape {values.shape}, expected ({nc},)")
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_fmt(v) for v in values]
    for name, values in (vectors or {}).items():
        values = np.asarray(values, dtype=float)
        lines.append(f"VECTORS {name} double")
        lines += [f"{_fmt(a)} {_fmt(b)} 0" for a, b in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_cell_scalars(path) -> dict:
    """Read back the CELL_DATA scalar arrays written by ``write_vtk``."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    out = {}
    i = 0
    n_cells = None
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("CELL_DATA"):
            n_cells = int(line.split()[1])
        elif line.startswith("SCALARS") and n_cells is not None:
            name = line.split()[1]
            out[name] = np.array([float(v) for v in tokens[i + 2: i + 2 + n_cells]])
            i += 1 + n_cells
        i += 1
    return out


def write_table(path, header, rows, fmt=None) -> None:
    """CSV with an optional per-value formatter; None values are left empty."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (fmt(v) if fmt else v) for v in row])


def write_profiles(profiles, labels, path) -> None:
    """Centerline profiles: column y, then u_x for each labelled run.

    ``profiles`` are (samples, 2) arrays of (y, u_x) sharing one y grid.
    """
    if len(profiles) != len(labels):
        raise ValueError("one label per profile required")
    if not profiles:
        raise ValueError("no profiles to write")
    y = np.asarray(profiles[0])[:, 0]
    for lab, prof in zip(labels, profiles):
        prof = np.asarray(prof)
        if prof.shape[0] != y.shape[0] or not np.array_equal(prof[:, 0], y):
            raise ValueError(f"profile {lab!r} uses a different sample grid")
    cols = [y] + [np.asarray(p)[:, 1] for p in profiles]
    write_table(path, ["y"] + list(labels), zip(*cols), fmt=_fmt)
