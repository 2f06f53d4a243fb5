"""File formats: ASCII meshes, legacy VTK output, and convergence CSV.

The mesh format is line-oriented: a header `nv nt`, then nv vertex lines
`x y b` with b in {0, 1} flagging boundary vertices, then nt triangle lines
`i0 i1 i2` of 0-based vertex indices with the refinement edge opposite i0.
Floats are written with 17 significant digits, which round-trips IEEE
doubles exactly.
"""

from __future__ import annotations

import os
from dataclasses import fields

import numpy as np

from .mesh import Mesh
from .fem import P1Function

CSV_HEADER = "k,vertices,elements,mu,lambda_iiss,eta,iiss_iters,dc_iters,marked,seconds"


class MeshFormatError(ValueError):
    """Malformed mesh file; carries the 1-based offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def save_mesh(mesh: Mesh, path: str) -> None:
    """Write a mesh in the ASCII format (exact decimal round-trip)."""
    lines = [f"{mesh.num_vertices} {mesh.num_triangles}"]
    for (x, y), b in zip(mesh.vertices, mesh.boundary_vertex):
        lines.append(f"{_fmt(x)} {_fmt(y)} {1 if b else 0}")
    for t in mesh.triangles:
        lines.append(f"{t[0]} {t[1]} {t[2]}")
    with open(path, "w", encoding="ascii") as fp:
        fp.write("\n".join(lines) + "\n")


def load_mesh(path: str) -> Mesh:
    """Read a mesh written by save_mesh; raises MeshFormatError with the
    offending line number on malformed input."""
    with open(path, "r", encoding="ascii") as fp:
        raw = fp.read().splitlines()

    def need(lineno: int) -> str:
        if lineno > len(raw):
            raise MeshFormatError("unexpected end of file", lineno)
        return raw[lineno - 1]

    head = need(1).split()
    if len(head) != 2:
        raise MeshFormatError("expected header 'nv nt'", 1)
    try:
        nv, nt = int(head[0]), int(head[1])
    except ValueError:
        raise MeshFormatError("header counts must be integers", 1) from None
    if nv < 3 or nt < 1:
        raise MeshFormatError("mesh must have at least 3 vertices and 1 "
                              "triangle", 1)

    vertices = np.empty((nv, 2))
    boundary = np.empty(nv, dtype=bool)
    for i in range(nv):
        lineno = 2 + i
        parts = need(lineno).split()
        if len(parts) != 3:
            raise MeshFormatError("expected 'x y b'", lineno)
        try:
            vertices[i] = (float(parts[0]), float(parts[1]))
        except ValueError:
            raise MeshFormatError("bad coordinate", lineno) from None
        if parts[2] not in ("0", "1"):
            raise MeshFormatError("boundary flag must be 0 or 1", lineno)
        boundary[i] = parts[2] == "1"

    triangles = np.empty((nt, 3), dtype=np.int64)
    for i in range(nt):
        lineno = 2 + nv + i
        parts = need(lineno).split()
        if len(parts) != 3:
            raise MeshFormatError("expected 'i0 i1 i2'", lineno)
        try:
            idx = [int(s) for s in parts]
        except ValueError:
            raise MeshFormatError("bad vertex index", lineno) from None
        if any(j < 0 or j >= nv for j in idx):
            raise MeshFormatError(f"vertex index out of range [0, {nv})",
                                  lineno)
        triangles[i] = idx

    return Mesh(vertices=vertices, triangles=triangles,
                boundary_vertex=boundary,
                generation=np.zeros(nt, dtype=np.int64),
                parent=np.full(nt, -1, dtype=np.int64))


def write_vtk(mesh: Mesh, u: P1Function | None, path: str) -> None:
    """Write a legacy ASCII VTK unstructured grid, optionally with a vertex
    scalar field named u."""
    lines = [
        "# vtk DataFile Version 3.0",
        "plapeig mesh",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_vertices} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    lines.append(f"CELLS {mesh.num_triangles} {4 * mesh.num_triangles}")
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    lines.append(f"CELL_TYPES {mesh.num_triangles}")
    lines.extend(["5"] * mesh.num_triangles)
    if u is not None:
        if len(u.coeffs) != mesh.num_vertices:
            raise ValueError("field size does not match the mesh")
        lines.append(f"POINT_DATA {mesh.num_vertices}")
        lines.append("SCALARS u double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in u.coeffs)
    with open(path, "w", encoding="ascii") as fp:
        fp.write("\n".join(lines) + "\n")


def write_convergence_csv(log, path: str) -> None:
    """Write a convergence log; floats use 17 significant digits so parsing
    the file reproduces them bit-exactly."""
    lines = [CSV_HEADER]
    for r in log.rows:
        lines.append(",".join([
            str(r.k), str(r.vertices), str(r.elements),
            _fmt(r.mu), _fmt(r.lambda_iiss), _fmt(r.eta),
            str(r.iiss_iters), str(r.dc_iters), str(r.marked),
            _fmt(r.seconds),
        ]))
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="ascii") as fp:
        fp.write("\n".join(lines) + "\n")


def read_convergence_csv(path: str):
    """Parse a convergence CSV back into a ConvergenceLog (stop_reason is
    not stored in the file and comes back empty)."""
    from .driver import ConvergenceLog, LogRow  # local import, no cycle at module load

    with open(path, "r", encoding="ascii") as fp:
        raw = fp.read().splitlines()
    if not raw or raw[0] != CSV_HEADER:
        raise ValueError("unrecognized convergence CSV header")
    out = ConvergenceLog()
    types = [int, int, int, float, float, float, int, int, int, float]
    names = [f.name for f in fields(LogRow)]
    for line in raw[1:]:
        parts = line.split(",")
        if len(parts) != len(types):
            raise ValueError(f"malformed CSV row: {line!r}")
        out.rows.append(LogRow(**{n: t(s) for n, t, s
                                  in zip(names, types, parts)}))
    return out
