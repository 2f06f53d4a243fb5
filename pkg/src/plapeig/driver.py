"""Adaptive loop: solve, estimate, mark, refine, with logging and stopping.

Each loop solves the eigenvalue problem on the current mesh, computes the
residual indicators, checks the eigenvalue-change stopping rule (so the
final logged row always carries a matching estimator value), then marks a
bulk set and refines.  On polygonal domains the trial spaces are nested and
the eigenvalue column decreases monotonically; disk meshes snap new boundary
vertices to the circle, which trades nestedness for geometric fidelity.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import eigen, estimator, fem, io
from .fem import P1Function
from .mesh import Mesh, edge_table, generate_disk, generate_lshape, \
    generate_unit_square, prolong_vertex_values, refine
from .plap import DCWorkspace, DEFAULT_SEED

log = logging.getLogger(__name__)

_DOMAINS = ("square", "lshape", "disk")


@dataclass
class AfemConfig:
    """Parameters of an adaptive run.

    domain is one of square | lshape | disk | file:<path>; resolution is the
    cells-per-unit-length of the structured generators (bisection rounds for
    the disk) and is ignored for file meshes.  cold_start disables the
    warm-started eigensolve on refined meshes and reruns the full iteration
    including the torsion start on every level.
    """

    domain: str
    resolution: int = 13
    p: float = 2.0
    theta: float = 0.6
    eps_k: float = 1e-4
    eps_m: float = 1e-5
    eps_n: float = 1e-5
    max_loops: int = 30
    max_iiss: int = 200
    max_dc: int = 500
    seed: int = DEFAULT_SEED
    out_dir: str | None = None
    cold_start: bool = False

    def __post_init__(self):
        if not (self.domain in _DOMAINS or self.domain.startswith("file:")):
            raise ValueError(f"domain must be one of {_DOMAINS} or "
                             f"'file:<path>', got {self.domain!r}")
        if self.p <= 1:
            raise ValueError("p must exceed 1")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        for name in ("eps_k", "eps_m", "eps_n"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.resolution < 0 or (self.domain in ("square", "lshape")
                                   and self.resolution < 1):
            raise ValueError("resolution must be positive (nonnegative for "
                             "the disk)")
        for name in ("max_loops", "max_iiss", "max_dc"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass
class LogRow:
    """One adaptive loop: mesh size, eigenvalue estimates, estimator,
    iteration counts, marked-set size, and wall time."""

    k: int
    vertices: int
    elements: int
    mu: float
    lambda_iiss: float
    eta: float
    iiss_iters: int
    dc_iters: int
    marked: int
    seconds: float


@dataclass
class ConvergenceLog:
    rows: list[LogRow] = field(default_factory=list)
    stop_reason: str = ""

    def column(self, name: str) -> np.ndarray:
        if name not in {f.name for f in fields(LogRow)}:
            raise KeyError(name)
        return np.array([getattr(r, name) for r in self.rows])


def initial_mesh(config: AfemConfig) -> Mesh:
    """Construct the starting mesh for a configuration."""
    if config.domain == "square":
        return generate_unit_square(config.resolution)
    if config.domain == "lshape":
        return generate_lshape(config.resolution)
    if config.domain == "disk":
        return generate_disk(config.resolution)
    return io.load_mesh(config.domain[len("file:"):])


def run_afem(config: AfemConfig) -> ConvergenceLog:
    """Run the adaptive loop until the eigenvalue stabilizes or the loop cap
    is reached; returns the per-loop convergence log.

    When config.out_dir is set, every loop's mesh is written as mesh_<k>.vtk
    and the run finishes with eigenfunction.vtk and convergence.csv in that
    directory (also on solver failure, with the partial log)."""
    if config.out_dir is not None:
        os.makedirs(config.out_dir, exist_ok=True)
    mesh = initial_mesh(config)
    result = ConvergenceLog()
    u_warm: P1Function | None = None
    lam_warm: float | None = None
    mu_prev: float | None = None

    k = 0
    final_u: P1Function | None = None
    try:
        while True:
            t0 = time.perf_counter()
            ws = DCWorkspace(mesh)
            res = eigen.iiss(
                mesh, config.p, eps_m=config.eps_m, max_m=config.max_iiss,
                eps_n=config.eps_n, seed=config.seed + k, max_dc=config.max_dc,
                u0=u_warm, lambda0=lam_warm, workspace=ws)
            edges = edge_table(mesh)
            ind = estimator.estimate_all(mesh, edges, res.mu_rayleigh,
                                         res.u_lp, config.p)
            final_u = res.u_sup

            stop = None
            if mu_prev is not None and (abs(mu_prev - res.mu_rayleigh)
                                        / mu_prev < config.eps_k):
                stop = "eps_k"
            elif k >= config.max_loops:
                stop = "max_loops"

            marked = (np.array([], dtype=np.int64) if stop
                      else estimator.dorfler_mark(ind, config.theta))
            row = LogRow(
                k=k, vertices=mesh.num_vertices, elements=mesh.num_triangles,
                mu=res.mu_rayleigh, lambda_iiss=res.lambda_iiss,
                eta=ind.total_eta, iiss_iters=res.iiss_iterations,
                dc_iters=res.dc_iterations_total, marked=len(marked),
                seconds=time.perf_counter() - t0)
            result.rows.append(row)
            log.info("loop %d: vertices=%d mu=%.8g eta=%.4g marked=%d",
                     k, row.vertices, row.mu, row.eta, row.marked)
            if config.out_dir is not None:
                io.write_vtk(mesh, None,
                             f"{config.out_dir}/mesh_{k}.vtk")
            if stop:
                result.stop_reason = stop
                break

            mu_prev = res.mu_rayleigh
            fine = refine(mesh, marked)
            if not config.cold_start:
                u_warm = P1Function(fine, prolong_vertex_values(
                    fine, res.u_sup.coeffs))
                lam_warm = res.lambda_iiss
            mesh = fine
            k += 1
    except fem.SolverError as err:
        log.error("adaptive loop aborted at level %d: %s", k, err)
        result.rows.append(LogRow(
            k=k, vertices=mesh.num_vertices, elements=mesh.num_triangles,
            mu=float("nan"), lambda_iiss=float("nan"), eta=float("nan"),
            iiss_iters=0, dc_iters=0, marked=0, seconds=0.0))
        result.stop_reason = f"error: {err}"

    if config.out_dir is not None:
        if final_u is not None:
            io.write_vtk(final_u.mesh, final_u,
                         f"{config.out_dir}/eigenfunction.vtk")
        io.write_convergence_csv(result, f"{config.out_dir}/convergence.csv")
    return result
