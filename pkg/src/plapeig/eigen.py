"""First Dirichlet eigenpair of the p-Laplacian by normalized inverse iteration.

Starting from the torsion solution of -div(|grad u|^{p-2} grad u) = 1, each
sweep solves the same quasilinear problem with right-hand side
(max(u, 0) / ||u||_inf)^{p-1} built from the previous iterate and reads off
the eigenvalue estimate 1 / ||u||_inf^{p-1}.  The iteration stops once the
relative eigenvalue change drops below a tolerance.  The headline eigenvalue
reported alongside is the Rayleigh quotient of the L^p-normalized iterate,
which bounds the continuous first eigenvalue from above on conforming
meshes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fem, plap
from .fem import DEGREE5, P1Function, QuadRule, SolverError
from .mesh import Mesh
from .plap import DCWorkspace, DEFAULT_SEED

log = logging.getLogger(__name__)

#: Vertex values of eigenfunction iterates are allowed to undershoot zero by
#: this much before the final result is considered defective.
NEGATIVITY_TOL = 1e-10


@dataclass
class EigenResult:
    """First-eigenpair approximation on a fixed mesh.

    lambda_iiss         eigenvalue from the sup-norm normalization
    u_sup               eigenfunction scaled to unit sup norm
    u_lp                eigenfunction scaled to unit L^p norm
    mu_rayleigh         Rayleigh quotient of u_lp (the certified upper bound)
    iiss_iterations     inverse-iteration sweeps performed
    dc_iterations_total all inner splitting sweeps, torsion included
    converged           eigenvalue change fell below tolerance
    lambda_history      lambda after every sweep, starting value included
    min_vertex_value    most negative vertex value seen across iterates
    """

    lambda_iiss: float
    u_sup: P1Function
    u_lp: P1Function
    mu_rayleigh: float
    iiss_iterations: int
    dc_iterations_total: int
    converged: bool
    lambda_history: list = field(default_factory=list)
    min_vertex_value: float = 0.0


def torsion(mesh: Mesh, p: float, eps_n: float = 1e-5, seed: int = DEFAULT_SEED,
            max_dc: int = 500, quad: QuadRule = DEGREE5,
            workspace: DCWorkspace | None = None) -> P1Function:
    """Solution of -div(|grad u|^{p-2} grad u) = 1 with zero boundary data."""
    u, report = plap.dc_solve(mesh, 1.0, p, eps_n=eps_n, max_iter=max_dc,
                              seed=seed, quad=quad, workspace=workspace)
    if not report.converged:
        raise SolverError(f"torsion solve did not converge within {max_dc} "
                          f"sweeps (relative change {report.rel_change:.3e})",
                          residual=report.rel_change)
    return u


def iiss(mesh: Mesh, p: float, eps_m: float = 1e-5, max_m: int = 200,
         eps_n: float = 1e-5, seed: int = DEFAULT_SEED, max_dc: int = 500,
         u0: P1Function | None = None, lambda0: float | None = None,
         quad: QuadRule = DEGREE5,
         workspace: DCWorkspace | None = None) -> EigenResult:
    """Inverse power iteration for the first eigenpair.

    With u0 given, the torsion start is skipped and the iteration proceeds
    from u0 (optionally with lambda0 seeding the stopping test); this is how
    the adaptive driver warm-starts on refined meshes.  The first inner
    solve of a call always uses the seeded random fields; later inner solves
    reuse the previous sweep's auxiliary fields.
    """
    if eps_m <= 0:
        raise ValueError("eps_m must be positive")
    if max_m < 1:
        raise ValueError("max_m must be at least 1")
    if not np.any(~mesh.boundary_vertex):
        raise ValueError("mesh has no interior vertices; the trial space is "
                         "trivial")
    ws = workspace if workspace is not None else DCWorkspace(mesh, quad)

    dc_total = 0
    warm = None
    if u0 is None:
        u, report = plap.dc_solve(mesh, 1.0, p, eps_n=eps_n, max_iter=max_dc,
                                  seed=seed, quad=quad, workspace=ws)
        dc_total += report.iterations
        if not report.converged:
            raise SolverError("torsion start did not converge "
                              f"(relative change {report.rel_change:.3e})",
                              residual=report.rel_change)
        warm = (report.xi, report.nu)
    else:
        if u0.mesh is not mesh:
            raise ValueError("u0 must live on the given mesh")
        u = u0

    min_vertex = float(u.coeffs.min())
    s = fem.sup_norm(u)
    if s == 0.0:
        raise SolverError("starting iterate is identically zero")
    lam_prev = lambda0 if lambda0 is not None else 1.0 / s ** (p - 1.0)
    history = [float(lam_prev)]

    converged = False
    lam = lam_prev
    m = 0
    while m < max_m:
        m += 1
        s = fem.sup_norm(u)
        vals = fem.p1_at_quad(u, quad)
        f_vals = (np.maximum(vals, 0.0) / s) ** (p - 1.0)
        u_new, report = plap.dc_solve(mesh, f_vals, p, eps_n=eps_n,
                                      max_iter=max_dc,
                                      init=warm, seed=seed, quad=quad,
                                      workspace=ws)
        dc_total += report.iterations
        if not report.converged:
            raise SolverError(f"inner splitting solve stalled at sweep m={m}, "
                              f"lambda={lam:.8g} (relative change "
                              f"{report.rel_change:.3e})",
                              residual=report.rel_change)
        warm = (report.xi, report.nu)
        u = u_new
        min_vertex = min(min_vertex, float(u.coeffs.min()))
        lam = 1.0 / fem.sup_norm(u) ** (p - 1.0)
        history.append(float(lam))
        if abs(lam - lam_prev) / abs(lam_prev) < eps_m:
            converged = True
            break
        lam_prev = lam

    if min_vertex < -NEGATIVITY_TOL:
        log.warning("eigenfunction iterates undershot zero by %.3e", -min_vertex)

    s = fem.sup_norm(u)
    u_sup = P1Function(mesh, u.coeffs / s)
    lpn = fem.lp_norm(u_sup, p, quad)
    u_lp = P1Function(mesh, u_sup.coeffs / lpn)
    mu = fem.rayleigh(u_lp, p, quad)
    return EigenResult(
        lambda_iiss=float(lam),
        u_sup=u_sup,
        u_lp=u_lp,
        mu_rayleigh=float(mu),
        iiss_iterations=m,
        dc_iterations_total=dc_total,
        converged=converged,
        lambda_history=history,
        min_vertex_value=min_vertex,
    )
