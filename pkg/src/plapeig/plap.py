"""Splitting solver for the Dirichlet p-Laplacian problem.

Solves -div(|grad u|^{p-2} grad u) = f with u = 0 on the boundary by a
decomposition-coordination iteration: each sweep performs one linear Poisson
solve, a pointwise scalar resolvent that recovers the auxiliary flux, and a
multiplier-style correction of the coordination field.  The auxiliary fields
live in the space of piecewise-constant vectors, matching the gradients of
P1 trial functions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .fem import DEGREE5, DirichletFactor, P1Function, QuadRule
from .mesh import Mesh

log = logging.getLogger(__name__)

#: Default seed of the PCG64 generator drawing the random initial fields.
DEFAULT_SEED = 42


def resolvent(s: float, p: float) -> float:
    """Unique nonnegative root r of r^{p-1} + r = s.

    The left-hand side is strictly increasing on r >= 0, so the root exists
    and is unique for every s >= 0.  The result satisfies
    |r^{p-1} + r - s| <= 1e-13 * max(1, s).
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    return float(resolvent_many(np.array([s]), p)[0])


def resolvent_many(s: np.ndarray, p: float) -> np.ndarray:
    """Vectorized resolvent; safeguarded Newton with a bisection fallback.

    The root is bracketed in [0, min(s, s^{1/(p-1)})] (both bounds dominate
    it; the min avoids overflow for p close to 1).  For p < 2 the derivative
    blows up at 0, so iterations start at s/2 and the bracket keeps Newton
    away from the singularity.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("s must be finite and nonnegative")
    r = np.zeros_like(s)
    active = s > 0.0
    if not active.any():
        return r
    sv = s[active]
    hi = np.minimum(sv, sv ** (1.0 / (p - 1.0)))
    lo = np.zeros_like(sv)
    rr = np.minimum(0.5 * sv, hi)
    tol = 1e-13 * np.maximum(1.0, sv)
    done = np.zeros(sv.shape, dtype=bool)
    for _ in range(120):
        phi = rr ** (p - 1.0) + rr - sv
        done |= np.abs(phi) <= 0.25 * tol
        if done.all():
            break
        above = phi >= 0.0
        hi = np.where(~done & above, rr, hi)
        lo = np.where(~done & ~above, rr, lo)
        dphi = (p - 1.0) * rr ** (p - 2.0) + 1.0
        step = rr - phi / dphi
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        rr = np.where(done, rr, np.where(bad, 0.5 * (lo + hi), step))
    residual = np.abs(rr ** (p - 1.0) + rr - sv)
    if np.any(residual > tol):
        worst = float(residual.max())
        raise RuntimeError(f"resolvent iteration failed to converge "
                           f"(worst residual {worst:.3e})")
    r[active] = rr
    return r


def nu_update(w: np.ndarray, p: float) -> np.ndarray:
    """Solve |nu|^{p-2} nu + nu = w rowwise for the flux field nu.

    By radial symmetry nu is parallel to w with magnitude resolvent(|w|, p);
    zero rows stay zero.
    """
    w = np.asarray(w, dtype=np.float64)
    n = np.linalg.norm(w, axis=-1)
    r = resolvent_many(n, p)
    scale = np.zeros_like(n)
    nz = n > 0.0
    scale[nz] = r[nz] / n[nz]
    return scale[..., None] * w


@dataclass
class DCState:
    """Iteration state: current solution and the two auxiliary fields."""

    u: P1Function
    xi: np.ndarray
    nu: np.ndarray
    n: int
    rel_change: float


@dataclass
class DCReport:
    """Diagnostics of a decomposition-coordination run.

    consistency is the elementwise L^q mismatch between the coordination
    field xi and the flux |grad u|^{p-2} grad u; at the fixed point it
    vanishes.  xi and nu are the final auxiliary fields, reusable as a warm
    start for a follow-up solve on the same mesh.
    """

    iterations: int
    rel_change: float
    consistency: float
    converged: bool
    xi: np.ndarray
    nu: np.ndarray
    consistency_history: list = field(default_factory=list)


class DCWorkspace:
    """Per-mesh cache for repeated p-Laplacian solves.

    Holds the stiffness matrix, its factorized interior block, and the
    scatter operator mapping a piecewise-constant vector field g to the load
    contribution -sum_T |T| g . grad(phi_i).
    """

    def __init__(self, mesh: Mesh, quad: QuadRule = DEGREE5):
        self.mesh = mesh
        self.quad = quad
        self.stiffness = fem.assemble_stiffness(mesh)
        self.factor = DirichletFactor(self.stiffness, mesh.boundary_vertex)
        grads = fem.p1_gradients(mesh)
        areas = mesh.areas
        nt = mesh.num_triangles
        data = (areas[:, None, None] * grads)  # (nt, 3, 2)
        rows = np.broadcast_to(mesh.triangles[:, :, None], (nt, 3, 2))
        cols = np.broadcast_to(
            (2 * np.arange(nt))[:, None, None] + np.arange(2)[None, None, :],
            (nt, 3, 2))
        self._div = sp.coo_matrix(
            (data.ravel(), (rows.ravel(), cols.ravel())),
            shape=(mesh.num_vertices, 2 * nt)).tocsr()

    def g_load(self, g: np.ndarray) -> np.ndarray:
        """Load vector of the field term: -sum_T |T| g_T . grad(phi_i)."""
        return -(self._div @ g.ravel())

    def l2_norm(self, coeffs: np.ndarray) -> float:
        vals = coeffs[self.mesh.triangles] @ self.quad.points.T
        return float(np.sqrt(np.einsum("tq,q,t->", vals * vals,
                                       self.quad.weights, self.mesh.areas)))


def random_fields(mesh: Mesh, seed: int = DEFAULT_SEED) -> tuple[np.ndarray, np.ndarray]:
    """Initial auxiliary fields: every component i.i.d. uniform on (0, 0.5),
    drawn from a PCG64 generator with the given seed (xi first, then nu)."""
    rng = np.random.default_rng(seed)
    nt = mesh.num_triangles
    xi = rng.uniform(0.0, 0.5, size=(nt, 2))
    nu = rng.uniform(0.0, 0.5, size=(nt, 2))
    return xi, nu


def dc_solve(mesh: Mesh, f, p: float, eps_n: float = 1e-5, max_iter: int = 500,
             init: tuple[np.ndarray, np.ndarray] | None = None,
             seed: int = DEFAULT_SEED, quad: QuadRule = DEGREE5,
             workspace: DCWorkspace | None = None) -> tuple[P1Function, DCReport]:
    """Decomposition-coordination solve of the p-Laplacian Dirichlet problem.

    Iterates until the relative L2 change of the solution drops below eps_n
    (checked from the second sweep on; the change is taken as absolute if the
    previous iterate vanishes).  Hitting max_iter returns a report with
    converged=False rather than raising; the caller decides.

    init supplies the starting fields (xi, nu); by default they are drawn
    from the seeded generator of random_fields.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    if eps_n <= 0:
        raise ValueError("eps_n must be positive")
    ws = workspace if workspace is not None else DCWorkspace(mesh, quad)
    nt = mesh.num_triangles
    q = p / (p - 1.0)

    if init is None:
        xi, nu = random_fields(mesh, seed)
    else:
        xi, nu = (np.array(init[0], dtype=np.float64),
                  np.array(init[1], dtype=np.float64))
        if xi.shape != (nt, 2) or nu.shape != (nt, 2):
            raise ValueError("init fields must have one 2-vector per triangle")

    b_f = fem.assemble_rhs(mesh, f, quad=quad)
    state = DCState(u=P1Function(mesh, np.zeros(mesh.num_vertices)),
                    xi=xi, nu=nu, n=0, rel_change=np.inf)
    converged = False
    history: list[float] = []
    while state.n < max_iter:
        prev_coeffs = state.u.coeffs
        state.n += 1
        b = b_f + ws.g_load(state.xi - state.nu)
        u_new = P1Function(mesh, ws.factor.solve(b))
        gu = fem.grad(u_new)
        w = state.xi + gu
        state.nu = nu_update(w, p)
        state.xi = w - state.nu
        state.u = u_new

        sigma = fem.p_flux(gu, p)
        mismatch = np.linalg.norm(state.xi - sigma, axis=1)
        history.append(float(np.dot(mesh.areas, mismatch ** q) ** (1.0 / q)))

        if state.n >= 2:
            diff = ws.l2_norm(u_new.coeffs - prev_coeffs)
            base = ws.l2_norm(prev_coeffs)
            state.rel_change = diff / base if base > 0.0 else diff
            if state.rel_change < eps_n:
                converged = True
                break

    if not converged:
        log.warning("dc_solve hit max_iter=%d at relative change %.3e",
                    max_iter, state.rel_change)
    if len(history) >= 3 and not (history[-1] <= history[-2] <= history[-3]):
        log.debug("consistency residual not decreasing over final sweeps: %s",
                  history[-3:])

    report = DCReport(iterations=state.n, rel_change=float(state.rel_change),
                      consistency=history[-1], converged=converged,
                      xi=state.xi, nu=state.nu, consistency_history=history)
    return state.u, report
