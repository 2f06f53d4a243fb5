"""P1 finite-element primitives on triangle meshes.

Covers quadrature on the reference triangle, stiffness and load assembly,
homogeneous-Dirichlet solves, elementwise gradients, and the p-dependent
norms building the Rayleigh quotient.  Integrands like |u|^p with fractional
p are handled by a degree-5 symmetric rule; everything polynomial of degree
at most 5 is integrated exactly.

Piecewise-constant vector fields (gradients, fluxes, the splitting solver's
auxiliary fields) are plain (nt, 2) arrays, one 2-vector per triangle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh


class SolverError(RuntimeError):
    """Linear solve failed to reach its residual tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class QuadRule:
    """Quadrature on the reference triangle in barycentric coordinates.

    Weights sum to one; an integral over a physical triangle T is
    |T| * sum(w_q * f(x_q)).
    """

    points: np.ndarray   # (nq, 3) barycentric
    weights: np.ndarray  # (nq,)
    degree: int

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def degree5(cls) -> "QuadRule":
        """Symmetric 7-point rule, exact for polynomials of degree 5."""
        s15 = np.sqrt(15.0)
        a1, b1 = (9.0 + 2.0 * s15) / 21.0, (6.0 - s15) / 21.0
        a2, b2 = (9.0 - 2.0 * s15) / 21.0, (6.0 + s15) / 21.0
        w0 = 9.0 / 40.0
        w1 = (155.0 - s15) / 1200.0
        w2 = (155.0 + s15) / 1200.0
        pts = np.array([
            [1 / 3, 1 / 3, 1 / 3],
            [a1, b1, b1], [b1, a1, b1], [b1, b1, a1],
            [a2, b2, b2], [b2, a2, b2], [b2, b2, a2],
        ])
        w = np.array([w0, w1, w1, w1, w2, w2, w2])
        return cls(points=pts, weights=w, degree=5)


DEGREE5 = QuadRule.degree5()


@dataclass(frozen=True)
class P1Function:
    """Continuous piecewise-linear function: one coefficient per vertex."""

    mesh: Mesh
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(self.coeffs, dtype=np.float64)
        if c.shape != (self.mesh.num_vertices,):
            raise ValueError("coefficient count must match the vertex count")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)


def p1_gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the three nodal basis functions per triangle, (nt, 3, 2)."""
    pts = mesh.vertices[mesh.triangles]      # (nt, 3, 2)
    g = np.empty_like(pts)
    for i in range(3):
        e = pts[:, (i + 2) % 3] - pts[:, (i + 1) % 3]  # edge opposite vertex i
        g[:, i, 0] = -e[:, 1]
        g[:, i, 1] = e[:, 0]
    g /= (2.0 * mesh.areas)[:, None, None]
    return g


def quad_points(mesh: Mesh, quad: QuadRule = DEGREE5) -> np.ndarray:
    """Physical quadrature point coordinates, (nt, nq, 2)."""
    pts = mesh.vertices[mesh.triangles]           # (nt, 3, 2)
    return np.einsum("qj,tjd->tqd", quad.points, pts)


def p1_at_quad(u: P1Function, quad: QuadRule = DEGREE5) -> np.ndarray:
    """Values of u at the quadrature points of every triangle, (nt, nq)."""
    nodal = u.coeffs[u.mesh.triangles]            # (nt, 3)
    return nodal @ quad.points.T


def field_at_quad(mesh: Mesh, f, quad: QuadRule = DEGREE5) -> np.ndarray:
    """Coerce a scalar field to values at quadrature points, (nt, nq).

    Accepts a constant, a vectorized callable f(x, y), an (nt, nq) array, or
    an (nt,) array of per-element constants.
    """
    nt, nq = mesh.num_triangles, len(quad.weights)
    if np.isscalar(f):
        return np.full((nt, nq), float(f))
    if callable(f):
        xy = quad_points(mesh, quad)
        vals = np.asarray(f(xy[..., 0], xy[..., 1]), dtype=np.float64)
        return np.broadcast_to(vals, (nt, nq)).copy()
    arr = np.asarray(f, dtype=np.float64)
    if arr.shape == (nt, nq):
        return arr
    if arr.shape == (nt,):
        return np.broadcast_to(arr[:, None], (nt, nq)).copy()
    raise ValueError(f"cannot interpret field of shape {arr.shape}; "
                     f"expected scalar, callable, ({nt},) or ({nt}, {nq})")


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """Stiffness matrix K_ij = sum_T |T| grad(phi_i) . grad(phi_j).

    Symmetric with zero row sums (constants lie in the kernel); positive
    definite once boundary rows/columns are eliminated.
    """
    areas = mesh.areas  # raises on degenerate triangles
    g = p1_gradients(mesh)
    local = np.einsum("tid,tjd->tij", g, g) * areas[:, None, None]
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    nv = mesh.num_vertices
    K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv))
    return K.tocsr()


def assemble_rhs(mesh: Mesh, f, g=None, quad: QuadRule = DEGREE5) -> np.ndarray:
    """Load vector b_i = sum_T [ int_T f phi_i - |T| g_T . grad(phi_i) ].

    f is a scalar field (see field_at_quad); g is an optional piecewise
    constant vector field, one 2-vector per triangle.
    """
    fq = field_at_quad(mesh, f, quad)
    areas = mesh.areas
    # int_T f phi_i by quadrature; phi_i at a quad point is its barycentric
    # coordinate.
    contrib = np.einsum("tq,qi,t->ti", fq, quad.points * quad.weights[:, None],
                        areas)
    if g is not None:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (mesh.num_triangles, 2):
            raise ValueError("g must have one 2-vector per triangle")
        grads = p1_gradients(mesh)
        contrib = contrib - areas[:, None] * np.einsum("td,tid->ti", g, grads)
    b = np.zeros(mesh.num_vertices)
    np.add.at(b, mesh.triangles.ravel(), contrib.ravel())
    return b


def _interior_system(K: sp.spmatrix, b: np.ndarray, boundary: np.ndarray):
    boundary = np.asarray(boundary, dtype=bool)
    if K.shape[0] != K.shape[1] or K.shape[0] != len(boundary):
        raise ValueError("matrix and boundary mask sizes disagree")
    if len(b) != len(boundary):
        raise ValueError("right-hand side and boundary mask sizes disagree")
    idx = np.nonzero(~boundary)[0]
    A = K.tocsr()[idx][:, idx]
    return idx, A, np.asarray(b, dtype=np.float64)[idx]


def _pcg(A: sp.csr_matrix, b: np.ndarray, rtol: float, maxiter: int):
    """Conjugate gradients with Jacobi preconditioning."""
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("system matrix has a non-positive diagonal entry")
    inv_d = 1.0 / d
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0
    z = inv_d * r
    p = z
    rz = r @ z
    for k in range(maxiter):
        if np.linalg.norm(r) <= rtol * bnorm:
            return x, k
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x = x + alpha * p
        r = r - alpha * Ap
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(b - A @ x) / bnorm
    if res <= rtol:
        return x, maxiter
    raise SolverError(f"conjugate gradients stalled at relative residual "
                      f"{res:.3e} after {maxiter} iterations", residual=res)


def solve_dirichlet(K: sp.spmatrix, b: np.ndarray, boundary: np.ndarray,
                    rtol: float = 1e-10) -> np.ndarray:
    """Solve K u = b on interior vertices with u = 0 on boundary vertices.

    Uses Jacobi-preconditioned conjugate gradients on the interior block with
    an iteration cap of 20 N; guarantees a relative residual of at most rtol
    or raises SolverError carrying the achieved residual.
    """
    idx, A, bi = _interior_system(K, b, boundary)
    u = np.zeros(len(boundary))
    if len(idx) == 0:
        return u
    x, _ = _pcg(A, bi, rtol, maxiter=max(20 * len(idx), 50))
    u[idx] = x
    return u


def solve_dirichlet_dense(K: sp.spmatrix, b: np.ndarray,
                          boundary: np.ndarray) -> np.ndarray:
    """Direct dense solve of the interior system; oracle for small meshes."""
    idx, A, bi = _interior_system(K, b, boundary)
    if len(idx) > 500:
        raise ValueError("dense fallback is limited to 500 unknowns")
    u = np.zeros(len(boundary))
    if len(idx):
        u[idx] = np.linalg.solve(A.toarray(), bi)
    return u


class DirichletFactor:
    """Cached sparse LU factorization of the interior stiffness block.

    Serves the repeated solves of the nonlinear iteration: one factorization
    per mesh, then one cheap triangular solve per right-hand side.  Every
    solve is verified against the same relative-residual contract as
    solve_dirichlet.
    """

    def __init__(self, K: sp.spmatrix, boundary: np.ndarray, rtol: float = 1e-10):
        self.idx, self._A, _ = _interior_system(K, np.zeros(K.shape[0]), boundary)
        self.n = K.shape[0]
        self.rtol = rtol
        self._lu = spla.splu(self._A.tocsc()) if len(self.idx) else None

    def solve(self, b: np.ndarray) -> np.ndarray:
        u = np.zeros(self.n)
        if self._lu is None:
            return u
        bi = np.asarray(b, dtype=np.float64)[self.idx]
        bnorm = np.linalg.norm(bi)
        if bnorm == 0.0:
            return u
        x = self._lu.solve(bi)
        res = np.linalg.norm(bi - self._A @ x) / bnorm
        if res > self.rtol:
            raise SolverError(f"factorized solve exceeded residual tolerance: "
                              f"{res:.3e}", residual=res)
        u[self.idx] = x
        return u


def grad(u: P1Function) -> np.ndarray:
    """Elementwise gradient of a P1 function, (nt, 2)."""
    g = p1_gradients(u.mesh)
    nodal = u.coeffs[u.mesh.triangles]
    return np.einsum("ti,tid->td", nodal, g)


def p_flux(field: np.ndarray, p: float) -> np.ndarray:
    """Nonlinear flux |w|^{p-2} w of a piecewise-constant vector field.

    Zero rows map to zero for every p > 1 (the singular factor for p < 2 is
    never evaluated at zero).
    """
    w = np.asarray(field, dtype=np.float64)
    n = np.linalg.norm(w, axis=-1)
    fac = np.zeros_like(n)
    nz = n > 0.0
    fac[nz] = n[nz] ** (p - 2.0)
    return fac[..., None] * w


def lp_norm(u: P1Function, p: float, quad: QuadRule = DEGREE5) -> float:
    """L^p norm of u by elementwise quadrature."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    vals = p1_at_quad(u, quad)
    total = float(np.einsum("tq,q,t->", np.abs(vals) ** p, quad.weights,
                            u.mesh.areas))
    return total ** (1.0 / p)


def sup_norm(u: P1Function) -> float:
    """Max-norm of u; for P1 functions the maximum sits at a vertex."""
    return float(np.max(np.abs(u.coeffs))) if len(u.coeffs) else 0.0


def w1p_seminorm_p(u: P1Function, p: float) -> float:
    """The p-th power of the W^{1,p} seminorm: sum_T |T| |grad u|_T|^p (exact)."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    gn = np.linalg.norm(grad(u), axis=1)
    return float(np.dot(u.mesh.areas, gn ** p))


def rayleigh(u: P1Function, p: float, quad: QuadRule = DEGREE5) -> float:
    """Rayleigh quotient int |grad u|^p / int |u|^p."""
    denom = lp_norm(u, p, quad)
    if denom == 0.0:
        raise ValueError("Rayleigh quotient undefined for the zero function")
    return w1p_seminorm_p(u, p) / denom ** p
