"""Residual error indicator and bulk marking for the eigenvalue iteration.

The indicator of an element combines the q-th power of the scaled element
residual mu |u|^{p-2} u with the flux jumps of |grad u|^{p-2} grad u across
its interior edges, q = p/(p-1) being the conjugate exponent.  Because
(p-1) q = p, the element term collapses to h_T^q mu^q int_T |u|^p, which is
what gets evaluated; the jump term is exact since the flux is constant per
element.  Note the asymmetry of the size weights: the element term carries
h_T^q while each edge term carries a single power of h_F.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .fem import DEGREE5, P1Function, QuadRule
from .mesh import EdgeTable, Mesh


@dataclass(frozen=True)
class IndicatorSet:
    """Per-element error indicators (already raised to the q-th power).

    total_eta is the q-root of the sum; argmax_element attains the largest
    per-element value (smallest index on ties).
    """

    eta_q: np.ndarray
    total_eta: float
    q: float
    mu: float
    argmax_element: int

    def __post_init__(self):
        e = np.ascontiguousarray(self.eta_q, dtype=np.float64)
        e.setflags(write=False)
        object.__setattr__(self, "eta_q", e)


def _element_terms(mesh: Mesh, mu: float, u: P1Function, p: float,
                   quad: QuadRule) -> np.ndarray:
    """h_T^q |mu|^q int_T |u|^p for every element."""
    q = p / (p - 1.0)
    vals = fem.p1_at_quad(u, quad)
    int_up = mesh.areas * (np.abs(vals) ** p @ quad.weights)
    h_t = np.sqrt(mesh.areas)
    return h_t ** q * abs(mu) ** q * int_up


def _jump_terms(mesh: Mesh, edges: EdgeTable, u: P1Function,
                p: float) -> np.ndarray:
    """h_F |J_F|^q |F| for every interior edge (the flux jump J_F is
    constant along the edge, so integration is exact)."""
    q = p / (p - 1.0)
    sigma = fem.p_flux(fem.grad(u), p)
    jump = np.einsum("ed,ed->e",
                     sigma[edges.int_tri_plus] - sigma[edges.int_tri_minus],
                     edges.int_normals)
    return edges.int_lengths ** 2 * np.abs(jump) ** q


def estimate_all(mesh: Mesh, edges: EdgeTable, mu: float, u: P1Function,
                 p: float, quad: QuadRule = DEGREE5) -> IndicatorSet:
    """Indicator of every element; each interior edge contributes its jump
    term to both adjacent elements."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    eta = _element_terms(mesh, mu, u, p, quad)
    jumps = _jump_terms(mesh, edges, u, p)
    np.add.at(eta, edges.int_tri_plus, jumps)
    np.add.at(eta, edges.int_tri_minus, jumps)
    q = p / (p - 1.0)
    return IndicatorSet(
        eta_q=eta,
        total_eta=float(eta.sum() ** (1.0 / q)),
        q=q,
        mu=float(mu),
        argmax_element=int(np.argmax(eta)),
    )


def element_indicator(mesh: Mesh, edges: EdgeTable, mu: float, u: P1Function,
                      T: int, p: float, quad: QuadRule = DEGREE5) -> float:
    """Indicator (q-th power) of a single element."""
    if not 0 <= T < mesh.num_triangles:
        raise ValueError(f"element index {T} out of range")
    value = float(_element_terms(mesh, mu, u, p, quad)[T])
    jumps = _jump_terms(mesh, edges, u, p)
    mine = (edges.int_tri_plus == T) | (edges.int_tri_minus == T)
    return value + float(jumps[mine].sum())


def dorfler_mark(ind: IndicatorSet, theta: float) -> np.ndarray:
    """Smallest greedy bulk set: descending-indicator prefix whose summed
    eta_q reaches theta^q times the total (equivalently, whose estimator
    reaches theta times the total estimator).

    Ties are broken by ascending element index.  The element with the
    largest indicator is always included; if all indicators vanish, it is
    returned alone so refinement still makes progress.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    eta = ind.eta_q
    order = np.argsort(-eta, kind="stable")
    csum = np.cumsum(eta[order])
    total = csum[-1]
    if total <= 0.0:
        return np.array([ind.argmax_element], dtype=np.int64)
    target = theta ** ind.q * total
    k = int(np.searchsorted(csum, target, side="left"))
    k = min(k, len(eta) - 1)
    return np.sort(order[:k + 1])
