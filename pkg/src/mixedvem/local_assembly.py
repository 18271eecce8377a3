"""Element matrices of the mixed virtual element method.

Local degrees of freedom are ordered edge dofs first (per local edge, k+1
values at the Gauss points ordered along the global edge direction), then the
internal gradient moments, then the internal complement moments.  Edge dofs are
defined with the element's *outward* normal; the global assembler converts to
the global normal with the per-edge sign.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConditioningError, InvalidCoefficientError, InvalidStateError
from .mesh import DIRICHLET, ElementGeometry, PolygonalMesh
from .problems import ProblemData
from .quadrature import QuadratureRule, edge_rule, interior_degree, polygon_rule
from .scalar_basis import ScalarBasis, build_scalar_basis, dim_p
from .vector_basis import (
    Approach,
    VectorBasisOperators,
    build_vector_basis,
    dim_grad,
    dim_perp,
    gbasis_vandermonde,
    mass_matrix_g,
)


@dataclass(frozen=True)
class DofLayout:
    n_edges: int
    k: int

    @property
    def n_edge_dofs(self) -> int:
        return self.n_edges * (self.k + 1)

    @property
    def n_grad(self) -> int:
        return dim_grad(self.k - 1)

    @property
    def n_perp(self) -> int:
        return dim_perp(self.k)

    @property
    def n_internal(self) -> int:
        return self.n_grad + self.n_perp

    @property
    def n_dofs(self) -> int:
        return self.n_edge_dofs + self.n_internal

    @property
    def grad_slice(self) -> slice:
        return slice(self.n_edge_dofs, self.n_edge_dofs + self.n_grad)

    @property
    def perp_slice(self) -> slice:
        return slice(self.n_edge_dofs + self.n_grad, self.n_dofs)


@dataclass
class ElementContext:
    """Everything about one element that does not depend on problem data."""

    geom: ElementGeometry
    k: int
    approach: Approach
    layout: DofLayout
    rule: QuadratureRule
    basis: ScalarBasis
    ops: VectorBasisOperators
    pV: np.ndarray  # degree k at interior points
    pV1: np.ndarray  # degree k+1 at interior points
    gV: np.ndarray  # vector basis at interior points, x over y
    b_points: np.ndarray
    b_weights: np.ndarray
    b_normals: np.ndarray  # outward, one per boundary point
    b_edge: np.ndarray  # local edge index of each boundary point
    pVb: np.ndarray
    pVb1: np.ndarray
    G: np.ndarray
    # shape-only matrices, shared with translated copies
    shared: dict = field(default_factory=dict, repr=False)

    @property
    def area(self) -> float:
        return self.geom.area

    @property
    def n(self) -> int:
        return dim_p(self.k)

    def gram(self, V: np.ndarray) -> np.ndarray:
        return V.T @ (self.rule.weights[:, None] * V)


def build_context(
    geom: ElementGeometry, k: int, approach: Approach, quad_degree: Optional[int] = None
) -> ElementContext:
    approach = Approach(approach)
    rule = polygon_rule(geom.vertices, geom.centroid, quad_degree or interior_degree(k))
    basis = build_scalar_basis(
        approach.scalar, geom.centroid, geom.diameter, k + 1, rule.points, rule.weights
    )
    ops = build_vector_basis(approach, basis.derivative_matrices(k), k)

    pV1 = basis.vandermonde(rule.points, k + 1)
    pV = pV1[:, : dim_p(k)]

    pts, wts, nrm, eid = [], [], [], []
    for i in range(geom.n_edges):
        er = edge_rule(geom.edge_starts[i], geom.edge_ends[i], k)
        pts.append(er.points)
        wts.append(er.weights)
        nrm.append(np.repeat(geom.normals[i][None, :], k + 1, axis=0))
        eid.append(np.full(k + 1, i))
    b_points = np.vstack(pts)
    pVb1 = basis.vandermonde(b_points, k + 1)

    return ElementContext(
        geom=geom,
        k=k,
        approach=approach,
        layout=DofLayout(geom.n_edges, k),
        rule=rule,
        basis=basis,
        ops=ops,
        pV=pV,
        pV1=pV1,
        gV=gbasis_vandermonde(ops, pV),
        b_points=b_points,
        b_weights=np.concatenate(wts),
        b_normals=np.vstack(nrm),
        b_edge=np.concatenate(eid),
        pVb=pVb1[:, : dim_p(k)],
        pVb1=pVb1,
        G=mass_matrix_g(ops, rule.weights, pV),
    )


def shape_key(geom: ElementGeometry) -> tuple:
    """Identifies cells that are exact translates of each other (to ~1e-12 h),
    including the global direction of each local edge."""
    rel = (geom.vertices - geom.centroid) / geom.diameter
    forward = np.all(geom.edge_starts == geom.vertices, axis=1)
    return (
        len(rel),
        float(f"{geom.diameter:.12e}"),
        tuple(np.round(rel.ravel(), 12) + 0.0),
        tuple(bool(f) for f in forward),
    )


def translate_context(ctx: ElementContext, geom: ElementGeometry) -> ElementContext:
    """Reuse the matrices of ``ctx`` for a translated copy of its cell."""
    shift = geom.centroid - ctx.geom.centroid
    rule = QuadratureRule(ctx.rule.points + shift, ctx.rule.weights, ctx.rule.degree)
    return replace(
        ctx,
        geom=geom,
        rule=rule,
        basis=replace(ctx.basis, centroid=geom.centroid),
        b_points=ctx.b_points + shift,
    )


class ContextCache:
    """Builds element contexts, sharing work between congruent translated cells.

    Scaled monomials are centred at the centroid and scaled by the diameter, so
    every basis and geometric matrix depends only on the cell's shape.  The
    first cell of each shape class seen becomes its reference; ``prime`` fixes
    that choice in cell order so threaded assembly reproduces a serial run.
    """

    def __init__(self, k: int, approach: Approach, quad_degree: Optional[int] = None,
                 reuse: bool = True):
        self.k = k
        self.approach = Approach(approach)
        self.quad_degree = quad_degree
        self.reuse = reuse
        self._store: dict[tuple, ElementContext] = {}
        self._lock = threading.Lock()

    def _reference(self, key: tuple, geom: ElementGeometry) -> tuple[ElementContext, bool]:
        ref = self._store.get(key)
        if ref is not None:
            return ref, False
        with self._lock:
            ref = self._store.get(key)
            if ref is None:
                ref = self._store[key] = build_context(geom, self.k, self.approach, self.quad_degree)
                return ref, True
        return ref, False

    def __call__(self, geom: ElementGeometry) -> ElementContext:
        if not self.reuse:
            return build_context(geom, self.k, self.approach, self.quad_degree)
        ref, fresh = self._reference(shape_key(geom), geom)
        return ref if fresh and ref.geom is geom else translate_context(ref, geom)

    def prime(self, mesh: PolygonalMesh) -> None:
        """Build the reference context of every shape class, in cell order."""
        if self.reuse:
            for c in range(mesh.n_cells):
                geom = mesh.geometry(c)
                self._reference(shape_key(geom), geom)

    def __len__(self) -> int:
        return len(self._store)


def assemble_W(ctx: ElementContext) -> np.ndarray:
    """Divergence pairing W[a, i] = int_E div(phi_i) p_a."""
    lay, n = ctx.layout, ctx.n
    W = np.zeros((n, lay.n_dofs))
    if lay.n_grad:
        if ctx.approach is Approach.ORTHO:
            if ctx.ops.R_nabla is None:
                raise InvalidStateError("orthonormal approach without gradient transform")
            # inv(L_nabla) = R^T, and its leading block is the degree k-1 inverse
            block = ctx.ops.R_nabla.T[: lay.n_grad, : lay.n_grad]
        else:
            block = np.eye(lay.n_grad)
        W[1:, lay.grad_slice] = -ctx.area * block
    W[:, : lay.n_edge_dofs] += ctx.pVb.T * ctx.b_weights
    return W


def assemble_lambda(ctx: ElementContext, W: np.ndarray) -> np.ndarray:
    """Coefficients of div(phi_i) in the pressure basis."""
    if ctx.approach is Approach.MONOMIAL:
        H = ctx.gram(ctx.pV)
        try:
            return cho_solve(cho_factor(H), W)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError("singular pressure mass matrix", np.inf) from exc
    return W


def assemble_B(ctx: ElementContext, W: np.ndarray) -> np.ndarray:
    lay, n = ctx.layout, ctx.n
    Lam = assemble_lambda(ctx, W)
    H1 = ctx.gram(ctx.pV1)
    B_grad = -H1[1:, :n] @ Lam
    B_grad[:, : lay.n_edge_dofs] += ctx.pVb1[:, 1:].T * ctx.b_weights
    if ctx.approach is Approach.ORTHO:
        B_grad = ctx.ops.L_nabla @ B_grad
    B_perp = np.zeros((ctx.ops.n_perp, lay.n_dofs))
    B_perp[:, lay.perp_slice] = ctx.area * np.eye(lay.n_perp)
    return np.vstack([B_grad, B_perp])


def assemble_Pi(ctx: ElementContext, B: np.ndarray) -> np.ndarray:
    """Coefficients of the L2 projection of each basis function in the vector basis."""
    if ctx.approach is Approach.ORTHO:
        return B.copy()
    try:
        return cho_solve(cho_factor(ctx.G), B)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("vector mass matrix is not numerically SPD", np.linalg.cond(ctx.G)) from exc


def assemble_D(ctx: ElementContext) -> np.ndarray:
    """D[i, I] = dof_i(g_I)."""
    lay = ctx.layout
    gVb = gbasis_vandermonde(ctx.ops, ctx.pVb)
    nb = len(ctx.b_points)
    D_edge = ctx.b_normals[:, :1] * gVb[:nb] + ctx.b_normals[:, 1:] * gVb[nb:]
    D_grad = ctx.G[: lay.n_grad] / ctx.area
    D_perp = ctx.G[ctx.ops.n_grad :] / ctx.area
    return np.vstack([D_edge, D_grad, D_perp])


def _split(ctx: ElementContext) -> tuple[np.ndarray, np.ndarray]:
    nq = len(ctx.rule)
    return ctx.gV[:nq], ctx.gV[nq:]


def assemble_diffusion(
    ctx: ElementContext, K: np.ndarray, Pi: np.ndarray, D: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Consistency and stability matrices for K sampled at the interior points."""
    eig = np.linalg.eigvalsh(K)
    if np.any(eig[:, 0] <= 0.0):
        raise InvalidCoefficientError("K is not positive definite at a quadrature point")
    K_bar = float(eig[:, 1].max())

    w = ctx.rule.weights
    gx, gy = _split(ctx)
    wxx, wxy, wyy = K[:, 0, 0] * w, K[:, 0, 1] * w, K[:, 1, 1] * w
    cross = gx.T @ (wxy[:, None] * gy)
    GK = gx.T @ (wxx[:, None] * gx) + cross + cross.T + gy.T @ (wyy[:, None] * gy)
    KC = Pi.T @ GK @ Pi
    R = np.eye(ctx.layout.n_dofs) - D @ Pi
    KS = K_bar * ctx.area * (R.T @ R)
    return 0.5 * (KC + KC.T), 0.5 * (KS + KS.T)


def assemble_advection(ctx: ElementContext, beta: np.ndarray, Pi: np.ndarray) -> np.ndarray:
    """M[i, a] = int_E beta . Pi(phi_i) p_a; enters the system with a minus sign."""
    w = ctx.rule.weights
    gx, gy = _split(ctx)
    moments = gx.T @ ((beta[:, 0] * w)[:, None] * ctx.pV) + gy.T @ ((beta[:, 1] * w)[:, None] * ctx.pV)
    return Pi.T @ moments


def assemble_reaction(ctx: ElementContext, gamma: np.ndarray) -> np.ndarray:
    H = ctx.pV.T @ ((gamma * ctx.rule.weights)[:, None] * ctx.pV)
    return 0.5 * (H + H.T)


@dataclass
class LocalMatrices:
    ctx: ElementContext
    W: np.ndarray
    B: np.ndarray
    Pi: np.ndarray
    D: np.ndarray
    KC: np.ndarray
    KS: np.ndarray
    Tbeta: np.ndarray
    Hgamma: np.ndarray
    KE: np.ndarray
    rhs_u: np.ndarray
    rhs_p: np.ndarray

    @property
    def G(self) -> np.ndarray:
        return self.ctx.G

    @property
    def Ka(self) -> np.ndarray:
        return self.KC + self.KS


def local_rhs(
    ctx: ElementContext, problem: ProblemData, dirichlet_edges: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Velocity rhs -<g_D, phi_i . n> on Dirichlet edges, pressure rhs (f, p_a).

    ``dirichlet_edges`` flags the element's local edges lying on Gamma_D.
    """
    rhs_u = np.zeros(ctx.layout.n_dofs)
    on_d = dirichlet_edges[ctx.b_edge]
    if on_d.any():
        idx = np.flatnonzero(on_d)
        rhs_u[idx] = -ctx.b_weights[idx] * problem.g_D(ctx.b_points[idx])
    rhs_p = ctx.pV.T @ (problem.f(ctx.rule.points) * ctx.rule.weights)
    return rhs_u, rhs_p


def local_system(
    ctx: ElementContext,
    W: np.ndarray,
    Ka: np.ndarray,
    Tbeta: np.ndarray,
    Hgamma: np.ndarray,
) -> np.ndarray:
    return np.block([[Ka, -W.T - Tbeta], [W, Hgamma]])


def projection_matrices(ctx: ElementContext) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(W, B, Pi, D) for the element; computed once per congruence class."""
    if "WBPD" not in ctx.shared:
        W = assemble_W(ctx)
        B = assemble_B(ctx, W)
        ctx.shared["WBPD"] = (W, B, assemble_Pi(ctx, B), assemble_D(ctx))
    return ctx.shared["WBPD"]


def assemble_element(
    mesh: PolygonalMesh,
    cell: int,
    problem: ProblemData,
    approach: Approach,
    k: int,
    quad_degree: Optional[int] = None,
    contexts: Optional[ContextCache] = None,
) -> LocalMatrices:
    geom = mesh.geometry(cell)
    if contexts is None:
        ctx = build_context(geom, k, approach, quad_degree)
    else:
        ctx = contexts(geom)
    W, B, Pi, D = projection_matrices(ctx)
    pts = ctx.rule.points
    KC, KS = assemble_diffusion(ctx, problem.K(pts), Pi, D)
    Tb = assemble_advection(ctx, problem.beta(pts), Pi)
    Hg = assemble_reaction(ctx, problem.gamma(pts))
    tags = np.array([mesh.edge_tags[e] == DIRICHLET for e in geom.edge_ids])
    rhs_u, rhs_p = local_rhs(ctx, problem, tags)
    return LocalMatrices(
        ctx=ctx, W=W, B=B, Pi=Pi, D=D, KC=KC, KS=KS, Tbeta=Tb, Hgamma=Hg,
        KE=local_system(ctx, W, KC + KS, Tb, Hg), rhs_u=rhs_u, rhs_p=rhs_p,
    )
