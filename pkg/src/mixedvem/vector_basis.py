"""Bases of (P_k)^2 split into gradients of P_{k+1} and a complement.

Vector polynomials are written in the block basis ``[p_1 e_x, ..., p_n e_x,
p_1 e_y, ..., p_n e_y]`` of the working scalar basis ``p``; a coefficient
matrix ``T`` (rows = vector basis members, 2 n_k columns) then describes the
members.  ``T_nabla`` holds the gradients, ``T_perp`` an euclidean-orthonormal
basis of its nullspace.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidArgumentError, RankAnomalyError
from .scalar_basis import DerivativeMatrices, ScalarApproach, dim_p, mgs

NULLSPACE_TOL = 1e-12


class Approach(str, Enum):
    MONOMIAL = "monomial"
    PARTIAL = "partial"
    ORTHO = "ortho"

    @property
    def scalar(self) -> ScalarApproach:
        return ScalarApproach.MONOMIAL if self is Approach.MONOMIAL else ScalarApproach.MGS


def dim_grad(k: int) -> int:
    """Dimension of grad P_{k+1}; zero for k = -1."""
    return dim_p(k) + (k + 1) if k >= 0 else 0


def dim_perp(k: int) -> int:
    return dim_p(k) - (k + 1) if k >= 0 else 0


@dataclass(frozen=True)
class VectorBasisOperators:
    approach: Approach
    k: int
    T_nabla: np.ndarray
    T_perp: np.ndarray
    L_nabla: np.ndarray
    # R of the MGS on T_nabla^T; its transpose is inv(L_nabla)
    R_nabla: np.ndarray | None = None

    @property
    def T(self) -> np.ndarray:
        return np.vstack([self.T_nabla, self.T_perp])

    @property
    def n(self) -> int:
        return dim_p(self.k)

    @property
    def n_grad(self) -> int:
        return dim_grad(self.k)

    @property
    def n_perp(self) -> int:
        return dim_perp(self.k)


def build_t_nabla(deriv: DerivativeMatrices) -> np.ndarray:
    """Gradients of the degree-(k+1) members 2..n_{k+1} in the block basis."""
    return np.hstack([deriv.dx[1:], deriv.dy[1:]])


def build_t_perp(T_nabla: np.ndarray) -> np.ndarray:
    n_grad, two_n = T_nabla.shape
    _, s, Vt = np.linalg.svd(T_nabla, full_matrices=True)
    if n_grad and s[-1] <= NULLSPACE_TOL * s[0]:
        raise RankAnomalyError(
            f"gradient matrix is rank deficient (sigma_min/sigma_max = {s[-1] / s[0]:.3e})"
        )
    return Vt[n_grad:two_n].copy()


def orthonormalize_gradients(
    T_nabla: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Single MGS on T_nabla^T.

    Returns ``(L_nabla, T_nabla', T_perp', R_nabla)`` with
    ``T_nabla' = Q^T = L_nabla @ T_nabla`` and ``L_nabla = R^{-T}``.
    """
    Q, R = mgs(T_nabla.T)
    T_new = Q.T.copy()
    L = solve_triangular(R, np.eye(len(R)), lower=False).T
    return L, T_new, build_t_perp(T_new), R


def build_vector_basis(
    approach: Approach, deriv: DerivativeMatrices, k: int
) -> VectorBasisOperators:
    """``deriv`` are the degree-(k+1) derivative matrices of the working basis."""
    T_nabla = build_t_nabla(deriv)
    if approach is Approach.ORTHO:
        L, T_nabla, T_perp, R = orthonormalize_gradients(T_nabla)
        return VectorBasisOperators(approach, k, T_nabla, T_perp, L, R)
    T_perp = build_t_perp(T_nabla)
    return VectorBasisOperators(approach, k, T_nabla, T_perp, np.eye(len(T_nabla)))


def gbasis_vandermonde(ops: VectorBasisOperators, scalar_V: np.ndarray) -> np.ndarray:
    """Evaluate the vector basis; returns x-components stacked over
    y-components, shape (2 N, 2 n_k)."""
    n = ops.n
    if scalar_V.shape[1] != n:
        raise InvalidArgumentError(
            f"scalar Vandermonde has {scalar_V.shape[1]} columns, expected {n}"
        )
    T = ops.T
    return np.vstack([scalar_V @ T[:, :n].T, scalar_V @ T[:, n:].T])


def mass_matrix_g(
    ops: VectorBasisOperators, weights: np.ndarray, scalar_V: np.ndarray
) -> np.ndarray:
    gV = gbasis_vandermonde(ops, scalar_V)
    w2 = np.concatenate([weights, weights])
    G = gV.T @ (w2[:, None] * gV)
    return 0.5 * (G + G.T)
