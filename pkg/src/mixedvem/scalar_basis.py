"""Scaled monomials and the L2(E)-orthonormal basis obtained from them by
modified Gram-Schmidt (applied twice).

A scalar basis of degree ``k`` on an element is described by a lower-triangular
coefficient matrix ``L`` such that the working basis evaluated at a set of
points equals ``monomial_vandermonde(...) @ L.T``.  ``L`` is built once at the
highest needed degree; lower degrees are leading blocks of it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from .errors import RankDeficiencyError

RANK_TOL = 1e-14


class ScalarApproach(str, Enum):
    MONOMIAL = "monomial"
    MGS = "mgs"


def dim_p(k: int) -> int:
    """Dimension of P_k in two variables; zero for k = -1."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


def monomial_index(alpha: tuple[int, int]) -> int:
    """1-based graded index of a monomial exponent pair.

    Within a degree block x-powers come first: (d,0), (d-1,1), ..., (0,d).
    """
    ax, ay = alpha
    d = ax + ay
    return d * (d + 1) // 2 + ay + 1


@lru_cache(maxsize=None)
def exponents(k: int) -> np.ndarray:
    """Exponent pairs of P_k in graded order, shape (n_k, 2)."""
    out = [(d - j, j) for d in range(k + 1) for j in range(d + 1)]
    arr = np.array(out, dtype=int).reshape(-1, 2)
    arr.setflags(write=False)
    return arr


def monomial_vandermonde(
    centroid: np.ndarray, diameter: float, points: np.ndarray, k: int
) -> np.ndarray:
    """Scaled monomials ((x - x_C) / h_E)^alpha at ``points``; shape (N, n_k)."""
    pts = (np.atleast_2d(points) - centroid) / diameter
    ex = exponents(k)
    # powers by repeated multiplication, columns follow the graded order
    px = np.ones((len(pts), k + 1))
    py = np.ones((len(pts), k + 1))
    for d in range(1, k + 1):
        px[:, d] = px[:, d - 1] * pts[:, 0]
        py[:, d] = py[:, d - 1] * pts[:, 1]
    return px[:, ex[:, 0]] * py[:, ex[:, 1]]


@dataclass(frozen=True)
class DerivativeMatrices:
    """Coefficients of the x/y partial derivatives of the degree-(k+1) basis
    expanded in the degree-k basis; each has shape (n_{k+1}, n_k)."""

    dx: np.ndarray
    dy: np.ndarray


def monomial_derivative_matrices(diameter: float, k: int) -> DerivativeMatrices:
    ex = exponents(k + 1)
    n1, n0 = dim_p(k + 1), dim_p(k)
    dx = np.zeros((n1, n0))
    dy = np.zeros((n1, n0))
    for a, (ax, ay) in enumerate(ex):
        if ax > 0:
            dx[a, monomial_index((ax - 1, ay)) - 1] = ax / diameter
        if ay > 0:
            dy[a, monomial_index((ax, ay - 1)) - 1] = ay / diameter
    return DerivativeMatrices(dx, dy)


def mgs(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt QR of the columns of ``A``.

    Raises RankDeficiencyError when a column loses all but a 1e-14 fraction
    of its original norm to the projections on the preceding ones.
    """
    Q = np.array(A, dtype=float, copy=True)
    m, n = Q.shape
    R = np.zeros((n, n))
    norms = np.linalg.norm(Q, axis=0)
    for j in range(n):
        r = np.linalg.norm(Q[:, j])
        if not r > RANK_TOL * norms[j]:
            raise RankDeficiencyError(
                f"column {j} is numerically dependent (|r_jj| = {r:.3e})"
            )
        R[j, j] = r
        Q[:, j] /= r
        if j + 1 < n:
            coef = Q[:, j] @ Q[:, j + 1 :]
            R[j, j + 1 :] = coef
            Q[:, j + 1 :] -= np.outer(Q[:, j], coef)
    return Q, R


@dataclass(frozen=True)
class ScalarBasis:
    """Working pressure basis on one element, built at degree ``degree``."""

    approach: ScalarApproach
    degree: int
    L: np.ndarray
    centroid: np.ndarray
    diameter: float

    def coefficients(self, k: int) -> np.ndarray:
        n = dim_p(k)
        return self.L[:n, :n]

    def vandermonde(self, points: np.ndarray, k: int) -> np.ndarray:
        V = monomial_vandermonde(self.centroid, self.diameter, points, k)
        if self.approach is ScalarApproach.MONOMIAL:
            return V
        return V @ self.coefficients(k).T

    def derivative_matrices(self, k: int) -> DerivativeMatrices:
        """Derivatives of the degree-(k+1) members in the degree-k basis."""
        mono = monomial_derivative_matrices(self.diameter, k)
        if self.approach is ScalarApproach.MONOMIAL:
            return mono
        return transform_derivative_matrices(
            self.coefficients(k + 1), self.coefficients(k), mono
        )


def mgs_orthonormalize(V: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Return ``L`` with ``(V @ L.T)`` orthonormal in the weighted inner product.

    First pass: V = Q1 R1.  Second pass on the weight-scaled factor:
    sqrt(W) Q1 = Q2 R2.  Then L = (R2 R1)^{-T}.
    """
    if V.shape[0] < V.shape[1]:
        raise RankDeficiencyError("fewer quadrature points than basis functions")
    Q1, R1 = mgs(V)
    _, R2 = mgs(np.sqrt(weights)[:, None] * Q1)
    R = R2 @ R1
    Rinv = solve_triangular(R, np.eye(len(R)), lower=False)
    return np.tril(Rinv.T)


def build_scalar_basis(
    approach: ScalarApproach,
    centroid: np.ndarray,
    diameter: float,
    degree: int,
    points: np.ndarray | None = None,
    weights: np.ndarray | None = None,
) -> ScalarBasis:
    n = dim_p(degree)
    if approach is ScalarApproach.MONOMIAL:
        L = np.eye(n)
    else:
        V = monomial_vandermonde(centroid, diameter, points, degree)
        L = mgs_orthonormalize(V, weights)
    return ScalarBasis(approach, degree, L, np.asarray(centroid, float), float(diameter))


def transform_derivative_matrices(
    L1: np.ndarray, L0: np.ndarray, mono: DerivativeMatrices
) -> DerivativeMatrices:
    """L1 @ D @ inv(L0) for both directions, with inv(L0) applied by a
    triangular solve."""

    def apply(D: np.ndarray) -> np.ndarray:
        # X L0 = L1 D  <=>  L0^T X^T = (L1 D)^T
        return solve_triangular(L0.T, (L1 @ D).T, lower=False).T

    return DerivativeMatrices(apply(mono.dx), apply(mono.dy))
