"""Gauss rules on edges and centroid-fan rules on star-shaped polygons."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateEdgeError, InvalidArgumentError, NotStarShapedError


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=None)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [-1, 1], exact to degree 2n - 1."""
    if n < 1:
        raise InvalidArgumentError("a Gauss rule needs at least one point")
    x, w = _leggauss(n)
    return QuadratureRule(points=x, weights=w, degree=2 * n - 1)


def edge_rule(start: np.ndarray, end: np.ndarray, k: int) -> QuadratureRule:
    """(k+1)-point Gauss rule on the segment start -> end.

    Points are ordered from ``start`` to ``end``; they are also the locations
    of the edge degrees of freedom.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    length = float(np.hypot(*(end - start)))
    if length == 0.0:
        raise DegenerateEdgeError("zero-length edge")
    x, w = _leggauss(k + 1)
    t = 0.5 * (x + 1.0)
    points = start[None, :] + t[:, None] * (end - start)[None, :]
    return QuadratureRule(points=points, weights=0.5 * length * w, degree=2 * k + 1)


@lru_cache(maxsize=None)
def _reference_triangle(degree: int) -> tuple[np.ndarray, np.ndarray]:
    # collapsed square -> triangle (0,0),(1,0),(0,1); Jacobian (1 - u) adds one degree in u
    n = max(1, (degree + 2) // 2 + (degree + 2) % 2)
    x, w = _leggauss(n)
    t, wt = 0.5 * (x + 1.0), 0.5 * w
    u, v = np.meshgrid(t, t, indexing="ij")
    wu, wv = np.meshgrid(wt, wt, indexing="ij")
    pts = np.column_stack([u.ravel(), (v * (1.0 - u)).ravel()])
    wts = (wu * wv * (1.0 - u)).ravel()
    return pts, wts


def triangle_rule(a: np.ndarray, b: np.ndarray, c: np.ndarray, degree: int) -> QuadratureRule:
    ref, wref = _reference_triangle(degree)
    J = np.column_stack([b - a, c - a])
    det = float(np.linalg.det(J))
    if det <= 0.0:
        raise NotStarShapedError(f"triangle with non-positive area {0.5 * det:.3e}")
    return QuadratureRule(points=a + ref @ J.T, weights=wref * det, degree=degree)


def polygon_rule(vertices: np.ndarray, centroid: np.ndarray, degree: int) -> QuadratureRule:
    """Union of triangle rules over the fan from ``centroid`` to each edge."""
    if degree < 0:
        raise InvalidArgumentError("degree must be non-negative")
    ref, wref = _reference_triangle(degree)
    nv = len(vertices)
    pts, wts = [], []
    for i in range(nv):
        a, b = vertices[i], vertices[(i + 1) % nv]
        J = np.column_stack([a - centroid, b - centroid])
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if det <= 0.0:
            raise NotStarShapedError(
                f"fan triangle {i} has non-positive area {0.5 * det:.3e}"
            )
        pts.append(centroid + ref @ J.T)
        wts.append(wref * det)
    return QuadratureRule(points=np.vstack(pts), weights=np.concatenate(wts), degree=degree)


def interior_degree(k: int) -> int:
    """Exactness degree of the element rule for a degree-k discretization."""
    return 2 * (k + 1) + 2
