"""Manufactured advection-diffusion-reaction problems.

All fields are vectorized over an ``(N, 2)`` array of points.  Tensors come
back as ``(N, 2, 2)``, vectors as ``(N, 2)`` and scalars as ``(N,)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as P

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemData:
    name: str
    D: Field
    b: Field
    gamma: Field
    f: Field
    g_D: Field
    # Neumann datum u.n, called with points and the outward unit normals there
    g_N: Callable[[np.ndarray, np.ndarray], np.ndarray]
    p_exact: Optional[Field] = None
    u_exact: Optional[Field] = None

    def K(self, pts: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self.D(pts))

    def beta(self, pts: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.D(pts), self.b(pts)[..., None])[..., 0]


def _xy(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pts = np.atleast_2d(pts)
    return pts[:, 0], pts[:, 1]


def _tensor(a11, a12, a22) -> np.ndarray:
    return np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)


def _neumann_from_u(u: Field):
    def g_N(pts, normals):
        return np.einsum("ij,ij->i", u(pts), np.atleast_2d(normals))

    return g_N


def test1_problem() -> ProblemData:
    """p = x^2 y + sin(2 pi x) sin(2 pi y) + 2 on the unit square with
    D = [[y^2+1, -xy], [-xy, x^2+1]], b = (x, y), gamma = x^2 + y^3."""
    tp = 2.0 * np.pi

    def p(pts):
        x, y = _xy(pts)
        return x**2 * y + np.sin(tp * x) * np.sin(tp * y) + 2.0

    def grad_p(pts):
        x, y = _xy(pts)
        px = 2 * x * y + tp * np.cos(tp * x) * np.sin(tp * y)
        py = x**2 + tp * np.sin(tp * x) * np.cos(tp * y)
        return px, py

    def D(pts):
        x, y = _xy(pts)
        return _tensor(y**2 + 1, -x * y, x**2 + 1)

    def b(pts):
        x, y = _xy(pts)
        return np.column_stack([x, y])

    def gamma(pts):
        x, y = _xy(pts)
        return x**2 + y**3

    def u(pts):
        x, y = _xy(pts)
        px, py = grad_p(pts)
        pv = p(pts)
        ux = -((y**2 + 1) * px - x * y * py) + x * pv
        uy = -(-x * y * px + (x**2 + 1) * py) + y * pv
        return np.column_stack([ux, uy])

    def f(pts):
        x, y = _xy(pts)
        px, py = grad_p(pts)
        s = np.sin(tp * x) * np.sin(tp * y)
        pxx = 2 * y - tp**2 * s
        pyy = -(tp**2) * s
        pxy = 2 * x + tp**2 * np.cos(tp * x) * np.cos(tp * y)
        # div(D grad p), using dD11/dx = dD22/dy = 0, dD12/dx = -y, dD12/dy = -x
        div_dgrad = (y**2 + 1) * pxx - 2 * x * y * pxy + (x**2 + 1) * pyy - y * py - x * px
        # div(b p) = 2 p + b . grad p
        div_bp = 2 * p(pts) + x * px + y * py
        return -div_dgrad + div_bp + gamma(pts) * p(pts)

    return ProblemData(
        name="test1",
        D=D,
        b=b,
        gamma=gamma,
        f=f,
        g_D=p,
        g_N=_neumann_from_u(u),
        p_exact=p,
        u_exact=u,
    )


def patch_polynomial(k: int) -> np.ndarray:
    """Coefficients c[i, j] of x^i y^j for the degree-k patch-test pressure."""
    c = np.zeros((k + 1, k + 1))
    if k == 0:
        c[0, 0] = 1.0
    elif k == 1:
        c[1, 0], c[0, 1] = 1.0, 2.0
    elif k == 2:
        c[2, 0], c[0, 2] = 1.0, -1.0
    else:
        c[k, 0], c[k - 1, 1], c[0, k] = 1.0, 1.0, -2.0
        c[1, 1], c[0, 0] = 1.0, 1.0
    return c


def polynomial_problem(coeffs: np.ndarray, name: str = "patch") -> ProblemData:
    """D = I, b = 0, gamma = 0 with a polynomial exact pressure."""
    cx = P.polyder(coeffs, axis=0)
    cy = P.polyder(coeffs, axis=1)
    lap = P.polyder(coeffs, 2, axis=0)
    lap = _pad_add(lap, P.polyder(coeffs, 2, axis=1))

    def ev(c):
        def g(pts):
            x, y = _xy(pts)
            return P.polyval2d(x, y, c) + np.zeros_like(x)

        return g

    p = ev(coeffs)

    def u(pts):
        return -np.column_stack([ev(cx)(pts), ev(cy)(pts)])

    def f(pts):
        return -ev(lap)(pts)

    def D(pts):
        x, _ = _xy(pts)
        one, zero = np.ones_like(x), np.zeros_like(x)
        return _tensor(one, zero, one)

    def b(pts):
        return np.zeros((len(np.atleast_2d(pts)), 2))

    def gamma(pts):
        return np.zeros(len(np.atleast_2d(pts)))

    return ProblemData(
        name=name, D=D, b=b, gamma=gamma, f=f, g_D=p, g_N=_neumann_from_u(u),
        p_exact=p, u_exact=u,
    )


def patch_problem(k: int) -> ProblemData:
    return polynomial_problem(patch_polynomial(k), name=f"patch{k}")


def _pad_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    shape = np.maximum(np.shape(a), np.shape(b))
    out = np.zeros(shape)
    out[: a.shape[0], : a.shape[1]] += a
    out[: b.shape[0], : b.shape[1]] += b
    return out


# keep pytest from collecting the factory when it is imported into a test module
test1_problem.__test__ = False
