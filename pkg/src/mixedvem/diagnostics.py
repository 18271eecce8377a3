"""Error norms, condition numbers and convergence-rate fits."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConditioningError, InvalidArgumentError, RankDeficiencyWarning, VemError
from .global_solver import SolutionFields
from .local_assembly import (
    ContextCache,
    ElementContext,
    assemble_B,
    assemble_D,
    assemble_Pi,
    assemble_W,
    assemble_diffusion,
    projection_matrices,
)
from .mesh import PolygonalMesh

CSV_HEADER = (
    "approach,k,mesh,h,n_dofs,p_err,u_err,pI_err,"
    "cond_G,cond_W,cond_B,cond_Pi,cond_D,solver_status,wall_time_s"
)
MATRIX_NAMES = ("G", "W", "B", "Pi", "D")


def _cells(solution: SolutionFields) -> Iterable[tuple[int, ElementContext]]:
    system = solution.system
    for c in range(system.mesh.n_cells):
        yield c, system.contexts(system.mesh.geometry(c))


def pressure_error(solution: SolutionFields, p_exact: Callable) -> float:
    """Discrete L2 norm of p - p_h, by the interior rule of every element."""
    total = 0.0
    for c, ctx in _cells(solution):
        diff = p_exact(ctx.rule.points) - ctx.pV @ solution.pressure[c]
        total += float(ctx.rule.weights @ diff**2)
    return math.sqrt(total)


def projected_velocity(solution: SolutionFields, cell: int, ctx: ElementContext) -> np.ndarray:
    """Values of the L2 projection of u_h at the interior points, shape (N, 2)."""
    _, _, Pi, _ = projection_matrices(ctx)
    vals = ctx.gV @ (Pi @ solution.local_velocity(cell))
    return vals.reshape(2, -1).T


def velocity_error(solution: SolutionFields, u_exact: Callable) -> float:
    """Discrete L2 norm of u - Pi u_h."""
    total = 0.0
    for c, ctx in _cells(solution):
        diff = u_exact(ctx.rule.points) - projected_velocity(solution, c, ctx)
        total += float(ctx.rule.weights @ np.sum(diff**2, axis=1))
    return math.sqrt(total)


def interpolant_coefficients(
    ctx: ElementContext, values: np.ndarray, weighted: bool = True
) -> tuple[np.ndarray, int]:
    """Least-squares fit of point values in the working pressure basis.

    With ``weighted`` the residual is measured in the quadrature-weighted norm,
    which makes the fit the discrete L2 projection.  Returns the coefficients
    and the numerical rank of the (scaled) Vandermonde matrix.
    """
    V, y = ctx.pV, values
    if weighted:
        s = np.sqrt(ctx.rule.weights)
        V, y = s[:, None] * V, s * y
    c, _, rank, _ = np.linalg.lstsq(V, y, rcond=None)
    return c, int(rank)


def interpolant_error(
    solution: SolutionFields, p_exact: Callable, weighted: bool = True
) -> float:
    """Discrete L2 norm of p_I - p_h, p_I being the local least-squares fit of p.

    Elements whose Vandermonde matrix is numerically rank deficient are
    reported through a RankDeficiencyWarning.
    """
    total, deficient = 0.0, []
    n = None
    for c, ctx in _cells(solution):
        coef, rank = interpolant_coefficients(ctx, p_exact(ctx.rule.points), weighted)
        n = ctx.n
        if rank < n:
            deficient.append(c)
        diff = ctx.pV @ (coef - solution.pressure[c])
        total += float(ctx.rule.weights @ diff**2)
    if deficient:
        warnings.warn(
            f"rank-deficient least-squares fit on {len(deficient)} element(s) "
            f"(first: {deficient[0]}, basis size {n})",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    return math.sqrt(total)


def condition_number(M: np.ndarray) -> float:
    """sigma_max / sigma_min of a (possibly rectangular) matrix; inf when singular."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        raise InvalidArgumentError("condition number of an empty matrix")
    if not np.all(np.isfinite(M)):
        return math.inf
    s = np.linalg.svd(M, compute_uv=False)
    if s[-1] == 0.0:
        return math.inf
    return float(s[0] / s[-1])


def _valid(errors: Sequence[float], hs: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    if e.shape != h.shape:
        raise InvalidArgumentError("errors and mesh sizes differ in length")
    ok = np.isfinite(e) & (e > 0) & np.isfinite(h) & (h > 0)
    return e[ok], h[ok]


def convergence_rate(errors: Sequence[float], hs: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(h); NaN if fewer than two
    usable points remain after dropping nonpositive or non-finite errors."""
    e, h = _valid(errors, hs)
    if len(e) < 2 or np.ptp(np.log(h)) == 0.0:
        return math.nan
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def pairwise_rates(errors: Sequence[float], hs: Sequence[float]) -> list[float]:
    """Rates between consecutive refinement levels (NaN where undefined)."""
    out = []
    for i in range(len(errors) - 1):
        out.append(convergence_rate(errors[i : i + 2], hs[i : i + 2]))
    return out


def convergence_rates(
    errors: dict[str, Sequence[float]], hs: Sequence[float]
) -> dict[str, float]:
    """Fitted rate for every error kind in ``errors``."""
    return {kind: convergence_rate(vals, hs) for kind, vals in errors.items()}


def local_matrices(ctx: ElementContext) -> dict[str, Optional[np.ndarray]]:
    """G, W, B, Pi, D of one element; entries that cannot be formed are None."""
    out: dict[str, Optional[np.ndarray]] = {"G": ctx.G, "D": assemble_D(ctx)}
    W = out["W"] = assemble_W(ctx)
    try:
        B = out["B"] = assemble_B(ctx, W)
    except VemError:
        out["B"] = out["Pi"] = None
        return out
    try:
        out["Pi"] = assemble_Pi(ctx, B)
    except ConditioningError:
        out["Pi"] = None
    return out


def element_conditions(
    mesh: PolygonalMesh, contexts: ContextCache
) -> dict[str, float]:
    """Maximum over elements of cond(G), cond(W), cond(B), cond(Pi), cond(D).

    Translated copies share one context, so each congruence class is
    evaluated once.
    """
    worst = {name: 1.0 for name in MATRIX_NAMES}
    seen: set[int] = set()
    alive = []  # keeps visited contexts referenced so ids are not recycled
    for c in range(mesh.n_cells):
        try:
            ctx = contexts(mesh.geometry(c))
        except VemError:
            return {name: math.inf for name in MATRIX_NAMES}
        if id(ctx.shared) in seen:
            continue
        seen.add(id(ctx.shared))
        alive.append(ctx.shared)
        for name, M in local_matrices(ctx).items():
            val = math.inf if M is None else condition_number(M)
            worst[name] = max(worst[name], val)
    return worst


def gram_errors(ctx: ElementContext) -> tuple[float, float]:
    """Max-norm distance from the identity of the scalar Gram matrix of the
    working basis (all degrees built) and of the vector mass matrix G."""
    H = ctx.gram(ctx.pV1)
    eH = float(np.abs(H - np.eye(len(H))).max())
    eG = float(np.abs(ctx.G - np.eye(len(ctx.G))).max())
    return eH, eG


def structural_residuals(ctx: ElementContext, K: np.ndarray) -> dict[str, float]:
    """Max-norm residuals of the algebraic identities the element matrices obey.

    ``Pi_D``: Pi D - I.  ``Tgrad_Tperp``: T_nabla T_perp^T.  ``KS_D``: K_S D.
    ``Lambda_W``: H^{-1} W - W relative to max |W|, with the pressure Gram
    matrix H actually formed and solved (it vanishes only for an orthonormal
    pressure basis).
    """
    W = assemble_W(ctx)
    B = assemble_B(ctx, W)
    Pi = assemble_Pi(ctx, B)
    D = assemble_D(ctx)
    _, KS = assemble_diffusion(ctx, K, Pi, D)
    Lam = cho_solve(cho_factor(ctx.gram(ctx.pV)), W)
    return {
        "Pi_D": float(np.abs(Pi @ D - np.eye(D.shape[1])).max()),
        "Tgrad_Tperp": float(np.abs(ctx.ops.T_nabla @ ctx.ops.T_perp.T).max(initial=0.0)),
        "KS_D": float(np.abs(KS @ D).max()),
        "Lambda_W": float(np.abs(Lam - W).max() / np.abs(W).max()),
    }


@dataclass
class ExperimentReport:
    approach: str
    k: int
    mesh: str
    h: float
    n_dofs: int
    p_err: float
    u_err: float
    pI_err: float
    cond_G: float
    cond_W: float
    cond_B: float
    cond_Pi: float
    cond_D: float
    solver_status: str
    wall_time_s: float

    def row(self) -> list[str]:
        return [_fmt(v) for v in asdict(self).values()]

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)

