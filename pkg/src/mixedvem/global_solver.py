"""Global numbering, sparse assembly and direct solution of the mixed system.

Global velocity unknowns are the edge fluxes (oriented by each edge's global
normal) followed by the internal moments of every cell; the pressure
coefficients of all cells come last.  Element matrices are written with the
cell's outward normals, so edge rows and columns are conjugated by the
orientation sign ``sigma`` before scattering.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import InvalidArgumentError, SingularSystemWarning
from .local_assembly import ContextCache, DofLayout, assemble_element
from .mesh import DIRICHLET, NEUMANN, PolygonalMesh
from .problems import ProblemData
from .quadrature import edge_rule
from .scalar_basis import dim_p
from .vector_basis import Approach

RESIDUAL_TOL = 1e-10
STATUS_OK = "ok"
STATUS_INACCURATE = "inaccurate"
STATUS_FAILED = "failed"


@dataclass(frozen=True)
class DofMap:
    k: int
    n_edges: int
    n_cells: int
    n_velocity: int
    n_pressure: int
    # per cell: global velocity indices of the local dofs and their signs
    cell_velocity: tuple[np.ndarray, ...]
    cell_sign: tuple[np.ndarray, ...]
    cell_pressure: tuple[np.ndarray, ...]
    # global indices of the edge dofs on Neumann edges
    constrained: np.ndarray

    @property
    def n_total(self) -> int:
        return self.n_velocity + self.n_pressure

    @property
    def n_edge_dofs(self) -> int:
        return (self.k + 1) * self.n_edges

    def edge_dofs(self, edge: int) -> np.ndarray:
        return edge * (self.k + 1) + np.arange(self.k + 1)

    def cell_dofs(self, cell: int) -> np.ndarray:
        """Global indices of the full local system (velocity, then pressure)."""
        return np.concatenate([self.cell_velocity[cell], self.cell_pressure[cell]])


def number_dofs(mesh: PolygonalMesh, k: int) -> DofMap:
    if k < 0:
        raise InvalidArgumentError("k must be non-negative")
    m = k + 1
    n_edge = m * mesh.n_edges
    offset = n_edge
    cell_velocity, cell_sign = [], []
    for c in range(mesh.n_cells):
        lay = DofLayout(len(mesh.cells[c]), k)
        edge_part = (mesh.cell_edges[c][:, None] * m + np.arange(m)[None, :]).ravel()
        internal = offset + np.arange(lay.n_internal)
        offset += lay.n_internal
        cell_velocity.append(np.concatenate([edge_part, internal]))
        cell_sign.append(
            np.concatenate([np.repeat(mesh.cell_sigma[c], m), np.ones(lay.n_internal)])
        )
    n_velocity = offset
    n_k = dim_p(k)
    cell_pressure = tuple(n_velocity + c * n_k + np.arange(n_k) for c in range(mesh.n_cells))
    neumann = mesh.boundary_edges(NEUMANN)
    constrained = (neumann[:, None] * m + np.arange(m)[None, :]).ravel()
    return DofMap(
        k=k,
        n_edges=mesh.n_edges,
        n_cells=mesh.n_cells,
        n_velocity=n_velocity,
        n_pressure=n_k * mesh.n_cells,
        cell_velocity=tuple(cell_velocity),
        cell_sign=tuple(cell_sign),
        cell_pressure=cell_pressure,
        constrained=constrained.astype(int),
    )


def neumann_values(mesh: PolygonalMesh, dofmap: DofMap, problem: ProblemData) -> np.ndarray:
    """g_N sampled at the Gauss points of each Neumann edge, with the edge's
    global normal; ordered like ``dofmap.constrained``."""
    vals = []
    for e in mesh.boundary_edges(NEUMANN):
        a, b = mesh.edges[e]
        rule = edge_rule(mesh.vertices[a], mesh.vertices[b], dofmap.k)
        normals = np.repeat(mesh.edge_normals[e][None, :], dofmap.k + 1, axis=0)
        vals.append(problem.g_N(rule.points, normals))
    return np.concatenate(vals) if vals else np.zeros(0)


@dataclass
class GlobalSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    free: np.ndarray  # global indices of the unknowns, in matrix order
    constrained_values: np.ndarray
    mesh: PolygonalMesh
    problem: ProblemData
    approach: Approach
    k: int
    contexts: ContextCache
    assembly_time: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass
class SolutionFields:
    system: GlobalSystem
    velocity: np.ndarray  # all velocity dofs in the global orientation
    pressure: np.ndarray  # (n_cells, n_k) coefficients in the working basis
    status: str
    residual: float = np.nan
    message: str = ""
    solve_time: float = 0.0

    def local_velocity(self, cell: int) -> np.ndarray:
        """Local dofs of ``cell`` in its outward-normal convention."""
        dm = self.system.dofmap
        return dm.cell_sign[cell] * self.velocity[dm.cell_velocity[cell]]


def _assemble_cells(mesh, problem, approach, k, contexts, dm, cells):
    rows, cols, vals = [], [], []
    rhs_idx, rhs_val = [], []
    for c in cells:
        loc = assemble_element(mesh, c, problem, approach, k, contexts=contexts)
        s = np.concatenate([dm.cell_sign[c], np.ones(len(dm.cell_pressure[c]))])
        KE = s[:, None] * loc.KE * s[None, :]
        idx = dm.cell_dofs(c)
        # scatter the whole block so the stored pattern is the structural one
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(KE.ravel())
        rhs_idx.append(idx)
        rhs_val.append(s * np.concatenate([loc.rhs_u, loc.rhs_p]))
    return (
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(vals),
        np.concatenate(rhs_idx),
        np.concatenate(rhs_val),
    )


def assemble_global(
    mesh: PolygonalMesh,
    problem: ProblemData,
    approach: Approach,
    k: int,
    quad_degree: Optional[int] = None,
    contexts: Optional[ContextCache] = None,
    workers: int = 1,
    chunk: int = 256,
) -> GlobalSystem:
    """Assemble the global saddle-point system with Neumann dofs eliminated.

    Element contributions are computed in chunks of ``chunk`` cells (on
    ``workers`` threads if more than one) and summed in a fixed order, so the
    result does not depend on the thread count.
    """
    t0 = time.perf_counter()
    approach = Approach(approach)
    dm = number_dofs(mesh, k)
    if contexts is None:
        contexts = ContextCache(k, approach, quad_degree)
    if workers > 1:
        contexts.prime(mesh)
    N = dm.n_total

    batches = [range(i, min(i + chunk, mesh.n_cells)) for i in range(0, mesh.n_cells, chunk)]

    def work(cells):
        r, c, v, ri, rv = _assemble_cells(mesh, problem, approach, k, contexts, dm, cells)
        return sp.csr_matrix((v, (r, c)), shape=(N, N)), np.bincount(ri, rv, minlength=N)

    A = sp.csr_matrix((N, N))
    rhs = np.zeros(N)
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        parts = pool.map(work, batches) if pool else map(work, batches)
        for Ab, rb in parts:
            A = _add_keep_pattern(A, Ab)
            rhs += rb
    finally:
        if pool:
            pool.shutdown()

    _check_singular(mesh, problem, contexts)

    values = neumann_values(mesh, dm, problem)
    mask = np.ones(N, dtype=bool)
    mask[dm.constrained] = False
    free = np.flatnonzero(mask)
    if len(dm.constrained):
        rhs = rhs - A[:, dm.constrained] @ values
    A = A[free][:, free].tocsr()
    return GlobalSystem(
        matrix=A,
        rhs=rhs[free],
        dofmap=dm,
        free=free,
        constrained_values=values,
        mesh=mesh,
        problem=problem,
        approach=approach,
        k=k,
        contexts=contexts,
        assembly_time=time.perf_counter() - t0,
    )


def _add_keep_pattern(A: sp.csr_matrix, B: sp.csr_matrix) -> sp.csr_matrix:
    """A + B without pruning explicit zeros (``+`` drops them)."""
    a, b = A.tocoo(), B.tocoo()
    return sp.csr_matrix(
        (
            np.concatenate([a.data, b.data]),
            (np.concatenate([a.row, b.row]), np.concatenate([a.col, b.col])),
        ),
        shape=A.shape,
    )


def _check_singular(mesh, problem, contexts) -> None:
    if len(mesh.boundary_edges(DIRICHLET)):
        return
    for c in range(mesh.n_cells):
        if np.any(problem.gamma(contexts(mesh.geometry(c)).rule.points) != 0.0):
            return
    warnings.warn(
        "no Dirichlet boundary and gamma == 0: the pressure is determined only up "
        "to a constant and the system is singular",
        SingularSystemWarning,
        stacklevel=3,
    )


def solve(system: GlobalSystem) -> SolutionFields:
    """Sparse LU solve; factorization failures are returned, not raised."""
    t0 = time.perf_counter()
    dm = system.dofmap
    x_full = np.full(dm.n_total, np.nan)
    x_full[dm.constrained] = system.constrained_values
    status, message, res = STATUS_OK, "", np.nan
    try:
        lu = splu(system.matrix.tocsc())
        x = lu.solve(system.rhs)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite entries in the solution")
        r = system.matrix @ x - system.rhs
        nb = np.linalg.norm(system.rhs)
        res = float(np.linalg.norm(r) / (nb if nb > 0 else 1.0))
        if not res <= RESIDUAL_TOL:
            status, message = STATUS_INACCURATE, f"relative residual {res:.3e}"
        x_full[system.free] = x
    except (RuntimeError, FloatingPointError, ValueError) as exc:
        status, message = STATUS_FAILED, str(exc)
    return SolutionFields(
        system=system,
        velocity=x_full[: dm.n_velocity],
        pressure=x_full[dm.n_velocity :].reshape(dm.n_cells, -1),
        status=status,
        residual=res,
        message=message,
        solve_time=time.perf_counter() - t0,
    )
