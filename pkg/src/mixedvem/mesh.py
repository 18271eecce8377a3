"""Polygonal meshes, per-element geometry and the global edge orientation.

Edges are stored once, as ``(lower vertex, higher vertex)`` pairs.  The
direction lower -> higher is the edge's *global direction*; quadrature points
on an edge are always ordered along it, so that both cells sharing an edge
address the same physical points in the same order.  The *global normal* of an
edge is the outward normal of its lowest-index incident cell, and each
(cell, edge) pair carries a sign ``sigma`` with
``outward normal = sigma * global normal``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateElementError, InvalidArgumentError, NonManifoldError

INTERIOR = "interior"
DIRICHLET = "dirichlet"
NEUMANN = "neumann"

Predicate = Callable[[np.ndarray], bool]


def _signed_area(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class ElementGeometry:
    """Geometric data of one polygonal cell.

    Per-edge arrays follow the cell's counter-clockwise loop: local edge ``i``
    joins ``vertices[i]`` and ``vertices[i + 1]``.
    """

    vertices: np.ndarray
    centroid: np.ndarray
    diameter: float
    area: float
    edge_ids: np.ndarray
    edge_lengths: np.ndarray
    normals: np.ndarray  # outward unit normals
    sigma: np.ndarray
    # edge endpoints along the global edge direction
    edge_starts: np.ndarray
    edge_ends: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edge_ids)

    @property
    def aspect_ratio(self) -> float:
        return float(self.edge_lengths.max() / self.edge_lengths.min())


@dataclass(frozen=True)
class PolygonalMesh:
    vertices: np.ndarray
    cells: tuple[np.ndarray, ...]
    edges: np.ndarray  # (n_edges, 2), sorted vertex pairs
    edge_cells: np.ndarray  # (n_edges, 2), second entry -1 on the boundary
    edge_normals: np.ndarray  # global unit normals
    edge_tags: tuple[str, ...]
    cell_edges: tuple[np.ndarray, ...]
    cell_sigma: tuple[np.ndarray, ...]
    _geometry: list = field(default_factory=list, repr=False, compare=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def h(self) -> float:
        return max(self.geometry(c).diameter for c in range(self.n_cells))

    def geometry(self, cell: int) -> ElementGeometry:
        if not self._geometry:
            self._geometry.extend(element_geometry(self, c) for c in range(self.n_cells))
        return self._geometry[cell]

    def boundary_edges(self, tag: Optional[str] = None) -> np.ndarray:
        tags = np.array(self.edge_tags)
        if tag is None:
            return np.flatnonzero(tags != INTERIOR)
        return np.flatnonzero(tags == tag)

    @classmethod
    def from_cells(
        cls,
        vertices: np.ndarray,
        cells: Sequence[Sequence[int]],
        neumann: Optional[Predicate] = None,
    ) -> "PolygonalMesh":
        """Build a mesh from a vertex array and CCW vertex loops.

        ``neumann`` is evaluated on boundary-edge midpoints; boundary edges for
        which it returns True are tagged Neumann, all others Dirichlet.
        """
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise InvalidArgumentError("vertices must be an (n, 2) array")
        loops = tuple(np.asarray(c, dtype=int) for c in cells)
        for i, loop in enumerate(loops):
            if len(loop) < 3:
                raise DegenerateElementError(f"cell {i} has fewer than 3 vertices")
            if _signed_area(vertices[loop]) <= 0.0:
                raise DegenerateElementError(f"cell {i} is not counter-clockwise")

        edge_index: dict[tuple[int, int], int] = {}
        incident: list[list[int]] = []
        cell_edges = []
        for c, loop in enumerate(loops):
            ids = np.empty(len(loop), dtype=int)
            for i, a in enumerate(loop):
                b = loop[(i + 1) % len(loop)]
                key = (min(a, b), max(a, b))
                e = edge_index.setdefault(key, len(edge_index))
                if e == len(incident):
                    incident.append([])
                incident[e].append(c)
                ids[i] = e
            cell_edges.append(ids)

        edges = np.array(list(edge_index.keys()), dtype=int).reshape(-1, 2)
        edge_cells = np.full((len(edges), 2), -1, dtype=int)
        for e, cs in enumerate(incident):
            if len(cs) > 2:
                raise NonManifoldError(f"edge {e} has {len(cs)} incident cells")
            edge_cells[e, : len(cs)] = sorted(cs)

        tags = []
        for e, (a, b) in enumerate(edges):
            if edge_cells[e, 1] >= 0:
                tags.append(INTERIOR)
            else:
                mid = 0.5 * (vertices[a] + vertices[b])
                tags.append(NEUMANN if neumann is not None and neumann(mid) else DIRICHLET)

        mesh = cls(
            vertices=vertices,
            cells=loops,
            edges=edges,
            edge_cells=edge_cells,
            edge_normals=np.zeros((len(edges), 2)),
            edge_tags=tuple(tags),
            cell_edges=tuple(cell_edges),
            cell_sigma=tuple(np.ones(len(ids)) for ids in cell_edges),
        )
        return orient_edges(mesh)


def orient_edges(mesh: PolygonalMesh) -> PolygonalMesh:
    """Attach global normals and per-cell orientation signs."""
    normals = np.zeros((mesh.n_edges, 2))
    for e in range(mesh.n_edges):
        cs = mesh.edge_cells[e]
        if np.count_nonzero(cs >= 0) > 2:
            raise NonManifoldError(f"edge {e} has more than two incident cells")
        owner = int(cs[0])
        loop = mesh.cells[owner]
        local = int(np.flatnonzero(mesh.cell_edges[owner] == e)[0])
        a = mesh.vertices[loop[local]]
        b = mesh.vertices[loop[(local + 1) % len(loop)]]
        t = b - a
        normals[e] = np.array([t[1], -t[0]]) / np.hypot(*t)

    sigma = []
    for c, ids in enumerate(mesh.cell_edges):
        sigma.append(np.where(mesh.edge_cells[ids, 0] == c, 1.0, -1.0))

    return PolygonalMesh(
        vertices=mesh.vertices,
        cells=mesh.cells,
        edges=mesh.edges,
        edge_cells=mesh.edge_cells,
        edge_normals=normals,
        edge_tags=mesh.edge_tags,
        cell_edges=mesh.cell_edges,
        cell_sigma=tuple(sigma),
    )


def element_geometry(mesh: PolygonalMesh, cell: int) -> ElementGeometry:
    if not 0 <= cell < mesh.n_cells:
        raise InvalidArgumentError(f"cell index {cell} out of range")
    loop = mesh.cells[cell]
    xy = mesh.vertices[loop]
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()

    diffs = xy[:, None, :] - xy[None, :, :]
    diameter = float(np.sqrt((diffs**2).sum(-1)).max())
    if area <= 1e-14 * diameter**2:
        raise DegenerateElementError(f"cell {cell} has area {area:.3e}")

    # shift to the first vertex before the centroid sums to limit cancellation
    x0 = xy[0]
    sx, sy = x - x0[0], y - x0[1]
    sxn, syn = np.roll(sx, -1), np.roll(sy, -1)
    c = sx * syn - sxn * sy
    centroid = x0 + np.array([((sx + sxn) * c).sum(), ((sy + syn) * c).sum()]) / (6.0 * area)

    tang = np.roll(xy, -1, axis=0) - xy
    lengths = np.hypot(tang[:, 0], tang[:, 1])
    normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / lengths[:, None]

    ids = mesh.cell_edges[cell]
    pairs = mesh.edges[ids]
    return ElementGeometry(
        vertices=xy,
        centroid=centroid,
        diameter=diameter,
        area=float(area),
        edge_ids=ids,
        edge_lengths=lengths,
        normals=normals,
        sigma=mesh.cell_sigma[cell],
        edge_starts=mesh.vertices[pairs[:, 0]],
        edge_ends=mesh.vertices[pairs[:, 1]],
    )


def on_x_axis(point: np.ndarray, tol: float = 1e-12) -> bool:
    return abs(point[1]) <= tol


def build_rectangle_grid(
    nx: int,
    ny: int,
    width: float = 1.0,
    height: float = 1.0,
    neumann: Optional[Predicate] = on_x_axis,
) -> PolygonalMesh:
    """Tensor-product mesh of ``nx * ny`` identical rectangles on [0,w]x[0,h].

    By default boundary edges on the x-axis are Neumann and the rest Dirichlet;
    pass ``neumann=None`` for a pure Dirichlet boundary.
    """
    if nx < 1 or ny < 1:
        raise InvalidArgumentError("nx and ny must be positive")
    if width <= 0 or height <= 0:
        raise InvalidArgumentError("width and height must be positive")
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i: int, j: int) -> int:
        return j * (nx + 1) + i

    cells = [
        [vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]
        for j in range(ny)
        for i in range(nx)
    ]
    return PolygonalMesh.from_cells(vertices, cells, neumann=neumann)


def read_mesh(path: str | Path, neumann: Optional[Predicate] = None) -> PolygonalMesh:
    """Read the plain-text mesh format.

    Layout: a vertex count line, one ``x y`` line per vertex, a cell count
    line, then one line of CCW vertex indices per cell.  Blank lines and
    ``#`` comments are ignored.
    """
    lines = []
    for raw in Path(path).read_text().splitlines():
        s = raw.split("#", 1)[0].strip()
        if s:
            lines.append(s)
    try:
        nv = int(lines[0])
        vertices = np.array([[float(t) for t in lines[1 + i].split()] for i in range(nv)])
        nc = int(lines[1 + nv])
        cells = [[int(t) for t in lines[2 + nv + i].split()] for i in range(nc)]
    except (IndexError, ValueError) as exc:
        raise InvalidArgumentError(f"malformed mesh file {path}: {exc}") from exc
    return PolygonalMesh.from_cells(vertices, cells, neumann=neumann)


def write_mesh(mesh: PolygonalMesh, path: str | Path) -> None:
    out = [str(len(mesh.vertices))]
    out += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    out.append(str(mesh.n_cells))
    out += [" ".join(str(int(v)) for v in loop) for loop in mesh.cells]
    Path(path).write_text("\n".join(out) + "\n")
