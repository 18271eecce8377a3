"""Experiment driver: mesh families, per-case runs and CSV output."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

from .diagnostics import (
    CSV_HEADER,
    ExperimentReport,
    convergence_rate,
    element_conditions,
    interpolant_error,
    pairwise_rates,
    pressure_error,
    velocity_error,
)
from .errors import InvalidArgumentError, VemError
from .global_solver import STATUS_FAILED, assemble_global, number_dofs, solve
from .local_assembly import ContextCache
from .mesh import PolygonalMesh, build_rectangle_grid, on_x_axis
from .problems import ProblemData, patch_problem, test1_problem
from .vector_basis import Approach

log = logging.getLogger(__name__)

TESTS = ("1", "2", "patch")
RATE_HEADER = "approach,k,error,rate_fit,rate_pairs,n_levels"
ERROR_KINDS = ("p_err", "u_err", "pI_err")


@dataclass
class ExperimentConfig:
    test: str = "1"
    approaches: tuple[Approach, ...] = tuple(Approach)
    k_min: int = 0
    k_max: Optional[int] = None
    meshes: Optional[tuple[int, ...]] = None
    aspect_ratios: tuple[float, ...] = (10.0, 50.0, 100.0)
    out: Path = field(default_factory=lambda: Path("results"))
    workers: int = 1

    def __post_init__(self) -> None:
        if self.test not in TESTS:
            raise InvalidArgumentError(f"unknown test {self.test!r}; expected one of {TESTS}")
        if self.k_max is None:
            self.k_max = 10 if self.test == "2" else 8
        if self.meshes is None:
            self.meshes = {"1": (5, 10, 20), "2": (10,), "patch": (2, 5)}[self.test]
        self.approaches = tuple(Approach(a) for a in self.approaches)
        if not self.approaches:
            raise InvalidArgumentError("no approach selected")
        if self.k_min < 0 or self.k_max < self.k_min:
            raise InvalidArgumentError(f"invalid degree range {self.k_min}..{self.k_max}")
        if any(n < 1 for n in self.meshes):
            raise InvalidArgumentError("mesh sizes must be positive")
        if any(not ar >= 1 for ar in self.aspect_ratios):
            raise InvalidArgumentError("aspect ratios must be at least 1")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be positive")
        self.out = Path(self.out)


def mesh_family(config: ExperimentConfig) -> list[tuple[str, PolygonalMesh]]:
    """Meshes of the configured test, coarse to fine."""
    out = []
    if config.test == "2":
        for n in config.meshes:
            for ar in config.aspect_ratios:
                ny = int(round(n * ar))
                out.append((f"{n}x{ny}", build_rectangle_grid(n, ny, neumann=on_x_axis)))
    else:
        neumann = on_x_axis if config.test == "1" else None
        for n in config.meshes:
            out.append((f"{n}x{n}", build_rectangle_grid(n, n, neumann=neumann)))
    return out


def problem_for(config: ExperimentConfig, k: int) -> ProblemData:
    return patch_problem(k) if config.test == "patch" else test1_problem()


def run_case(
    mesh: PolygonalMesh,
    label: str,
    problem: ProblemData,
    approach: Approach,
    k: int,
    workers: int = 1,
) -> ExperimentReport:
    """Assemble, solve and measure one (approach, k, mesh) triple.

    Assembly or factorization failures produce a report with status
    ``failed`` and NaN errors instead of an exception.
    """
    approach = Approach(approach)
    t0 = time.perf_counter()
    contexts = ContextCache(k, approach)
    errs = {kind: math.nan for kind in ERROR_KINDS}
    try:
        solution = solve(assemble_global(mesh, problem, approach, k, contexts=contexts, workers=workers))
        status = solution.status
        if status != STATUS_FAILED:
            errs["p_err"] = pressure_error(solution, problem.p_exact)
            errs["u_err"] = velocity_error(solution, problem.u_exact)
            errs["pI_err"] = interpolant_error(solution, problem.p_exact)
        else:
            log.warning("%s k=%d %s: %s", approach.value, k, label, solution.message)
    except VemError as exc:
        status = STATUS_FAILED
        log.warning("%s k=%d %s: %s", approach.value, k, label, exc)
    conds = element_conditions(mesh, contexts)
    return ExperimentReport(
        approach=approach.value,
        k=k,
        mesh=label,
        h=mesh.h,
        n_dofs=number_dofs(mesh, k).n_total,
        **errs,
        **{f"cond_{name}": val for name, val in conds.items()},
        solver_status=status,
        wall_time_s=time.perf_counter() - t0,
    )


def iter_reports(config: ExperimentConfig) -> Iterator[ExperimentReport]:
    """Reports in approach-major, then degree, then mesh order."""
    meshes = mesh_family(config)
    for approach in config.approaches:
        for k in range(config.k_min, config.k_max + 1):
            problem = problem_for(config, k)
            for label, mesh in meshes:
                rep = run_case(mesh, label, problem, approach, k, config.workers)
                log.info(
                    "%s k=%d %s: status=%s p_err=%.3e (%.1fs)",
                    rep.approach, rep.k, rep.mesh, rep.solver_status, rep.p_err, rep.wall_time_s,
                )
                yield rep


def rate_rows(reports: Sequence[ExperimentReport]) -> list[list[str]]:
    """Fitted and pairwise rates of each error kind, per (approach, k)."""
    groups: dict[tuple[str, int], list[ExperimentReport]] = {}
    for r in reports:
        groups.setdefault((r.approach, r.k), []).append(r)
    rows = []
    for (approach, k), reps in groups.items():
        hs = [r.h for r in reps]
        for kind in ERROR_KINDS:
            errs = [getattr(r, kind) for r in reps]
            pairs = ";".join(f"{x:.6f}" for x in pairwise_rates(errs, hs))
            fit = convergence_rate(errs, hs)
            rows.append([approach, str(k), kind, f"{fit:.6f}", pairs, str(len(reps))])
    return rows


def run_experiment(config: ExperimentConfig) -> tuple[Path, Path]:
    """Run every case and write ``results.csv`` and ``rates.csv`` to ``config.out``.

    Rows are flushed as they are produced so a long sweep leaves partial
    results behind if interrupted.
    """
    config.out.mkdir(parents=True, exist_ok=True)
    results = config.out / "results.csv"
    rates = config.out / "rates.csv"
    reports = []
    with results.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER.split(","))
        for rep in iter_reports(config):
            writer.writerow(rep.row())
            fh.flush()
            reports.append(rep)
    with rates.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RATE_HEADER.split(","))
        writer.writerows(rate_rows(reports))
    return results, rates
