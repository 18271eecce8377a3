"""Acceptance criteria C1 to C7.

Each test stores its outcome in ``conftest.ACCEPTANCE``; the terminal summary
prints one PASS/FAIL line per criterion after the run.
"""

import math

import numpy as np
import pytest

from mixedvem.diagnostics import (
    convergence_rate,
    element_conditions,
    gram_errors,
    pressure_error,
    structural_residuals,
    velocity_error,
)
from mixedvem.errors import VemError
from mixedvem.experiments import run_case
from mixedvem.global_solver import STATUS_FAILED, assemble_global, solve
from mixedvem.local_assembly import ContextCache, build_context, shape_key
from mixedvem.mesh import build_rectangle_grid, on_x_axis
from mixedvem.problems import patch_problem, test1_problem
from mixedvem.vector_basis import Approach

from .conftest import ACCEPTANCE, ALL_APPROACHES, l2_norm

# reference convergence rates on the square-mesh family, k = 0..5
TABLE1 = {
    "p_err": (1.1956, 2.4760, 3.7464, 4.8565, 5.9153, 6.9456),
    "u_err": (0.9947, 2.0937, 3.1263, 4.0877, 5.1110, None),
    "pI_err": (1.9417, 3.0056, 3.9580, 4.9588, 5.9529, 6.9680),
}
# the velocity rate at k = 5 differs between approaches in the reference table
TABLE1_U5 = {Approach.MONOMIAL: 5.9812, Approach.PARTIAL: 6.0812, Approach.ORTHO: 6.1058}


def record(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)
    assert ok, detail


def fitted(reports, kind):
    return convergence_rate([getattr(r, kind) for r in reports], [r.h for r in reports])


def reference_rate(kind, approach, k):
    if kind == "u_err" and k == 5:
        return TABLE1_U5[approach]
    return TABLE1[kind][k]


def compare_with_table(reports_by_case, kmax, tol):
    worst, where = 0.0, None
    for approach in ALL_APPROACHES:
        for k in range(kmax + 1):
            for kind in TABLE1:
                d = abs(fitted(reports_by_case[approach, k], kind) - reference_rate(kind, approach, k))
                if not d <= worst:
                    worst, where = d, (approach.value, k, kind)
    return worst <= tol, worst, where


def test_c1_table1_rates(test1_reports):
    ok, worst, where = compare_with_table(test1_reports, 4, 0.2)
    record("C1", ok, f"max |fitted rate - table| = {worst:.3f} (at {where}), tolerance 0.2")


@pytest.fixture(scope="module")
def high_order_runs():
    mesh = build_rectangle_grid(10, 10, neumann=on_x_axis)
    prob = test1_problem()
    return {
        (a, k): run_case(mesh, "10x10", prob, a, k)
        for k in (7, 8)
        for a in ALL_APPROACHES
    }


def test_c2_high_order_divergence(high_order_runs):
    ok, parts = True, []
    for k in (7, 8):
        o = high_order_runs[Approach.ORTHO, k]
        p = high_order_runs[Approach.PARTIAL, k]
        m = high_order_runs[Approach.MONOMIAL, k]
        if m.solver_status == STATUS_FAILED:
            good = o.p_err <= p.p_err
            parts.append(f"k={k}: monomial failed, ortho {o.p_err:.4e} <= partial {p.p_err:.4e}: {good}")
        else:
            good = o.p_err <= p.p_err <= 0.01 * m.p_err
            parts.append(
                f"k={k}: ortho {o.p_err:.4e}, partial {p.p_err:.4e}, monomial {m.p_err:.4e} "
                f"[{m.solver_status}] (partial/monomial = {p.p_err / m.p_err:.3g})"
            )
        ok &= good
    record("C2", ok, "; ".join(parts))


@pytest.fixture(scope="module")
def aspect100_conditions():
    mesh = build_rectangle_grid(10, 1000, neumann=on_x_axis)
    return {
        (a, k): element_conditions(mesh, ContextCache(k, a))["G"]
        for a in ALL_APPROACHES
        for k in range(9)
    }


def test_c3_conditioning(aspect100_conditions):
    c = aspect100_conditions
    ortho = max(c[Approach.ORTHO, k] for k in range(9))
    mono6 = c[Approach.MONOMIAL, 6]
    between = all(
        c[Approach.ORTHO, k] < c[Approach.PARTIAL, k] < c[Approach.MONOMIAL, k] for k in range(5, 9)
    )
    ok = ortho <= 1 + 1e-8 and mono6 >= 1e8 and between
    partial = ", ".join(f"{c[Approach.PARTIAL, k]:.2e}" for k in range(5, 9))
    record(
        "C3",
        ok,
        f"max cond(G) ortho {ortho:.12f}; monomial at k=6 {mono6:.2e}; "
        f"partial k=5..8 [{partial}] strictly between: {between}",
    )


def acceptance_meshes():
    out = [(f"{n}x{n}", build_rectangle_grid(n, n, neumann=on_x_axis)) for n in (5, 10, 20)]
    out += [
        (f"10x{10 * ar}", build_rectangle_grid(10, 10 * ar, neumann=on_x_axis)) for ar in (10, 50, 100)
    ]
    return out


def distinct_shapes(mesh):
    """One geometry per translation class; the element matrices of the others coincide."""
    seen = {}
    for c in range(mesh.n_cells):
        g = mesh.geometry(c)
        seen.setdefault(shape_key(g), g)
    return list(seen.values())


def test_c4_orthonormality():
    worst_h, worst_g = 0.0, 0.0
    for _, mesh in acceptance_meshes():
        for geom in distinct_shapes(mesh):
            for k in range(9):
                eH, _ = gram_errors(build_context(geom, k, Approach.PARTIAL))
                _, eG = gram_errors(build_context(geom, k, Approach.ORTHO))
                worst_h, worst_g = max(worst_h, eH), max(worst_g, eG)
    ok = worst_h <= 1e-12 and worst_g <= 1e-10
    record("C4", ok, f"max ||I - H|| = {worst_h:.2e} (tol 1e-12), max ||G - I|| = {worst_g:.2e} (tol 1e-10)")


def test_c5_structural_identities():
    elements = {
        "square": build_rectangle_grid(5, 5).geometry(0),
        "aspect100": build_rectangle_grid(10, 1000).geometry(0),
    }
    limits = {"Pi_D": 1e-9, "Tgrad_Tperp": 1e-12, "KS_D": 1e-9, "Lambda_W": 1e-11}
    worst = {(a, key): 0.0 for a in ALL_APPROACHES for key in limits}
    for approach in ALL_APPROACHES:
        for geom in elements.values():
            for k in range(9):
                ctx = build_context(geom, k, approach)
                try:
                    res = structural_residuals(ctx, np.broadcast_to(np.eye(2), (len(ctx.rule), 2, 2)))
                except (VemError, np.linalg.LinAlgError):
                    # the projection cannot be formed; the basis identity still can
                    res = dict.fromkeys(limits, math.inf)
                    res["Tgrad_Tperp"] = float(np.abs(ctx.ops.T_nabla @ ctx.ops.T_perp.T).max(initial=0.0))
                for key in limits:
                    worst[approach, key] = max(worst[approach, key], res[key])
    parts, ok = [], True
    for approach in ALL_APPROACHES:
        keys = [key for key in limits if not (key == "Lambda_W" and approach is Approach.MONOMIAL)]
        bad = [key for key in keys if not worst[approach, key] <= limits[key]]
        ok &= not bad
        vals = ", ".join(f"{key} {worst[approach, key]:.1e}" for key in keys)
        parts.append(f"{approach.value} [{vals}]" + (f" exceeds on {'/'.join(bad)}" if bad else ""))
    record("C5", ok, "worst over k<=8, square and aspect-100 elements: " + "; ".join(parts))


def test_c6_patch():
    worst = 0.0
    for n in (2, 5):
        mesh = build_rectangle_grid(n, n, neumann=None)
        for k in range(5):
            prob = patch_problem(k)
            for approach in ALL_APPROACHES:
                sol = solve(assemble_global(mesh, prob, approach, k))
                p_rel = pressure_error(sol, prob.p_exact) / l2_norm(sol, prob.p_exact)
                # the k = 0 patch has u = 0, so its velocity error is taken relative to 1
                u_rel = velocity_error(sol, prob.u_exact) / max(l2_norm(sol, prob.u_exact), 1.0)
                worst = max(worst, p_rel, u_rel)
    record("C6", worst <= 1e-9, f"max relative patch-test error {worst:.2e} (tol 1e-9)")


def test_c7_superconvergence(test1_reports):
    worst, where = 0.0, None
    for approach in ALL_APPROACHES:
        for k in range(4):
            d = abs(fitted(test1_reports[approach, k], "pI_err") - (k + 2))
            if not d <= worst:
                worst, where = d, (approach.value, k)
    record("C7", worst <= 0.25, f"max |pI rate - (k+2)| = {worst:.3f} (at {where}), tolerance 0.25")


@pytest.mark.full
@pytest.mark.slow
def test_full_table1_sweep():
    """Four refinement levels up to 1600 cells and k <= 5, compared with the table."""
    prob = test1_problem()
    meshes = [(f"{n}x{n}", build_rectangle_grid(n, n, neumann=on_x_axis)) for n in (5, 10, 20, 40)]
    reports = {
        (a, k): [run_case(m, label, prob, a, k) for label, m in meshes]
        for a in ALL_APPROACHES
        for k in range(6)
    }
    ok, worst, where = compare_with_table(reports, 5, 0.2)
    assert ok, f"max |fitted rate - table| = {worst:.3f} at {where}"
    assert not math.isnan(worst)
