import dataclasses
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import polynomial as P

from mixedvem.diagnostics import (
    CSV_HEADER,
    ExperimentReport,
    condition_number,
    convergence_rate,
    convergence_rates,
    element_conditions,
    interpolant_coefficients,
    interpolant_error,
    pairwise_rates,
    pressure_error,
    velocity_error,
)
from mixedvem.errors import InvalidArgumentError, RankDeficiencyWarning
from mixedvem.global_solver import STATUS_OK, assemble_global, solve
from mixedvem.local_assembly import ContextCache, build_context
from mixedvem.mesh import build_rectangle_grid, on_x_axis
from mixedvem.problems import polynomial_problem, test1_problem
from mixedvem.vector_basis import Approach

from .conftest import ALL_APPROACHES, l2_norm


def constant_fields(problem, **fields):
    const = {
        name: (lambda v: lambda pts: np.full(len(np.atleast_2d(pts)), float(v)))(v)
        for name, v in fields.items()
    }
    return dataclasses.replace(problem, **const)


def poly(coeffs):
    c = np.asarray(coeffs, dtype=float)
    return lambda pts: P.polyval2d(pts[:, 0], pts[:, 1], c)


class TestConditionNumber:
    def test_identity(self):
        assert condition_number(np.eye(5)) == 1.0

    def test_diagonal(self):
        assert condition_number(np.diag([10.0, 1.0])) == pytest.approx(10.0, rel=1e-15)

    def test_rectangular(self):
        assert condition_number(np.array([[3.0, 0.0, 0.0], [0.0, 1.5, 0.0]])) == pytest.approx(2.0)

    def test_rank_one(self):
        # rounding may leave a tiny nonzero sigma_min instead of an exact zero
        assert condition_number(np.array([[1.0, 2.0], [2.0, 4.0]])) > 1e15

    def test_exactly_zero_singular_value(self):
        assert condition_number(np.diag([1.0, 0.0])) == math.inf

    def test_non_finite(self):
        assert condition_number(np.array([[1.0, np.nan], [0.0, 1.0]])) == math.inf

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            condition_number(np.zeros((0, 3)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_orthogonal_invariance(self, n, seed):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((n, n))
        Q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
        Q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
        c = condition_number(M)
        assert condition_number(Q1 @ M @ Q2) == pytest.approx(c, rel=1e-10 * max(1.0, c / 1e4))


class TestRates:
    def test_two_points(self):
        assert convergence_rate([1e-1, 1e-2], [1.0, 0.1]) == pytest.approx(1.0, abs=1e-14)

    def test_halving(self):
        hs = [0.5**i for i in range(5)]
        errs = [3.0 * h for h in hs]
        assert convergence_rate(errs, hs) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.5, 9.0), st.floats(1e-3, 1e3))
    def test_exact_power_law(self, rate, const):
        hs = np.array([0.2, 0.1, 0.05, 0.025])
        assert convergence_rate(const * hs**rate, hs) == pytest.approx(rate, abs=1e-9)

    def test_nonpositive_dropped(self):
        assert convergence_rate([0.0, 1e-1, 1e-2], [10.0, 1.0, 0.1]) == pytest.approx(1.0)

    def test_too_few_points(self):
        assert math.isnan(convergence_rate([1e-3], [0.1]))
        assert math.isnan(convergence_rate([-1.0, 1e-3], [1.0, 0.1]))
        assert math.isnan(convergence_rate([np.nan, 1e-3], [1.0, 0.1]))

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            convergence_rate([1.0, 0.5], [1.0])

    def test_pairwise(self):
        hs = [1.0, 0.5, 0.25]
        r = pairwise_rates([1.0, 0.25, 0.125], hs)
        assert r == pytest.approx([2.0, 1.0])

    def test_per_kind(self):
        hs = [1.0, 0.5]
        out = convergence_rates({"a": [1.0, 0.5], "b": [1.0, 0.125]}, hs)
        assert out == pytest.approx({"a": 1.0, "b": 3.0})


class TestErrorNorms:
    @pytest.mark.parametrize("approach", ALL_APPROACHES)
    def test_exact_pressure_gives_zero(self, approach):
        mesh = build_rectangle_grid(3, 3)
        sol = solve(assemble_global(mesh, test1_problem(), approach, 2))
        p = poly([[1.0, -2.0, 0.5], [0.3, 1.0, 0.0], [4.0, 0.0, 0.0]])
        for c in range(mesh.n_cells):
            ctx = sol.system.contexts(mesh.geometry(c))
            sol.pressure[c], rank = interpolant_coefficients(ctx, p(ctx.rule.points))
            assert rank == ctx.n
        assert pressure_error(sol, p) <= 1e-14 * l2_norm(sol, p)

    @pytest.mark.parametrize("approach", ALL_APPROACHES)
    @pytest.mark.parametrize("k", range(4))
    def test_constant_pressure_patch(self, approach, k):
        prob = polynomial_problem(np.array([[2.0]]))
        sol = solve(assemble_global(build_rectangle_grid(4, 4, neumann=None), prob, approach, k))
        assert pressure_error(sol, prob.p_exact) <= 1e-10

    @pytest.mark.parametrize("approach", ALL_APPROACHES)
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_constant_velocity_patch(self, approach, k):
        prob = polynomial_problem(np.array([[0.0, 2.0], [1.0, 0.0]]))
        sol = solve(assemble_global(build_rectangle_grid(4, 4, neumann=None), prob, approach, k))
        assert velocity_error(sol, prob.u_exact) <= 1e-9

    @pytest.mark.parametrize("approach", ALL_APPROACHES)
    def test_zero_solution(self, approach):
        prob = constant_fields(polynomial_problem(np.zeros((1, 1))), gamma=1.0, f=0.0)
        sol = solve(assemble_global(build_rectangle_grid(3, 3, neumann=None), prob, approach, 2))
        assert velocity_error(sol, lambda pts: np.zeros((len(pts), 2))) <= 1e-12
        assert pressure_error(sol, lambda pts: np.zeros(len(pts))) <= 1e-12


class TestInterpolant:
    @pytest.mark.parametrize("approach", ALL_APPROACHES)
    @pytest.mark.parametrize("weighted", [True, False])
    def test_reproduces_polynomials(self, approach, weighted, unit_square_geom):
        ctx = build_context(unit_square_geom, 3, approach)
        p = poly([[1.0, 0.0, 2.0, -1.0], [0.5, 1.0, 0.0, 0.0], [0.0, 3.0, 0.0, 0.0], [1.0, 0, 0, 0]])
        c, rank = interpolant_coefficients(ctx, p(ctx.rule.points), weighted)
        assert rank == ctx.n
        np.testing.assert_allclose(ctx.pV @ c, p(ctx.rule.points), atol=1e-12)

    @pytest.mark.parametrize("approach", ALL_APPROACHES)
    def test_polynomial_interpolant_equals_pressure_error(self, approach):
        # for p in P_k the fit is p itself, so ||p_I - p_h|| = ||p - p_h||
        mesh = build_rectangle_grid(4, 4)
        sol = solve(assemble_global(mesh, test1_problem(), approach, 2))
        p = poly([[2.0, 0.0, 1.0], [1.0, -1.0, 0.0], [0.5, 0.0, 0.0]])
        pe = pressure_error(sol, p)
        assert pe > 1e-3
        assert interpolant_error(sol, p) == pytest.approx(pe, rel=1e-10)

    def test_rank_deficiency_warning(self, aspect100_geom):
        mesh = build_rectangle_grid(1, 1, width=0.1, height=0.001, neumann=None)
        contexts = ContextCache(8, Approach.MONOMIAL)
        fake = SimpleNamespace(
            system=SimpleNamespace(mesh=mesh, contexts=contexts),
            pressure=np.zeros((1, contexts(mesh.geometry(0)).n)),
        )
        with pytest.warns(RankDeficiencyWarning, match="rank-deficient"):
            interpolant_error(fake, lambda pts: np.sin(pts[:, 0]))

    def test_full_rank_partial_no_warning(self, recwarn):
        mesh = build_rectangle_grid(1, 1, width=0.1, height=0.001, neumann=None)
        contexts = ContextCache(8, Approach.PARTIAL)
        fake = SimpleNamespace(
            system=SimpleNamespace(mesh=mesh, contexts=contexts),
            pressure=np.zeros((1, contexts(mesh.geometry(0)).n)),
        )
        interpolant_error(fake, lambda pts: np.sin(pts[:, 0]))
        assert not [w for w in recwarn if issubclass(w.category, RankDeficiencyWarning)]


class TestReport:
    def test_header(self):
        assert CSV_HEADER == (
            "approach,k,mesh,h,n_dofs,p_err,u_err,pI_err,"
            "cond_G,cond_W,cond_B,cond_Pi,cond_D,solver_status,wall_time_s"
        )
        assert ",".join(ExperimentReport.columns()) == CSV_HEADER

    def test_row_sentinels(self):
        rep = ExperimentReport(
            "monomial", 7, "10x1000", 0.1, 100, math.nan, math.nan, math.nan,
            math.inf, 2.0, 3.0, math.inf, 1.0, "failed", 0.5,
        )
        row = rep.row()
        assert row[5:8] == ["nan"] * 3
        assert row[8] == "inf" and row[11] == "inf"
        assert row[:3] == ["monomial", "7", "10x1000"]

    def test_row_round_trips_floats(self):
        rep = ExperimentReport("ortho", 1, "5x5", 0.2828, 10, 1.234e-5, 2e-6, 3e-7,
                               1.0, 2.0, 3.0, 4.0, 5.0, "ok", 0.01)
        assert float(rep.row()[5]) == 1.234e-5


@pytest.fixture(scope="module")
def test2_conditions():
    out = {}
    for ar in (10, 50, 100):
        mesh = build_rectangle_grid(10, 10 * ar, neumann=on_x_axis)
        for k in (4, 6, 8):
            for approach in ALL_APPROACHES:
                out[ar, k, approach] = element_conditions(mesh, ContextCache(k, approach))["G"]
    return out


@pytest.mark.parametrize("ar", [10, 50, 100])
@pytest.mark.parametrize("k", [4, 6, 8])
def test_condition_ordering_test2(test2_conditions, ar, k):
    c = {a: test2_conditions[ar, k, a] for a in ALL_APPROACHES}
    assert c[Approach.ORTHO] <= c[Approach.PARTIAL] <= c[Approach.MONOMIAL]
    assert c[Approach.ORTHO] >= 1.0


def rates(reports, kind):
    return convergence_rate([getattr(r, kind) for r in reports], [r.h for r in reports])


@pytest.mark.parametrize("k", range(5))
class TestTest1Rates:
    def test_statuses(self, test1_reports, k):
        for a in ALL_APPROACHES:
            assert all(r.solver_status == STATUS_OK for r in test1_reports[a, k])

    def test_velocity_rate(self, test1_reports, k):
        for a in ALL_APPROACHES:
            assert rates(test1_reports[a, k], "u_err") == pytest.approx(k + 1, abs=0.15)

    def test_pressure_rate_at_least_optimal(self, test1_reports, k):
        # the reference table itself reports pressure rates above k + 1 on these meshes
        for a in ALL_APPROACHES:
            assert rates(test1_reports[a, k], "p_err") >= k + 1 - 0.15

    def test_superconvergence_rate(self, test1_reports, k):
        for a in ALL_APPROACHES:
            assert rates(test1_reports[a, k], "pI_err") == pytest.approx(k + 2, abs=0.2)
