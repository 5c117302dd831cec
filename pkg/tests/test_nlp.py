import itertools
import logging

import numpy as np
import pytest
from scipy.optimize import minimize

from minlpsel import expr as E
from minlpsel.errors import NonConvexError
from minlpsel.generator import GeneratorSpec, generate_instance
from minlpsel.model import BINARY, CONTINUOUS, VariableMeta, make_problem
from minlpsel.nlp import (INFEASIBLE, ITERATION_LIMIT, OPTIMAL, NlpModel, NlpOptions, barrier_solve,
                          solve_nlp)


def cont(name, lo=None, hi=None):
    return VariableMeta(name, CONTINUOUS, lo, hi)


def relaxations(count, **kw):
    spec = dict(n_binary=3, n_continuous=4, n_constraints=5)
    spec.update(kw)
    return [generate_instance(GeneratorSpec(seed=s, **spec)).relaxed() for s in range(count)]


class TestExamples:
    def test_interior_optimum(self):
        r = solve_nlp(make_problem([cont("x", 0, 4)], "(x-1)^2"))
        assert r.status == OPTIMAL
        assert r.point[0] == pytest.approx(1.0, abs=1e-6)
        assert r.objective == pytest.approx(0.0, abs=1e-6)

    def test_symmetric_constrained(self):
        r = solve_nlp(make_problem([cont("x"), cont("y")], "x^2 + y^2", [("1 - x - y", 0)]))
        assert r.status == OPTIMAL
        np.testing.assert_allclose(r.point, [0.5, 0.5], atol=1e-6)
        assert r.objective == pytest.approx(0.5, abs=1e-6)
        assert r.multipliers[0] == pytest.approx(1.0, abs=1e-5)

    def test_empty_feasible_set(self):
        r = solve_nlp(make_problem([cont("x")], "x", [("2 - x", 0), ("x", 1)]))
        assert r.status == INFEASIBLE
        assert r.slack == pytest.approx(0.5, abs=1e-6)

    def test_crossed_bounds(self):
        p = make_problem([cont("x")], "x")
        assert barrier_solve(NlpModel.from_problem(p), [2.0], [1.0]).status == INFEASIBLE

    def test_boundary_only_feasible_point(self):
        # feasible set is the single point x = 1
        r = solve_nlp(make_problem([cont("x", 0, 2)], "x^2", [("(x - 1)^2", 0)]))
        assert r.max_violation <= 1e-6
        assert r.point[0] == pytest.approx(1.0, abs=1e-3)

    def test_implicit_bound_flag(self):
        r = solve_nlp(make_problem([cont("x"), cont("y", 0, 1)], "x + y"))
        assert 0 in r.implicit_bounds_active
        assert 1 not in r.implicit_bounds_active

    def test_fixed_variables_substituted(self):
        r = solve_nlp(make_problem([cont("x", 2, 2), cont("y")], "(x - y)^2 + y^2"))
        assert r.status == OPTIMAL
        np.testing.assert_allclose(r.point, [2.0, 1.0], atol=1e-6)

    def test_rejects_discrete(self):
        p = make_problem([VariableMeta("y", BINARY)], "y")
        with pytest.raises(ValueError):
            solve_nlp(p)

    def test_rejects_nonconvex_without_override(self):
        p = make_problem([cont("x", -1, 2)], "-x^2")
        with pytest.raises(NonConvexError):
            solve_nlp(p)
        r = solve_nlp(p, allow_nonconvex=True)
        assert r.max_violation <= 1e-6

    def test_iteration_cap(self):
        p = relaxations(1)[0]
        r = solve_nlp(p, options=NlpOptions(max_newton=3))
        assert r.status == ITERATION_LIMIT
        assert r.newton_steps <= 3

    def test_verbose_trace(self, caplog):
        with caplog.at_level(logging.INFO, logger="minlpsel.nlp"):
            solve_nlp(make_problem([cont("x", 0, 4)], "(x-1)^2"), options=NlpOptions(verbose=True))
        assert any("newton" in m for m in caplog.messages)


@pytest.fixture(scope="module")
def solved():
    return [(p, solve_nlp(p)) for p in relaxations(25)]


class TestProperties:
    def test_optimal_contract(self, solved):
        for _, r in solved:
            assert r.status == OPTIMAL
            assert r.max_violation <= 1e-6 and r.kkt_residual <= 1e-6

    def test_matches_slsqp(self, solved):
        for p, r in solved:
            lb, ub = p.bounds()
            cons = [{"type": "ineq", "fun": (lambda x, c=c: c.rhs - E.evaluate(c.body, x)),
                     "jac": (lambda x, c=c: -E.gradient(c.body, x))} for c in p.constraints]
            ref = minimize(lambda x: E.evaluate(p.objective, x), r.point + 0.1 * np.sign(r.point),
                           jac=lambda x: E.gradient(p.objective, x), bounds=list(zip(lb, ub)),
                           constraints=cons, method="SLSQP", options=dict(ftol=1e-12, maxiter=500))
            if ref.success:
                assert r.objective == pytest.approx(ref.fun, abs=1e-6)

    def test_below_feasible_witnesses(self, solved):
        rng = np.random.default_rng(0)
        for p, r in solved:
            lb, ub = map(np.array, p.bounds())
            for w in rng.uniform(lb, ub, size=(200, p.n)):
                if all(E.evaluate(c.body, w) <= c.rhs for c in p.constraints):
                    assert r.objective <= E.evaluate(p.objective, w) + 1e-6

    def test_merit_decreases_within_each_centering(self, solved):
        for _, r in solved:
            for _, group in itertools.groupby(r.merit_trace, key=lambda e: (e[0], e[1])):
                vals = [phi for _, _, phi in group]
                for a, b in zip(vals, vals[1:]):
                    assert b <= a + 1e-12 * max(1.0, abs(a))

    def test_resolve_from_solution(self, solved):
        for p, r in solved[:10]:
            again = solve_nlp(p, start=r.point)
            assert again.objective == pytest.approx(r.objective, abs=1e-8)

    def test_deterministic(self, solved):
        p, r = solved[0]
        again = solve_nlp(p)
        assert again.objective == r.objective and np.array_equal(again.point, r.point)
