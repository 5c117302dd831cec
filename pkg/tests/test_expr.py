import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minlpsel import expr as E
from minlpsel.expr import Curvature, DomainError, classify_curvature, evaluate, gradient
from minlpsel.parsing import parse_expr

from helpers import ad_vs_fd_trial, fd_gradient, random_expr, rel_err

XY = ["x", "y"]


def P(text, names=XY):
    return parse_expr(text, names)


class TestEvaluate:
    @pytest.mark.parametrize("text, point, expected", [
        ("(x-1)^2 + exp(y)", (1, 0), 1.0),
        ("3*x - 2*y + 1", (2, 1), 5.0),
        ("sqrt(x) * log(y)", (4, math.e), 2.0),
        ("-x^2", (3, 0), -9.0),
        ("x^-1 + y^0.5", (2, 9), 3.5),
    ])
    def test_values(self, text, point, expected):
        assert evaluate(P(text), point) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("text, point", [
        ("log(x)", (0, 0)),
        ("log(x)", (-1, 0)),
        ("sqrt(x)", (-1e-3, 0)),
        ("x^0.5", (-1, 0)),
        ("x^-1", (0, 0)),
        ("exp(exp(x))", (10, 0)),
    ])
    def test_domain_errors(self, text, point):
        with pytest.raises(DomainError):
            evaluate(P(text), point)

    def test_gradient_raises_on_domain_violation(self):
        with pytest.raises(DomainError):
            gradient(P("log(x) + y"), [0.0, 1.0])

    def test_deterministic(self):
        e = P("exp(x)*y + sqrt(x^2 + 1)")
        a = [evaluate(e, (0.3, -1.2)) for _ in range(3)]
        assert a[0] == a[1] == a[2]


class TestGradient:
    def test_analytic(self):
        np.testing.assert_allclose(gradient(P("(x-1)^2 + exp(y)"), [2, 0]), [2.0, 1.0], atol=1e-14)

    def test_constant_has_zero_gradient(self):
        np.testing.assert_array_equal(gradient(E.const(5.0), [0.3, 7.0]), [0.0, 0.0])

    def test_absent_variables_get_zero(self):
        g = gradient(parse_expr("x^2", ["x", "y", "z"]), [3.0, 1.0, 1.0])
        np.testing.assert_array_equal(g, [6.0, 0.0, 0.0])

    def test_matches_central_differences(self):
        # frozen oracle: d/dx = 3x^2 + sqrt(y) = 5, d/dy = x / (2 sqrt(y)) = 0.25
        e = P("x^3 + x*sqrt(y)")
        g = gradient(e, [1.0, 4.0])
        fd = fd_gradient(lambda v: evaluate(e, v), np.array([1.0, 4.0]), 1e-6)
        assert rel_err(g, fd) <= 1e-6
        np.testing.assert_allclose(g, [5.0, 0.25], rtol=1e-15)

    def test_repeated_subtrees_accumulate(self):
        x = E.var(0)
        e = x * x * x
        assert gradient(e, [2.0])[0] == pytest.approx(12.0)

    def test_negative_constant_base_power(self):
        e = E.add(E.power(E.const(-2.0), 2), E.var(0))
        assert evaluate(e, [1.0]) == 5.0
        np.testing.assert_array_equal(gradient(e, [1.0]), [1.0])

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_trees_agree_with_finite_differences(self, seed):
        r = ad_vs_fd_trial(np.random.default_rng(seed))
        if r is not None:
            assert r <= 1e-6

    def test_compiled_value_matches_tree_walk(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            e = random_expr(rng, 3, 5)
            x = rng.uniform(-2, 2, 3)
            try:
                ref = evaluate(e, x)
            except DomainError:
                continue
            v, _ = E.compile_expr(e).value_and_grad(x)
            assert v == pytest.approx(ref, rel=1e-12, abs=1e-12)


class TestCurvature:
    @pytest.mark.parametrize("text, expected", [
        ("x^2 + exp(y)", Curvature.CONVEX),
        ("3*x - 2*y + 1", Curvature.AFFINE),
        ("x*y", Curvature.UNKNOWN),
        ("-log(x + 1)", Curvature.CONVEX),
        ("log(x + 1)", Curvature.CONCAVE),
        ("sqrt(2*x + 3)", Curvature.CONCAVE),
        ("2*(x - y)^2 + 0.5*exp(x + y)", Curvature.CONVEX),
        ("-(x^2)", Curvature.CONCAVE),
        ("exp(x^2)", Curvature.CONVEX),
        ("x^0", Curvature.AFFINE),
        ("(x^2)^1", Curvature.CONVEX),
        ("3", Curvature.AFFINE),
    ])
    def test_rules(self, text, expected):
        assert classify_curvature(P(text)) is expected

    @pytest.mark.parametrize("text", [
        "x^3", "x*y", "-x^2", "exp(-x^2)", "log(x^2 + 1)", "(x^2 - 1)^2", "sqrt(x^2 + 1)",
        "x^0.5", "x^-1", "x^1.5", "exp(x)*exp(y)", "-exp(x) + x^2", "(exp(x))^2",
    ])
    def test_never_convex_on_nonconvex_set(self, text):
        assert not classify_curvature(P(text)).is_convex

    def test_affine_is_both(self):
        assert Curvature.AFFINE.is_convex and Curvature.AFFINE.is_concave
        assert not Curvature.UNKNOWN.is_convex and not Curvature.UNKNOWN.is_concave

    @settings(max_examples=300, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_convex_verdicts_hold_along_segments(self, seed):
        # soundness: a tree reported convex satisfies the midpoint inequality
        rng = np.random.default_rng(seed)
        e = random_expr(rng, 2, 4)
        c = classify_curvature(e)
        if not (c.is_convex or c.is_concave):
            return
        sign = 1.0 if c.is_convex else -1.0
        for _ in range(5):
            a, b = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
            try:
                fa, fb, fm = evaluate(e, a), evaluate(e, b), evaluate(e, (a + b) / 2)
            except DomainError:
                continue
            assert sign * fm <= sign * (fa + fb) / 2 + 1e-9 * (1 + abs(fa) + abs(fb))
