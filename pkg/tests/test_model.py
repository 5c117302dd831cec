import json
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minlpsel import expr as E
from minlpsel.errors import EqualityUnsupportedError, ExprSyntaxError, ModelError, UnknownIdentifierError
from minlpsel.generator import GeneratorSpec, generate_corpus, generate_instance
from minlpsel.model import (BINARY, CONTINUOUS, INTEGER, VariableMeta, load_problem, parse_model,
                            save_problem, serialize_model, structurally_equal)
from minlpsel.parsing import format_expr, parse_expr
from minlpsel.solvers import brute_solve

MINIMAL = """{
  "name": "one",
  "variables": [{"name": "x", "domain": "continuous"}],
  "objective": "(x-1)^2",
  "constraints": []
}"""


def doc(objective="x + y", constraints=(), variables=None):
    variables = variables or [{"name": "x", "domain": "continuous", "lower": 0, "upper": 4},
                              {"name": "y", "domain": "binary"}]
    return json.dumps({"name": "t", "variables": variables, "objective": objective,
                       "constraints": list(constraints)}, indent=2)


class TestGrammar:
    @pytest.mark.parametrize("text", [
        "x + y", "x - y - 1", "-x + 2*y", "2*x*y", "(x + y)^2", "x^-1", "-(x + 1)", "-(-3)",
        "exp(x - 1) + log(y + 2) - sqrt(x)", "x - (y - 1)", "(x - 1)^2 + 2*y", "3 * -x",
        "-2^2", "1e-3*x + .5", "((x))", "x*(y*x)", "-x^2", "(-2)^2",
    ])
    def test_round_trip(self, text):
        e = parse_expr(text, ["x", "y"])
        assert parse_expr(format_expr(e, ["x", "y"]), ["x", "y"]) == e

    def test_negative_literal_folds(self):
        assert parse_expr("-3", ["x"]) == E.const(-3.0)
        assert parse_expr("-2^2", ["x"]) == E.neg(E.power(E.const(2.0), 2))

    @pytest.mark.parametrize("text, column", [
        ("x + ", 5), ("x $ y", 3), ("x ^ y", 5), ("(x + y", 7), ("x^2^3", 4), ("foo(x)", 1),
    ])
    def test_syntax_error_columns(self, text, column):
        with pytest.raises(ExprSyntaxError) as info:
            parse_expr(text, ["x", "y"])
        assert info.value.column == column

    def test_unknown_identifier(self):
        with pytest.raises(UnknownIdentifierError) as info:
            parse_expr("x + z", ["x", "y"])
        assert info.value.column == 5

    def test_division_is_not_in_the_grammar(self):
        with pytest.raises(ExprSyntaxError):
            parse_expr("x / y", ["x", "y"])


class TestParseModel:
    def test_minimal(self):
        p = parse_model(MINIMAL)
        assert (p.n, p.m, p.name) == (1, 0, "one")
        assert E.evaluate(p.objective, [3.0]) == 4.0

    def test_equality_relation_rejected(self):
        with pytest.raises(EqualityUnsupportedError):
            parse_model(doc(constraints=[{"body": "x + y", "relation": "==", "rhs": 1}]))

    def test_equality_inside_body_rejected(self):
        with pytest.raises(EqualityUnsupportedError):
            parse_model(doc(constraints=[{"body": "x + y == 1", "relation": "<=", "rhs": 0}]))

    def test_syntax_error_reports_file_position(self):
        text = doc(constraints=[{"body": "x + * y", "relation": "<=", "rhs": 0}])
        with pytest.raises(ExprSyntaxError) as info:
            parse_model(text)
        line = text.splitlines()[info.value.line - 1]
        assert line[info.value.column - 1] == "*"

    def test_unknown_identifier_in_objective(self):
        with pytest.raises(UnknownIdentifierError) as info:
            parse_model(doc(objective="x + w"))
        assert info.value.line is not None

    def test_invalid_json(self):
        with pytest.raises(ModelError) as info:
            parse_model('{"name": "t",\n "variables": [}')
        assert info.value.line == 2

    @pytest.mark.parametrize("variables, message", [
        ([{"name": "x", "domain": "real"}], "unknown domain"),
        ([{"name": "x", "lower": 2, "upper": 1}], "lower bound exceeds"),
        ([{"name": "y", "domain": "binary", "upper": 2}], "binary"),
        ([{"name": "x"}, {"name": "x"}], "duplicate"),
    ])
    def test_bad_variables(self, variables, message):
        with pytest.raises(ModelError, match=message):
            parse_model(doc(objective="x", variables=variables))

    def test_binary_bounds(self):
        v = VariableMeta("y", BINARY)
        assert v.bounds == (0.0, 1.0) and v.is_discrete


class TestSerialize:
    def test_byte_identical_on_repeat(self):
        p = parse_model(MINIMAL)
        assert serialize_model(p) == serialize_model(p)

    def test_empty_constraint_section(self):
        d = json.loads(serialize_model(parse_model(MINIMAL)))
        assert d["constraints"] == []
        assert list(d) == ["name", "variables", "objective", "constraints"]

    def test_two_space_indent(self):
        assert serialize_model(parse_model(MINIMAL)).splitlines()[1].startswith('  "name"')

    def test_seed_7_round_trip(self):
        p = generate_instance(GeneratorSpec(seed=7))
        assert structurally_equal(parse_model(serialize_model(p)), p)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6), st.integers(0, 3), st.floats(0, 1))
    def test_round_trip_generated(self, seed, n_int, half):
        spec = GeneratorSpec(n_binary=2, n_integer=n_int, n_continuous=3, n_constraints=4,
                             half_bounded=half, seed=seed)
        p = generate_instance(spec)
        text = serialize_model(p)
        q = parse_model(text)
        assert structurally_equal(q, p)
        assert serialize_model(q) == text

    def test_files(self, tmp_path):
        p = generate_instance(GeneratorSpec(seed=3))
        save_problem(p, tmp_path / "a.json")
        assert structurally_equal(load_problem(tmp_path / "a.json"), p)


class TestGenerator:
    def test_seeded_determinism(self):
        spec = GeneratorSpec(n_binary=3, n_continuous=2, n_constraints=4, seed=7)
        assert structurally_equal(generate_instance(spec), generate_instance(spec))

    def test_different_seeds_differ(self):
        a = generate_instance(GeneratorSpec(seed=1))
        b = generate_instance(GeneratorSpec(seed=2))
        assert not structurally_equal(a, b)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6))
    def test_bodies_convex(self, seed):
        p = generate_instance(GeneratorSpec(n_binary=2, n_integer=1, n_continuous=3, seed=seed))
        fc, gcs = p.curvatures()
        assert fc.is_convex and all(g.is_convex for g in gcs)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0, 1))
    def test_domains_and_bounds(self, seed, half):
        p = generate_instance(GeneratorSpec(n_binary=1, n_integer=2, n_continuous=2, half_bounded=half,
                                            seed=seed))
        assert p.discrete_indices
        for v in p.variables:
            if v.domain == INTEGER:
                assert v.lower is not None and v.upper is not None
            assert v.domain in (CONTINUOUS, BINARY, INTEGER)

    def test_needs_a_discrete_variable(self):
        with pytest.raises(ValueError):
            GeneratorSpec(n_binary=0, n_integer=0)

    def test_corpus_names_follow_seeds(self):
        names = [p.name for p in generate_corpus(3, seed=40)]
        assert names == ["gen-00040", "gen-00041", "gen-00042"]

    def test_fifty_instances_solved_by_enumeration_within_a_minute(self):
        start = time.perf_counter()
        for seed in range(50):
            p = generate_instance(GeneratorSpec(seed=seed))
            assert len(p.discrete_indices) <= 10
            assert brute_solve(p).status == "optimal"
        assert time.perf_counter() - start < 60.0
