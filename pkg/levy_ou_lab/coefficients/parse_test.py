import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from . import parse as module
from .exceptions import CoefficientEvalError, CoefficientSyntaxError


def _expressions():
    """ Strategy producing source text of well-formed expressions """
    leaves = st.one_of(
        st.just("t"),
        st.floats(min_value=0, max_value=10, allow_nan=False).map(lambda x: f"{x:.6g}"),
    )

    def extend(children):
        return st.one_of(
            st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(
                lambda parts: f"{parts[0]} {parts[1]} {parts[2]}"
            ),
            st.tuples(children, children).map(
                lambda parts: f"{parts[0]} / (2 + abs({parts[1]}))"
            ),
            children.map(lambda child: f"-{child}"),
            children.map(lambda child: f"({child})"),
            st.tuples(st.sampled_from(["sin", "cos"]), children).map(
                lambda parts: f"{parts[0]}({parts[1]})"
            ),
        )

    return st.recursive(leaves, extend, max_leaves=12)


class TestParseExpr:
    @pytest.mark.parametrize(
        "source, t, expected",
        [
            ("2 + sin(t)", 0, 2.0),
            ("exp(-t)*3", 0, 3.0),
            ("1/(1+t*t)", 1, 0.5),
            ("t", 3.5, 3.5),
            ("1+2*3", 0, 7.0),
            ("-2*3", 0, -6.0),
            ("2-3-4", 0, -5.0),
            ("8/4/2", 0, 1.0),
            ("abs(-t)", 2, 2.0),
            ("2--3", 0, 5.0),
            ("1.5e1", 0, 15.0),
        ],
    )
    def test_evaluates_with_standard_precedence(self, source, t, expected):
        assert module.eval_expr(module.parse_expr(source), t) == expected

    def test_unary_minus_binds_tighter_than_multiplication(self):
        expected = module.BinaryOp(
            "*", module.Negate(module.Number(2.0)), module.Number(3.0)
        )
        assert module.parse_expr("-2*3").tree == expected

    def test_subtraction_is_left_associative(self):
        expected = module.BinaryOp(
            "-",
            module.BinaryOp("-", module.Number(2.0), module.Number(3.0)),
            module.Number(4.0),
        )
        assert module.parse_expr("2-3-4").tree == expected

    @pytest.mark.parametrize(
        "source, offset",
        [
            ("(1+2", 0),
            ("1+2)", 3),
            ("x+1", 0),
            ("1+", 2),
            ("*2", 0),
            ("1 2", 2),
            ("sin t", 4),
            ("foo(t)", 0),
            ("2 $ 3", 2),
            ("", 0),
            ("()", 1),
            ("1e400", 0),
            ("\u00a0x", 2),
        ],
    )
    def test_rejects_malformed_input_with_byte_offset(self, source, offset):
        with pytest.raises(CoefficientSyntaxError) as error:
            module.parse_expr(source)
        assert error.value.offset == offset


class TestEvalExpr:
    def test_exact_trig_value(self):
        value = module.eval_expr(module.parse_expr("sin(t)"), math.pi / 2)
        assert value == pytest.approx(1.0, abs=1e-15)

    def test_matches_reference_sine(self):
        assert module.eval_expr(module.parse_expr("2+sin(t)"), 1) == pytest.approx(
            2.841470984807897, abs=1e-12
        )

    def test_evaluates_arrays_elementwise(self):
        times = np.array([0.0, 1.0, 2.0])
        values = module.eval_expr(module.parse_expr("3"), times)
        np.testing.assert_array_equal(values, [3.0, 3.0, 3.0])

    def test_division_by_zero_is_reported(self):
        with pytest.raises(CoefficientEvalError, match="division by zero"):
            module.eval_expr(module.parse_expr("1/t"), 0.0)

    def test_non_finite_result_is_reported(self):
        with pytest.raises(CoefficientEvalError, match="not finite"):
            module.eval_expr(module.parse_expr("exp(t)"), 1000.0)

    def test_rejects_non_finite_time(self):
        with pytest.raises(CoefficientEvalError):
            module.eval_expr(module.parse_expr("t"), math.inf)

    def test_repeat_evaluation_is_bit_identical(self):
        expr = module.parse_expr("exp(-t)*sin(3*t)/(1+t*t)")
        assert module.eval_expr(expr, 0.7) == module.eval_expr(expr, 0.7)


class TestConstantExpr:
    @pytest.mark.parametrize("value", [0.0, 2.5, -1.0])
    def test_round_trips_through_text(self, value):
        expr = module.constant_expr(value)
        assert module.parse_expr(module.format_expr(expr)) == expr
        assert expr(1.0) == value


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(_expressions())
    def test_print_then_parse_is_structurally_equal(self, source):
        parsed = module.parse_expr(source)
        assert module.parse_expr(module.format_expr(parsed)) == parsed

    @settings(max_examples=100, deadline=None)
    @given(_expressions())
    def test_reparsed_expression_evaluates_identically(self, source):
        parsed = module.parse_expr(source)
        reparsed = module.parse_expr(module.format_expr(parsed))
        times = np.random.default_rng(0).uniform(-5, 5, size=100)
        np.testing.assert_array_equal(
            np.asarray(module.eval_expr(parsed, times)),
            np.asarray(module.eval_expr(reparsed, times)),
        )
