import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from lieforge.expr import (
    ZERO, CyclicSubstitution, DegenerateDivision, EvaluationPole, Fn, JetOrderExceeded,
    MultiIndex, UnboundSymbol, const, diff, eval_numeric, fn, jet, normalize, param, power,
    substitute, total_derivative, var,
)
from strategies import exprs, jet_polys, kernel_exprs, points

x, y, z, t = (var(n) for n in "xyzt")
a, b, c, d = (param(n) for n in "abcd")
u = jet("u")
ux, uy, uxy, uxx, uxt = jet("u", "x"), jet("u", "y"), jet("u", "x", "y"), jet("u", "x", "x"), jet("u", "x", "t")

PROPS = settings(max_examples=120, deadline=None, derandomize=True)


# ---------------------------------------------------------------- examples

def test_binomial_cancels():
    assert ((x + y) ** 2 - x ** 2 - 2 * x * y - y ** 2).is_zero


def test_parameter_cancellation():
    assert b * (1 / b) * ux == ux


def test_commutative_folding():
    assert a * ux * uxy + uxy * ux * a == 2 * a * ux * uxy


def test_division_by_zero_expression():
    with pytest.raises(DegenerateDivision):
        x / (x - x)


def test_diff_chain_rule_through_kernel():
    w = (b * z - d * y) / b
    got = diff(fn("gam", w, t), y)
    assert got == -d / b * fn("gam", w, t, deriv=(1, 0))


def test_partial_derivative_treats_jets_as_symbols():
    assert diff(ux * uxy, ux) == uxy
    assert diff(fn("lam", t), t) == fn("lam", t, deriv=(1,))


def test_total_derivative_examples():
    assert total_derivative(ux, "x") == uxx
    assert total_derivative(a * u * uy, "x") == a * ux * uy + a * u * uxy


def test_total_derivative_cap():
    deep = jet("u", *"xxxxxx")
    with pytest.raises(JetOrderExceeded):
        total_derivative(deep, "x")


def test_substitute_examples():
    assert substitute(uxt + uxx, {uxt: -a * ux * uxy}) == -a * ux * uxy + uxx
    A = param("A")
    assert substitute(A, {A: b / a}) == b / a
    eps = param("eps")
    assert substitute(x * y, {x: x + eps * fn("lam", t)}) == x * y + eps * fn("lam", t) * y


def test_cyclic_substitution_detected():
    with pytest.raises(CyclicSubstitution):
        substitute(x, {x: y + 1, y: x})


def test_eval_examples():
    assert eval_numeric(x * y / t, {"x": 2, "y": 3, "t": 4}) == 1.5
    e = 3 * (c - a) / ((b * c - a * d) * x)
    assert eval_numeric(e, {"a": 1, "b": 2, "c": 3, "d": 1, "x": 1}) == pytest.approx(1.2, abs=1e-15)
    assert eval_numeric(ZERO, {}) == 0.0


def test_eval_errors():
    with pytest.raises(UnboundSymbol):
        eval_numeric(x + y, {"x": 1})
    with pytest.raises(EvaluationPole):
        eval_numeric(1 / x, {"x": 0.0})


def test_multiindex_is_order_free():
    assert MultiIndex.of("x", "y", "x") == MultiIndex.of("y", "x", "x")
    assert MultiIndex.of("x", "x", "x", "y").order == 4


def test_power_kernel_differentiation():
    s = param("s")
    P = power(a * y + b, s)
    assert diff(P, y) == s * a * power(a * y + b, s - 1)


def test_printed_form_round_trips_rationals():
    assert str(const(Fraction(2, 3)) * x) == "2/3*x"


def test_kernel_argument_order_is_kept():
    assert fn("gam", x, t) != fn("gam", t, x)
    assert isinstance(fn("gam", x, t).as_atom(), Fn)


# ---------------------------------------------------------------- properties

@PROPS
@given(exprs(), exprs())
def test_addition_commutes(e1, e2):
    assert e1 + e2 == e2 + e1


@PROPS
@given(exprs(), exprs(), exprs())
def test_addition_associates(e1, e2, e3):
    assert (e1 + e2) + e3 == e1 + (e2 + e3)


@PROPS
@given(exprs(max_leaves=5), exprs(max_leaves=5), exprs(max_leaves=5))
def test_distributivity(e1, e2, e3):
    assert e1 * (e2 + e3) == e1 * e2 + e1 * e3


@PROPS
@given(exprs())
def test_normalize_idempotent(e):
    n = normalize(e)
    assert normalize(n) == n
    assert str(normalize(n)) == str(n)


@PROPS
@given(exprs())
def test_difference_with_itself_is_zero(e):
    assert (e - e).is_zero


@PROPS
@given(exprs(max_leaves=6), exprs(max_leaves=6), st.sampled_from(["x", "y", "a"]))
def test_leibniz(e1, e2, v):
    assert diff(e1 * e2, v) == diff(e1, v) * e2 + e1 * diff(e2, v)


@PROPS
@given(kernel_exprs(), st.sampled_from(["x", "y", "t"]), st.sampled_from(["x", "y", "t"]))
def test_partial_derivatives_commute_with_kernels(e, v1, v2):
    assert diff(diff(e, v1), v2) == diff(diff(e, v2), v1)


@PROPS
@given(exprs(), st.sampled_from(["x", "y"]), st.sampled_from(["x", "y", "b"]))
def test_partial_derivatives_commute_rational(e, v1, v2):
    assert diff(diff(e, v1), v2) == diff(diff(e, v2), v1)


@PROPS
@given(jet_polys(), st.sampled_from(["x", "y", "t"]), st.sampled_from(["x", "y", "t"]))
def test_total_derivatives_commute(e, i, j):
    assert total_derivative(total_derivative(e, i), j) == total_derivative(total_derivative(e, j), i)


@PROPS
@given(exprs(), exprs([var("y"), param("a"), param("b")], max_leaves=5), points)
def test_eval_after_substitute(e, s, pt):
    lhs = eval_numeric(substitute(e, {x: s}), pt)
    rhs = eval_numeric(e, {**pt, "x": eval_numeric(s, pt)})
    assert math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=1e-12 * max(1.0, abs(rhs)))


@PROPS
@given(exprs(max_leaves=6), points)
def test_eval_of_sum_is_sum_of_evals(e, pt):
    f = e * e + x
    assert math.isclose(eval_numeric(e + f, pt), eval_numeric(e, pt) + eval_numeric(f, pt),
                        rel_tol=1e-9, abs_tol=1e-9)
