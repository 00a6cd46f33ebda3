from fractions import Fraction

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from lieforge import catalog as C
from lieforge.dsl import (
    ArityMismatch, Document, DslError, DslSyntaxError, Item, JetOnNonDependent, Space,
    UndeclaredSymbol, documents_equal, format_document, parse, parse_expr, tokenize,
)
from lieforge.expr import const, fn, jet, param, var
from lieforge.fixtures import FILES, FixtureSet, fixture_dir
from lieforge.lie import VectorField

from strategies import JET_ATOMS, KERNEL_ATOMS, PLAIN_ATOMS, exprs

HEADER = "indep x, y, z, t\ndep u\nparam a, b, c, d\nkernel lam(1), gam(2)\n"
SPACE = Space("u", ("x", "y", "t"))


def test_shipped_fixtures_round_trip():
    for name in FILES:
        src = (fixture_dir() / name).read_text(encoding="utf-8")
        doc = parse(src)
        assert documents_equal(parse(format_document(doc)), doc)


def test_shipped_fixtures_match_catalog():
    assert all(FixtureSet().matches_catalog().values())


def test_cbs_equation_example():
    doc = parse(HEADER + "equation cbs: u_xt + a*u_x*u_xy + b*u_y*u_xx + c*u_x*u_xz"
                         " + d*u_z*u_xx + u_xxxy + u_xxxz = 0\n")
    assert doc.equation("cbs") == C.build_pde()


def test_field_example_with_kernel_derivative():
    src = HEADER + "field v5 = lam(t)*Dx + Dz + (y*dlam(t)/b + gam(z - d*y/b, t))*Du\n"
    assert parse(src).field("v5") == C.generator(5, C.GENERIC_SPEC)
    src2 = src.replace("dlam(t)", "lam[1](t)").replace("v5 =", "v5:")
    assert parse(src2).field("v5") == C.generator(5, C.GENERIC_SPEC)


def test_empty_body():
    doc = parse(HEADER)
    assert doc.items == [] and doc.indep == ("x", "y", "z", "t")


def test_single_expressions():
    assert parse_expr("x") == var("x")
    assert parse_expr("2/3") == const(Fraction(2, 3))
    assert parse_expr("u_xy") == jet("u", "x", "y")
    assert parse_expr("a*x^2", params=("a",)) == param("a") * var("x") ** 2


@pytest.mark.parametrize("src, exc", [
    ("solution s: q*x\n", UndeclaredSymbol),
    ("solution s: lam(x, t)\n", ArityMismatch),
    ("solution s: x_t\n", JetOnNonDependent),
    ("solution s: (x + 1\n", DslSyntaxError),
    ("solution s: x $ 1\n", DslSyntaxError),
    ("solution s: x\nsolution s: y\n", DslError),
])
def test_error_classes(src, exc):
    with pytest.raises(exc) as info:
        parse(HEADER + src)
    assert info.value.span is None or info.value.span.line >= 5


def test_tokens_carry_spans():
    toks = tokenize("a +\n  bb")
    assert [(t.text, t.span.line, t.span.col) for t in toks if t.kind == "name"] == [
        ("a", 1, 1), ("bb", 2, 3)]


LINE = "solution s: a*x*y/t + lam(t)*gam(z, t) - u_x\n"
TOKENS = [(i, t) for i, t in enumerate(tokenize(LINE)) if t.kind == "name" and i >= 3]


@pytest.mark.parametrize("i,tok", TOKENS, ids=[t.text + str(i) for i, t in TOKENS])
@pytest.mark.parametrize("bad", ["qq", "$"])
def test_error_span_covers_corrupted_token(i, tok, bad):
    col = tok.span.col - 1
    line = LINE[:col] + bad + LINE[col + len(tok.text):]
    with pytest.raises(DslError) as info:
        parse(HEADER + line)
    sp = info.value.span
    assert sp is not None and sp.line == 5
    assert sp.col <= tok.span.col < sp.end_col


def _doc(items):
    return Document(("x", "y", "t"), "u", ("a", "b"), {"lam": 1, "gam": 2}, items)


def _field(coeffs):
    names = ("x", "y", "t", "u")
    return VectorField.from_components(("x", "y", "t"), "u", **dict(zip(names, coeffs)))


atoms = PLAIN_ATOMS + [var("t")] + KERNEL_ATOMS
item_strategy = st.one_of(
    exprs(PLAIN_ATOMS + JET_ATOMS, max_leaves=6).map(lambda e: ("equation", e)),
    exprs(atoms, max_leaves=6).map(lambda e: ("solution", e)),
    st.lists(exprs(atoms, max_leaves=4), min_size=4, max_size=4).map(
        lambda cs: ("field", _field(cs))),
)


@settings(max_examples=500, derandomize=True, deadline=None,
          suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(item_strategy, max_size=4))
def test_random_documents_round_trip(raw):
    items = [Item(k, f"i{n}", SPACE, v) for n, (k, v) in enumerate(raw)]
    doc = _doc(items)
    assert documents_equal(parse(format_document(doc)), doc)


def test_round_trip_detects_changes():
    d1 = _doc([Item("solution", "s", SPACE, var("x"))])
    d2 = _doc([Item("solution", "s", SPACE, var("y"))])
    assert not documents_equal(d1, d2)
    assert fn("lam", var("t")) != fn("gam", var("t"), var("t"))
