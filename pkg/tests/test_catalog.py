from fractions import Fraction

import pytest

from lieforge import catalog as C
from lieforge.expr import ZERO, Param, Var, const, diff, free_atoms, jet, param, substitute, var
from lieforge.fixtures import PARAMS

x, y, z, t = (var(n) for n in C.INDEP)
u = jet("u")
a, b, c, d = (param(n) for n in "abcd")
eps = C.eps


def coords(k):
    return u if k == "u" else var(k)


def test_equation_has_seven_terms():
    assert len(C.build_pde().terms()) == 7


def test_linear_part():
    p = C.CbsParams.bound(a=0, b=0, c=0, d=0)
    assert C.build_pde(p) == jet("u", "x", "t") + jet("u", "x", "x", "x", "y") + jet("u", "x", "x", "x", "z")


def test_kdv_collapse():
    collapsed, expected = C.kdv_collapse()
    assert collapsed == expected


def test_nondegeneracy():
    assert all(C.CbsParams.bound(a=1, b=2, c=3, d=1).nondegeneracy().values())
    nd = C.CbsParams.bound(a=1, b=1, c=1, d=1).nondegeneracy()
    assert nd["bc-ad!=0"] is False and nd["c!=a"] is False
    assert C.SYMBOLIC.nondegeneracy()["a!=0"] is None


def test_generator_specializations():
    def fld(**k):
        return C.VectorField.from_components(C.INDEP, C.DEP, **k)
    assert C.generator(5) == fld(z=const(1))
    assert C.generator(3) == fld(y=a * t / c, z=t, u=x / c)
    assert C.generator(1) == fld(x=x, t=2 * t, u=-u)


def test_specialization_parse():
    s = C.Specialization.parse("lambda=0,gamma=linear")
    assert s.lam == "zero" and s.gam == "linear"
    assert C.Specialization.parse("lam=1/2").lam == Fraction(1, 2)
    with pytest.raises(ValueError):
        C.Specialization.parse("mu=1")


@pytest.mark.parametrize("i", range(1, 7))
def test_flow_identity_and_derivative(i):
    fm = C.flow(i)
    v = dict(C.generator(i).components())
    for k in C.COORDS:
        assert substitute(fm.components[k], {eps: ZERO}) == coords(k)
        assert substitute(diff(fm.components[k], eps), {eps: ZERO}) == v[k]


@pytest.mark.parametrize("i", range(1, 7))
def test_flow_group_law(i):
    fm = C.flow(i, C.Specialization(Fraction(1, 3), 2))
    e1, e2 = param("e1"), param("e2")
    f1 = {k: substitute(v, {eps: e1}) for k, v in fm.components.items()}
    f2 = {k: substitute(v, {eps: e2}) for k, v in fm.components.items()}
    comp = {k: substitute(v, {coords(j): f2[j] for j in C.COORDS}, check_cycles=False)
            for k, v in f1.items()}
    for k in C.COORDS:
        assert comp[k] == substitute(fm.components[k], {eps: e1 + e2})


@pytest.mark.parametrize("i", range(1, 7))
def test_printed_maps_agree_to_first_order(i):
    exact, printed = C.flow(i), C.printed_flow(i)
    for k in C.COORDS:
        gap = printed.components[k] - exact.components[k]
        assert substitute(gap, {eps: ZERO}).is_zero
        assert substitute(diff(gap, eps), {eps: ZERO}).is_zero


def test_third_printed_map_is_exact():
    assert C.printed_flow(3).validity == "exact"
    fm = C.flow(3)
    assert fm.components["u"] == u + eps * x / c


@pytest.mark.parametrize("i", range(1, 7))
def test_inverse_maps(i):
    for fm in (C.flow(i), C.printed_flow(i)):
        back = {k: substitute(fm.inverse[k], {var(j): fm.components[j] for j in C.INDEP},
                              check_cycles=False) for k in C.INDEP}
        for k in C.INDEP:
            assert back[k] == var(k)


def test_non_constant_lambda_has_no_flow():
    with pytest.raises(C.UnsupportedSpecialization):
        C.flow(2, C.GENERIC_SPEC)


def test_first_solution_head():
    s1 = C.solution("S1").expr
    D = b * c - a * d
    assert diff(diff(s1, x), y) == (c - d) / (D * t)
    assert diff(diff(s1, x), z) == -(a - b) / (D * t)


def test_second_solution_differs_in_constant():
    D = b * c - a * d
    gap = C.solution("S2").expr - C.solution("S1").expr
    assert gap == (param("alpha") - 3 * (c - a) / D) / x


def test_xz_term_vanishes_when_a_equals_b():
    p = C.CbsParams(a=a, b=a, c=c, d=d)
    s1 = [s for s in C.catalog_solutions(p) if s.name == "S1"][0].expr
    assert diff(s1, z).is_zero


def test_declared_symbols():
    allowed = set(C.INDEP) | set(PARAMS)
    for s in C.catalog_solutions() + [C.corrected_solution()]:
        names = {getattr(a, "name") for a in free_atoms(s.expr) if isinstance(a, (Var, Param))}
        assert names <= allowed, (s.name, names - allowed)


def test_solution_lookup():
    assert C.solution("S5").name == "S5"
    with pytest.raises(KeyError):
        C.solution("S9")


def test_printed_family_parts():
    fam = C.printed_family()
    for k in ("c1", "c2", "c4", "c5", "c6"):
        part = C.family_part(k)
        assert not part.is_zero
    assert C.family_part("c2") == C.VectorField.from_components(C.INDEP, C.DEP, t=const(1))
    assert fam.coeffs["t"] == 2 * param("c1") * t + param("c2")


def test_table_shape():
    tab = C.printed_table()
    assert len(tab) == 6 and all(len(r) == 6 for r in tab)
    assert tab[0][1] == {2: const(-2)}
