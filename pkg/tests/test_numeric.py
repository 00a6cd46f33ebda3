import numpy as np
import pytest

from lieforge import catalog as C
from lieforge.expr import const, eval_numeric, fn, instantiate_kernels, param, var
from lieforge.numeric import (
    SampleDomain, SamplingExhausted, bind_numeric, central_difference, fd_crosscheck,
    loglog_slope, orbit_check, residual, richardson_ok,
)

x, y, z, t = (var(n) for n in C.INDEP)
P = C.CbsParams.bound(a=1, b=2, c=3, d=1)


def dom(count=40, seed=0, **over):
    box = {"x": (1, 2), "y": (-1, 1), "z": (-1, 1), "t": (1, 2)}
    box.update(over)
    return SampleDomain(box, count, seed)


def record(name, config):
    rec = C.solution(name)
    return rec, config.domain(name, count=40)


def test_constant_solution_has_zero_residual():
    rep = residual(C.SolutionRecord("const", const(7)), P, dom())
    assert rep.passed and rep.max_relative == 0.0 and rep.symbolic == "0"


def test_product_xy_is_a_negative_control():
    rep = residual(C.SolutionRecord("xy", x * y), P, dom())
    assert not rep.passed
    assert rep.max_relative > 1e-4


def test_corrected_family_passes(config):
    rec = C.corrected_solution()
    rep = residual(rec, P, config.domain("default", count=50).with_singular([x, t]))
    assert rep.passed, rep.to_json()


def test_fifth_catalog_solution_passes(config):
    rec, d = record("S5", config)
    rep = residual(rec, P, d)
    assert rep.passed, rep.to_json()


@pytest.mark.parametrize("name", ["S1", "S2"])
def test_symbolic_and_numeric_agree(name, config):
    rec, d = record(name, config)
    rep = residual(rec, P, d)
    assert (rep.symbolic == "0") == (rep.max_relative <= 1e-10)


def test_same_seed_same_points():
    a, _ = dom(seed=7).points()
    b, _ = dom(seed=7).points()
    c, _ = dom(seed=8).points()
    assert a == b and a != c


def test_points_do_not_depend_on_count():
    a, _ = dom(count=5, seed=3).points()
    b, _ = dom(count=9, seed=3).points()
    assert b[:5] == a


def test_singular_loci_are_avoided():
    d = dom(count=30, x=(-1, 1)).with_singular([x])
    pts, redraws = d.points()
    assert all(abs(p["x"]) >= 0.5 for p in pts) and redraws > 0


def test_sampling_exhausted():
    d = SampleDomain({"x": (0, 0.1)}, 3, 0, 0.5, [x], max_retries=10)
    with pytest.raises(SamplingExhausted):
        d.points()


def test_fd_cube():
    rep = fd_crosscheck(x ** 3, {"x": 2.0}, "x")
    assert rep.exact == pytest.approx(12.0) and rep.passed
    assert rep.richardson == pytest.approx(4.0, abs=0.05)


def test_fd_mixed_fourth_order():
    s1 = bind_numeric(C.solution("S1").expr, P)
    pt = {"x": 1.3, "y": 0.2, "z": -0.4, "t": 1.6}
    rep = fd_crosscheck(s1, pt, {"x": 3, "y": 1})
    assert rep.passed


def test_fd_kernel_chain_rule():
    g = instantiate_kernels(fn("gam", (param("b") * z - param("d") * y) / param("b"), t),
                            {"gam": (("w", "s"), var("w") ** 2)})
    g = bind_numeric(g, P)
    pt = {"x": 1.0, "y": 0.3, "z": 0.7, "t": 1.2}
    rep = fd_crosscheck(g, pt, "y")
    w = (2 * 0.7 - 0.3) / 2
    assert rep.exact == pytest.approx(-(1 / 2) * 2 * w, abs=1e-12)
    assert rep.passed


def test_fd_order_limits():
    with pytest.raises(ValueError):
        fd_crosscheck(x ** 6, {"x": 1.0}, {"x": 5})


def test_central_difference_is_exact_on_quadratics():
    e = x * x + 3 * x
    assert central_difference(e, {"x": 0.7}, {"x": 1}, 0.1) == pytest.approx(4.4, abs=1e-12)


@pytest.mark.parametrize("name", ["S1", "S2", "S3", "S1c"])
def test_first_derivatives_converge(name, config):
    rec = C.corrected_solution() if name == "S1c" else C.solution(name)
    e = bind_numeric(rec.expr, P, rec.bindings, rec.kernels)
    pts, _ = config.domain("default", count=5).with_singular([x, t]).points()
    for pt in pts:
        for v in C.INDEP:
            r = fd_crosscheck(e, pt, v)
            assert r.passed and richardson_ok(r), (name, v, r.to_json())


def test_loglog_slope():
    eps = [0.1, 0.01, 0.001]
    assert loglog_slope(eps, [3 * e ** 2 for e in eps]) == pytest.approx(2.0)
    assert loglog_slope(eps, [0.0, 1.0, 1.0]) is None


def test_orbit_zero_parameter_matches_base():
    rec = C.SolutionRecord("xy", x * y)
    rep = orbit_check(rec, C.flow(1), P, [0.0], dom(count=10), symbolic=False)
    base = residual(rec, P, dom(count=10), symbolic=False)
    assert rep.residuals[0] == pytest.approx(base.max_relative, rel=1e-12)


@pytest.mark.parametrize("i", range(1, 7))
def test_corrected_family_orbits_exact(i, config):
    rec = C.corrected_solution()
    d = config.domain("default", count=10).with_singular([x, t])
    rep = orbit_check(rec, C.flow(i), P, config.eps, d)
    assert rep.passed, rep.to_json()


@pytest.mark.parametrize("i", [1, 4])
def test_printed_maps_are_second_order(i, config):
    rec = C.corrected_solution()
    d = config.domain("default", count=10).with_singular([x, t])
    rep = orbit_check(rec, C.printed_flow(i), P, config.eps, d)
    assert rep.slope == pytest.approx(2.0, abs=0.2)


def test_bind_numeric_eliminates_parameters():
    e = bind_numeric(param("a") * x + param("k"), P, {"k": "1/2"})
    assert eval_numeric(e, {"x": 2.0}) == pytest.approx(2.5)
    assert np.isfinite(eval_numeric(e, {"x": 0.0}))
