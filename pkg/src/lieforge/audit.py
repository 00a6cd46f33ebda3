"""The consolidated audit: every check, compared against the manifest of expected outcomes."""
from __future__ import annotations

import itertools
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

from . import catalog as C
from .config import RunConfig
from .expr import (
    ZERO, Expr, Jet, Param, SymbolicError, Var, _coerce, const, diff,
    eval_numeric, fn, free_atoms, instantiate_kernels, jet, param, power, substitute, var,
)
from .fixtures import FixtureSet
from .lie import (
    check_infinitesimals, commutator_table, determining_system, jacobi, kernel_templates,
)
from .numeric import (
    bind_numeric, fd_crosscheck, orbit_check, residual, richardson_ok,
)
from .reduction import (
    OdeSolutionCandidate, annihilation_check, equal_up_to_multiplier, equation_residual,
    pullback, verify_ode_solution,
)

SECTIONS = ("fixtures", "determining", "table", "catalog", "annihilation", "reduction", "ode",
            "solutions", "fd", "orbit")
GENERATOR_NAMES = {"x": "xi1", "y": "xi2", "z": "xi3", "t": "tau", "u": "eta"}


@dataclass
class ItemResult:
    key: str
    section: str
    status: str                 # pass | fail | error
    residual: str | None = None
    detail: dict = field(default_factory=dict)
    expected: dict | None = None
    verdict: str = "unchecked"  # ok | unexpected | unlisted

    def judge(self, expected: dict | None, compare_residual: bool = True) -> None:
        self.expected = expected
        if expected is None:
            self.verdict = "unlisted"
            return
        want = expected.get("status")
        if want == "pass":
            ok = self.status == "pass"
        elif want == "fail":
            ok = self.status in ("fail", "error")
        elif want == "discrepancy":
            ok = self.status in ("fail", "error")
            if compare_residual and "residual" in expected:
                ok = ok and self.residual == expected["residual"]
        else:
            ok = False
        self.verdict = "ok" if ok else "unexpected"

    def to_json(self) -> dict:
        out = {"key": self.key, "section": self.section, "status": self.status,
               "verdict": self.verdict}
        if self.expected is not None:
            out["expected"] = self.expected.get("status")
        if self.residual is not None:
            out["residual"] = self.residual
        if self.detail:
            out["detail"] = self.detail
        return out


def _status(flag: bool) -> str:
    return "pass" if flag else "fail"


class Audit:
    def __init__(self, fixtures: FixtureSet, cfg: RunConfig, workers: int = 4):
        self.fx = fixtures
        self.cfg = cfg
        self.workers = workers
        self.results: list[ItemResult] = []
        self._eq = fixtures.find("equation", "cbs")
        self._cache: dict = {}
        self._lock = threading.Lock()
        self._local = threading.local()

    # bookkeeping
    def add(self, key: str, section: str, status: str, residual: str | None = None, **detail):
        buf = getattr(self._local, "buf", None)
        (self.results if buf is None else buf).append(ItemResult(key, section, status, residual, detail))

    def guarded(self, key: str, section: str, fn: Callable[[], tuple]):
        try:
            status, res, detail = fn()
            self.add(key, section, status, res, **detail)
        except (SymbolicError, ArithmeticError, ValueError, KeyError) as e:
            self.add(key, section, "error", f"{type(e).__name__}: {e}")

    # shared objects
    def system(self):
        with self._lock:
            if "sys" not in self._cache:
                t0 = time.perf_counter()
                self._cache["sys"] = determining_system(self._eq, C.INDEP, C.DEP,
                                                        jet(C.DEP, "x", "t"), GENERATOR_NAMES)
                self._cache["sys_time"] = time.perf_counter() - t0
        return self._cache["sys"]

    def field(self, name: str, spec: C.Specialization | None = None):
        v = self.fx.find("field", name)
        return spec.apply(v) if spec else v

    def basis(self, spec: C.Specialization):
        return [self.field(f"v{i}", spec) for i in range(1, 7)]

    # sections
    def _section(self, name: str) -> list[ItemResult]:
        self._local.buf = []
        try:
            getattr(self, f"sec_{name}")()
            return self._local.buf
        finally:
            self._local.buf = None

    def run(self, sections: Iterable[str] | None = None) -> list[ItemResult]:
        """Sections run concurrently; the report is assembled in a fixed order."""
        chosen = [s for s in SECTIONS if sections is None or s in sections]
        unknown = set(sections or ()) - set(SECTIONS)
        if unknown:
            raise KeyError(f"unknown audit section(s): {', '.join(sorted(unknown))}")
        with ThreadPoolExecutor(max_workers=max(1, self.workers)) as pool:
            parts = list(pool.map(self._section, chosen))
        for part in parts:
            self.results.extend(part)
        items = self.fx.manifest.get("items", {})
        mp = self.fx.manifest.get("params")
        same = mp is None or mp == {k: str(getattr(self.cfg.cbs, k)) for k in "abcd"}
        for r in self.results:
            r.judge(items.get(r.key), compare_residual=same)
        return self.results

    def sec_fixtures(self):
        for name, ok in self.fx.matches_catalog().items():
            self.add(f"fixtures/{name}", "fixtures", _status(ok))

    def sec_determining(self):
        sysm, gen = self.system()
        self.add("determining/generate", "determining", "pass", None,
                 equations=len(sysm), seconds=round(self._cache["sys_time"], 3))
        zero = C.ZERO_SPEC
        cands = {"dt": self.field("v2", zero), "dy": self.field("v6", zero),
                 "dz": self.field("v5", zero), "v1": self.field("v1", zero),
                 "v3": self.field("v3", zero), "v4": self.field("v4", zero)}
        for i in range(1, 7):
            cands[f"v{i}_generic"] = self.field(f"v{i}")
        for n in ("family", "family_c3", "x_dy"):
            cands[n] = self.field(n)
        for n, v in cands.items():
            rep = check_infinitesimals(sysm, gen, v, n)
            fails = rep.failures()
            res = None if rep.passed else "; ".join(sorted({str(r) for _, r in fails}))
            self.add(f"determining/{n}", "determining", _status(rep.passed), res,
                     nonzero=len(fails))
        for label, w in (("v1", dict(x=1, t=2, u=-1)), ("v4", dict(x=-1, y=2, z=2, u=1))):
            weights = scaling_weights(self._eq, w)
            self.add(f"determining/weights_{label}", "determining", _status(len(weights) == 1),
                     None, weights=sorted(str(x) for x in weights))
        fam = self.field("family")
        tm = kernel_templates(gen, fam)
        bad = []
        for label, rel in C.printed_determining():
            r = instantiate_kernels(rel, tm)
            if not r.is_zero:
                bad.append(f"{label} -> {r}")
        self.add("determining/printed_relations", "determining", _status(not bad),
                 "; ".join(bad) if bad else None)

    def sec_table(self):
        spec = C.ZERO_SPEC
        basis = self.basis(spec)
        table = commutator_table(basis)
        want = C.printed_table()
        for i, j in itertools.product(range(6), range(6)):
            e = table[i][j]
            got = {k + 1: c for k, c in enumerate(e.coords or []) if not c.is_zero}
            exp_ = {k: c for k, c in want[i][j].items() if not c.is_zero}
            ok = e.in_span and got.keys() == exp_.keys() and all(got[k] == exp_[k] for k in got)
            self.add(f"table/v{i + 1},v{j + 1}", "table", _status(ok),
                     None if ok else _fmt_coords(got), printed=_fmt_coords(exp_))
        bad = [t for t in itertools.combinations(range(6), 3) if not jacobi(*(basis[k] for k in t)).is_zero]
        self.add("table/jacobi", "table", _status(not bad), None, triples=20, failing=len(bad))
        anti = all((table[i][j].raw + table[j][i].raw).is_zero
                   for i, j in itertools.product(range(6), range(6)))
        self.add("table/antisymmetry", "table", _status(anti))
        gen_table = commutator_table(self.basis(C.GENERIC_SPEC))
        off = sum(1 for row in gen_table for e in row if not e.in_span)
        self.add("table/generic_out_of_span", "table", _status(off == 0), str(off) if off else None)

    def sec_catalog(self):
        p = C.SYMBOLIC
        eps = C.eps
        for i in range(1, 7):
            fm = C.flow(i)
            v = C.generator(i)
            ident = all(substitute(fm.components[k], {eps: ZERO}) == _coord(k) for k in C.COORDS)
            deriv = all(substitute(diff(fm.components[k], eps), {eps: ZERO}) == dict(v.components())[k]
                        for k in C.COORDS)
            self.add(f"catalog/flow{i}_identity", "catalog", _status(ident))
            self.add(f"catalog/flow{i}_derivative", "catalog", _status(deriv))
            e1, e2 = param("e1"), param("e2")
            f1 = {k: substitute(c, {eps: e1}) for k, c in fm.components.items()}
            f2 = {k: substitute(c, {eps: e2}) for k, c in fm.components.items()}
            comp = {k: substitute(c, {_coord(j): f2[j] for j in C.COORDS}, check_cycles=False)
                    for k, c in f1.items()}
            f12 = {k: substitute(c, {eps: e1 + e2}) for k, c in fm.components.items()}
            law = all(comp[k] == f12[k] for k in C.COORDS)
            self.add(f"catalog/flow{i}_group_law", "catalog", _status(law))
            pf = C.printed_flow(i)
            first = all(substitute(diff(pf.components[k] - fm.components[k], eps), {eps: ZERO}).is_zero
                        for k in C.COORDS)
            self.add(f"catalog/flow{i}_printed_first_order", "catalog", _status(first),
                     None, validity=pf.validity)
        collapsed, expected = C.kdv_collapse(p)
        self.add("catalog/kdv_collapse", "catalog", _status(collapsed == expected))
        nd = self.cfg.cbs.nondegeneracy()
        self.add("catalog/nondegenerate_defaults", "catalog", _status(all(nd.values())), None,
                 predicates={k: bool(v) for k, v in nd.items()})
        allowed = set(C.INDEP) | set(self.fx.docs["cbs.lie"].params)
        for s in C.catalog_solutions(p):
            e = self.fx.find("solution", s.name)
            stray = sorted(str(a) for a in free_atoms(e) if isinstance(a, (Var, Param))
                           and getattr(a, "name", None) not in allowed)
            self.add(f"catalog/symbols_{s.name}", "catalog", _status(not stray),
                     ", ".join(stray) or None)

    def sec_annihilation(self):
        A51, A52 = self.fx.find("ansatz", "A51"), self.fx.find("ansatz", "A52")
        A51c1, A52b = self.fx.find("ansatz", "A51c1"), self.fx.find("ansatz", "A52b")
        lin = C.Specialization("generic", "linear")
        checks = [("v3_A51", self.field("v3", C.ZERO_SPEC), A51),
                  ("v5_A51", self.field("v5", C.ZERO_SPEC), A51),
                  ("v2_A52", self.field("v2", lin), A52),
                  ("case1_A51c1", self.field("case1"), A51c1),
                  ("r52_a2_A52b", self.field("r52_a2"), A52b),
                  ("r52_a1_A52b", self.field("r52_a1"), A52b)]
        for key, v, A in checks:
            rep = annihilation_check(v, A, key)
            res = "; ".join(f"{k}: {r}" for k, r in rep.residuals if not r.is_zero) or None
            self.add(f"annihilation/{key}", "annihilation", _status(rep.passed), res)

    def _pull(self, eq: Expr, ansatz: str):
        key = ("pull", str(eq), ansatz)
        if key not in self._cache:
            self._cache[key] = pullback(eq, self.fx.find("ansatz", ansatz))
        return self._cache[key]

    def sec_reduction(self):
        eq = self._eq
        ident = pullback(eq, C.identity_ansatz())
        same = _rename_dep(ident.equation, "f", C.DEP) == eq
        self.add("reduction/identity", "reduction", _status(same and ident.multiplier == _coerce(1)))
        self.guarded("reduction/A51", "reduction", lambda: self._cmp(
            self._pull(eq, "A51").equation, "R51"))
        self.guarded("reduction/A51c1", "reduction", lambda: self._cmp(
            self._pull(self._pull(eq, "A51").equation, "A51c1").equation, "R51c1"))

        def composition():
            two = self._pull(self._pull(eq, "A51").equation, "A51c1").equation
            one = self._pull(eq, "A51o").equation
            ok, ratio = equal_up_to_multiplier(one, two)
            ok = ok and ratio.as_rational() is not None
            return _status(ok), None if ok else str(ratio), {}
        self.guarded("reduction/composition", "reduction", composition)
        self.guarded("reduction/A52", "reduction", lambda: self._cmp(
            self._pull(eq, "A52").equation, "R52"))
        self.guarded("reduction/A52b", "reduction", lambda: self._cmp(
            self._pull(self._pull(eq, "A52").equation, "A52b").equation, "R52b"))
        self.guarded("reduction/A52b_from_printed", "reduction", lambda: self._cmp(
            self._pull(self.fx.find("equation", "R52"), "A52b").equation, "R52b"))
        case1 = lambda: self._pull(self._pull(eq, "A51").equation, "A51c1").equation  # noqa: E731
        r52b = lambda: self._pull(self._pull(eq, "A52").equation, "A52b").equation  # noqa: E731
        stages = [("B51s1_computed", case1, "B51s1", "ode_sub1"),
                  ("B51s1_printed", lambda: self.fx.find("equation", "R51c1"), "B51s1", "ode_sub1"),
                  ("B51s2_computed", case1, "B51s2", "ode_sub2"),
                  ("B51s2_printed", lambda: self.fx.find("equation", "R51c1"), "B51s2", "ode_sub2"),
                  ("B52_computed", r52b, "B52", "ode_52"),
                  ("B52_printed", lambda: self.fx.find("equation", "R52b"), "B52", "ode_52")]
        for key, src, ans, ode in stages:
            self.guarded(f"reduction/{key}", "reduction",
                         lambda src=src, ans=ans, ode=ode: self._cmp(self._pull(src(), ans).equation, ode))
        self.guarded("reduction/back_substitution_S1", "reduction", self._back_substitution)
        self.guarded("reduction/multipliers_nonzero", "reduction", self._multipliers)
        self.guarded("reduction/open_question_tau", "reduction", self._tau_readings)

    def _cmp(self, computed: Expr, printed_name: str):
        printed = self.fx.find("equation", printed_name)
        ok, ratio = equal_up_to_multiplier(computed, printed)
        return _status(ok), None if ok else str(computed), {"printed": str(printed)}

    def _back_substitution(self):
        p = C.SYMBOLIC
        A, B, Cc = C._pp(p)
        x, y, z, t = (var(n) for n in C.INDEP)
        half = const(Fraction(1, 2))
        r = x * power(t, -half)
        s = y - p.a * z / p.c
        G = 3 * (p.c - p.a) / (p.b * p.c - p.a * p.d)
        H = G / r + (1 - A) / B * r * s
        u = x * y / (p.a * t) + H * power(t, -half)
        want = self.fx.find("solution", "S1")
        ok = u == want
        return _status(ok), None if ok else str(u - want), {}

    def _multipliers(self):
        eq = self._eq
        chain = [self._pull(eq, "A51"), self._pull(self._pull(eq, "A51").equation, "A51c1"),
                 self._pull(eq, "A52"), self._pull(self._pull(eq, "A52").equation, "A52b")]
        pt = {"a": 1, "b": 2, "c": 3, "d": 1, "a1": 2, "a2": 1 / 3, "a3": 2, "a4": 1, "a5": 3,
              "T": 1.3, "t": 1.7, "W": 2.2, "lam": 1}
        vals = []
        for red in chain:
            m = instantiate_kernels(red.multiplier, {"lam": (("s",), _coerce(1))})
            vals.append(eval_numeric(m, pt))
        ok = all(v != 0 for v in vals)
        return _status(ok), None, {"values": vals}

    def _tau_readings(self):
        computed = self._pull(self._eq, "A52").equation
        sysm, gen = determining_system(computed, ("X", "Y", "Z"), "f", jet("f", "X", "X", "X", "Z"))
        out = {}
        for n in ("r52_a2", "r52_a1"):
            out[n] = check_infinitesimals(sysm, gen, self.field(n), n).passed
        return _status(all(out.values())), None, {"symmetry": out}

    def sec_ode(self):
        for ode, cand in C.ode_candidates():
            expr = self.fx.find("solution", cand.name)
            c = OdeSolutionCandidate(cand.name, cand.dep, cand.var, expr, constraints=cand.constraints)
            rep = verify_ode_solution(self.fx.find("equation", ode), c)
            self.add(f"ode/{ode}:{cand.name}", "ode", _status(rep.passed),
                     None if rep.passed else str(rep.residual))

    def _record(self, name: str) -> C.SolutionRecord:
        rec = C.solution(name)
        rec.expr = self.fx.find("solution", name)
        return rec

    def sec_solutions(self):
        P = self.cfg.cbs
        tol = self.cfg.tolerances
        for name in ("S1", "S2"):
            sym = equation_residual(self._eq, C.DEP, self.fx.find("solution", name))
            self.add(f"solutions/{name}_symbolic", "solutions", _status(sym.is_zero),
                     None if sym.is_zero else str(sym))
        for name in ("S1", "S2", "S3", "S4", "S5", "S1c"):
            def run(name=name):
                rep = residual(self._record(name), P, self.cfg.domain(name), tol["residual"])
                big = max(rep.per_point) >= tol["nonzero"]
                consistent = (rep.symbolic == "0") == (rep.max_relative <= tol["residual"])
                if rep.symbolic != "0":
                    consistent = consistent and big
                return (_status(rep.passed), None if rep.passed else rep.symbolic,
                        {"max_relative": rep.max_relative, "consistent": consistent,
                         "redraws": rep.redraws})
            self.guarded(f"solutions/{name}", "solutions", run)

    def sec_fd(self):
        x, y, z, t = (var(n) for n in C.INDEP)
        self.add("fd/x3", "fd", _status(fd_crosscheck(x ** 3, {"x": 2.0}, "x").passed))
        P = self.cfg.cbs
        s1 = bind_numeric(self.fx.find("solution", "S1"), P)
        dom = self.cfg.domain("default", count=20).with_singular([x, t])
        pts, _ = dom.points()
        mixed = fd_crosscheck(s1, pts[0], {"x": 3, "y": 1})
        self.add("fd/S1_mixed4", "fd", _status(mixed.passed), None, errors=mixed.to_json()["errors"])
        g = instantiate_kernels(fn("gam", (param("b") * z - param("d") * y) / param("b"), t),
                                {"gam": (("w", "s"), var("w") ** 2)})
        g = bind_numeric(g, P)
        pt = {"x": 1.0, "y": 0.3, "z": 0.7, "t": 1.2}
        rep = fd_crosscheck(g, pt, "y")
        w = (2 * 0.7 - 0.3) / 2
        oracle = -(1 / 2) * 2 * w
        self.add("fd/gamma_chain", "fd", _status(rep.passed and abs(rep.exact - oracle) < 1e-12))
        exprs = []
        for n in ("S1", "S2", "S3", "S1c"):
            rec = self._record(n)
            exprs.append(bind_numeric(rec.expr, P, rec.bindings, rec.kernels))
        bad = 0
        total = 0
        for e in exprs:
            for pt in pts:
                for v in C.INDEP:
                    r = fd_crosscheck(e, pt, v, 1)
                    total += 1
                    if not (r.passed and richardson_ok(r)):
                        bad += 1
        self.add("fd/first_derivatives_richardson", "fd", _status(bad == 0), None,
                 checks=total, failing=bad)

    def sec_orbit(self):
        P = self.cfg.cbs
        tol = self.cfg.tolerances
        for name in ("S1", "S1c"):
            rec = self._record(name)
            dom = self.cfg.domain(name, count=self.cfg.orbit_count)
            for i in range(1, 7):
                for kind, fm in (("exact", C.flow(i)), ("printed", C.printed_flow(i))):
                    if kind == "printed" and fm.validity == "exact":
                        continue
                    def run(rec=rec, fm=fm, dom=dom):
                        rep = orbit_check(rec, fm, P, self.cfg.eps, dom, tol["orbit"])
                        rep.slope_target = (tol["slope"], tol["slope_tol"])
                        res = rep.symbolic if rep.symbolic not in (None, "0") else (
                            None if rep.passed else f"slope={rep.slope}")
                        return (_status(rep.passed), None if rep.passed else res,
                                {"residuals": rep.residuals, "slope": rep.slope})
                    self.guarded(f"orbit/{name}:X{i}_{kind}", "orbit", run)


def scaling_weights(eq: Expr, w: dict) -> set:
    """Weight of each term of eq under x_i -> e^{w_i} x_i, u -> e^{w_u} u."""
    out = set()
    for c, m in eq.terms():
        tot = Fraction(0)
        for a, k in m:
            if isinstance(a, Jet):
                tot += k * (w.get("u", 0) - sum(w.get(v, 0) * n for v, n in a.index.items))
            elif isinstance(a, Var):
                tot += k * w.get(a.name, 0)
        out.add(tot)
    return out


def _coord(k: str) -> Expr:
    return C.u if k == C.DEP else var(k)


def _rename_dep(e: Expr, old: str, new: str) -> Expr:
    b = {a: _coerce(Jet(new, a.index)) for a in free_atoms(e) if isinstance(a, Jet) and a.dep == old}
    return substitute(e, b, check_cycles=False)


def _fmt_coords(c: dict) -> str:
    return " + ".join(f"({v})*v{k}" for k, v in sorted(c.items())) or "0"


def summarize(results: list[ItemResult]) -> dict:
    counts: dict = {}
    for r in results:
        counts[r.verdict] = counts.get(r.verdict, 0) + 1
    ok = all(r.verdict == "ok" for r in results)
    return {"ok": ok, "counts": counts, "items": len(results)}
