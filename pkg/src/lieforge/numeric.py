"""Numeric residuals, finite-difference cross-checks and symmetry-orbit tests."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .catalog import (
    DEP, CbsParams, FlowMap, SolutionRecord, build_pde, eps, transformed_solution,
)
from .expr import (
    EvaluationPole, Expr, _coerce, diff, eval_numeric, instantiate_kernels, param, substitute, var,
)
from .reduction import equation_residual


class SamplingExhausted(RuntimeError):
    pass


@dataclass
class SampleDomain:
    """Box of sample intervals with exclusion of points near singular loci."""

    intervals: dict
    count: int = 200
    seed: int = 0
    margin: float = 0.5
    singular: list = field(default_factory=list)
    max_retries: int = 200

    def with_singular(self, exprs: Sequence[Expr]) -> "SampleDomain":
        return SampleDomain(dict(self.intervals), self.count, self.seed, self.margin,
                            list(exprs), self.max_retries)

    def _draw(self, rng) -> dict:
        return {v: float(rng.uniform(lo, hi)) for v, (lo, hi) in sorted(self.intervals.items())}

    def _admissible(self, pt: dict) -> bool:
        for s in self.singular:
            try:
                if abs(eval_numeric(s, pt)) < self.margin:
                    return False
            except EvaluationPole:
                return False
        return True

    def points(self, check=None) -> tuple[list[dict], int]:
        """Per-point counter-based streams; returns the points and the number of redraws."""
        pts, redraws = [], 0
        for i in range(self.count):
            rng = np.random.default_rng([self.seed, i])
            for _ in range(self.max_retries):
                pt = self._draw(rng)
                if self._admissible(pt) and (check is None or check(pt)):
                    pts.append(pt)
                    break
                redraws += 1
            else:
                raise SamplingExhausted(f"point {i}: no admissible sample in {self.max_retries} draws")
        return pts, redraws


def bind_numeric(e: Expr, params: CbsParams, bindings: Mapping | None = None,
                 kernels: Mapping | None = None) -> Expr:
    """Replace parameters by their exact values and instantiate opaque kernels."""
    b = dict(params.bindings())
    for k, v in (bindings or {}).items():
        b[param(k)] = _coerce(Fraction(v))
    e = substitute(e, b, check_cycles=False)
    if kernels:
        e = instantiate_kernels(e, {k: (tuple(d), _coerce(t)) for k, (d, t) in kernels.items()})
    return e


@dataclass
class ResidualReport:
    name: str
    per_point: list
    max_relative: float
    threshold: float
    seed: int
    params: dict
    symbolic: str | None = None
    redraws: int = 0

    @property
    def passed(self) -> bool:
        ok = self.max_relative <= self.threshold
        if self.symbolic is not None:
            ok = ok and self.symbolic == "0"
        return ok

    def to_json(self) -> dict:
        return {"name": self.name, "status": "pass" if self.passed else "fail",
                "max_relative": self.max_relative, "threshold": self.threshold,
                "seed": self.seed, "params": self.params, "points": len(self.per_point),
                "redraws": self.redraws, "symbolic_residual": self.symbolic}


def residual_terms(eq: Expr, sol: Expr, dep: str = DEP) -> list[Expr]:
    """Each term of eq evaluated on u = sol, symbolically."""
    return [equation_residual(Expr({m: c}), dep, sol) for c, m in eq.terms()]


def relative_residual(terms: Sequence[Expr], pt: Mapping) -> float:
    vals = [eval_numeric(t, pt) for t in terms]
    scale = max(abs(v) for v in vals) if vals else 0.0
    total = math.fsum(vals)
    return abs(total) / scale if scale > 0 else abs(total)


def residual(sol: SolutionRecord, params: CbsParams, dom: SampleDomain, threshold: float = 1e-10,
             symbolic: bool = True, eq: Expr | None = None) -> ResidualReport:
    """Largest-term-normalized residual of the equation on the solution over the domain."""
    eq = build_pde(params) if eq is None else eq
    expr = bind_numeric(sol.expr, params, sol.bindings, sol.kernels)
    sym = None
    if symbolic:
        sym = str(equation_residual(eq, DEP, expr))
    terms = residual_terms(eq, expr)
    sing = [bind_numeric(s, params, sol.bindings, sol.kernels) for s in sol.singular]
    return _residual_over(sol.name, terms, dom.with_singular(sing), threshold, params, sym)


def _residual_over(name, terms, dom, threshold, params, sym) -> ResidualReport:
    def finite(pt):
        try:
            relative_residual(terms, pt)
            return True
        except EvaluationPole:
            return False

    pts, redraws = dom.points(check=finite)
    per = [relative_residual(terms, pt) for pt in pts]
    pv = {k: str(getattr(params, k)) for k in "abcd"}
    return ResidualReport(name, per, max(per) if per else 0.0, threshold, dom.seed, pv, sym, redraws)


# ----------------------------------------------------------- finite differences

_STENCILS = {
    1: ({-1: -0.5, 1: 0.5}),
    2: ({-1: 1.0, 0: -2.0, 1: 1.0}),
    3: ({-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5}),
    4: ({-2: 1.0, -1: -4.0, 0: 6.0, 1: -4.0, 2: 1.0}),
}


def central_difference(e: Expr, pt: Mapping, counts: Mapping[str, int], h: float) -> float:
    """Tensor-product central stencil of second-order accuracy."""
    items = sorted(counts.items())
    acc = [(1.0, {})]
    for v, k in items:
        st = _STENCILS[k]
        acc = [(w * c, {**off, v: j}) for w, off in acc for j, c in st.items()]
    total = []
    for w, off in acc:
        p = dict(pt)
        for v, j in off.items():
            p[v] = pt[v] + j * h
        total.append(w * eval_numeric(e, p))
    scale = h ** sum(k for _, k in items)
    return math.fsum(total) / scale


@dataclass
class FdReport:
    expr: str
    counts: dict
    exact: float
    estimates: dict
    errors: dict
    richardson: float | None
    tolerance: float

    @property
    def passed(self) -> bool:
        return min(self.errors.values()) <= self.tolerance * max(1.0, abs(self.exact))

    def to_json(self) -> dict:
        return {"expr": self.expr, "derivative": self.counts, "exact": self.exact,
                "errors": {str(h): e for h, e in self.errors.items()},
                "richardson": self.richardson, "status": "pass" if self.passed else "fail"}


FD_TOL = {1: 1e-6, 2: 1e-5, 3: 1e-4, 4: 1e-3}


def fd_crosscheck(e: Expr, pt: Mapping, v: str | Mapping[str, int], order: int = 1,
                  hs: Sequence[float] = (1e-2, 1e-3, 1e-4)) -> FdReport:
    """Compare the symbolic derivative to central differences over a sweep of steps."""
    counts = {v: order} if isinstance(v, str) else dict(v)
    if any(k < 1 or k > 4 for k in counts.values()):
        raise ValueError("finite-difference orders are limited to 1..4 per variable")
    d = e
    for w, k in counts.items():
        d = diff(d, var(w), k)
    exact = eval_numeric(d, pt)
    est = {h: central_difference(e, pt, counts, h) for h in hs}
    err = {h: abs(est[h] - exact) for h in hs}
    h0 = max(hs)
    e1 = err[h0]
    e2 = abs(central_difference(e, pt, counts, h0 / 2) - exact)
    # round-off of a stencil is about machine eps * |f| / h^k; below that the ratio is noise
    k = sum(counts.values())
    fscale = max(1.0, abs(eval_numeric(e, pt)))
    floor = 1e3 * np.finfo(float).eps * fscale / (h0 / 2) ** k
    rich = e1 / e2 if e2 > floor else None
    tol = FD_TOL[max(1, min(4, sum(counts.values())))]
    return FdReport(str(e), counts, exact, est, err, rich, tol)


def richardson_ok(rep: FdReport, lo: float = 3.8, hi: float = 4.2) -> bool:
    """Ratio of errors when halving h; None means the truncation error is below noise."""
    return rep.richardson is None or lo <= rep.richardson <= hi


# ------------------------------------------------------------------ orbits

@dataclass
class OrbitReport:
    solution: str
    flow: int
    validity: str
    eps: list
    residuals: list
    threshold: float
    slope: float | None = None
    slope_target: tuple = (2.0, 0.2)
    symbolic: str | None = None

    @property
    def passed(self) -> bool:
        if self.validity == "exact":
            ok = all(r <= self.threshold for r in self.residuals)
            return ok and (self.symbolic in (None, "0"))
        if self.slope is None:
            return False
        return abs(self.slope - self.slope_target[0]) <= self.slope_target[1]

    def to_json(self) -> dict:
        return {"solution": self.solution, "flow": self.flow, "validity": self.validity,
                "eps": self.eps, "residuals": self.residuals, "slope": self.slope,
                "symbolic_residual": self.symbolic,
                "status": "pass" if self.passed else "fail"}


def loglog_slope(eps_list: Sequence[float], res: Sequence[float]) -> float | None:
    if any(r <= 0 for r in res) or len(res) < 2:
        return None
    lx, ly = np.log(np.asarray(eps_list, float)), np.log(np.asarray(res, float))
    return float(np.polyfit(lx, ly, 1)[0])


def orbit_check(sol: SolutionRecord, fm: FlowMap, params: CbsParams, eps_list: Sequence[float],
                dom: SampleDomain, threshold: float = 1e-8, symbolic: bool = True) -> OrbitReport:
    """Residual of the solution transported by the flow, for each group parameter value."""
    eq = build_pde(params)
    base = bind_numeric(sol.expr, params, sol.bindings, sol.kernels)
    fmb = FlowMap(fm.index, {k: bind_numeric(v, params) for k, v in fm.components.items()},
                  {k: bind_numeric(v, params) for k, v in fm.inverse.items()}, fm.validity, fm.spec)
    sing = [bind_numeric(s, params, sol.bindings, sol.kernels) for s in sol.singular]
    sym = None
    if symbolic and fm.validity == "exact":
        sym = str(equation_residual(eq, DEP, transformed_solution(base, fmb)))
    out = []
    for e in eps_list:
        q = Fraction(e).limit_denominator(10 ** 12)
        at = {eps: _coerce(q)}
        comp = {k: substitute(v, at) for k, v in fmb.components.items()}
        inv = {k: substitute(v, at) for k, v in fmb.inverse.items()}
        fe = FlowMap(fm.index, comp, inv, fm.validity, fm.spec)
        ts = transformed_solution(base, fe)
        terms = residual_terms(eq, ts)
        pre = {var(k): v for k, v in inv.items()}
        sd = dom.with_singular([substitute(s, pre, check_cycles=False) for s in sing])
        rep = _residual_over(sol.name, terms, sd, threshold, params, None)
        out.append(rep.max_relative)
    slope = None if fm.validity == "exact" else loglog_slope(eps_list, out)
    return OrbitReport(sol.name, fm.index, fm.validity, list(eps_list), out, threshold, slope,
                       symbolic=sym)
