"""Similarity reductions: pulling an equation back through an invariant ansatz."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .expr import (
    ONE, ZERO, Antideriv, Atom, Exp, Expr, Fn, Jet, MultiIndex, Pow, SymbolicError, Var,
    _coerce, diff, free_atoms, merge_power_bases, substitute,
)
from .lie import VectorField


class ResidualOldVariable(SymbolicError):
    pass


@dataclass
class ReductionAnsatz:
    """u(old) = expr, where expr mentions the new dependent symbol f as a plain jet.

    ``new_vars`` maps each new independent variable to its definition in the
    old ones; ``inverse`` gives old variables in terms of new ones (plus the
    optional auxiliary variables ``aux``, which must cancel).
    """

    name: str
    old_vars: tuple
    new_vars: dict
    old_dep: str
    new_dep: str
    expr: Expr
    inverse: dict = field(default_factory=dict)
    aux: tuple = ()

    def __post_init__(self):
        if len(self.new_vars) >= len(self.old_vars) and self.new_vars.keys() != set(self.old_vars):
            raise ValueError("a reduction needs fewer new variables than old ones")
        self.new_vars = {k: _coerce(v) for k, v in self.new_vars.items()}
        self.inverse = {k: _coerce(v) for k, v in self.inverse.items()}
        self.expr = _coerce(self.expr)

    @property
    def f(self) -> Expr:
        return _coerce(Jet(self.new_dep, MultiIndex()))

    @property
    def base(self) -> Expr:
        return substitute(self.expr, {self.f: ZERO})

    @property
    def scale(self) -> Expr:
        return diff(self.expr, self.f)

    def is_affine(self) -> bool:
        return diff(self.scale, self.f).is_zero

    def kernel(self) -> Expr:
        """The unknown function applied to the forward map, f(X(x), Y(x), ...)."""
        return _coerce(Fn(self.new_dep, tuple(self.new_vars.values())))

    def eliminable(self) -> set:
        keep = set(self.new_vars)
        return {Var(v) for v in self.old_vars if v not in self.inverse and v not in keep} | \
               {Var(v) for v in self.aux}


@dataclass
class ReducedPde:
    equation: Expr
    multiplier: Expr
    chain: list
    new_vars: tuple
    dep: str


def _old_derivative(U: Expr, J: MultiIndex, memo: dict) -> Expr:
    if J not in memo:
        last = J.variables()[-1]
        memo[J] = diff(_old_derivative(U, J - MultiIndex.of(last), memo), Var(last))
    return memo[J]


def _depends_on(a: Atom, elim: set) -> bool:
    if a in elim:
        return True
    if isinstance(a, (Fn, Pow, Exp, Antideriv)):
        return bool(free_atoms(_coerce(a)) & elim)
    return False


def pullback(eq: Expr, ansatz: ReductionAnsatz) -> ReducedPde:
    """Substitute the ansatz, chain-rule every derivative, rewrite in the new variables."""
    U = substitute(ansatz.expr, {ansatz.f: ansatz.kernel()}, check_cycles=False)
    memo = {MultiIndex(): U}
    bind = {}
    for a in free_atoms(eq):
        if isinstance(a, Jet) and a.dep == ansatz.old_dep:
            bind[a] = _old_derivative(U, a.index, memo)
    E = substitute(eq, bind, check_cycles=False)
    E = substitute(E, {Var(k): v for k, v in ansatz.inverse.items()}, check_cycles=False)
    names = list(ansatz.new_vars)
    target_args = tuple(_coerce(Var(n)) for n in names)
    conv = {}
    for a in free_atoms(E):
        if isinstance(a, Fn) and a.name == ansatz.new_dep:
            if a.args != target_args:
                raise ResidualOldVariable(f"{a}: arguments do not reduce to {names}")
            idx = MultiIndex({n: k for n, k in zip(names, a.deriv)})
            conv[a] = _coerce(Jet(ansatz.new_dep, idx))
    E = merge_power_bases(substitute(E, conv, check_cycles=False))
    elim = ansatz.eliminable()
    if E.is_zero:
        return ReducedPde(E, ONE, [ansatz.name], tuple(names), ansatz.new_dep)
    lead = E.terms()[0][1]
    m0 = tuple(p for p in lead if _depends_on(p[0], elim))
    multiplier = Expr({m0: Fraction(1)})
    den = E.denominator()
    if not any(isinstance(a, Jet) for a in free_atoms(den)):
        multiplier = multiplier / den
    reduced = E / multiplier
    left = {a for a in free_atoms(reduced) if a in elim}
    if left:
        raise ResidualOldVariable(
            f"{ansatz.name}: {sorted(map(str, left))} survive in the reduced equation")
    return ReducedPde(reduced, multiplier, [ansatz.name], tuple(names), ansatz.new_dep)


def pullback_chain(eq: Expr, chain: Sequence[ReductionAnsatz]) -> ReducedPde:
    mult = ONE
    names = []
    for A in chain:
        r = pullback(eq, A)
        eq = r.equation
        mult = mult * r.multiplier
        names += r.chain
    return ReducedPde(eq, mult, names, r.new_vars, r.dep)


def ratio(e1: Expr, e2: Expr) -> Expr | None:
    if e2.is_zero:
        return None
    return e1 / e2


def equal_up_to_multiplier(e1: Expr, e2: Expr) -> tuple[bool, Expr | None]:
    """True when e1/e2 is jet-free and nonzero."""
    if e1.is_zero or e2.is_zero:
        return (e1.is_zero and e2.is_zero), None
    r = e1 / e2
    ok = not any(isinstance(a, Jet) for a in free_atoms(r))
    return ok, r


@dataclass
class AnnihilationReport:
    field_name: str
    ansatz: str
    residuals: list  # [(label, Expr)]

    @property
    def passed(self) -> bool:
        return all(r.is_zero for _, r in self.residuals)

    def to_json(self) -> dict:
        return {"field": self.field_name, "ansatz": self.ansatz,
                "status": "pass" if self.passed else "fail",
                "residuals": {k: str(r) for k, r in self.residuals}}


def annihilation_check(v: VectorField, ansatz: ReductionAnsatz, field_name: str = "v") -> AnnihilationReport:
    """Every new variable and the dependent invariant must be constant along v."""
    res = []
    for name, I in ansatz.new_vars.items():
        res.append((name, merge_power_bases(v.apply(I))))
    if not ansatz.is_affine():
        res.append((ansatz.new_dep, _coerce(1)))  # not a valid dependent ansatz
        return AnnihilationReport(field_name, ansatz.name, res)
    u = _coerce(Jet(ansatz.old_dep, MultiIndex()))
    phi = (u - ansatz.base) / ansatz.scale
    r = substitute(v.apply(phi), {u: ansatz.expr}, check_cycles=False)
    res.append((ansatz.new_dep, merge_power_bases(r)))
    return AnnihilationReport(field_name, ansatz.name, res)


@dataclass
class OdeSolutionCandidate:
    name: str
    dep: str
    var: str
    expr: Expr
    definitions: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)


@dataclass
class OdeReport:
    name: str
    residual: Expr

    @property
    def passed(self) -> bool:
        return self.residual.is_zero

    def to_json(self) -> dict:
        return {"name": self.name, "status": "pass" if self.passed else "fail",
                "residual": str(self.residual)}


def verify_ode_solution(ode: Expr, cand: OdeSolutionCandidate) -> OdeReport:
    """Substitute the candidate and its derivatives; the residual must vanish."""
    if cand.definitions:
        ode = substitute(ode, cand.definitions, check_cycles=False)
    expr = substitute(cand.expr, cand.definitions, check_cycles=False) if cand.definitions else cand.expr
    bind = {}
    for a in free_atoms(ode):
        if isinstance(a, Jet) and a.dep == cand.dep:
            extra = set(a.index.as_dict()) - {cand.var}
            if extra:
                raise ValueError(f"{a} is not an ordinary derivative in {cand.var}")
            bind[a] = diff(expr, Var(cand.var), a.order) if a.order else expr
    return OdeReport(cand.name, merge_power_bases(substitute(ode, bind, check_cycles=False)))


def equation_residual(eq: Expr, dep: str, solution: Expr) -> Expr:
    """Symbolic residual of eq for u = solution (partial derivatives)."""
    memo = {MultiIndex(): solution}
    bind = {}
    for a in free_atoms(eq):
        if isinstance(a, Jet) and a.dep == dep:
            bind[a] = _old_derivative(solution, a.index, memo)
    return merge_power_bases(substitute(eq, bind, check_cycles=False))
