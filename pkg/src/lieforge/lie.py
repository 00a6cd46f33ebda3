"""Prolongation, invariance conditions, determining systems and Lie brackets."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .expr import (
    JET_CAP, ZERO, Atom, Expr, Fn, Jet, JetOrderExceeded, MultiIndex, Param, SymbolicError, Var,
    _coerce, _term_key, diff, free_atoms, instantiate_kernels, jet, substitute,
    total_derivative,
)


class InsufficientProlongation(SymbolicError):
    pass


class NotAffineInLeading(SymbolicError):
    pass


class CollectionFailure(SymbolicError):
    pass


class NotAPointField(SymbolicError):
    pass


@dataclass(frozen=True, eq=False)
class VectorField:
    """Point vector field sum xi^i d/dx_i + eta d/du."""

    indep: tuple
    dep: str
    coeffs: Mapping[str, Expr]

    def __post_init__(self):
        full = {k: self.coeffs.get(k, ZERO) for k in (*self.indep, self.dep)}
        extra = set(self.coeffs) - set(full)
        if extra:
            raise ValueError(f"coefficients for unknown coordinates {sorted(extra)}")
        for k, c in full.items():
            if any(isinstance(a, Jet) and a.order > 0 for a in free_atoms(c)):
                raise NotAPointField(f"coefficient of d/d{k} depends on derivatives")
        object.__setattr__(self, "coeffs", full)

    @classmethod
    def from_components(cls, indep: Sequence[str], dep: str, **coeffs) -> "VectorField":
        return cls(tuple(indep), dep, {k: _coerce(v) for k, v in coeffs.items()})

    @property
    def eta(self) -> Expr:
        return self.coeffs[self.dep]

    def xi(self, v: str) -> Expr:
        return self.coeffs[v]

    @property
    def u(self) -> Expr:
        return jet(self.dep)

    def apply(self, F: Expr) -> Expr:
        """Directional derivative of a function of (x, u)."""
        out = ZERO
        for v in self.indep:
            if not self.coeffs[v].is_zero:
                out = out + self.coeffs[v] * diff(F, Var(v))
        if not self.eta.is_zero:
            out = out + self.eta * diff(F, Jet(self.dep, MultiIndex()))
        return out

    def components(self) -> list[tuple[str, Expr]]:
        return [(k, self.coeffs[k]) for k in (*self.indep, self.dep)]

    def map(self, f) -> "VectorField":
        return VectorField(self.indep, self.dep, {k: f(c) for k, c in self.coeffs.items()})

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.indep, self.dep, {k: c + other.coeffs[k] for k, c in self.coeffs.items()})

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self + other.scale(-1)

    def scale(self, c) -> "VectorField":
        return self.map(lambda e: e * c)

    __rmul__ = scale

    def substitute(self, bindings) -> "VectorField":
        return self.map(lambda e: substitute(e, bindings))

    @property
    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.coeffs.values())

    def __eq__(self, other):
        return (isinstance(other, VectorField) and self.indep == other.indep and self.dep == other.dep
                and all(self.coeffs[k] == other.coeffs[k] for k in self.coeffs))

    def __str__(self):
        parts = [f"({c})*D{k}" for k, c in self.components() if not c.is_zero]
        return " + ".join(parts) if parts else "0"


def zero_field(indep: Sequence[str], dep: str) -> VectorField:
    return VectorField(tuple(indep), dep, {})


def generic_field(indep: Sequence[str], dep: str, names: Mapping[str, str] | None = None) -> VectorField:
    """Field whose coefficients are unknown kernels of (x, u); kernel derivatives are the unknowns."""
    names = dict(names or {})
    args = tuple(Var(v) for v in indep) + (Jet(dep, MultiIndex()),)
    coeffs = {}
    for k in (*indep, dep):
        nm = names.get(k, "eta" if k == dep else f"xi_{k}")
        coeffs[k] = _coerce(Fn(nm, tuple(_coerce(a) for a in args)))
    return VectorField(tuple(indep), dep, coeffs)


# --------------------------------------------------------------------------
# prolongation


def multi_indices(indep: Sequence[str], order: int) -> list[MultiIndex]:
    out = []
    for k in range(1, order + 1):
        for combo in itertools.combinations_with_replacement(indep, k):
            out.append(MultiIndex.of(*combo))
    return out


def _parent(J: MultiIndex, indep: Sequence[str]) -> tuple[MultiIndex, str]:
    last = max(J.variables(), key=indep.index)
    return J - MultiIndex.of(last), last


@dataclass
class ProlongedField:
    field: VectorField
    order: int
    eta: dict = field(default_factory=dict)

    def coefficient(self, a: Atom) -> Expr:
        if isinstance(a, Var):
            return self.field.coeffs.get(a.name, ZERO)
        if isinstance(a, Jet) and a.dep == self.field.dep:
            if a.order == 0:
                return self.field.eta
            if a.order > self.order:
                raise InsufficientProlongation(f"{a} beyond prolongation order {self.order}")
            return self.eta[a.index]
        return ZERO

    def apply(self, F: Expr) -> Expr:
        """Prolonged field acting on a function on jet space."""
        out = ZERO
        for a in free_atoms(F):
            if isinstance(a, (Var, Jet)):
                c = self.coefficient(a)
                if not c.is_zero:
                    out = out + c * diff(F, a)
        return out


def _check_order(p: int):
    if p > JET_CAP:
        raise JetOrderExceeded(f"prolongation order {p} exceeds cap {JET_CAP}")


def prolong(v: VectorField, p: int, indices: Iterable[MultiIndex] | None = None) -> ProlongedField:
    """eta^J = D_J(eta - xi^i u_i) + xi^i u_{J,i}, for all 1 <= |J| <= p (or just ``indices``)."""
    _check_order(p)
    indep = list(v.indep)
    cap = max(JET_CAP, p + 1)
    Q = v.eta
    for i in indep:
        Q = Q - v.xi(i) * jet(v.dep, i)
    memo: dict[MultiIndex, Expr] = {MultiIndex(): Q}

    def DQ(J: MultiIndex) -> Expr:
        if J not in memo:
            P, last = _parent(J, indep)
            memo[J] = total_derivative(DQ(P), last, cap=cap)
        return memo[J]

    wanted = multi_indices(indep, p) if indices is None else list(indices)
    eta = {}
    for J in wanted:
        if J.order > p:
            raise JetOrderExceeded(f"{J} exceeds requested order {p}")
        e = DQ(J)
        for i in indep:
            if not v.xi(i).is_zero:
                e = e + v.xi(i) * _as_expr(Jet(v.dep, J.add(i)))
        eta[J] = e
    return ProlongedField(v, p, eta)


def prolong_recursive(v: VectorField, p: int) -> ProlongedField:
    """Independent construction: eta^{J,i} = D_i eta^J - sum_k D_i(xi^k) u_{J,k}."""
    _check_order(p)
    indep = list(v.indep)
    Dxi = {(i, k): total_derivative(v.xi(k), i) for i in indep for k in indep}
    eta: dict[MultiIndex, Expr] = {MultiIndex(): v.eta}
    for J in multi_indices(indep, p):
        P, i = _parent(J, indep)
        e = total_derivative(eta[P], i, cap=max(JET_CAP, p + 1))
        for k in indep:
            if not Dxi[i, k].is_zero:
                e = e - Dxi[i, k] * jet(v.dep, index=P.add(k))
        eta[J] = e
    del eta[MultiIndex()]
    return ProlongedField(v, p, eta)


# --------------------------------------------------------------------------
# invariance and determining equations


def jet_order(e: Expr, dep: str | None = None) -> int:
    return max((a.order for a in free_atoms(e) if isinstance(a, Jet) and (dep is None or a.dep == dep)),
               default=0)


def invariance_expression(pv: ProlongedField, eq: Expr) -> Expr:
    """pr v applied to eq (no on-shell substitution)."""
    need = jet_order(eq, pv.field.dep)
    if need > pv.order:
        raise InsufficientProlongation(f"equation has order {need}, field prolonged to {pv.order}")
    return pv.apply(eq)


def _leading_atom(leading) -> Jet:
    a = leading.as_atom() if isinstance(leading, Expr) else leading
    if not isinstance(a, Jet):
        raise ValueError("leading term must be a jet variable")
    return a


def solve_leading(eq: Expr, leading) -> tuple[Jet, Expr]:
    """Return (L, S) with eq = 0  <=>  L = S, checking eq is affine in L."""
    L = _leading_atom(leading)

    def derived(a):
        return isinstance(a, Jet) and a.dep == L.dep and L.index.divides(a.index)

    c = diff(eq, L)
    rest = eq - c * _as_expr(L)
    if c.is_zero or any(derived(a) for a in free_atoms(c)) or any(derived(a) for a in free_atoms(rest)):
        raise NotAffineInLeading(f"equation is not affine in {L}")
    return L, -rest / c


def _as_expr(a: Atom) -> Expr:
    return Expr({((a, 1),): Fraction(1)})


def on_shell_reduce(expr: Expr, eq: Expr, leading) -> Expr:
    """Eliminate the leading derivative and all its derivatives using eq = 0."""
    L, sol = solve_leading(eq, leading)
    memo: dict[MultiIndex, Expr] = {MultiIndex(): sol}

    def raw(K: MultiIndex) -> Expr:
        if K not in memo:
            v = K.variables()[-1]
            memo[K] = total_derivative(raw(K - MultiIndex.of(v)), v)
        return memo[K]

    reduced: dict[Jet, Expr] = {}

    def targets(e: Expr):
        return [a for a in free_atoms(e)
                if isinstance(a, Jet) and a.dep == L.dep and L.index.divides(a.index)]

    def reduce(e: Expr, depth: int = 0) -> Expr:
        if depth > 4 * JET_CAP:
            raise NotAffineInLeading("on-shell substitution does not terminate")
        ts = targets(e)
        if not ts:
            return e
        bind = {}
        for a in ts:
            if a not in reduced:
                reduced[a] = reduce(raw(a.index - L.index), depth + 1)
            bind[a] = reduced[a]
        return substitute(e, bind, check_cycles=False)

    return reduce(expr)


@dataclass
class DeterminingSystem:
    """Coefficients of independent jet monomials; each must vanish identically."""

    entries: list  # list[(key Expr, coefficient Expr)]
    unknowns: frozenset = frozenset()

    def __len__(self):
        return len(self.entries)

    def equations(self) -> list[Expr]:
        return [c for _, c in self.entries]

    def reassemble(self) -> Expr:
        out = ZERO
        for k, c in self.entries:
            out = out + k * c
        return out

    def coefficient(self, key: Expr) -> Expr:
        for k, c in self.entries:
            if k == key:
                return c
        return ZERO


def _is_derivative_jet(a: Atom) -> bool:
    return isinstance(a, Jet) and a.order > 0


def collect_determining(expr: Expr, unknowns: Iterable[str] = ()) -> DeterminingSystem:
    """Split expr into sum key*coefficient over monomials in jets of order >= 1."""
    for a in expr.atoms():
        for ch in a.children():
            if any(_is_derivative_jet(b) for b in free_atoms(ch)):
                raise CollectionFailure(f"derivative jet inside kernel {a}")
    if expr.den is not None and any(_is_derivative_jet(a) for m in expr.den for a, _ in m):
        raise CollectionFailure("derivative jets in a denominator")
    groups: dict = {}
    for m, c in expr.num.items():
        key = tuple(p for p in m if _is_derivative_jet(p[0]))
        rest = tuple(p for p in m if not _is_derivative_jet(p[0]))
        if any(e < 0 for _, e in key):
            raise CollectionFailure("negative power of a derivative jet")
        groups.setdefault(key, {})[rest] = c
    den = expr.denominator()
    entries = []
    for key in sorted(groups, key=_term_key):
        coeff = Expr(groups[key]) / den if expr.den is not None else Expr(groups[key])
        entries.append((Expr({key: Fraction(1)}), coeff))
    return DeterminingSystem(entries, frozenset(unknowns))


def determining_system(eq: Expr, indep: Sequence[str], dep: str, leading,
                       names: Mapping[str, str] | None = None, order: int | None = None
                       ) -> tuple[DeterminingSystem, VectorField]:
    """Generate the determining system of eq for point symmetries."""
    v = generic_field(indep, dep, names)
    p = order if order is not None else jet_order(eq, dep)
    needed = sorted({a.index for a in free_atoms(eq) if isinstance(a, Jet) and a.dep == dep and a.order},
                    key=lambda J: (J.order, J.items))
    pv = prolong(v, p, indices=needed)
    inv = invariance_expression(pv, eq)
    red = on_shell_reduce(inv, eq, leading)
    unknown = {v.coeffs[k].as_atom().name for k in v.coeffs}
    return collect_determining(red, unknown), v


@dataclass
class CheckReport:
    name: str
    residuals: list  # list[(key str, residual Expr)]

    @property
    def passed(self) -> bool:
        return all(r.is_zero for _, r in self.residuals)

    def failures(self) -> list:
        return [(k, r) for k, r in self.residuals if not r.is_zero]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "status": "pass" if self.passed else "fail",
            "equations": len(self.residuals),
            "nonzero": [{"key": k, "residual": str(r)} for k, r in self.failures()],
        }


def kernel_templates(generic: VectorField, candidate: VectorField) -> dict:
    """Templates turning the generic field's kernels into the candidate's coefficients."""
    dummies = tuple(generic.indep) + ("_u",)
    to_dummy = {Jet(generic.dep, MultiIndex()): Expr({((Var("_u"), 1),): Fraction(1)})}
    out = {}
    for k, c in generic.coeffs.items():
        out[c.as_atom().name] = (dummies, substitute(candidate.coeffs[k], to_dummy, check_cycles=False))
    return out


def check_infinitesimals(sys: DeterminingSystem, generic: VectorField, candidate: VectorField,
                         name: str = "candidate") -> CheckReport:
    """Substitute a candidate field into every determining equation."""
    tmpl = kernel_templates(generic, candidate)
    res = [(str(k), instantiate_kernels(c, tmpl)) for k, c in sys.entries]
    return CheckReport(name, res)


# --------------------------------------------------------------------------
# brackets


def lie_bracket(v: VectorField, w: VectorField) -> VectorField:
    """[v, w]^k = v(w^k) - w(v^k)."""
    return VectorField(v.indep, v.dep, {k: v.apply(w.coeffs[k]) - w.apply(v.coeffs[k]) for k in v.coeffs})


def prolonged_bracket(pv: ProlongedField, pw: ProlongedField) -> dict:
    """Bracket of two prolonged fields in jet coordinates, keyed by MultiIndex (empty = u)."""
    out = {}
    for J in [MultiIndex(), *pv.eta]:
        cv = pv.coefficient(Jet(pv.field.dep, J))
        cw = pw.coefficient(Jet(pw.field.dep, J))
        out[J] = pv.apply(cw) - pw.apply(cv)
    return out


def _split_params(e: Expr) -> dict:
    """Coefficient map: monomial in non-parameter atoms -> Expr in parameters."""
    den = e.denominator()
    if any(not isinstance(a, Param) for a in den.atoms()):
        raise CollectionFailure("non-constant denominator")
    groups: dict = {}
    for m, c in e.num.items():
        key = tuple(p for p in m if not isinstance(p[0], Param))
        rest = tuple(p for p in m if isinstance(p[0], Param))
        groups.setdefault(key, {})[rest] = c
    return {k: Expr(v) / den for k, v in groups.items()}


def solve_linear(rows: list[list[Expr]], rhs: list[Expr]) -> list[Expr] | None:
    """Gauss-Jordan over the field of rational functions; None if inconsistent.

    Free unknowns are set to zero.
    """
    n = len(rows[0]) if rows else 0
    A = [list(r) + [b] for r, b in zip(rows, rhs)]
    pivots = []
    r = 0
    for col in range(n):
        piv = next((i for i in range(r, len(A)) if not A[i][col].is_zero), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = A[r][col].inverse()
        A[r] = [x * inv for x in A[r]]
        for i in range(len(A)):
            if i != r and not A[i][col].is_zero:
                f = A[i][col]
                A[i] = [x - f * y for x, y in zip(A[i], A[r])]
        pivots.append(col)
        r += 1
    for i in range(r, len(A)):
        if not A[i][n].is_zero:
            return None
    sol = [ZERO] * n
    for i, col in enumerate(pivots):
        sol[col] = A[i][n]
    return sol


@dataclass
class BracketDecomposition:
    pair: tuple
    raw: VectorField
    coords: list | None
    residual: VectorField

    @property
    def in_span(self) -> bool:
        return self.coords is not None


def decompose(raw: VectorField, basis: Sequence[VectorField]) -> tuple[list | None, VectorField]:
    """Constant (parameter-valued) coordinates of raw in basis, or None with raw as residual."""
    rows, rhs = [], []
    try:
        for k in raw.coeffs:
            parts = [_split_params(b.coeffs[k]) for b in basis]
            target = _split_params(raw.coeffs[k])
            keys = set(target)
            for p in parts:
                keys |= set(p)
            for key in keys:
                rows.append([p.get(key, ZERO) for p in parts])
                rhs.append(target.get(key, ZERO))
    except CollectionFailure:
        return None, raw
    coords = solve_linear(rows, rhs) if rows else [ZERO] * len(basis)
    if coords is None:
        return None, raw
    resid = raw
    for c, b in zip(coords, basis):
        resid = resid - b.scale(c)
    return coords, resid


def commutator_table(basis: Sequence[VectorField]) -> list[list[BracketDecomposition]]:
    """Every entry is bracketed and decomposed independently (antisymmetry is not assumed)."""
    n = len(basis)
    table: list[list] = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            raw = lie_bracket(basis[i], basis[j])
            coords, resid = decompose(raw, basis)
            table[i][j] = BracketDecomposition((i, j), raw, coords, resid)
    return table


def jacobi(u: VectorField, v: VectorField, w: VectorField) -> VectorField:
    return (lie_bracket(u, lie_bracket(v, w)) + lie_bracket(v, lie_bracket(w, u))
            + lie_bracket(w, lie_bracket(u, v)))
