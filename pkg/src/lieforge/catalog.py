"""Fixture catalog for the potential CBS equation: fields, flows, reductions, solutions."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .expr import (
    ONE, ZERO, Expr, Jet, MultiIndex, SymbolicError, _coerce, antideriv, const, diff, exp_, fn,
    free_atoms, instantiate_kernels, jet, param, power, substitute, var,
)
from .lie import VectorField
from .reduction import OdeSolutionCandidate, ReductionAnsatz

INDEP = ("x", "y", "z", "t")
DEP = "u"
COORDS = INDEP + (DEP,)


class UnsupportedSpecialization(SymbolicError):
    pass


x, y, z, t = (var(n) for n in INDEP)
u = jet(DEP)
eps = param("eps")


@dataclass(frozen=True)
class CbsParams:
    a: Expr = param("a")
    b: Expr = param("b")
    c: Expr = param("c")
    d: Expr = param("d")

    @classmethod
    def bound(cls, **vals) -> "CbsParams":
        return cls(**{k: const(Fraction(v)) for k, v in vals.items()})

    def bindings(self) -> dict:
        return {param(k): getattr(self, k) for k in "abcd"}

    def nondegeneracy(self) -> dict[str, bool | None]:
        """Each predicate is True/False for bound parameters and None when symbolic."""
        a, b, c, d = self.a, self.b, self.c, self.d

        def nz(e: Expr):
            return None if e.as_rational() is None else not e.is_zero

        return {"a!=0": nz(a), "b!=0": nz(b), "c!=0": nz(c),
                "bc-ad!=0": nz(b * c - a * d), "c!=a": nz(c - a)}


SYMBOLIC = CbsParams()


def build_pde(p: CbsParams = SYMBOLIC) -> Expr:
    J = lambda *v: jet(DEP, *v)  # noqa: E731
    return (J("x", "t") + p.a * J("x") * J("x", "y") + p.b * J("y") * J("x", "x")
            + p.c * J("x") * J("x", "z") + p.d * J("z") * J("x", "x")
            + J("x", "x", "x", "y") + J("x", "x", "x", "z"))


def cbs_terms(p: CbsParams = SYMBOLIC) -> list[Expr]:
    J = lambda *v: jet(DEP, *v)  # noqa: E731
    return [J("x", "t"), p.a * J("x") * J("x", "y"), p.b * J("y") * J("x", "x"),
            p.c * J("x") * J("x", "z"), p.d * J("z") * J("x", "x"),
            J("x", "x", "x", "y"), J("x", "x", "x", "z")]


# ---------------------------------------------------------------- generators

@dataclass(frozen=True)
class Specialization:
    """lam: 'generic' | 'zero' | constant; gam: 'generic' | 'zero' | 'linear' | constant."""

    lam: object = "zero"
    gam: object = "zero"

    @classmethod
    def parse(cls, text: str) -> "Specialization":
        vals = {"lambda": "zero", "gamma": "zero"}
        for part in filter(None, (s.strip() for s in text.split(","))):
            k, _, v = part.partition("=")
            k, v = k.strip(), v.strip()
            if k in ("lam", "lambda"):
                k = "lambda"
            elif k in ("gam", "gamma"):
                k = "gamma"
            else:
                raise ValueError(f"unknown specialization key {k!r}")
            vals[k] = v
        return cls(_spec_value(vals["lambda"]), _spec_value(vals["gamma"]))

    def lam_expr(self, p: CbsParams = SYMBOLIC) -> tuple[Expr, Expr]:
        if self.lam == "generic":
            return fn("lam", t), fn("lam", t, deriv=(1,))
        if self.lam == "zero":
            return ZERO, ZERO
        return const(self.lam), ZERO

    def gam_expr(self, p: CbsParams = SYMBOLIC) -> Expr:
        w = (p.b * z - p.d * y) / p.b
        if self.gam == "generic":
            return fn("gam", w, t)
        if self.gam == "zero":
            return ZERO
        if self.gam == "linear":
            return w
        return const(self.gam)

    def kernel_templates(self) -> dict:
        """Templates that turn the generic kernels lam(t), gam(w, t) into this specialization."""
        out = {}
        if self.lam != "generic":
            out["lam"] = (("s",), ZERO if self.lam == "zero" else const(self.lam))
        if self.gam != "generic":
            g = {"zero": ZERO, "linear": var("w")}.get(self.gam) if isinstance(self.gam, str) else None
            out["gam"] = (("w", "s"), g if g is not None else const(self.gam))
        return out

    def apply(self, v: VectorField) -> VectorField:
        tm = self.kernel_templates()
        return v.map(lambda e: instantiate_kernels(e, tm)) if tm else v

    def __str__(self):
        return f"lambda={self.lam},gamma={self.gam}"


def _spec_value(v: str):
    if v in ("generic", "zero", "linear"):
        return v
    q = Fraction(v)
    return "zero" if q == 0 else q


ZERO_SPEC = Specialization()
GENERIC_SPEC = Specialization("generic", "generic")


def _field(**coeffs) -> VectorField:
    return VectorField.from_components(INDEP, DEP, **coeffs)


def generator(i: int, spec: Specialization = ZERO_SPEC, p: CbsParams = SYMBOLIC) -> VectorField:
    """The i-th printed generator with the specialization applied."""
    if i not in range(1, 7):
        raise ValueError(f"generator index {i} not in 1..6")
    lam, dlam = spec.lam_expr(p)
    common_u = dlam * y / p.b + spec.gam_expr(p)
    head = {
        1: dict(x=x, t=2 * t, u=-u),
        2: dict(t=ONE),
        3: dict(y=p.a * t / p.c, z=t, u=x / p.c),
        4: dict(x=-x, y=2 * y, z=2 * z, u=u),
        5: dict(z=ONE),
        6: dict(y=ONE),
    }[i]
    c = dict(head)
    c["x"] = c.get("x", ZERO) + lam
    c["u"] = c.get("u", ZERO) + common_u
    return _field(**c)


def generators(spec: Specialization = ZERO_SPEC, p: CbsParams = SYMBOLIC) -> list[VectorField]:
    return [generator(i, spec, p) for i in range(1, 7)]


def printed_family(p: CbsParams = SYMBOLIC) -> VectorField:
    """The printed general infinitesimals with constants c1..c6 and kernels lam, gam."""
    c1, c2, c3, c4, c5, c6 = (param(f"c{i}") for i in range(1, 7))
    lam, dlam = fn("lam", t), fn("lam", t, deriv=(1,))
    g = fn("gam", (p.b * z - p.d * y) / p.b, t)
    return _field(x=(c1 - c4) * x + lam,
                  y=2 * c4 * y + p.a / p.c * c3 * t + c6,
                  z=2 * c3 * t + 2 * c4 * z + c5,
                  t=2 * c1 * t + c2,
                  u=-(c1 - c4) * u + c3 / p.c * x + dlam / p.b * y + g)


def family_part(name: str, p: CbsParams = SYMBOLIC) -> VectorField:
    """Coefficient field of one constant (or kernel) in the printed family."""
    fam = printed_family(p)
    if name in ("lam", "gam"):
        other = "gam" if name == "lam" else "lam"
        kill = {fn("lam", t): ZERO, fn("lam", t, deriv=(1,)): ZERO} if other == "lam" else \
               {fn("gam", (p.b * z - p.d * y) / p.b, t): ZERO}
        v = fam.substitute({param(f"c{i}"): ZERO for i in range(1, 7)})
        return v.substitute(kill)
    return fam.map(lambda e: diff(e, param(name)))


def printed_table(p: CbsParams = SYMBOLIC) -> list[list[dict[int, Expr]]]:
    """The printed commutator table as coordinates in the basis v1..v6 (row i, column j)."""
    ac = p.a / p.c
    T: list[list[dict[int, Expr]]] = [[{} for _ in range(6)] for _ in range(6)]

    def put(i, j, coords):
        T[i - 1][j - 1] = {k: const(v) if not isinstance(v, Expr) else v for k, v in coords.items()}

    put(1, 2, {2: -2}); put(1, 3, {3: 2})
    put(2, 1, {2: 2}); put(2, 3, {6: ac, 5: 1})
    put(3, 1, {3: -2}); put(3, 2, {6: -ac, 5: -1}); put(3, 4, {3: 2})
    put(4, 3, {3: -2}); put(4, 5, {5: -2}); put(4, 6, {6: -2})
    put(5, 4, {5: 2})
    put(6, 4, {6: 2})
    return T


def printed_determining(p: CbsParams = SYMBOLIC) -> list[tuple[str, Expr]]:
    """The printed determining relations, each as an expression that should vanish."""
    slots = {v: k for k, v in enumerate(COORDS)}

    def D(kernel, *wrt):
        counts = [0] * 5
        for w in wrt:
            counts[slots[w]] += 1
        args = tuple(var(n) for n in INDEP) + (u,)
        return fn(kernel, *args, deriv=tuple(counts))

    a, b, c, d = p.a, p.b, p.c, p.d
    rel = [
        ("xi1_u", D("xi1", "u")), ("xi1_y", D("xi1", "y")), ("xi1_z", D("xi1", "z")),
        ("xi1_x-xi3_z/2-tau_t/2", D("xi1", "x") - D("xi3", "z") / 2 - D("tau", "t") / 2),
        ("xi2_u", D("xi2", "u")), ("xi2_z", D("xi2", "z")),
        ("xi2_y-xi2_z", D("xi2", "y") - D("xi2", "z")),
        ("xi2_t-a*xi3_t/c", D("xi2", "t") - a * D("xi3", "t") / c),
        ("xi3_u", D("xi3", "u")), ("xi3_x", D("xi3", "x")), ("xi3_y", D("xi3", "y")),
        ("xi3_tt", D("xi3", "t", "t")), ("xi3_tz", D("xi3", "t", "z")),
        ("tau_x", D("tau", "x")), ("tau_y", D("tau", "y")), ("tau_z", D("tau", "z")),
        ("tau_u", D("tau", "u")), ("tau_tt", D("tau", "t", "t")),
        ("eta_u+tau_t/2-xi3_z/2", D("eta", "u") + D("tau", "t") / 2 - D("xi3", "z") / 2),
        ("eta_x-xi3_t/c", D("eta", "x") - D("xi3", "t") / c),
        ("eta_y+(d*eta_z-xi1_t)/b", D("eta", "y") + (d * D("eta", "z") - D("xi1", "t")) / b),
    ]
    return rel


# --------------------------------------------------------------------- flows

@dataclass
class FlowMap:
    """Point map (x,y,z,t,u) -> transformed coordinates, parameterized by eps."""

    index: int
    components: dict  # coordinate -> Expr in coordinates and eps
    inverse: dict     # base coordinate -> Expr giving the preimage of a transformed point
    validity: str     # 'exact' | 'first-order'
    spec: Specialization = ZERO_SPEC

    def at(self, e) -> dict:
        return {k: substitute(v, {eps: const(e) if not isinstance(e, Expr) else e})
                for k, v in self.components.items()}

    def apply_to(self, coords: dict) -> dict:
        """Substitute coordinate expressions into the map."""
        b = {_coord_atom(k): v for k, v in coords.items()}
        return {k: substitute(v, b, check_cycles=False) for k, v in self.components.items()}


def _coord_atom(k: str) -> Expr:
    return u if k == DEP else var(k)


def _const_of(spec_val, what: str) -> Expr:
    if spec_val == "zero":
        return ZERO
    if spec_val in ("generic", "linear"):
        raise UnsupportedSpecialization(f"no closed-form flow for non-constant {what}")
    return const(spec_val)


def flow(i: int, spec: Specialization = ZERO_SPEC, p: CbsParams = SYMBOLIC) -> FlowMap:
    """Exact one-parameter group of generator i (constant lambda and gamma only)."""
    l0 = _const_of(spec.lam, "lambda")
    g0 = _const_of(spec.gam, "gamma")
    E, Einv = exp_(eps), exp_(-eps)
    if i == 1:
        comp = dict(x=(x + l0) * E - l0, y=y, z=z, t=t * E ** 2, u=(u - g0) * Einv + g0)
    elif i == 2:
        comp = dict(x=x + eps * l0, y=y, z=z, t=t + eps, u=u + eps * g0)
    elif i == 3:
        comp = dict(x=x + eps * l0, y=y + eps * p.a * t / p.c, z=z + eps * t, t=t,
                    u=u + eps * (x / p.c + g0) + eps ** 2 * l0 / (2 * p.c))
    elif i == 4:
        comp = dict(x=(x - l0) * Einv + l0, y=y * E ** 2, z=z * E ** 2, t=t,
                    u=(u + g0) * E - g0)
    elif i == 5:
        comp = dict(x=x + eps * l0, y=y, z=z + eps, t=t, u=u + eps * g0)
    elif i == 6:
        comp = dict(x=x + eps * l0, y=y + eps, z=z, t=t, u=u + eps * g0)
    else:
        raise ValueError(f"flow index {i} not in 1..6")
    comp = {k: _coerce(v) for k, v in comp.items()}
    neg = {eps: -eps}
    inv = {k: substitute(comp[k], neg, check_cycles=False) for k in INDEP}
    return FlowMap(i, comp, inv, "exact", spec)


def printed_flow(i: int, spec: Specialization = ZERO_SPEC, p: CbsParams = SYMBOLIC) -> FlowMap:
    """The printed map: coordinates plus eps times the generator coefficients."""
    v = generator(i, spec, p)
    coeffs = dict(v.components())
    comp = {k: _coord_atom(k) + eps * coeffs[k] for k in COORDS}
    inv = _printed_inverse(i, spec, p)
    exact = i in (2, 5, 6) or (i == 3 and spec.lam == "zero")
    return FlowMap(i, comp, inv, "exact" if exact else "first-order", spec)


def _printed_inverse(i: int, spec: Specialization, p: CbsParams) -> dict:
    l0 = _const_of(spec.lam, "lambda")
    if i == 1:
        return dict(x=(x - eps * l0) / (1 + eps), y=y, z=z, t=t / (1 + 2 * eps))
    if i == 2:
        return dict(x=x - eps * l0, y=y, z=z, t=t - eps)
    if i == 3:
        return dict(x=x - eps * l0, y=y - eps * p.a * t / p.c, z=z - eps * t, t=t)
    if i == 4:
        return dict(x=(x - eps * l0) / (1 - eps), y=y / (1 + 2 * eps), z=z / (1 + 2 * eps), t=t)
    if i == 5:
        return dict(x=x - eps * l0, y=y, z=z - eps, t=t)
    return dict(x=x - eps * l0, y=y - eps, z=z, t=t)


def transformed_solution(sol: Expr, fm: FlowMap) -> Expr:
    """Push the graph u = sol through the map; returns the new u as a function of x,y,z,t."""
    pre = {var(k): v for k, v in fm.inverse.items()}
    s_pre = substitute(sol, pre, check_cycles=False)
    b = dict(pre)
    b[u] = s_pre
    return substitute(fm.components[DEP], b, check_cycles=False)


# ---------------------------------------------------------------- reductions

def _pp(p: CbsParams):
    A = p.b / p.a
    B = (p.b * p.c - p.a * p.d) / p.c
    C = (p.c - p.a) / p.c
    return A, B, C


def ansatz_51(p: CbsParams = SYMBOLIC) -> ReductionAnsatz:
    X, Y, T = var("X"), var("Y"), var("T")
    return ReductionAnsatz(
        "A51", INDEP, {"X": x, "Y": y - p.a * z / p.c, "T": t}, DEP, "f",
        x * y / (p.a * t) + jet("f"),
        inverse={"x": X, "y": Y + p.a * z / p.c, "t": T})


def ansatz_51_case1(p: CbsParams = SYMBOLIC) -> ReductionAnsatz:
    X, T, r, s = var("X"), var("T"), var("r"), var("s")
    half = const(Fraction(1, 2))
    return ReductionAnsatz(
        "A51c1", ("X", "Y", "T"), {"r": X * power(T, -half), "s": var("Y")}, "f", "H",
        jet("H") * power(T, -half),
        inverse={"X": r * power(T, half), "Y": s})


def ansatz_51_composed(p: CbsParams = SYMBOLIC) -> ReductionAnsatz:
    r, s = var("r"), var("s")
    half = const(Fraction(1, 2))
    return ReductionAnsatz(
        "A51o", INDEP, {"r": x * power(t, -half), "s": y - p.a * z / p.c}, DEP, "H",
        x * y / (p.a * t) + jet("H") * power(t, -half),
        inverse={"x": r * power(t, half), "y": s + p.a * z / p.c})


def ansatz_52(p: CbsParams = SYMBOLIC) -> ReductionAnsatz:
    X, Y, Z = var("X"), var("Y"), var("Z")
    Lam = antideriv(fn("lam", var("s")), "s", t)
    return ReductionAnsatz(
        "A52", INDEP, {"X": x - Lam, "Y": y, "Z": z}, DEP, "f",
        jet("f") + fn("lam", t) * y / p.b + (p.b * z - p.d * y) * t / p.b,
        inverse={"x": X + Lam, "y": Y, "z": Z})


SIGMA = param("a4") / param("a1")


def ansatz_52b(p: CbsParams = SYMBOLIC) -> ReductionAnsatz:
    a1, a2, a3, a4, a5 = (param(f"a{i}") for i in range(1, 6))
    X, Y, Z, W, r, s = (var(n) for n in ("X", "Y", "Z", "W", "r", "s"))
    w = a1 * Y + a3
    return ReductionAnsatz(
        "A52b", ("X", "Y", "Z"),
        {"r": (a4 * X + a5) * power(w, -SIGMA), "s": (a1 * Z + a2) / w}, "f", "H",
        jet("H") * power(w, -SIGMA),
        inverse={"X": (r * power(W, SIGMA) - a5) / a4, "Y": (W - a3) / a1,
                 "Z": (s * W - a2) / a1},
        aux=("W",))


def identity_ansatz() -> ReductionAnsatz:
    return ReductionAnsatz("id", INDEP, {k: var(k) for k in INDEP}, DEP, "f", jet("f"),
                           inverse={k: var(k) for k in INDEP})


def ansatz_sub1(p: CbsParams = SYMBOLIC, k: Expr | None = None) -> ReductionAnsatz:
    """H = G(zeta)/r + k*r*s with zeta = s; the printed choice is k = (1-A)/B."""
    A, B, _ = _pp(p)
    k = (1 - A) / B if k is None else k
    r, s = var("r"), var("s")
    return ReductionAnsatz("B51s1", ("r", "s"), {ZETA: s}, "H", "G", jet("G") / r + k * r * s,
                           inverse={"s": var(ZETA)})


def ansatz_sub2(p: CbsParams = SYMBOLIC, k: Expr | None = None) -> ReductionAnsatz:
    """H = G(zeta) + k*s*r with zeta = r - b2*int(1/rho)."""
    A, B, _ = _pp(p)
    k = (1 - A) / B if k is None else k
    r, s = var("r"), var("s")
    I = antideriv(1 / fn("rho", var("q")), "q", s)
    b2 = param("b2")
    return ReductionAnsatz("B51s2", ("r", "s"), {ZETA: r - b2 * I}, "H", "G", jet("G") + k * s * r,
                           inverse={"r": var(ZETA) + b2 * I})


def ansatz_ode52(p: CbsParams = SYMBOLIC) -> ReductionAnsatz:
    r, s = var("r"), var("s")
    tail = param("b2") * power(p.b * s - p.d, -SIGMA) / param("b1")
    return ReductionAnsatz("B52", ("r", "s"), {ZETA: s}, "H", "G", jet("G") / r + tail,
                           inverse={"s": var(ZETA)})


def printed_reduced_51(p: CbsParams = SYMBOLIC) -> Expr:
    A, B, C = _pp(p)
    X, T = var("X"), var("T")
    f = lambda *v: jet("f", *v)  # noqa: E731
    return (T * f("X", "T") + f("X") + A * X * f("X", "X") + B * T * f("Y") * f("X", "X")
            + C * T * f("X", "X", "X", "Y"))


def printed_reduced_51_case1(p: CbsParams = SYMBOLIC) -> Expr:
    A, B, C = _pp(p)
    H = lambda *v: jet("H", *v)  # noqa: E731
    return ((A - 1) * var("r") * H("r", "r") + B * H("s") * H("r", "r")
            + C * H("r", "r", "r", "s"))


def printed_reduced_52(p: CbsParams = SYMBOLIC) -> Expr:
    f = lambda *v: jet("f", *v)  # noqa: E731
    return (p.a * f("X") * f("X", "Y") + p.a * f("Y") * f("X", "X") + p.c * f("X") * f("X", "Z")
            + p.d * f("Z") * f("X", "X") + f("X", "X", "X", "Y") + f("X", "X", "X", "Z"))


def printed_reduced_52b(p: CbsParams = SYMBOLIC) -> Expr:
    a, b, c, d = p.a, p.b, p.c, p.d
    a1, a4 = param("a1"), param("a4")
    r, s = var("r"), var("s")
    H = lambda *v: jet("H", *v)  # noqa: E731
    return (-(a + b) * a * H("r") * H("r", "r") + (c - a * s) * a1 / a4 * H("r") * H("r", "s")
            - b * H() * H("r", "r") + (d - b * s) * a1 / a4 * H("s") * H("r", "r")
            - 2 * a * H("r") ** 2 - 4 * a4 * H("r", "r", "r") - a4 * r * H("r", "r", "r", "r")
            + a1 * (1 - s) * H("r", "r", "r", "s"))


def case1_field() -> VectorField:
    """Case-1 scaling on the (X, Y, T; f) space."""
    X, T = var("X"), var("T")
    return VectorField.from_components(("X", "Y", "T"), "f", X=X, T=2 * T, f=-jet("f"))


def reduced_52_fields(p: CbsParams = SYMBOLIC) -> dict[str, VectorField]:
    """The two readings of the printed symmetry of the 5.2 reduced equation (psi = 0)."""
    a1, a2, a3, a4, a5 = (param(f"a{i}") for i in range(1, 6))
    X, Y, Z = var("X"), var("Y"), var("Z")
    f = jet("f")
    mk = lambda zc: VectorField.from_components(  # noqa: E731
        ("X", "Y", "Z"), "f", X=a4 * X + a5, Y=a1 * Y + a3, Z=zc, f=-a4 * f)
    return {"a1*Z+a2": mk(a1 * Z + a2), "a1*Z+a1": mk(a1 * Z + a1)}


# ---------------------------------------------------------------------- ODEs

ZETA = "zeta"


def _G(n: int = 0) -> Expr:
    return jet("G", *([ZETA] * n))


def printed_odes(p: CbsParams = SYMBOLIC) -> dict[str, Expr]:
    A, B, C = _pp(p)
    zeta = var(ZETA)
    a4 = param("a4")
    return {
        "ode_sub1": 2 * B * _G() * _G(1) - 6 * C * _G(1),
        "ode_sub2": _G(4),
        "ode_52": (p.c + p.d - (p.a + p.b) * zeta) * _G() * _G(1) + 6 * a4 * (1 - zeta) * _G(1),
    }


def ode_candidates(p: CbsParams = SYMBOLIC) -> list[tuple[str, OdeSolutionCandidate]]:
    zeta = var(ZETA)
    D = p.b * p.c - p.a * p.d
    b1, b2, b3, b4 = (param(f"beta{i}") for i in range(1, 5))
    a4 = param("a4")
    return [
        ("ode_sub1", OdeSolutionCandidate("G_const_3ca", "G", ZETA, 3 * (p.c - p.a) / D,
                                          constraints=["bc-ad!=0"])),
        ("ode_sub1", OdeSolutionCandidate("G_alpha", "G", ZETA, -param("alpha"))),
        ("ode_sub2", OdeSolutionCandidate("G_cubic", "G", ZETA,
                                          b1 + b2 * zeta + b3 * zeta ** 2 + b4 * zeta ** 3)),
        ("ode_sub2", OdeSolutionCandidate("G_linear", "G", ZETA, zeta)),
        ("ode_52", OdeSolutionCandidate(
            "G_52", "G", ZETA, 6 * a4 * (1 - zeta) / ((p.a + p.b) * zeta - (p.c + p.d)),
            constraints=["(a+b)zeta!=c+d"])),
        ("ode_52", OdeSolutionCandidate("G_beta", "G", ZETA, param("beta"))),
    ]


# ----------------------------------------------------------------- solutions

@dataclass
class SolutionRecord:
    name: str
    expr: Expr
    constraints: list = field(default_factory=list)
    singular: list = field(default_factory=list)  # expressions that must stay away from 0
    provenance: str = ""
    kernels: dict = field(default_factory=dict)   # numeric-mode instantiations
    bindings: dict = field(default_factory=dict)  # numeric values of extra constants


def _head(p: CbsParams) -> Expr:
    D = p.b * p.c - p.a * p.d
    return (p.c - p.d) / D * x * y / t - (p.a - p.b) / D * x * z / t


def _s52(p: CbsParams):
    a1, a2, a3, a4, a5 = (param(f"a{i}") for i in range(1, 6))
    w = a1 * y + a3
    s = (a1 * z + a2) / w
    Lam = antideriv(fn("lam", var("s")), "s", t)
    base = fn("lam", t) * y / p.b + (p.b * z - p.d * y) * t / p.b
    ptail = param("b2") * power(p.b * s - p.d, -SIGMA) / (a1 * power(w, SIGMA))
    return base + ptail, a5 + a4 * x - a4 * Lam, s, w


def catalog_solutions(p: CbsParams = SYMBOLIC) -> list[SolutionRecord]:
    D = p.b * p.c - p.a * p.d
    half = const(Fraction(1, 2))
    sq = power(t, half)
    I = antideriv(1 / fn("rho", var("s")), "s", y - p.a * z / p.c)
    b1, b2, b3, b4 = (param(f"beta{i}") for i in range(1, 5))
    zeta_t = x / sq - param("b2") * I
    s3 = (_head(p) + (b1 * sq + b2 * x) / t - param("b2") * b2 / sq * I
          + b3 / sq * zeta_t ** 2 + b4 / sq * zeta_t ** 3)
    base52, den52, s, w = _s52(p)
    a4 = param("a4")
    s4 = base52 + 6 * a4 * (1 - s) / (den52 * ((p.a + p.b) * s - (p.c + p.d)))
    s5 = base52 + param("beta") / den52
    sing12 = [x, t]
    k52 = {"lam": (("s",), ONE)}
    b52 = {"a1": 2, "a2": Fraction(1, 3), "a3": 2, "a4": 1, "a5": 3, "b2": Fraction(1, 2)}
    return [
        SolutionRecord("S1", _head(p) + 3 * (p.c - p.a) / (D * x),
                       ["bc-ad!=0"], sing12, "A51 -> A51c1 -> subcase 1, G = 3(c-a)/(bc-ad)"),
        SolutionRecord("S2", _head(p) + param("alpha") / x,
                       ["bc-ad!=0"], sing12, "A51 -> A51c1 -> subcase 1, G = -alpha",
                       bindings={"alpha": Fraction(3, 2)}),
        SolutionRecord("S3", s3, ["bc-ad!=0", "rho!=0"], [t], "A51 -> A51c1 -> subcase 2, cubic G",
                       kernels={"rho": (("s",), ONE)},
                       bindings={"beta1": 1, "beta2": Fraction(1, 2), "beta3": Fraction(1, 3),
                                 "beta4": Fraction(1, 4), "b2": Fraction(1, 2)}),
        SolutionRecord("S4", s4, ["a1!=0", "a4!=0", "(a+b)s!=c+d"],
                       [den52, (p.a + p.b) * s - (p.c + p.d), w, p.b * s - p.d],
                       "A52 -> A52b -> G = 6a4(1-zeta)/((a+b)zeta-(c+d))",
                       kernels=k52, bindings=b52),
        SolutionRecord("S5", s5, ["a1!=0", "a4!=0"], [den52, w, p.b * s - p.d],
                       "A52 -> A52b -> G = beta", kernels=k52,
                       bindings={**b52, "beta": Fraction(2, 3)}),
    ]


def corrected_solution(p: CbsParams = SYMBOLIC) -> SolutionRecord:
    """A rational family that does satisfy the equation; used to exercise the harness."""
    D = p.b * p.c - p.a * p.d
    e = ((p.c - 2 * p.d) / (2 * D) * x * y / t + (2 * p.b - p.a) / (2 * D) * x * z / t
         + param("alpha") / x)
    return SolutionRecord("S1c", e, ["bc-ad!=0"], [x, t], "recomputed subcase-1 chain",
                          bindings={"alpha": Fraction(3, 2)})


def solution(name: str, p: CbsParams = SYMBOLIC) -> SolutionRecord:
    for s in catalog_solutions(p) + [corrected_solution(p)]:
        if s.name == name:
            return s
    raise KeyError(name)


def kdv_collapse(p: CbsParams = SYMBOLIC) -> tuple[Expr, Expr]:
    """Collapse d/dy = d/dz = d/dx on the equation; returns (collapsed, expected).

    With v = u_x the collapsed equation is the KdV equation
    v_t + (a+b+c+d) v v_x + 2 v_xxx = 0.
    """
    e = build_pde(p)
    b = {}
    for at in free_atoms(e):
        if isinstance(at, Jet):
            d_ = at.index.as_dict()
            n = d_.get("x", 0) + d_.get("y", 0) + d_.get("z", 0)
            b[at] = jet(DEP, index=MultiIndex({"x": n, "t": d_.get("t", 0)}))
    collapsed = substitute(e, b, check_cycles=False)
    J = lambda *v: jet(DEP, *v)  # noqa: E731
    s = p.a + p.b + p.c + p.d
    expected = J("x", "t") + s * J("x") * J("x", "x") + 2 * J("x", "x", "x", "x")
    return collapsed, expected

