"""Exact symbolic kernel.

Every :class:`Expr` is kept in canonical form: a Laurent polynomial numerator
over a polynomial denominator that has no monomial content, with the gcd
cancelled and the denominator made monic.  Coefficients are exact rationals;
the "variables" of the polynomials are atoms (base variables, parameters, jet
variables and opaque kernel applications).  Two expressions are equal as
rational functions exactly when their canonical forms are equal, so ``==`` is
a zero test.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping

from sympy.polys.domains import QQ
from sympy.polys.rings import ring as _sympy_ring

__all__ = [
    "SymbolicError", "DegenerateDivision", "JetOrderExceeded", "CyclicSubstitution",
    "UnboundSymbol", "EvaluationPole", "UnsupportedDerivative",
    "MultiIndex", "Atom", "Var", "Param", "Jet", "Fn", "Pow", "Exp", "Antideriv", "Basis",
    "Expr", "EvalPoint", "ZERO", "ONE",
    "const", "var", "param", "jet", "fn", "power", "exp_", "antideriv", "basis",
    "normalize", "diff", "total_derivative", "derive", "substitute", "eval_numeric",
    "instantiate_kernels", "free_atoms", "merge_power_bases", "JET_CAP",
]

JET_CAP = 6


class SymbolicError(Exception):
    """Base class for kernel errors."""


class DegenerateDivision(SymbolicError, ZeroDivisionError):
    pass


class JetOrderExceeded(SymbolicError):
    pass


class CyclicSubstitution(SymbolicError):
    pass


class UnboundSymbol(SymbolicError, KeyError):
    def __str__(self):
        return f"unbound symbol {self.args[0]}"


class EvaluationPole(SymbolicError, ZeroDivisionError):
    pass


class UnsupportedDerivative(SymbolicError):
    pass


def _natural_key(name: str):
    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", name))


# --------------------------------------------------------------------------
# multi-indices


class MultiIndex:
    """Derivative counts per independent variable; insertion order is irrelevant."""

    __slots__ = ("items", "_hash")

    def __init__(self, counts: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        if isinstance(counts, Mapping):
            counts = counts.items()
        acc: dict[str, int] = {}
        for v, k in counts:
            if k < 0:
                raise ValueError("negative derivative count")
            if k:
                acc[v] = acc.get(v, 0) + k
        self.items = tuple(sorted(acc.items()))
        self._hash = hash(self.items)

    @classmethod
    def of(cls, *variables: str) -> "MultiIndex":
        acc: dict[str, int] = {}
        for v in variables:
            acc[v] = acc.get(v, 0) + 1
        return cls(acc)

    @property
    def order(self) -> int:
        return sum(k for _, k in self.items)

    def count(self, v: str) -> int:
        for w, k in self.items:
            if w == v:
                return k
        return 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.items)

    def add(self, v: str, k: int = 1) -> "MultiIndex":
        d = self.as_dict()
        d[v] = d.get(v, 0) + k
        return MultiIndex(d)

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(self.items + other.items)

    def divides(self, other: "MultiIndex") -> bool:
        return all(other.count(v) >= k for v, k in self.items)

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        if not other.divides(self):
            raise ValueError(f"{other} does not divide {self}")
        d = self.as_dict()
        for v, k in other.items:
            d[v] -= k
        return MultiIndex(d)

    def variables(self) -> list[str]:
        return [v for v, k in self.items for _ in range(k)]

    def __eq__(self, other):
        return isinstance(other, MultiIndex) and self.items == other.items

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return (self.order, self.items) < (other.order, other.items)

    def __repr__(self):
        return "MultiIndex(" + ",".join(self.variables()) + ")"


# --------------------------------------------------------------------------
# atoms


class Atom:
    """A generator of the polynomial ring.  Subclasses are frozen dataclasses."""

    rank = 99
    mergeable = False

    def children(self) -> tuple["Expr", ...]:
        return ()

    @property
    def sort_key(self):
        key = self.__dict__.get("_key")
        if key is None:
            key = (self.rank,) + self._key_tail()
            object.__setattr__(self, "_key", key)
        return key

    def _key_tail(self):
        raise NotImplementedError

    def __lt__(self, other):
        return self.sort_key < other.sort_key


@dataclass(frozen=True, eq=True)
class Var(Atom):
    """Independent (base) variable."""

    name: str
    rank = 0

    def _key_tail(self):
        return (_natural_key(self.name),)

    def __str__(self):
        return self.name


@dataclass(frozen=True, eq=True)
class Jet(Atom):
    """Jet coordinate: dependent symbol plus derivative multi-index."""

    dep: str
    index: MultiIndex = field(default_factory=MultiIndex)
    rank = 1

    @property
    def order(self) -> int:
        return self.index.order

    def _key_tail(self):
        return (self.dep, self.index.order, self.index.items)

    def __str__(self):
        if not self.index.order:
            return self.dep
        vs = self.index.variables()
        if all(len(v) == 1 for v in vs):
            return self.dep + "_" + "".join(vs)
        return "d(" + ", ".join([self.dep] + vs) + ")"


@dataclass(frozen=True, eq=True)
class Param(Atom):
    """Named constant: equation parameters and arbitrary constants alike."""

    name: str
    rank = 2

    def _key_tail(self):
        return (_natural_key(self.name),)

    def __str__(self):
        return self.name


@dataclass(frozen=True, eq=True)
class Fn(Atom):
    """Opaque kernel applied to arguments, with slot-indexed derivative counts."""

    name: str
    args: tuple
    deriv: tuple = ()
    rank = 4

    def __post_init__(self):
        if not self.deriv:
            object.__setattr__(self, "deriv", (0,) * len(self.args))
        if len(self.deriv) != len(self.args):
            raise ValueError("derivative index length must match arity")

    def children(self):
        return self.args

    def _key_tail(self):
        return (self.name, sum(self.deriv), self.deriv, tuple(str(a) for a in self.args))

    def bump(self, slot: int, k: int = 1) -> "Fn":
        d = list(self.deriv)
        d[slot] += k
        return Fn(self.name, self.args, tuple(d))

    def __str__(self):
        head = self.name
        if any(self.deriv):
            head += "[" + ",".join(map(str, self.deriv)) + "]"
        return head + "(" + ", ".join(str(a) for a in self.args) + ")"


@dataclass(frozen=True, eq=True)
class Pow(Atom):
    """``base`` raised to a non-integer (possibly symbolic) exponent."""

    base: "Expr"
    exponent: "Expr"
    rank = 5
    mergeable = True

    def children(self):
        return (self.base, self.exponent)

    def _key_tail(self):
        return (str(self.base), str(self.exponent))

    def __str__(self):
        return f"pow({self.base}, {self.exponent})"


@dataclass(frozen=True, eq=True)
class Exp(Atom):
    arg: "Expr"
    rank = 6
    mergeable = True

    def children(self):
        return (self.arg,)

    def _key_tail(self):
        return (str(self.arg),)

    def __str__(self):
        return f"exp({self.arg})"


@dataclass(frozen=True, eq=True)
class Antideriv(Atom):
    """F(arg) where F(s) = integral of ``integrand`` ds from 0 (``dummy`` is bound)."""

    integrand: "Expr"
    dummy: str
    arg: "Expr"
    rank = 7

    def children(self):
        return (self.integrand, self.arg)

    def _key_tail(self):
        return (str(self.integrand), self.dummy, str(self.arg))

    def __str__(self):
        return f"int({self.integrand}, {self.dummy}, {self.arg})"


@dataclass(frozen=True, eq=True)
class Basis(Atom):
    """Formal basis vector d/d<name>; only used while reading vector fields."""

    name: str
    rank = 8

    def _key_tail(self):
        return (_natural_key(self.name),)

    def __str__(self):
        return "D" + self.name


# --------------------------------------------------------------------------
# monomials and polynomials (dict: monomial -> Fraction)

Monomial = tuple  # tuple[(Atom, int), ...] sorted by atom.sort_key

_ONE_MONO: Monomial = ()


def _mono_key(m: Monomial):
    return tuple((a.sort_key, e) for a, e in m)


def _term_key(m: Monomial):
    return (-sum(abs(e) for _, e in m), _mono_key(m))


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for a, e in m2:
        n = d.get(a, 0) + e
        if n:
            d[a] = n
        else:
            del d[a]
    return tuple(sorted(d.items(), key=lambda p: p[0].sort_key))


def _mono_pow(m: Monomial, k: int) -> Monomial:
    return tuple((a, e * k) for a, e in m)


def _needs_merge(m: Monomial) -> bool:
    for a, e in m:
        if a.mergeable:
            return True
    return False


def _merge(m: Monomial):
    """Combine power/exp kernels sharing a base.  Returns (monomial, extra Expr or None)."""
    plain: dict[Atom, int] = {}
    pow_groups: dict[Expr, Expr] = {}
    exp_arg = None
    for a, e in m:
        if isinstance(a, Pow):
            pow_groups[a.base] = pow_groups.get(a.base, ZERO) + a.exponent * e
        elif isinstance(a, Exp):
            exp_arg = (exp_arg if exp_arg is not None else ZERO) + a.arg * e
        else:
            plain[a] = plain.get(a, 0) + e
    extra = None
    for base, sigma in pow_groups.items():
        b_atom = base.as_atom()
        if b_atom is not None and b_atom in plain:
            sigma = sigma + plain.pop(b_atom)
        q = sigma.as_rational()
        if q is not None and q.denominator == 1:
            n = int(q)
            if n == 0:
                continue
            if b_atom is not None:
                plain[b_atom] = plain.get(b_atom, 0) + n
            else:
                f = base ** n
                extra = f if extra is None else extra * f
        else:
            plain[Pow(base, sigma)] = plain.get(Pow(base, sigma), 0) + 1
    if exp_arg is not None and not exp_arg.is_zero:
        plain[Exp(exp_arg)] = 1
    mono = tuple(sorted(((a, e) for a, e in plain.items() if e), key=lambda p: p[0].sort_key))
    return mono, extra


def _poly_add(p: dict, q: dict, sign: int = 1) -> dict:
    r = dict(p)
    for m, c in q.items():
        v = r.get(m, 0) + sign * c
        if v:
            r[m] = v
        else:
            r.pop(m, None)
    return r


def _poly_mul(p: dict, q: dict) -> tuple[dict, list]:
    """Product of two polynomials; second item lists (coeff, mono, extra) leftovers."""
    r: dict = {}
    leftovers = []
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mono_mul(m1, m2)
            c = c1 * c2
            if _needs_merge(m):
                m, extra = _merge(m)
                if extra is not None:
                    leftovers.append((c, m, extra))
                    continue
            v = r.get(m, 0) + c
            if v:
                r[m] = v
            else:
                r.pop(m, None)
    return r, leftovers


def _poly_scale(p: dict, c) -> dict:
    if not c:
        return {}
    return {m: v * c for m, v in p.items()}


def _content(p: dict) -> Monomial:
    """Largest monomial dividing every term (componentwise minimum exponent)."""
    mins: dict[Atom, int] = {}
    seen: dict[Atom, int] = {}
    for m in p:
        for a, e in m:
            seen[a] = seen.get(a, 0) + 1
            if a not in mins or e < mins[a]:
                mins[a] = e
    n = len(p)
    out = []
    for a, e in mins.items():
        if seen[a] < n:
            e = min(e, 0)
        if e:
            out.append((a, e))
    return tuple(sorted(out, key=lambda q: q[0].sort_key))


def _poly_div_mono(p: dict, m: Monomial) -> dict:
    inv = _mono_pow(m, -1)
    return {_mono_mul(k, inv): v for k, v in p.items()}


@lru_cache(maxsize=None)
def _ring(n: int):
    names = ",".join(f"g{i}" for i in range(n))
    return _sympy_ring(names, QQ)[0]


class _Coder:
    """Maps atom monomials to ring exponent vectors.

    Power kernels over an atomic base B are re-expressed through one root
    generator R = B^(1/q) plus one generator per class of symbolic exponents
    (exponents differing by a rational share a class), so algebraic relations
    such as pow(T, 1/2)^2 = T are visible to the gcd.
    """

    def __init__(self, polys):
        self.roots: dict[Atom, int] = {}
        self.classes: dict[Atom, list] = {}
        exps: dict[Atom, list] = {}
        plain = set()
        for p in polys:
            for m in p:
                for a, _ in m:
                    if isinstance(a, Pow) and a.base.as_atom() is not None:
                        exps.setdefault(a.base.as_atom(), []).append(a.exponent)
                    else:
                        plain.add(a)
        for b, sig in exps.items():
            q = 1
            reps: list = []
            for s in sig:
                r = s.as_rational()
                if r is not None:
                    q = math.lcm(q, r.denominator)
                    continue
                for rep in reps:
                    d = (s - rep).as_rational()
                    if d is not None:
                        q = math.lcm(q, d.denominator)
                        break
                else:
                    reps.append(s)
            reps.sort(key=str)
            self.roots[b] = q
            self.classes[b] = reps
        gens: list = []
        for a in sorted(plain, key=lambda a: a.sort_key):
            if a not in self.roots:
                gens.append(("atom", a))
        for b in sorted(self.roots, key=lambda a: a.sort_key):
            gens.append(("root", b))
            for rep in self.classes[b]:
                gens.append(("cls", b, rep))
        self.gens = gens
        self.index = {g: i for i, g in enumerate(gens)}

    def _class_of(self, b, s):
        for rep in self.classes[b]:
            d = (s - rep).as_rational()
            if d is not None:
                return rep, d
        return None, s.as_rational()

    def encode_mono(self, m) -> list:
        v = [0] * len(self.gens)
        for a, e in m:
            if a in self.roots:
                v[self.index[("root", a)]] += e * self.roots[a]
            elif isinstance(a, Pow) and a.base.as_atom() in self.roots:
                b = a.base.as_atom()
                rep, d = self._class_of(b, a.exponent)
                v[self.index[("root", b)]] += int(d * self.roots[b]) * e
                if rep is not None:
                    v[self.index[("cls", b, rep)]] += e
            else:
                v[self.index[("atom", a)]] += e
        return v

    def decode_mono(self, exps) -> Monomial:
        plain = []
        pw: dict[Atom, list] = {}
        for g, e in zip(self.gens, exps):
            if not e:
                continue
            if g[0] == "atom":
                plain.append((g[1], e))
            elif g[0] == "root":
                pw.setdefault(g[1], [ZERO, Fraction(0)])[1] += Fraction(e, self.roots[g[1]])
            else:
                pw.setdefault(g[1], [ZERO, Fraction(0)])[0] += g[2] * e
        for b, (sym, rat) in pw.items():
            sigma = sym + rat
            r = sigma.as_rational()
            if r is not None and r.denominator == 1:
                if r:
                    plain.append((b, int(r)))
            else:
                plain.append((Pow(_coerce(b), sigma), 1))
        return tuple(sorted(plain, key=lambda p: p[0].sort_key))

    def encode(self, p: dict) -> dict:
        return {tuple(self.encode_mono(m)): c for m, c in p.items()}


def _cancel(num: dict, den: dict) -> tuple[dict, dict | None]:
    """gcd-cancel num/den; returns canonical (numerator, monic denominator or None)."""
    coder = _Coder((num, den))
    n = len(coder.gens)
    enum, eden = coder.encode(num), coder.encode(den)
    num_lo = [min(col) for col in zip(*enum)]
    den_lo = [min(col) for col in zip(*eden)]
    if n == 0:
        q = den[_ONE_MONO]
        return _poly_scale(num, 1 / Fraction(q)), None
    R = _ring(n)
    P = R.from_dict({tuple(e - s for e, s in zip(k, num_lo)): _qq(c) for k, c in enum.items()})
    Q = R.from_dict({tuple(e - s for e, s in zip(k, den_lo)): _qq(c) for k, c in eden.items()})
    P, Q = P.cancel(Q)
    off = [a - b for a, b in zip(num_lo, den_lo)]
    qterms = Q.terms()
    qlo = [min(col) for col in zip(*(k for k, _ in qterms))]
    off = [o - v for o, v in zip(off, qlo)]
    numr: dict = {}
    for k, c in P.terms():
        m = coder.decode_mono([e + o for e, o in zip(k, off)])
        numr[m] = numr.get(m, 0) + Fraction(int(c.numerator), int(c.denominator))
    denr: dict = {}
    for k, c in qterms:
        m = coder.decode_mono([e - v for e, v in zip(k, qlo)])
        denr[m] = Fraction(int(c.numerator), int(c.denominator))
    return _finish_fraction({m: c for m, c in numr.items() if c}, denr)


def _qq(c):
    return QQ(c.numerator, c.denominator) if isinstance(c, Fraction) else QQ(c)


def _finish_fraction(num: dict, den: dict) -> tuple[dict, dict | None]:
    if len(den) == 1:
        (m, c), = den.items()
        num = {_mono_mul(k, _mono_pow(m, -1)): v / c for k, v in num.items()}
        return _remerge(num), None
    lead = min(den, key=_mono_key)
    lc = den[lead]
    if lc != 1:
        num = _poly_scale(num, 1 / Fraction(lc))
        den = _poly_scale(den, 1 / Fraction(lc))
    return num, den


def _remerge(p: dict) -> dict:
    if not any(_needs_merge(m) for m in p):
        return p
    out: dict = {}
    extras = []
    for m, c in p.items():
        if _needs_merge(m):
            m, extra = _merge(m)
            if extra is not None:
                extras.append((c, m, extra))
                continue
        v = out.get(m, 0) + c
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    if extras:
        acc = Expr(out)
        for c, m, extra in extras:
            acc = acc + Expr({m: c}) * extra
        if acc.den is not None:
            raise SymbolicError("kernel merge produced a denominator in a numerator")
        return acc.num
    return out


# --------------------------------------------------------------------------
# expressions


def _coerce(x) -> "Expr":
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Expr({_ONE_MONO: Fraction(x)} if x else {})
    if isinstance(x, Atom):
        return Expr({((x, 1),): Fraction(1)})
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


class Expr:
    """Canonical rational function over atoms.  Treat as immutable."""

    __slots__ = ("num", "den", "_hash", "_str", "_atoms")

    def __init__(self, num: dict, den: dict | None = None):
        self.num = num
        self.den = den
        self._hash = None
        self._str = None
        self._atoms = None

    # construction -------------------------------------------------------
    @staticmethod
    def _make(num: dict, den: dict | None) -> "Expr":
        if den is None or not num:
            return Expr(num, None)
        return Expr(*_cancel(num, den))

    @staticmethod
    def _over(num: dict, den: dict) -> "Expr":
        """num/den with den an arbitrary Laurent polynomial."""
        if not den:
            raise DegenerateDivision("division by an identically zero expression")
        if not num:
            return ZERO
        if len(den) == 1:
            (m, c), = den.items()
            return Expr(_remerge({_mono_mul(k, _mono_pow(m, -1)): v / c for k, v in num.items()}), None)
        cont = _content(den)
        if cont:
            den = _poly_div_mono(den, cont)
            num = _remerge(_poly_div_mono(num, cont))
        return Expr._make(num, den)

    # inspection ---------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.num

    def as_rational(self) -> Fraction | None:
        if self.den is not None:
            return None
        if not self.num:
            return Fraction(0)
        if len(self.num) == 1 and _ONE_MONO in self.num:
            return self.num[_ONE_MONO]
        return None

    @property
    def is_constant(self) -> bool:
        return self.as_rational() is not None

    def as_atom(self) -> Atom | None:
        if self.den is None and len(self.num) == 1:
            (m, c), = self.num.items()
            if c == 1 and len(m) == 1 and m[0][1] == 1:
                return m[0][0]
        return None

    def atoms(self) -> set[Atom]:
        """Top-level generators (not looking inside kernel arguments)."""
        if self._atoms is None:
            s = set()
            for p in (self.num, self.den or {}):
                for m in p:
                    for a, _ in m:
                        s.add(a)
            self._atoms = frozenset(s)
        return set(self._atoms)

    def terms(self) -> list[tuple[Fraction, Monomial]]:
        return [(self.num[m], m) for m in sorted(self.num, key=_term_key)]

    def numerator(self) -> "Expr":
        return Expr(self.num, None)

    def denominator(self) -> "Expr":
        return ONE if self.den is None else Expr(self.den, None)

    def has(self, pred: Callable[[Atom], bool]) -> bool:
        return any(pred(a) for a in free_atoms(self))

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        if not other.num:
            return self
        if not self.num:
            return other
        if self.den is None and other.den is None:
            return Expr(_poly_add(self.num, other.num), None)
        if self.den == other.den:
            return Expr._make(_poly_add(self.num, other.num), self.den)
        d1 = self.den or {_ONE_MONO: Fraction(1)}
        d2 = other.den or {_ONE_MONO: Fraction(1)}
        n1, l1 = _poly_mul(self.num, d2)
        n2, l2 = _poly_mul(other.num, d1)
        dd, l3 = _poly_mul(d1, d2)
        if l1 or l2 or l3:
            raise SymbolicError("kernel merge inside a denominator product")
        return Expr._make(_poly_add(n1, n2), dd)

    __radd__ = __add__

    def __neg__(self):
        return Expr({m: -c for m, c in self.num.items()}, self.den)

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) + (-self)

    def __mul__(self, other):
        other = _coerce(other)
        if not self.num or not other.num:
            return ZERO
        q = other.as_rational()
        if q is not None:
            return Expr(_poly_scale(self.num, q), self.den)
        q = self.as_rational()
        if q is not None:
            return Expr(_poly_scale(other.num, q), other.den)
        num, left = _poly_mul(self.num, other.num)
        if left:
            acc = Expr(num)
            for c, m, extra in left:
                acc = acc + Expr({m: c}) * extra
            if self.den is None and other.den is None:
                return acc
            return acc / Expr._dens_product(self, other)
        if self.den is None and other.den is None:
            return Expr(num, None)
        den = Expr._dens_product(self, other)
        return Expr._make(num, den.num)

    @staticmethod
    def _dens_product(e1: "Expr", e2: "Expr") -> "Expr":
        if e1.den is None:
            return Expr(e2.den)
        if e2.den is None:
            return Expr(e1.den)
        d, left = _poly_mul(e1.den, e2.den)
        if left:
            raise SymbolicError("kernel merge inside a denominator product")
        return Expr(d)

    __rmul__ = __mul__

    def inverse(self) -> "Expr":
        if not self.num:
            raise DegenerateDivision("division by an identically zero expression")
        return Expr._over(self.den or {_ONE_MONO: Fraction(1)}, self.num)

    def __truediv__(self, other):
        other = _coerce(other)
        q = other.as_rational()
        if q is not None:
            if q == 0:
                raise DegenerateDivision("division by an identically zero expression")
            return Expr(_poly_scale(self.num, 1 / q), self.den)
        return self * other.inverse()

    def __rtruediv__(self, other):
        return _coerce(other) * self.inverse()

    def __pow__(self, k):
        if isinstance(k, Expr):
            q = k.as_rational()
            if q is not None and q.denominator == 1:
                k = int(q)
            else:
                return power(self, k)
        if isinstance(k, Fraction):
            if k.denominator != 1:
                return power(self, const(k))
            k = int(k)
        if not isinstance(k, int):
            raise TypeError("exponent must be an integer or Expr")
        if k == 0:
            return ONE
        if k < 0:
            return (self ** (-k)).inverse()
        if self.den is None and len(self.num) == 1:
            (m, c), = self.num.items()
            mm = _mono_pow(m, k)
            if _needs_merge(mm):
                mm, extra = _merge(mm)
                if extra is not None:
                    return Expr({mm: c ** k}) * extra
            return Expr({mm: c ** k})
        result, base = ONE, self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # comparison ---------------------------------------------------------
    def __eq__(self, other):
        if not isinstance(other, Expr):
            try:
                other = _coerce(other)
            except TypeError:
                return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((frozenset(self.num.items()),
                               frozenset(self.den.items()) if self.den else None))
        return self._hash

    def __bool__(self):
        return bool(self.num)

    # printing -----------------------------------------------------------
    def __str__(self):
        if self._str is None:
            self._str = _format(self)
        return self._str

    def __repr__(self):
        return f"Expr({self})"


def _fmt_atom_power(a: Atom, e: int) -> str:
    s = str(a)
    if e == 1:
        return s
    return f"{s}^{e}" if e > 0 else f"{s}^({e})"


def _fmt_poly(p: dict) -> str:
    if not p:
        return "0"
    parts = []
    for m in sorted(p, key=_term_key):
        c = p[m]
        sign = "-" if c < 0 else "+"
        c = abs(c)
        factors = [_fmt_atom_power(a, e) for a, e in m]
        if c != 1 or not factors:
            factors.insert(0, str(c))
        parts.append((sign, "*".join(factors)))
    out = ("-" if parts[0][0] == "-" else "") + parts[0][1]
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out


def _format(e: Expr) -> str:
    if e.den is None:
        return _fmt_poly(e.num)
    return f"({_fmt_poly(e.num)})/({_fmt_poly(e.den)})"


ZERO = Expr({}, None)
ONE = Expr({_ONE_MONO: Fraction(1)}, None)


# --------------------------------------------------------------------------
# constructors


def const(q) -> Expr:
    if isinstance(q, str):
        q = Fraction(q)
    return _coerce(Fraction(q))


def var(name: str) -> Expr:
    return _coerce(Var(name))


def param(name: str) -> Expr:
    return _coerce(Param(name))


def jet(dep: str, *variables: str, index: MultiIndex | None = None) -> Expr:
    """``jet('u', 'x', 'x', 'y')`` is u_xxy; ``jet('u')`` is u itself."""
    idx = index if index is not None else MultiIndex.of(*variables)
    if idx.order > JET_CAP:
        raise JetOrderExceeded(f"jet order {idx.order} exceeds cap {JET_CAP}")
    return _coerce(Jet(dep, idx))


def fn(name: str, *args, deriv: tuple = ()) -> Expr:
    return _coerce(Fn(name, tuple(_coerce(a) for a in args), tuple(deriv)))


def basis(name: str) -> Expr:
    return _coerce(Basis(name))


def power(base, exponent) -> Expr:
    """base**exponent for a rational or symbolic exponent (kept as a kernel)."""
    base, exponent = _coerce(base), _coerce(exponent)
    q = exponent.as_rational()
    if q is not None and q.denominator == 1:
        return base ** int(q)
    if base.is_zero:
        raise DegenerateDivision("zero base under a non-integer power")
    if base == ONE:
        return ONE
    if base.den is None and len(base.num) == 1:
        (m, c), = base.num.items()
        if c == 1 and len(m) == 1:
            a, k = m[0]
            if isinstance(a, Pow):
                return power(a.base, a.exponent * k * exponent)
            return _coerce(Pow(_coerce(a), exponent * k)) if k != 1 else _coerce(Pow(base, exponent))
    return _coerce(Pow(base, exponent))


def exp_(arg) -> Expr:
    arg = _coerce(arg)
    if arg.is_zero:
        return ONE
    return _coerce(Exp(arg))


def antideriv(integrand, dummy: str, arg) -> Expr:
    """Antiderivative from 0 of ``integrand`` (in the bound variable ``dummy``) at ``arg``."""
    integrand, arg = _coerce(integrand), _coerce(arg)
    d = Var(dummy)
    if d not in free_atoms(integrand):
        return integrand * arg
    if integrand.den is None and d not in _nested_atoms(integrand):
        out = ZERO
        for c, m in integrand.terms():
            k = dict(m).get(d, 0)
            if k < 0:
                break
            rest = Expr({tuple(p for p in m if p[0] != d): c})
            out = out + rest * arg ** (k + 1) / (k + 1)
        else:
            return out
    return _coerce(Antideriv(integrand, dummy, arg))


def _nested_atoms(e: Expr) -> set[Atom]:
    s = set()
    for a in e.atoms():
        for ch in a.children():
            s |= free_atoms(ch)
    return s


def free_atoms(e: Expr) -> set[Atom]:
    """All leaf atoms, including those inside kernel arguments."""
    out = set()
    stack = [e]
    while stack:
        cur = stack.pop()
        for a in cur.atoms():
            if isinstance(a, Antideriv):
                inner = free_atoms(a.integrand) - {Var(a.dummy)}
                out |= inner
                out.add(a)
                stack.append(a.arg)
                continue
            out.add(a)
            stack.extend(a.children())
    return out


def merge_power_bases(e: Expr) -> Expr:
    """Merge powers whose base is a sum, such as (b*s - d)*pow(b*s - d, k).

    Each composite base linear in some variable v is made atomic by the change
    v -> (V - beta)/alpha, the product merges, and V is substituted back.
    """
    e = _coerce(e)
    trail: list[tuple[Atom, Expr]] = []
    seen: set = set()
    while True:
        pick = None
        for a in e.atoms():
            if isinstance(a, Pow) and a.base.as_atom() is None and a not in seen:
                pick = a
                break
        if pick is None:
            break
        seen.add(pick)
        B = pick.base
        for v in sorted((w for w in free_atoms(B) if isinstance(w, Var)), key=lambda w: w.sort_key):
            alpha = diff(B, v)
            if alpha.is_zero or v in free_atoms(alpha):
                continue
            beta = B - alpha * _coerce(v)
            V = Var(f"_base{len(trail)}")
            e = substitute(e, {v: (_coerce(V) - beta) / alpha}, check_cycles=False)
            trail.append((V, B))
            break
    for V, B in reversed(trail):
        e = substitute(e, {V: B}, check_cycles=False)
    return e


def normalize(e: Expr) -> Expr:
    """Return the canonical form (expressions are stored canonically; this re-checks)."""
    e = _coerce(e)
    if e.den is None:
        return Expr(_remerge(dict(e.num)))
    return Expr._over(dict(e.num), dict(e.den))


# --------------------------------------------------------------------------
# differentiation

LeafRule = Callable[[Atom], "Expr | None"]


def derive(e: Expr, leaf: LeafRule, _cache: dict | None = None) -> Expr:
    """Apply the derivation defined by ``leaf`` on Var/Param/Jet/Basis atoms.

    Kernel atoms are differentiated by the chain rule.
    """
    e = _coerce(e)
    cache = {} if _cache is None else _cache
    datom: dict[Atom, Expr] = {}
    for a in e.atoms():
        d = _atom_derivative(a, leaf, cache)
        if d is not None and not d.is_zero:
            datom[a] = d
    if not datom:
        return ZERO
    dnum = _poly_derive(e.num, datom)
    if e.den is None:
        return dnum
    dden = _poly_derive(e.den, datom)
    n, d = Expr(e.num), Expr(e.den)
    return (dnum * d - n * dden) / (d * d)


def _poly_derive(p: dict, datom: dict) -> Expr:
    partials: dict[Atom, dict] = {}
    for m, c in p.items():
        for i, (a, k) in enumerate(m):
            if a in datom:
                if k == 1:
                    mm = m[:i] + m[i + 1:]
                else:
                    mm = m[:i] + ((a, k - 1),) + m[i + 1:]
                bucket = partials.setdefault(a, {})
                v = bucket.get(mm, 0) + c * k
                if v:
                    bucket[mm] = v
                else:
                    bucket.pop(mm, None)
    out = ZERO
    for a, poly in partials.items():
        if poly:
            out = out + Expr(_remerge(poly)) * datom[a]
    return out


def _atom_derivative(a: Atom, leaf: LeafRule, cache: dict) -> Expr | None:
    if a in cache:
        return cache[a]
    if isinstance(a, (Var, Param, Jet, Basis)):
        d = leaf(a)
    elif isinstance(a, Fn):
        d = ZERO
        for slot, arg in enumerate(a.args):
            da = derive(arg, leaf, cache)
            if not da.is_zero:
                d = d + _coerce(a.bump(slot)) * da
    elif isinstance(a, Pow):
        if not derive(a.exponent, leaf, cache).is_zero:
            raise UnsupportedDerivative(f"exponent of {a} depends on the differentiation variable")
        db = derive(a.base, leaf, cache)
        d = ZERO if db.is_zero else a.exponent * power(a.base, a.exponent - 1) * db
    elif isinstance(a, Exp):
        d = _coerce(a) * derive(a.arg, leaf, cache)
    elif isinstance(a, Antideriv):
        dummy = Var(a.dummy)
        inner = derive(a.integrand, lambda b: ZERO if b == dummy else leaf(b))
        if not inner.is_zero:
            raise UnsupportedDerivative(f"integrand of {a} depends on the differentiation variable")
        darg = derive(a.arg, leaf, cache)
        d = ZERO if darg.is_zero else substitute(a.integrand, {dummy: a.arg}) * darg
    else:  # pragma: no cover
        raise TypeError(a)
    cache[a] = d
    return d


def diff(e: Expr, v, times: int = 1) -> Expr:
    """Partial derivative; jet variables are independent symbols."""
    target = v.as_atom() if isinstance(v, Expr) else v
    if target is None:
        raise ValueError("can only differentiate with respect to a symbol")

    def leaf(a):
        return ONE if a == target else None

    for _ in range(times):
        e = derive(e, leaf)
    return e


def total_derivative(e: Expr, i: str, cap: int = JET_CAP) -> Expr:
    """D_i e: partial in the base variable ``i`` plus shifts of every jet index."""
    xi = Var(i)

    def leaf(a):
        if a == xi:
            return ONE
        if isinstance(a, Jet):
            idx = a.index.add(i)
            if idx.order > cap:
                raise JetOrderExceeded(f"D_{i}{a} has order {idx.order} > cap {cap}")
            return _coerce(Jet(a.dep, idx))
        return None

    return derive(e, leaf)


# --------------------------------------------------------------------------
# substitution


def _binding_key(k) -> Atom:
    if isinstance(k, Atom):
        return k
    if isinstance(k, Expr):
        a = k.as_atom()
        if a is not None:
            return a
    raise ValueError(f"substitution key {k!r} is not a symbol")


def _check_cycles(b: dict[Atom, Expr]):
    graph = {k: {a for a in free_atoms(v) if a in b and a != k} for k, v in b.items()}
    state: dict[Atom, int] = {}

    def visit(n, path):
        state[n] = 1
        for m in graph[n]:
            if state.get(m) == 1:
                raise CyclicSubstitution(" -> ".join(str(p) for p in path + [n, m]))
            if m not in state:
                visit(m, path + [n])
        state[n] = 2

    for k in graph:
        if k not in state:
            visit(k, [])


def substitute(e: Expr, bindings: Mapping, check_cycles: bool = True) -> Expr:
    """Simultaneous substitution of symbols (atoms) by expressions, then normalize.

    A binding may mention its own key (x -> x + eps); longer cycles are rejected.
    """
    b = {_binding_key(k): _coerce(v) for k, v in bindings.items()}
    if check_cycles:
        _check_cycles(b)
    return _subst(_coerce(e), b, {})


def _subst(e: Expr, b: dict, memo: dict) -> Expr:
    changed = {}
    for a in e.atoms():
        img = _subst_atom(a, b, memo)
        if img is not None:
            changed[a] = img
    if not changed:
        return e
    num = _subst_poly(e.num, changed)
    if e.den is None:
        return num
    return num / _subst_poly(e.den, changed)


def _subst_atom(a: Atom, b: dict, memo: dict) -> Expr | None:
    if a in memo:
        return memo[a]
    if a in b:
        out = b[a]
    elif isinstance(a, Fn):
        args = tuple(_subst(x, b, memo) for x in a.args)
        out = None if args == a.args else _coerce(Fn(a.name, args, a.deriv))
    elif isinstance(a, Pow):
        base, ex = _subst(a.base, b, memo), _subst(a.exponent, b, memo)
        out = None if (base, ex) == (a.base, a.exponent) else power(base, ex)
    elif isinstance(a, Exp):
        arg = _subst(a.arg, b, memo)
        out = None if arg == a.arg else exp_(arg)
    elif isinstance(a, Antideriv):
        inner_b = {k: v for k, v in b.items() if k != Var(a.dummy)}
        integrand = _subst(a.integrand, inner_b, {})
        arg = _subst(a.arg, b, memo)
        out = None if (integrand, arg) == (a.integrand, a.arg) else antideriv(integrand, a.dummy, arg)
    else:
        out = None
    memo[a] = out
    return out


def _subst_poly(p: dict, changed: dict) -> Expr:
    fixed: dict = {}
    rest = ZERO
    groups: dict[Monomial, dict] = {}
    for m, c in p.items():
        keep = tuple(x for x in m if x[0] not in changed)
        moved = tuple(x for x in m if x[0] in changed)
        if not moved:
            fixed[m] = fixed.get(m, 0) + c
            continue
        groups.setdefault(moved, {})[keep] = c
    if fixed:
        rest = Expr(_remerge({m: c for m, c in fixed.items() if c}))
    powcache: dict = {}
    for moved, poly in groups.items():
        factor = ONE
        for a, k in moved:
            key = (a, k)
            if key not in powcache:
                powcache[key] = changed[a] ** k
            factor = factor * powcache[key]
        rest = rest + Expr(_remerge(poly)) * factor
    return rest


def instantiate_kernels(e: Expr, kernels: Mapping[str, tuple[tuple[str, ...], Expr]]) -> Expr:
    """Replace opaque kernels by concrete templates.

    ``kernels[name] = (("w", "s"), template)`` where the template is written in
    the listed dummy variables.  Derivative indices are honoured by
    differentiating the template.
    """
    cache: dict[Atom, Expr] = {}

    def repl(a: Atom):
        if a in cache:
            return cache[a]
        out = None
        if isinstance(a, Fn) and a.name in kernels:
            names, tmpl = kernels[a.name]
            if len(names) != len(a.args):
                raise ValueError(f"kernel {a.name} arity mismatch")
            body = tmpl
            for nm, k in zip(names, a.deriv):
                if k:
                    body = diff(body, Var(nm), k)
            args = [instantiate_kernels(x, kernels) for x in a.args]
            out = substitute(body, {Var(nm): x for nm, x in zip(names, args)}, check_cycles=False)
        elif a.children():
            if isinstance(a, Fn):
                out = _coerce(Fn(a.name, tuple(instantiate_kernels(x, kernels) for x in a.args), a.deriv))
            elif isinstance(a, Pow):
                out = power(instantiate_kernels(a.base, kernels), instantiate_kernels(a.exponent, kernels))
            elif isinstance(a, Exp):
                out = exp_(instantiate_kernels(a.arg, kernels))
            elif isinstance(a, Antideriv):
                out = antideriv(instantiate_kernels(a.integrand, kernels), a.dummy,
                                instantiate_kernels(a.arg, kernels))
            if out is not None and out == _coerce(a):
                out = None
        cache[a] = out
        return out

    bind = {}
    for a in e.atoms():
        r = repl(a)
        if r is not None:
            bind[a] = r
    return substitute(e, bind, check_cycles=False) if bind else e


# --------------------------------------------------------------------------
# numeric evaluation


class EvalPoint(dict):
    """Float bindings keyed by atom or by printed symbol name."""

    def lookup(self, a: Atom) -> float:
        if a in self:
            return float(self[a])
        s = str(a)
        if s in self:
            return float(self[s])
        if isinstance(a, Jet) and a.order:
            short = a.dep + "_" + "".join(a.index.variables())
            if short in self:
                return float(self[short])
        raise UnboundSymbol(s)


def _eval_atom(a: Atom, p: EvalPoint, memo: dict) -> float:
    if a in memo:
        return memo[a]
    try:
        v = p.lookup(a)
    except UnboundSymbol:
        if isinstance(a, Pow):
            base = eval_numeric(a.base, p)
            ex = eval_numeric(a.exponent, p)
            if base == 0 and ex < 0:
                raise EvaluationPole(f"{a} at zero base")
            if base < 0:
                raise EvaluationPole(f"negative base in {a}")
            v = base ** ex
        elif isinstance(a, Exp):
            v = math.exp(eval_numeric(a.arg, p))
        else:
            raise
    memo[a] = v
    return v


def _eval_poly(p: dict, point: EvalPoint, memo: dict) -> float:
    total = 0.0
    for m in sorted(p, key=_mono_key):
        t = float(p[m])
        for a, k in m:
            v = _eval_atom(a, point, memo)
            if k < 0 and v == 0:
                raise EvaluationPole(f"{a} = 0 in a denominator")
            t *= v ** k
        total += t
    return total


def eval_numeric(e: Expr, point: Mapping) -> float:
    """IEEE double value of ``e``; terms are summed in canonical order."""
    e = _coerce(e)
    p = point if isinstance(point, EvalPoint) else EvalPoint(point)
    memo: dict = {}
    n = _eval_poly(e.num, p, memo)
    if e.den is None:
        return n
    d = _eval_poly(e.den, p, memo)
    if d == 0:
        raise EvaluationPole("denominator vanishes")
    return n / d
