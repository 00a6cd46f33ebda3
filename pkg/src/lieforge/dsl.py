"""Reader and printer for ``.lie`` documents.

A document declares a jet space and then lists named items::

    indep x, y, z, t
    dep u
    param a, b, c, d
    kernel lam(1), gam(2)

    equation cbs: u_xt + a*u_x*u_xy + u_xxxy = 0
    field v2: lam(t)*Dx + Dt + (y*lam[1](t)/b)*Du
    solution S: x*y/t
    ansatz A u(x, y, z, t) -> f(X, T) {
      X = x
      T = t
      u = x*y/t + f
      inverse x = X
    }

Items may carry their own space with ``on f(X, Y, T)``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from .expr import (
    ONE, ZERO, Basis, Expr, Fn, Jet, MultiIndex, Param, SymbolicError, Var, _coerce, antideriv,
    exp_, free_atoms, power, substitute,
)
from .lie import VectorField
from .reduction import ReductionAnsatz


@dataclass(frozen=True)
class SourceSpan:
    line: int
    col: int
    end_col: int

    def __str__(self):
        return f"{self.line}:{self.col}"


class DslError(Exception):
    def __init__(self, message: str, span: SourceSpan | None = None):
        self.message, self.span = message, span
        super().__init__(f"{span}: {message}" if span else message)


class DslSyntaxError(DslError):
    pass


class UndeclaredSymbol(DslError):
    pass


class ArityMismatch(DslError):
    pass


class JetOnNonDependent(DslError):
    pass


# ------------------------------------------------------------------ lexer

_TOKEN = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>\d+(?:\.\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<arrow>->)
  | (?P<op>[-+*/^(),=\[\]{}:])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: SourceSpan


def tokenize(src: str) -> list[Token]:
    out, line, start, pos = [], 1, 0, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m:
            col = pos - start + 1
            raise DslSyntaxError(f"unexpected character {src[pos]!r}", SourceSpan(line, col, col + 1))
        kind = m.lastgroup
        col = pos - start + 1
        if kind == "nl":
            out.append(Token("nl", "\n", SourceSpan(line, col, col + 1)))
            line, start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), SourceSpan(line, col, col + m.end() - pos)))
        pos = m.end()
    out.append(Token("eof", "", SourceSpan(line, pos - start + 1, pos - start + 1)))
    return out


# ------------------------------------------------------------------ model

@dataclass
class Space:
    dep: str
    indep: tuple


@dataclass
class Item:
    kind: str
    name: str
    space: Space
    value: object
    span: SourceSpan | None = None
    own_space: bool = False


@dataclass
class Document:
    indep: tuple = ()
    dep: str = "u"
    params: tuple = ()
    kernels: dict = field(default_factory=dict)
    items: list = field(default_factory=list)

    def _get(self, kind: str, name: str):
        for it in self.items:
            if it.kind == kind and it.name == name:
                return it.value
        raise KeyError(f"no {kind} named {name!r}")

    def names(self, kind: str) -> list[str]:
        return [it.name for it in self.items if it.kind == kind]

    def equation(self, name: str) -> Expr:
        return self._get("equation", name)

    def field(self, name: str) -> VectorField:
        return self._get("field", name)

    def solution(self, name: str) -> Expr:
        return self._get("solution", name)

    def ansatz(self, name: str) -> ReductionAnsatz:
        return self._get("ansatz", name)

    def item(self, name: str) -> Item:
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)


_BUILTINS = {"pow": 2, "exp": 1, "int": 3, "d": None}


# ------------------------------------------------------------------ parser

class _Scope:
    def __init__(self, doc: Document, space: Space, extra_vars=(), deps=(), basis=False):
        self.doc = doc
        self.vars = set(space.indep) | set(extra_vars)
        self.deps = {space.dep} | set(deps)
        self.basis = basis

    def with_var(self, name: str) -> "_Scope":
        s = _Scope.__new__(_Scope)
        s.doc, s.vars, s.deps, s.basis = self.doc, self.vars | {name}, self.deps, self.basis
        return s


_PREC = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY = 30


class Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0
        self.doc = Document()

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "arrow", "name")

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise DslSyntaxError(f"expected {text!r}, found {self.tok.text or 'end of input'!r}",
                                 self.tok.span)
        return self.advance()

    def expect_name(self) -> Token:
        if self.tok.kind != "name":
            raise DslSyntaxError(f"expected a name, found {self.tok.text or 'end of input'!r}",
                                 self.tok.span)
        return self.advance()

    def skip_nl(self):
        while self.tok.kind == "nl":
            self.advance()

    def end_line(self):
        if self.tok.kind not in ("nl", "eof"):
            raise DslSyntaxError(f"unexpected {self.tok.text!r}", self.tok.span)
        self.skip_nl()

    def name_list(self) -> list[str]:
        names = [self.expect_name().text]
        while self.at(","):
            self.advance()
            names.append(self.expect_name().text)
        return names

    # document
    def parse(self) -> Document:
        self.skip_nl()
        while self.tok.kind != "eof":
            t = self.expect_name()
            kw = t.text
            if kw == "indep":
                self.doc.indep += tuple(self.name_list())
            elif kw == "dep":
                self.doc.dep = self.expect_name().text
            elif kw == "param":
                self.doc.params += tuple(self.name_list())
            elif kw == "kernel":
                self._kernels()
            elif kw in ("equation", "field", "solution"):
                self._item(kw, t.span)
            elif kw == "ansatz":
                self._ansatz(t.span)
            else:
                raise DslSyntaxError(f"unknown statement {kw!r}", t.span)
            self.end_line()
        return self.doc

    def _kernels(self):
        while True:
            n = self.expect_name().text
            self.expect("(")
            k = self.advance()
            if k.kind != "num" or not k.text.isdigit():
                raise DslSyntaxError("kernel arity must be an integer", k.span)
            self.expect(")")
            self.doc.kernels[n] = int(k.text)
            if not self.at(","):
                return
            self.advance()

    def _space_sig(self) -> Space:
        dep = self.expect_name().text
        self.expect("(")
        vs = self.name_list()
        self.expect(")")
        return Space(dep, tuple(vs))

    def _item_name(self) -> str:
        t = self.expect_name()
        if any(it.name == t.text for it in self.doc.items):
            raise DslSyntaxError(f"item {t.text!r} defined twice", t.span)
        return t.text

    def _item(self, kind: str, span: SourceSpan):
        name = self._item_name()
        space, own = Space(self.doc.dep, self.doc.indep), False
        if self.at("on"):
            self.advance()
            space, own = self._space_sig(), True
        if self.at("="):  # 'field v5 = ...' is accepted as well as 'field v5: ...'
            self.advance()
        else:
            self.expect(":")
        scope = _Scope(self.doc, space, basis=(kind == "field"))
        e = self.expr(scope)
        if kind == "equation" and self.at("="):
            self.advance()
            e = e - self.expr(scope)
        if kind == "field":
            value = _as_field(e, space, span)
        else:
            value = e
        self.doc.items.append(Item(kind, name, space, value, span, own))

    def _ansatz(self, span: SourceSpan):
        name = self._item_name()
        old = self._space_sig()
        self.expect("->")
        new = self._space_sig()
        self.expect("{")
        self.end_line()
        lines = []
        aux: list[str] = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise DslSyntaxError("unterminated ansatz block", self.tok.span)
            if self.at("aux"):
                self.advance()
                aux += self.name_list()
                self.end_line()
                continue
            inv = False
            if self.at("inverse"):
                self.advance()
                inv = True
            lhs = self.expect_name()
            self.expect("=")
            lines.append((inv, lhs, self.i))
            self._skip_expr()
            self.end_line()
        self.expect("}")
        everything = _Scope(self.doc, Space(old.dep, old.indep + new.indep), extra_vars=aux,
                            deps={new.dep})
        fwd_scope = _Scope(self.doc, Space(old.dep, old.indep))
        new_vars, inverse, expr = {}, {}, None
        end = self.i
        for inv, lhs, start in lines:
            self.i = start
            if inv:
                if lhs.text not in old.indep:
                    raise UndeclaredSymbol(f"{lhs.text!r} is not an old variable", lhs.span)
                inverse[lhs.text] = self.expr(everything)
            elif lhs.text == old.dep:
                expr = self.expr(_Scope(self.doc, Space(new.dep, old.indep)))
            elif lhs.text in new.indep:
                new_vars[lhs.text] = self.expr(fwd_scope)
            else:
                raise UndeclaredSymbol(f"{lhs.text!r} is not a new variable or {old.dep!r}", lhs.span)
            if self.tok.kind != "nl":
                raise DslSyntaxError(f"unexpected {self.tok.text!r}", self.tok.span)
        self.i = end
        missing = [v for v in new.indep if v not in new_vars]
        if missing or expr is None:
            raise DslSyntaxError(f"ansatz {name} lacks definitions for {missing or [old.dep]}", span)
        new_vars = {v: new_vars[v] for v in new.indep}
        try:
            A = ReductionAnsatz(name, old.indep, new_vars, old.dep, new.dep, expr, inverse, tuple(aux))
        except ValueError as e:
            raise DslError(str(e), span) from None
        self.doc.items.append(Item("ansatz", name, old, A, span, True))

    def _skip_expr(self):
        depth = 0
        while True:
            t = self.tok
            if t.kind == "eof" or (depth == 0 and t.kind == "nl"):
                return
            if t.text in "([{":
                depth += 1
            elif t.text in ")]}":
                depth -= 1
            self.advance()

    # expressions (Pratt)
    def expr(self, scope: _Scope, rbp: int = 0) -> Expr:
        left = self.prefix(scope)
        while True:
            t = self.tok
            if t.kind in ("name", "num") or (t.kind == "op" and t.text == "("):
                raise DslSyntaxError("implicit multiplication is not allowed; write '*'", t.span)
            if t.kind != "op" or t.text not in _PREC:
                return left
            lbp = _PREC[t.text]
            if lbp <= rbp:
                return left
            self.advance()
            if t.text == "^":
                right = self.expr(scope, lbp - 1)  # right associative
                left = _raise(left, right, t.span)
            else:
                right = self.expr(scope, lbp)
                left = _binop(t.text, left, right, t.span)

    def prefix(self, scope: _Scope) -> Expr:
        t = self.advance()
        if t.kind == "op" and t.text == "-":
            return -self.expr(scope, _UNARY)
        if t.kind == "op" and t.text == "+":
            return self.expr(scope, _UNARY)
        if t.kind == "op" and t.text == "(":
            e = self.expr(scope)
            self.expect(")")
            return e
        if t.kind == "num":
            return _coerce(Fraction(t.text))
        if t.kind == "name":
            return self.name(t, scope)
        raise DslSyntaxError(f"unexpected {t.text or 'end of input'!r}", t.span)

    def name(self, t: Token, scope: _Scope) -> Expr:
        n = t.text
        if self.at("[") and n in self.doc.kernels:
            return self.kernel(t, scope, self.deriv_index())
        if self.at("("):
            if n in _BUILTINS:
                return self.builtin(t, scope)
            if n in self.doc.kernels:
                return self.kernel(t, scope, None)
            if n.startswith("d") and self.doc.kernels.get(n[1:]) == 1:
                return self.kernel(Token(t.kind, n[1:], t.span), scope, (1,))
            raise UndeclaredSymbol(f"undeclared function {n!r}", t.span)
        if n in scope.vars:
            return _coerce(Var(n))
        if n in scope.deps:
            return _coerce(Jet(n, MultiIndex()))
        if n in self.doc.params:
            return _coerce(Param(n))
        if scope.basis and n.startswith("D") and n[1:] in scope.vars | scope.deps:
            return _coerce(Basis(n[1:]))
        if "_" in n and not n.startswith("_"):
            head, _, tail = n.partition("_")
            if head not in scope.deps:
                if head in scope.vars or head in self.doc.params or head in self.doc.kernels:
                    raise JetOnNonDependent(f"jet index on non-dependent symbol {head!r}", t.span)
                raise UndeclaredSymbol(f"undeclared symbol {head!r}", t.span)
            bad = [ch for ch in tail if ch not in scope.vars]
            if bad or not tail:
                raise UndeclaredSymbol(f"{bad[0] if bad else '?'!r} is not an independent variable",
                                       t.span)
            return _jet(head, list(tail), t.span)
        raise UndeclaredSymbol(f"undeclared symbol {n!r}", t.span)

    def deriv_index(self) -> tuple:
        self.expect("[")
        out = []
        while True:
            k = self.advance()
            if k.kind != "num" or not k.text.isdigit():
                raise DslSyntaxError("derivative index must be integers", k.span)
            out.append(int(k.text))
            if self.at("]"):
                self.advance()
                return tuple(out)
            self.expect(",")

    def args(self, scope: _Scope) -> list[Expr]:
        self.expect("(")
        out = [self.expr(scope)]
        while self.at(","):
            self.advance()
            out.append(self.expr(scope))
        self.expect(")")
        return out

    def kernel(self, t: Token, scope: _Scope, deriv) -> Expr:
        args = self.args(scope)
        ar = self.doc.kernels[t.text]
        if len(args) != ar:
            raise ArityMismatch(f"{t.text} takes {ar} argument(s), got {len(args)}", t.span)
        if deriv is not None and len(deriv) != ar:
            raise ArityMismatch(f"{t.text} derivative index needs {ar} entries", t.span)
        return _coerce(Fn(t.text, tuple(args), deriv or ()))

    def builtin(self, t: Token, scope: _Scope) -> Expr:
        n = t.text
        if n == "d":
            self.expect("(")
            dep = self.expect_name()
            if dep.text not in scope.deps:
                raise JetOnNonDependent(f"d() needs a dependent symbol, got {dep.text!r}", dep.span)
            vs = []
            while self.at(","):
                self.advance()
                v = self.expect_name()
                if v.text not in scope.vars:
                    raise UndeclaredSymbol(f"{v.text!r} is not an independent variable", v.span)
                vs.append(v.text)
            self.expect(")")
            return _jet(dep.text, vs, t.span)
        if n == "int":
            dummy = self._peek_dummy(t)
            self.expect("(")
            integrand = self.expr(scope.with_var(dummy))
            self.expect(",")
            self.expect_name()
            self.expect(",")
            arg = self.expr(scope)
            self.expect(")")
            return antideriv(integrand, dummy, arg)
        args = self.args(scope)
        if len(args) != _BUILTINS[n]:
            raise ArityMismatch(f"{n} takes {_BUILTINS[n]} argument(s), got {len(args)}", t.span)
        try:
            return power(*args) if n == "pow" else exp_(*args)
        except SymbolicError as e:
            raise DslError(str(e), t.span) from None

    def _peek_dummy(self, t: Token) -> str:
        j, depth = self.i + 1, 0
        while j < len(self.toks):
            k = self.toks[j]
            if k.kind == "eof":
                break
            if k.text in "([{":
                depth += 1
            elif k.text in ")]}":
                depth -= 1
            elif k.text == "," and depth == 0:
                nm = self.toks[j + 1]
                if nm.kind != "name":
                    raise DslSyntaxError("int() needs a bound variable name", nm.span)
                return nm.text
            j += 1
        raise DslSyntaxError("int(integrand, variable, upper) is malformed", t.span)


def _jet(dep: str, vs: list[str], span: SourceSpan) -> Expr:
    try:
        from .expr import jet
        return jet(dep, *vs)
    except SymbolicError as e:
        raise DslError(str(e), span) from None


def _binop(op: str, a: Expr, b: Expr, span: SourceSpan) -> Expr:
    try:
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        return a / b
    except SymbolicError as e:
        raise DslError(str(e), span) from None


def _raise(a: Expr, b: Expr, span: SourceSpan) -> Expr:
    q = b.as_rational()
    try:
        if q is not None and q.denominator == 1:
            return a ** int(q)
        return power(a, b)
    except SymbolicError as e:
        raise DslError(str(e), span) from None


def _as_field(e: Expr, space: Space, span: SourceSpan) -> VectorField:
    coords = tuple(space.indep) + (space.dep,)
    bases = {Basis(c): c for c in coords}
    coeffs = {}
    for b, c in bases.items():
        others = {o: (ONE if o == b else ZERO) for o in bases}
        coeffs[c] = substitute(e, others)
    rebuilt = sum((coeffs[c] * _coerce(b) for b, c in bases.items()), ZERO)
    if not (e - rebuilt).is_zero or any(isinstance(a, Basis) for k in coeffs.values()
                                        for a in free_atoms(k)):
        raise DslError("a field must be linear in the basis symbols D<var>", span)
    try:
        return VectorField.from_components(space.indep, space.dep, **coeffs)
    except SymbolicError as err:
        raise DslError(str(err), span) from None


def parse(src: str) -> Document:
    return Parser(src).parse()


def parse_file(path) -> Document:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def parse_expr(src: str, indep=("x", "y", "z", "t"), dep: str = "u", params=(),
               kernels=None) -> Expr:
    """Parse a single expression in a given space (handy for tests and the CLI)."""
    doc = Document(tuple(indep), dep, tuple(params), dict(kernels or {}))
    p = Parser(src)
    p.doc = doc
    p.skip_nl()
    e = p.expr(_Scope(doc, Space(dep, tuple(indep))))
    p.skip_nl()
    if p.tok.kind != "eof":
        raise DslSyntaxError(f"unexpected {p.tok.text!r}", p.tok.span)
    return e


# ------------------------------------------------------------------ printer

def format_expr(e: Expr) -> str:
    return str(e)


def format_field(v: VectorField) -> str:
    parts = [f"({c})*D{k}" for k, c in v.components() if not c.is_zero]
    return " + ".join(parts) if parts else "0"


def _space_sig(s: Space) -> str:
    return f"{s.dep}({', '.join(s.indep)})"


def format_item(it: Item) -> Iterator[str]:
    on = f" on {_space_sig(it.space)}" if it.own_space and it.kind != "ansatz" else ""
    if it.kind == "equation":
        yield f"equation {it.name}{on}: {format_expr(it.value)} = 0"
    elif it.kind == "field":
        yield f"field {it.name}{on}: {format_field(it.value)}"
    elif it.kind == "solution":
        yield f"solution {it.name}{on}: {format_expr(it.value)}"
    else:
        A: ReductionAnsatz = it.value
        new = Space(A.new_dep, tuple(A.new_vars))
        yield f"ansatz {A.name} {_space_sig(Space(A.old_dep, tuple(A.old_vars)))} -> {_space_sig(new)} {{"
        for k, v in A.new_vars.items():
            yield f"  {k} = {format_expr(v)}"
        yield f"  {A.old_dep} = {format_expr(A.expr)}"
        for k, v in A.inverse.items():
            yield f"  inverse {k} = {format_expr(v)}"
        if A.aux:
            yield f"  aux {', '.join(A.aux)}"
        yield "}"


def format_document(doc: Document) -> str:
    lines = []
    if doc.indep:
        lines.append("indep " + ", ".join(doc.indep))
    lines.append(f"dep {doc.dep}")
    if doc.params:
        lines.append("param " + ", ".join(doc.params))
    if doc.kernels:
        lines.append("kernel " + ", ".join(f"{k}({n})" for k, n in doc.kernels.items()))
    for it in doc.items:
        lines.append("")
        lines.extend(format_item(it))
    return "\n".join(lines) + "\n"


def documents_equal(d1: Document, d2: Document) -> bool:
    """Structural equality with canonical comparison of every expression."""
    if (d1.indep, d1.dep, d1.params, d1.kernels) != (d2.indep, d2.dep, d2.params, d2.kernels):
        return False
    if len(d1.items) != len(d2.items):
        return False
    for a, b in zip(d1.items, d2.items):
        if (a.kind, a.name, a.space) != (b.kind, b.name, b.space):
            return False
        if a.kind == "ansatz":
            A, B = a.value, b.value
            same = (A.old_vars == B.old_vars and A.old_dep == B.old_dep and A.new_dep == B.new_dep
                    and list(A.new_vars) == list(B.new_vars)
                    and all(A.new_vars[k] == B.new_vars[k] for k in A.new_vars)
                    and A.expr == B.expr and A.inverse.keys() == B.inverse.keys()
                    and all(A.inverse[k] == B.inverse[k] for k in A.inverse) and A.aux == B.aux)
            if not same:
                return False
        elif a.value != b.value:
            return False
    return True
