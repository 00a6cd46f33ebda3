"""Export the catalog as ``.lie`` documents and load the shipped fixture set."""
from __future__ import annotations

import json
import os
from pathlib import Path

from . import catalog as C
from .dsl import Document, Item, Space, documents_equal, format_document, parse_file
from .expr import var
from .lie import VectorField

FIXTURE_ENV = "LIEFORGE_FIXTURES"
PACKAGE_FIXTURES = Path(__file__).parent / "fixtures"
FILES = ("cbs.lie", "reductions.lie")

PARAMS = (("a", "b", "c", "d") + tuple(f"c{i}" for i in range(1, 7))
          + ("alpha", "beta") + tuple(f"beta{i}" for i in range(1, 5))
          + tuple(f"a{i}" for i in range(1, 6)) + ("b1", "b2"))
KERNELS = {"lam": 1, "gam": 2, "rho": 1}


def fixture_dir() -> Path:
    return Path(os.environ.get(FIXTURE_ENV) or PACKAGE_FIXTURES)


def _space(dep: str, *vs: str) -> Space:
    return Space(dep, tuple(vs))


def cbs_document(p: C.CbsParams = C.SYMBOLIC) -> Document:
    doc = Document(C.INDEP, C.DEP, PARAMS, dict(KERNELS))
    main = _space(C.DEP, *C.INDEP)
    add = lambda kind, name, value: doc.items.append(Item(kind, name, main, value))  # noqa: E731
    add("equation", "cbs", C.build_pde(p))
    for i in range(1, 7):
        add("field", f"v{i}", C.generator(i, C.GENERIC_SPEC, p))
    add("field", "family", C.printed_family(p))
    add("field", "family_c3", C.family_part("c3", p))
    x = var("x")
    add("field", "x_dy", VectorField.from_components(C.INDEP, C.DEP, y=x))
    for s in C.catalog_solutions(p) + [C.corrected_solution(p)]:
        add("solution", s.name, s.expr)
    return doc


def reductions_document(p: C.CbsParams = C.SYMBOLIC) -> Document:
    doc = Document(C.INDEP, C.DEP, PARAMS, dict(KERNELS))
    for A in (C.ansatz_51(p), C.ansatz_51_case1(p), C.ansatz_51_composed(p), C.ansatz_52(p),
              C.ansatz_52b(p), C.ansatz_sub1(p), C.ansatz_sub2(p), C.ansatz_ode52(p)):
        doc.items.append(Item("ansatz", A.name, _space(A.old_dep, *A.old_vars), A, None, True))
    f3 = _space("f", "X", "Y", "T")
    fz = _space("f", "X", "Y", "Z")
    h = _space("H", "r", "s")
    g = _space("G", C.ZETA)
    eqs = [("R51", f3, C.printed_reduced_51(p)), ("R51c1", h, C.printed_reduced_51_case1(p)),
           ("R52", fz, C.printed_reduced_52(p)), ("R52b", h, C.printed_reduced_52b(p))]
    eqs += [(k, g, v) for k, v in C.printed_odes(p).items()]
    for name, sp, e in eqs:
        doc.items.append(Item("equation", name, sp, e, None, True))
    doc.items.append(Item("field", "case1", f3, C.case1_field(), None, True))
    for label, v in zip(("r52_a2", "r52_a1"), C.reduced_52_fields(p).values()):
        doc.items.append(Item("field", label, fz, v, None, True))
    for _, cand in C.ode_candidates(p):
        doc.items.append(Item("solution", cand.name, g, cand.expr, None, True))
    return doc


def documents(p: C.CbsParams = C.SYMBOLIC) -> dict[str, Document]:
    return {"cbs.lie": cbs_document(p), "reductions.lie": reductions_document(p)}


def write_fixtures(directory: Path | str) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for name, doc in documents().items():
        path = d / name
        path.write_text(format_document(doc), encoding="utf-8")
        out.append(path)
    return out


class FixtureError(RuntimeError):
    pass


class FixtureSet:
    """All shipped documents, with lookups across files."""

    def __init__(self, directory: Path | str | None = None):
        self.directory = Path(directory) if directory else fixture_dir()
        self.docs: dict[str, Document] = {}
        for name in FILES:
            path = self.directory / name
            if not path.is_file():
                raise FixtureError(f"missing fixture file {path}")
            self.docs[name] = parse_file(path)
        mpath = self.directory / "manifest.json"
        if not mpath.is_file():
            raise FixtureError(f"missing manifest {mpath}")
        self.manifest = json.loads(mpath.read_text(encoding="utf-8"))

    def find(self, kind: str, name: str):
        for doc in self.docs.values():
            if name in doc.names(kind):
                return doc._get(kind, name)
        raise KeyError(f"no {kind} named {name!r} in {self.directory}")

    def item(self, name: str) -> Item:
        for doc in self.docs.values():
            try:
                return doc.item(name)
            except KeyError:
                continue
        raise KeyError(name)

    def matches_catalog(self) -> dict[str, bool]:
        return {k: documents_equal(self.docs[k], v) for k, v in documents().items()}
