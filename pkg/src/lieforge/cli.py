"""Command-line entry point: ``lieforge <command> [options]``.

Exit codes: 0 when every asserted item has its expected status, 1 on any
unexpected status, 2 on configuration, parse or lookup errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import catalog as C
from .audit import GENERATOR_NAMES, SECTIONS, Audit, ItemResult, summarize
from .config import ConfigError, RunConfig, load_config, parse_bindings
from .dsl import DslError, format_field, parse_expr
from .expr import Jet, MultiIndex, SymbolicError
from .fixtures import FixtureError, FixtureSet
from .lie import check_infinitesimals, commutator_table, determining_system, multi_indices, prolong
from .numeric import orbit_check, residual
from .reduction import OdeSolutionCandidate, equal_up_to_multiplier, pullback, verify_ode_solution

EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG = 0, 1, 2
SCHEMA_PATH = Path(__file__).parent / "data" / "report.schema.json"


class UsageError(Exception):
    """Bad command-line input that is not caught by argparse itself."""


@dataclass
class Report:
    command: str
    cfg: RunConfig
    items: list = field(default_factory=list)
    fixtures: str = ""

    @property
    def ok(self) -> bool:
        return all(r.verdict != "unexpected" for r in self.items)

    def to_json(self) -> dict:
        conf = self.cfg.to_json()
        conf["fixtures"] = self.fixtures
        return {"command": self.command, "status": "ok" if self.ok else "unexpected",
                "config": conf, "items": [r.to_json() for r in self.items],
                "summary": summarize(self.items)}

    def to_text(self) -> str:
        lines = [f"lieforge {self.command}  params {_fmt_params(self.cfg)}  spec {self.cfg.spec}"
                 f"  seed {self.cfg.seed}"]
        for r in self.items:
            head = f"{r.status:<5} {r.verdict:<10} {r.key}"
            if "value" in r.detail:
                head += f" = {r.detail['value']}"
            if r.residual is not None:
                head += f"  residual: {r.residual}"
            lines.append(head)
        s = summarize(self.items)
        counts = ", ".join(f"{k} {v}" for k, v in sorted(s["counts"].items()))
        lines.append(f"{'OK' if self.ok else 'UNEXPECTED'}: {s['items']} items ({counts})")
        return "\n".join(lines) + "\n"


def _fmt_params(cfg: RunConfig) -> str:
    return ",".join(f"{k}={cfg.params[k]}" for k in "abcd")


def _asserted(key: str, section: str, ok: bool, residual: str | None = None, **detail) -> ItemResult:
    r = ItemResult(key, section, "pass" if ok else "fail", residual, detail)
    r.verdict = "ok" if ok else "unexpected"
    return r


def _info(key: str, section: str, **detail) -> ItemResult:
    r = ItemResult(key, section, "info", None, detail)
    r.verdict = "ok"
    return r


# ------------------------------------------------------------------ commands

def _field(fx: FixtureSet, name: str, cfg: RunConfig):
    return cfg.spec.apply(fx.find("field", name))


def _leading(fx: FixtureSet, eq_name: str, leading: str | None):
    it = fx.item(eq_name)
    if leading is None:
        if eq_name != "cbs":
            raise UsageError(f"--leading is required for equation {eq_name!r}")
        return it, Jet(C.DEP, MultiIndex.of("x", "t"))
    e = parse_expr(leading, it.space.indep, it.space.dep)
    a = e.as_atom()
    if not isinstance(a, Jet):
        raise UsageError(f"--leading must be a derivative of {it.space.dep}, got {leading!r}")
    return it, a


def cmd_prolong(fx: FixtureSet, cfg: RunConfig, name: str, order: int) -> Report:
    v = _field(fx, name, cfg)
    pv = prolong(v, order)
    items = [_info(f"{k}", "prolong", value=str(c)) for k, c in v.components()]
    for J in multi_indices(v.indep, order):
        items.append(_info(f"eta[{Jet(v.dep, J)}]", "prolong", value=str(pv.eta[J])))
    return Report("prolong", cfg, items)


def _system(fx: FixtureSet, eq_name: str, leading: str | None):
    it, lead = _leading(fx, eq_name, leading)
    names = GENERATOR_NAMES if eq_name == "cbs" else None
    sysm, gen = determining_system(it.value, it.space.indep, it.space.dep, lead, names)
    return sysm, gen


def cmd_determining(fx: FixtureSet, cfg: RunConfig, eq_name: str, leading: str | None,
                    show: bool) -> Report:
    sysm, gen = _system(fx, eq_name, leading)
    items = [_info(f"determining/{eq_name}", "determining", value=f"{len(sysm)} equations",
                   generic=format_field(gen))]
    if show:
        items += [_info(f"coefficient of {k}", "determining", value=str(c)) for k, c in sysm.entries]
    return Report("determining", cfg, items)


def cmd_check(fx: FixtureSet, cfg: RunConfig, names: Sequence[str], eq_name: str,
              leading: str | None) -> Report:
    sysm, gen = _system(fx, eq_name, leading)
    items = []
    for n in names:
        rep = check_infinitesimals(sysm, gen, _field(fx, n, cfg), n)
        fails = rep.failures()
        res = "; ".join(sorted({str(r) for _, r in fails})) if fails else None
        items.append(_asserted(f"check/{n}", "check", rep.passed, res, equations=len(sysm),
                               nonzero=len(fails)))
    return Report("check", cfg, items)


def cmd_table(fx: FixtureSet, cfg: RunConfig, names: Sequence[str] | None = None) -> Report:
    default = [f"v{i}" for i in range(1, 7)]
    names = list(names or default)
    basis = [_field(fx, n, cfg) for n in names]
    table = commutator_table(basis)
    printed = C.printed_table() if names == default and cfg.spec == C.ZERO_SPEC else None
    items = []
    for i, j in ((i, j) for i in range(len(names)) for j in range(len(names))):
        e = table[i][j]
        key = f"[{names[i]},{names[j]}]"
        if e.in_span:
            got = {k: c for k, c in enumerate(e.coords) if not c.is_zero}
            value = " + ".join(f"({c})*{names[k]}" for k, c in got.items()) or "0"
        else:
            value = None
        if printed is not None:
            want = {k - 1: c for k, c in printed[i][j].items() if not c.is_zero}
            ok = e.in_span and got.keys() == want.keys() and all(got[k] == want[k] for k in got)
            items.append(_asserted(key, "table", ok, None if ok else format_field(e.raw),
                                   value=value or format_field(e.raw)))
        elif e.in_span:
            items.append(_info(key, "table", value=value))
        else:
            r = ItemResult(key, "table", "fail", format_field(e.raw), {"in_span": False})
            r.verdict = "unlisted"
            items.append(r)
    return Report("table", cfg, items)


def cmd_reduce(fx: FixtureSet, cfg: RunConfig, chain: Sequence[str], on: str,
               compare: str | None) -> Report:
    eq = fx.find("equation", on)
    items = []
    for name in chain:
        red = pullback(eq, fx.find("ansatz", name))
        eq = red.equation
        items.append(_info(f"reduce/{name}", "reduce", value=str(eq), multiplier=str(red.multiplier)))
    if compare:
        target = fx.find("equation", compare)
        ok, ratio = equal_up_to_multiplier(eq, target)
        items.append(_asserted(f"compare/{compare}", "reduce", ok, None if ok else str(eq),
                               ratio=str(ratio) if ok else None, printed=str(target)))
    return Report("reduce", cfg, items)


def _ode_for(name: str) -> str | None:
    for ode, cand in C.ode_candidates():
        if cand.name == name:
            return ode
    return None


def _record(fx: FixtureSet, name: str) -> C.SolutionRecord:
    expr = fx.find("solution", name)
    try:
        rec = C.solution(name)
    except KeyError:
        return C.SolutionRecord(name, expr)
    rec.expr = expr
    return rec


def cmd_verify(fx: FixtureSet, cfg: RunConfig, names: Sequence[str], ode: str | None) -> Report:
    items = []
    for n in names:
        it = fx.item(n)
        target = ode or (_ode_for(n) if it.space.dep != C.DEP else None)
        if target is not None:
            var_name = it.space.indep[0]
            cand = OdeSolutionCandidate(n, it.space.dep, var_name, it.value)
            rep = verify_ode_solution(fx.find("equation", target), cand)
            items.append(_asserted(f"verify/{n}", "ode", rep.passed,
                                   None if rep.passed else str(rep.residual), ode=target))
            continue
        rep = residual(_record(fx, n), cfg.cbs, cfg.domain(n), cfg.tolerances["residual"])
        items.append(_asserted(f"verify/{n}", "solutions", rep.passed,
                               None if rep.symbolic == "0" else rep.symbolic,
                               max_relative=rep.max_relative, points=len(rep.per_point),
                               redraws=rep.redraws))
    return Report("verify", cfg, items)


def cmd_orbit(fx: FixtureSet, cfg: RunConfig, name: str, flows: Sequence[int],
              printed: bool) -> Report:
    rec = _record(fx, name)
    dom = cfg.domain(name, count=cfg.orbit_count)
    items = []
    for i in flows:
        fm = C.printed_flow(i, cfg.spec, cfg.cbs) if printed else C.flow(i, cfg.spec, cfg.cbs)
        rep = orbit_check(rec, fm, cfg.cbs, cfg.eps, dom, cfg.tolerances["orbit"])
        rep.slope_target = (cfg.tolerances["slope"], cfg.tolerances["slope_tol"])
        res = None if rep.symbolic in (None, "0") else rep.symbolic
        items.append(_asserted(f"orbit/{name}:X{i}_{'printed' if printed else 'exact'}", "orbit",
                               rep.passed, res, validity=rep.validity, eps=list(cfg.eps),
                               residuals=rep.residuals, slope=rep.slope))
    return Report("orbit", cfg, items)


def cmd_audit(fx: FixtureSet, cfg: RunConfig, sections: Sequence[str] | None = None,
              workers: int = 4) -> Report:
    a = Audit(fx, cfg, workers)
    return Report("audit", cfg, a.run(sections))


# ------------------------------------------------------------------ plumbing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with defaults (the packaged one otherwise)")
    common.add_argument("--params", help="parameter bindings, e.g. a=1,b=2,c=3,d=1")
    common.add_argument("--spec", help="kernel specialization, e.g. lambda=0,gamma=0")
    common.add_argument("--seed", type=int, help="sampling seed")
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("--out", help="write the report here instead of stdout")

    p = argparse.ArgumentParser(prog="lieforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prolong", parents=[common], help="print a prolonged field")
    s.add_argument("field")
    s.add_argument("--order", type=int, default=4)

    s = sub.add_parser("determining", parents=[common], help="generate the determining system")
    s.add_argument("--equation", default="cbs")
    s.add_argument("--leading", help="derivative solved for, e.g. f_XT (default u_xt for cbs)")
    s.add_argument("--show", action="store_true", help="print every determining equation")

    s = sub.add_parser("check", parents=[common], help="substitute fields into the system")
    s.add_argument("fields", nargs="+")
    s.add_argument("--equation", default="cbs")
    s.add_argument("--leading")

    s = sub.add_parser("table", parents=[common], help="commutator table of a basis")
    s.add_argument("fields", nargs="*", help="basis fields (default v1..v6)")

    s = sub.add_parser("reduce", parents=[common], help="pull an equation back through ansatzes")
    s.add_argument("ansatz", nargs="+", help="one or more ansatz names, applied in order")
    s.add_argument("--on", default="cbs", help="equation to reduce")
    s.add_argument("--compare", help="equation the result should match up to a multiplier")

    s = sub.add_parser("verify", parents=[common], help="check solutions or ODE solutions")
    s.add_argument("solutions", nargs="+")
    s.add_argument("--ode", help="ODE to check against (default from the catalog)")

    s = sub.add_parser("orbit", parents=[common], help="transport a solution by symmetry flows")
    s.add_argument("solution")
    s.add_argument("--flow", type=int, action="append", choices=range(1, 7),
                   help="flow index 1..6 (repeatable; default all)")
    s.add_argument("--printed", action="store_true", help="use the printed transformation forms")

    s = sub.add_parser("audit", parents=[common], help="run the consolidated audit")
    s.add_argument("--section", action="append", choices=SECTIONS)
    s.add_argument("--workers", type=int, default=4)
    return p


def make_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    if args.params:
        b = parse_bindings(args.params)
        unknown = set(b) - set("abcd")
        if unknown:
            raise ConfigError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        cfg.params.update(b)
    nd = cfg.cbs.nondegeneracy()
    bad = [k for k, v in nd.items() if v is False]
    if bad:
        raise ConfigError(f"degenerate parameters: {', '.join(bad)} fails")
    if args.spec:
        try:
            cfg.spec = C.Specialization.parse(args.spec)
        except ValueError as e:
            raise ConfigError(f"bad --spec: {e}") from None
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.fmt = args.format
    cfg.out = Path(args.out) if args.out else None
    return cfg


def dispatch(args: argparse.Namespace, fx: FixtureSet, cfg: RunConfig) -> Report:
    c = args.command
    if c == "prolong":
        return cmd_prolong(fx, cfg, args.field, args.order)
    if c == "determining":
        return cmd_determining(fx, cfg, args.equation, args.leading, args.show)
    if c == "check":
        return cmd_check(fx, cfg, args.fields, args.equation, args.leading)
    if c == "table":
        return cmd_table(fx, cfg, args.fields)
    if c == "reduce":
        return cmd_reduce(fx, cfg, args.ansatz, args.on, args.compare)
    if c == "verify":
        return cmd_verify(fx, cfg, args.solutions, args.ode)
    if c == "orbit":
        return cmd_orbit(fx, cfg, args.solution, args.flow or list(range(1, 7)), args.printed)
    return cmd_audit(fx, cfg, args.section, args.workers)


def emit(report: Report, cfg: RunConfig) -> None:
    text = (json.dumps(report.to_json(), indent=1) + "\n" if cfg.fmt == "json"
            else report.to_text())
    if cfg.out:
        cfg.out.parent.mkdir(parents=True, exist_ok=True)
        cfg.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        fx = FixtureSet()
        report = dispatch(args, fx, cfg)
        report.fixtures = str(fx.directory)
    except (ConfigError, FixtureError, UsageError) as e:
        print(f"lieforge: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DslError as e:
        print(f"lieforge: parse error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyError as e:
        print(f"lieforge: error: {e.args[0] if e.args else e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SymbolicError, C.UnsupportedSpecialization) as e:
        print(f"lieforge: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    emit(report, cfg)
    return EXIT_OK if report.ok else EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
