"""Run configuration: parameters, tolerances and sample domains from an INI file."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .catalog import CbsParams, Specialization, ZERO_SPEC
from .numeric import SampleDomain

DEFAULT_CONFIG = Path(__file__).parent / "data" / "audit.ini"


class ConfigError(ValueError):
    pass


def parse_bindings(text: str) -> dict[str, Fraction]:
    """'a=1,b=2' -> {'a': 1, 'b': 2} with exact rationals."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        k, sep, v = part.partition("=")
        if not sep:
            raise ConfigError(f"expected name=value, got {part!r}")
        try:
            out[k.strip()] = Fraction(v.strip())
        except ValueError:
            raise ConfigError(f"not a rational number: {v!r}") from None
    return out


@dataclass
class RunConfig:
    params: dict = field(default_factory=dict)
    spec: Specialization = ZERO_SPEC
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    count: int = 200
    orbit_count: int = 50
    margin: float = 0.5
    eps: tuple = (0.1, 0.01, 0.001)
    domains: dict = field(default_factory=dict)
    fixtures: Path | None = None
    fmt: str = "text"
    out: Path | None = None

    @property
    def cbs(self) -> CbsParams:
        return CbsParams.bound(**{k: self.params[k] for k in "abcd"})

    def domain(self, name: str, count: int | None = None) -> SampleDomain:
        spec = dict(self.domains.get("default", {}))
        spec.update(self.domains.get(name, {}))
        margin = float(spec.pop("margin", self.margin))
        intervals = {k: v for k, v in spec.items()}
        return SampleDomain(intervals, count or self.count, self.seed, margin)

    def to_json(self) -> dict:
        return {"params": {k: str(v) for k, v in self.params.items()}, "spec": str(self.spec),
                "seed": self.seed, "count": self.count, "tolerances": self.tolerances}


def load_config(path: Path | str | None = None) -> RunConfig:
    cp = configparser.ConfigParser()
    p = Path(path) if path else DEFAULT_CONFIG
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    cp.read(p, encoding="utf-8")
    try:
        params = {k: Fraction(v) for k, v in cp["params"].items()}
        tol = {k: float(v) for k, v in cp["tolerances"].items()}
        s = cp["sampling"]
        domains = {}
        for sec in cp.sections():
            if sec.startswith("domain."):
                d = {}
                for k, v in cp[sec].items():
                    if k == "margin":
                        d[k] = float(v)
                    else:
                        lo, hi = (float(x) for x in v.split(","))
                        d[k] = (lo, hi)
                domains[sec.split(".", 1)[1]] = d
        return RunConfig(params=params, tolerances=tol, seed=s.getint("seed"),
                         count=s.getint("count"), orbit_count=s.getint("orbit_count"),
                         margin=s.getfloat("margin"),
                         eps=tuple(float(e) for e in s["eps"].split(",")), domains=domains)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"bad config {p}: {e}") from None
