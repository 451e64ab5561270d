"""TOML experiment configuration.

One file describes one experiment (a table row)::

    [model]       s0, sigma, delta, r, rho, T
    [grid]        N, Nbar
    [payoff]      kind, strike | strikes, weights
    [basis]       family, P, eta
    [instruments] vanilla, vanilla_kind, vanilla_strike
    [run]         Q, seed_train, seed_oos, seed_pnl, chunk_size, workers, provider
    [ls]          degree, Q, seed
    [rogers]      reference ("payoff" or "put"), strike
    [pnl]         bins, reuse_oos, delta_hedge
    [output]      dir, name
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .basis import BasisSpec
from .instruments import Instrument, InstrumentSet
from .market import ModelParams, TimeGrid
from .payoffs import PayoffSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSection:
    Q: int
    seed_train: int = 1
    seed_oos: int = 2
    seed_pnl: int = 3
    chunk_size: int = 65536
    workers: int = 1
    provider: str = "auto"


@dataclass(frozen=True)
class LsSection:
    degree: int = 3
    Q: int | None = None
    seed: int = 4


@dataclass(frozen=True)
class RogersSection:
    reference: str = "payoff"
    strike: float | None = None


@dataclass(frozen=True)
class PnlSection:
    bins: int = 80
    reuse_oos: bool = False
    delta_hedge: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    grid: TimeGrid
    payoff: PayoffSpec
    basis: BasisSpec
    vanilla: bool
    run: RunSection
    ls: LsSection = field(default_factory=LsSection)
    rogers: RogersSection = field(default_factory=RogersSection)
    pnl: PnlSection = field(default_factory=PnlSection)
    out_dir: str = "out"
    name: str = "experiment"
    vanilla_kind: str | None = None
    vanilla_strike: float | None = None

    def __post_init__(self):
        r = self.run
        seeds = [r.seed_train, r.seed_oos, r.seed_pnl]
        if len(set(seeds)) != 3:
            raise ConfigError(f"seed_train, seed_oos and seed_pnl must be pairwise distinct, got {seeds}")
        if self.ls.seed in (r.seed_oos, r.seed_pnl):
            raise ConfigError("ls seed must differ from the evaluation seeds")
        if r.Q < 1 or r.chunk_size < 1 or r.workers < 1:
            raise ConfigError("Q, chunk_size and workers must be positive")
        if self.basis.d != self.params.d:
            raise ConfigError("basis dimension does not match the model")
        if abs(self.grid.T - self.params.T) > 1e-12:
            raise ConfigError("grid horizon does not match the model")

    @property
    def ls_Q(self) -> int:
        return self.ls.Q or self.run.Q

    def instruments(self) -> InstrumentSet:
        base = InstrumentSet.for_experiment(self.payoff, self.params, self.vanilla)
        if not self.vanilla or self.vanilla_kind is None:
            return base
        if self.params.d != 1:
            raise ConfigError("vanilla_kind override only applies to one asset")
        strike = self.vanilla_strike
        if strike is None:
            strike = self.payoff.mid_strike if self.payoff.kind == "butterfly" else self.payoff.strike
        return InstrumentSet((Instrument("asset", 0), Instrument(self.vanilla_kind, 0, strike=strike)))

    def with_overrides(self, **run_fields) -> "ExperimentConfig":
        fields = {k: v for k, v in run_fields.items() if v is not None}
        return replace(self, run=replace(self.run, **fields)) if fields else self


def _section(doc: dict, name: str, required: bool = True) -> dict:
    if name not in doc:
        if required:
            raise ConfigError(f"missing [{name}] section")
        return {}
    if not isinstance(doc[name], dict):
        raise ConfigError(f"[{name}] must be a table")
    return doc[name]


def _build(cls, data: dict, section: str):
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def parse_config(doc: dict) -> ExperimentConfig:
    try:
        m = _section(doc, "model")
        params = ModelParams(
            m["s0"], m["sigma"], m.get("delta", 0.0), m["r"], m.get("rho", 0.0), m["T"]
        )
        g = _section(doc, "grid")
        grid = TimeGrid(int(g["N"]), int(g.get("Nbar", 1)), params.T)
        p = dict(_section(doc, "payoff"))
        if "strikes" in p:
            p["strikes"] = tuple(p["strikes"])
        if "weights" in p:
            p["weights"] = tuple(p["weights"])
        payoff = _build(PayoffSpec, p, "payoff")
        b = _section(doc, "basis")
        basis = BasisSpec(b["family"], P=int(b.get("P", 1)), eta=int(b.get("eta", 0)), d=params.d)
        inst = _section(doc, "instruments", required=False)
        run = _build(RunSection, _section(doc, "run"), "run")
        ls = _build(LsSection, _section(doc, "ls", required=False), "ls")
        rogers = _build(RogersSection, _section(doc, "rogers", required=False), "rogers")
        pnl = _build(PnlSection, _section(doc, "pnl", required=False), "pnl")
        out = _section(doc, "output", required=False)
        return ExperimentConfig(
            params,
            grid,
            payoff,
            basis,
            bool(inst.get("vanilla", False)),
            run,
            ls,
            rogers,
            pnl,
            out_dir=str(out.get("dir", "out")),
            name=str(out.get("name", "experiment")),
            vanilla_kind=inst.get("vanilla_kind"),
            vanilla_strike=inst.get("vanilla_strike"),
        )
    except ConfigError:
        raise
    except (KeyError, ValueError, AssertionError) as exc:
        raise ConfigError(f"invalid configuration: {exc!r}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = parse_config(doc)
    if "output" not in doc or "name" not in doc["output"]:
        cfg = replace(cfg, name=Path(path).stem)
    return cfg
