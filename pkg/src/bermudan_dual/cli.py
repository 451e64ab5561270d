"""Command-line runner: ``bermudan-dual <subcommand> CONFIG... [flags]``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .artifacts import ArtifactError, load_alpha, load_policy, save_alpha, save_policy
from .config import ConfigError, ExperimentConfig, load_config
from .experiment import fit_ls, ls_price, run_dual, run_pnl, run_rogers, simulation_check, table_row
from .pnl import write_histogram_csv, write_summary_csv

logger = logging.getLogger("bermudan_dual")

TABLE_COLUMNS = ["name", "Q", "Nbar", "P", "Vanilla", "U0", "U0_se", "U0hat", "U0hat_se", "error", "wall_seconds"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class NumericalError(RuntimeError):
    pass


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_metrics(path: Path, metrics: dict) -> None:
    write_rows(path, ["metric", "value"], [[k, v] for k, v in metrics.items()])


def _finite(*values) -> None:
    for v in values:
        if not math.isfinite(v):
            raise NumericalError(f"non-finite result {v}")


def _configure(args, path) -> ExperimentConfig:
    cfg = load_config(path).with_overrides(
        seed_train=args.seed_train,
        seed_oos=args.seed_oos,
        seed_pnl=args.seed_pnl,
        workers=args.workers,
        chunk_size=args.chunk_size,
    )
    return cfg


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate_check(args) -> int:
    cfg = _configure(args, args.config[0])
    out = _out_dir(args, cfg)
    write_metrics(out / f"{cfg.name}_check.csv", simulation_check(cfg))
    return EXIT_OK


def cmd_price_dual(args) -> int:
    cfg = _configure(args, args.config[0])
    out = _out_dir(args, cfg)
    res = run_dual(cfg)
    (u0, se0), (u1, se1) = res.u0, res.u0_hat
    _finite(u0, u1)
    meta = {
        "seed_train": cfg.run.seed_train,
        "seed_oos": cfg.run.seed_oos,
        "Q": cfg.run.Q,
        "N": cfg.grid.N,
        "Nbar": cfg.grid.Nbar,
        "instruments": cfg.instruments().describe(),
        "u0": u0,
        "u0_hat": u1,
        "u0_hat_se": se1,
    }
    save_alpha(out / f"{cfg.name}_alpha.bin", res.alpha, res.mapping, meta)
    p = cfg.basis.P if cfg.basis.is_local else cfg.basis.eta
    row = [cfg.name, cfg.run.Q, cfg.grid.Nbar, p, cfg.vanilla, u0, se0, u1, se1, "", res.seconds]
    write_rows(out / f"{cfg.name}_dual.csv", TABLE_COLUMNS, [row])
    print(f"{cfg.name}: U0 = {u0:.4f} ({se0:.4f})  U0hat = {u1:.4f} ({se1:.4f})")
    return EXIT_OK


def cmd_price_ls(args) -> int:
    cfg = _configure(args, args.config[0])
    out = _out_dir(args, cfg)
    policy = fit_ls(cfg)
    price, se = ls_price(cfg, policy)
    _finite(price)
    save_policy(out / f"{cfg.name}_policy.bin", policy, {"Q": cfg.ls_Q})
    write_metrics(out / f"{cfg.name}_ls.csv", {"price": price, "se": se, "degree": cfg.ls.degree, "Q": cfg.run.Q})
    print(f"{cfg.name}: LS = {price:.4f} ({se:.4f})")
    return EXIT_OK


def cmd_pnl(args) -> int:
    cfg = _configure(args, args.config[0])
    out = Path(args.out or cfg.out_dir)
    alpha_path = Path(args.alpha) if args.alpha else out / f"{cfg.name}_alpha.bin"
    policy_path = Path(args.policy) if args.policy else out / f"{cfg.name}_policy.bin"
    for p, what in ((alpha_path, "price-dual"), (policy_path, "price-ls")):
        if not p.exists():
            raise FileNotFoundError(f"missing artifact {p}; run `{what}` first")
    alpha, mapping, meta = load_alpha(alpha_path)
    policy, _ = load_policy(policy_path)
    if meta.get("seed_train") is not None and meta["seed_train"] != cfg.run.seed_train:
        raise ConfigError("alpha artifact was trained with a different seed than the config")
    reports = run_pnl(cfg, alpha, mapping, policy, float(meta["u0_hat"]))
    out.mkdir(parents=True, exist_ok=True)
    for label, rep in reports.items():
        _finite(rep.mean, rep.variance)
        write_histogram_csv(rep, out / f"{cfg.name}_pnl_{label}_hist.csv")
        write_summary_csv(rep, out / f"{cfg.name}_pnl_{label}_summary.csv")
        print(f"{cfg.name} [{label}]: mean = {rep.mean:.4f}  variance = {rep.variance:.4f}")
    return EXIT_OK


def cmd_rogers(args) -> int:
    cfg = _configure(args, args.config[0])
    out = _out_dir(args, cfg)
    res = run_rogers(cfg)
    _finite(res.price)
    write_metrics(
        out / f"{cfg.name}_rogers.csv",
        {"alpha_star": res.alpha_star, "price": res.price, "se": res.se, "reference": res.reference},
    )
    print(f"{cfg.name}: alpha* = {res.alpha_star:.4f}  price = {res.price:.4f} ({res.se:.4f})")
    return EXIT_OK


def cmd_table(args) -> int:
    rows = []
    out = Path(args.out or "out")
    for path in args.config:
        try:
            cfg = _configure(args, path)
            r = table_row(cfg)
            _finite(r["U0"], r["U0hat"])
            rows.append([r[c] if c != "error" else "" for c in TABLE_COLUMNS])
        except Exception as exc:  # one bad row must not stop the table
            logger.error("%s failed: %s", path, exc)
            rows.append([Path(path).stem] + [""] * (len(TABLE_COLUMNS) - 3) + [f"{type(exc).__name__}: {exc}", ""])
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / args.table_name, TABLE_COLUMNS, rows)
    return EXIT_OK


def _common_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies must not overwrite flags given before the subcommand
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed-train", type=int, **kw)
    common.add_argument("--seed-oos", type=int, **kw)
    common.add_argument("--seed-pnl", type=int, **kw)
    common.add_argument("--workers", type=int, **kw)
    common.add_argument("--chunk-size", type=int, **kw)
    common.add_argument("--out", help="output directory (defaults to the config's [output] dir)", **kw)
    common.add_argument("-v", "--verbose", action="store_true", **kw)
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bermudan-dual", description=__doc__.splitlines()[0], parents=[_common_flags(False)]
    )
    common = _common_flags(True)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate-check": (cmd_simulate_check, "check simulated martingale and correlation moments"),
        "price-dual": (cmd_price_dual, "fit the hedge and report in- and out-of-sample dual prices"),
        "price-ls": (cmd_price_ls, "fit the Longstaff-Schwartz policy and report its lower bound"),
        "pnl": (cmd_pnl, "simulate the hedged P&L from saved artifacts"),
        "rogers": (cmd_rogers, "one-parameter dual bound with a European reference"),
        "table": (cmd_table, "one CSV row per config"),
    }
    for name, (fn, help_) in commands.items():
        p = sub.add_parser(name, help=help_, parents=[common])
        nargs = "*" if name == "table" else 1
        p.add_argument("config", nargs=nargs, help="TOML experiment config")
        if name == "pnl":
            p.add_argument("--alpha", help="alpha artifact (default OUT/<name>_alpha.bin)")
            p.add_argument("--policy", help="policy artifact (default OUT/<name>_policy.bin)")
        if name == "table":
            p.add_argument("--table-name", default="table.csv")
        p.set_defaults(func=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ArtifactError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
