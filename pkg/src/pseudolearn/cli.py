"""Command-line front end.

Three subcommands:

* ``simulate`` runs a replication experiment described by a JSON
  config and writes a results CSV.
* ``fit`` fits a two-stage learner (or the plug-in baseline) on a user
  CSV and writes predictions at query points.
* ``group`` runs group-wise inference on a user CSV and writes the
  per-group report.

Every output CSV gets a sibling ``<output>.manifest.json`` recording
the resolved configuration, its hash, and library versions, so a run
can be reproduced from the manifest alone.  Floats are printed with 17
significant digits (lossless round-trip).  Exit codes: 0 success, 1
estimation failed at runtime, 2 invalid input or configuration.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys

import numpy as np
import scipy

from . import __version__
from . import rng as rngmod
from .data import ColumnMap, load_csv
from .errors import (
    ConfigError,
    DomainError,
    EstimationError,
    ParseError,
    PseudolearnError,
    SchemaError,
)
from .grouplearner import GroupConfig, fit_group_learner
from .iflearner import (
    IFLearnerConfig,
    config_digest,
    fit_if_learner,
    fit_plugin_learner,
)
from .simulate import ExperimentConfig, run_replications

__all__ = ["main", "propensity_expression"]

FIT_VARIANTS = ("if_learner", "plugin")


def _g17(v: float) -> str:
    return format(float(v), ".17g")


def _load_json(path) -> dict:
    try:
        with open(path) as f:
            blob = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(blob, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return blob


def _versions() -> dict:
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pseudolearn": __version__,
        "stream_version": rngmod.STREAM_VERSION,
    }


def _write_manifest(out_path: str, command: str, config: dict) -> None:
    manifest = {
        "command": command,
        "config": config,
        "config_hash": config_digest(config),
        "output": str(out_path),
        "versions": _versions(),
    }
    with open(f"{out_path}.manifest.json", "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")


def propensity_expression(expr: str):
    """Compile a --known-propensity expression into a row-wise callable.

    The expression sees the covariate row as ``x`` (a float array) and
    ``np``; for example ``"0.1 + 0.8*(x[0] > 0)"``.
    """
    try:
        code = compile(expr, "<known-propensity>", "eval")
    except SyntaxError as e:
        raise ConfigError(f"bad propensity expression {expr!r}: {e}") from None

    def pi(x):
        try:
            return float(
                eval(code, {"__builtins__": {}}, {"x": x, "np": np, "abs": abs})
            )
        except PseudolearnError:
            raise
        except Exception as e:
            raise ConfigError(
                f"propensity expression {expr!r} failed: {e}"
            ) from None

    return pi


def _load_query_matrix(path, x_names) -> np.ndarray:
    """Read the covariate columns of a query CSV, in configured order."""
    try:
        f = open(path, newline="")
    except FileNotFoundError:
        raise ConfigError(f"query file not found: {path}") from None
    with f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty (no header row)") from None
        idx = []
        for name in x_names:
            if name not in header:
                raise SchemaError(
                    f"{path}: missing column {name!r}; query files need the "
                    f"covariate columns {list(x_names)}"
                )
            idx.append(header.index(name))
        rows = []
        for i, row in enumerate(reader):
            vals = []
            for j, name in zip(idx, x_names):
                if j >= len(row):
                    raise ParseError(f"{path}: row {i}, column {name!r}: missing value")
                try:
                    v = float(row[j])
                except ValueError:
                    raise ParseError(
                        f"{path}: row {i}, column {name!r}: not a number: {row[j]!r}"
                    ) from None
                if not np.isfinite(v):
                    raise DomainError(
                        f"{path}: row {i}, column {name!r}: non-finite value"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise SchemaError(f"{path}: no query rows")
    return np.array(rows, dtype=float)


def _parse_grid(spec: str, n_features: int) -> np.ndarray:
    if n_features != 1:
        raise ConfigError(
            f"--grid queries need exactly one covariate, data has {n_features}"
        )
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--grid must be 'lo:hi:count', got {spec!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"--grid must be 'lo:hi:count', got {spec!r}") from None
    if count < 1 or not lo < hi:
        raise ConfigError(f"--grid needs lo < hi and count >= 1, got {spec!r}")
    return np.linspace(lo, hi, count).reshape(-1, 1)


def cmd_simulate(args) -> int:
    exp = ExperimentConfig.from_dict(_load_json(args.config))
    if args.seed is not None:
        exp = dataclasses.replace(exp, seed=args.seed)
    table = run_replications(exp, jobs=args.jobs)
    out = args.out or f"{exp.experiment_id}_results.csv"
    table.to_csv(out)
    _write_manifest(out, "simulate", dataclasses.asdict(exp))
    print(f"wrote {out} ({len(table.rows)} result rows)")
    return 0


def _seeded_if_config(icfg: IFLearnerConfig, seed: int | None) -> IFLearnerConfig:
    if seed is None:
        return icfg
    return dataclasses.replace(
        icfg, seed=seed, crossfit=dataclasses.replace(icfg.crossfit, seed=seed)
    )


def cmd_fit(args) -> int:
    blob = _load_json(args.config)
    if "columns" not in blob:
        raise ConfigError("fit config needs a 'columns' mapping")
    columns = ColumnMap.from_dict(blob["columns"])
    icfg = _seeded_if_config(
        IFLearnerConfig.from_dict(blob.get("if_config", {})), args.seed
    )
    variant = blob.get("variant", "if_learner")
    if variant not in FIT_VARIANTS:
        raise ConfigError(f"variant must be one of {FIT_VARIANTS}, got {variant!r}")
    data = load_csv(args.data, columns)
    if (args.query is None) == (args.grid is None):
        raise ConfigError("exactly one of --query or --grid is required")
    if args.query is not None:
        Xq = _load_query_matrix(args.query, columns.covariates)
    else:
        Xq = _parse_grid(args.grid, len(columns.covariates))
    known = (
        propensity_expression(args.known_propensity)
        if args.known_propensity
        else None
    )
    if variant == "plugin":
        model = fit_plugin_learner(data, icfg)
    else:
        model = fit_if_learner(data, icfg, known_propensity=known)
    preds = model.predict(Xq)
    out = args.out or "predictions.csv"
    with open(out, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(columns.covariates) + ["psi_hat"])
        for row, p in zip(Xq, preds):
            writer.writerow([_g17(v) for v in row] + [_g17(p)])
    _write_manifest(
        out,
        "fit",
        {
            "data": str(args.data),
            "columns": dataclasses.asdict(columns),
            "if_config": dataclasses.asdict(icfg),
            "variant": variant,
            "known_propensity": args.known_propensity,
            "query": str(args.query) if args.query else None,
            "grid": args.grid,
        },
    )
    print(f"wrote {out} ({Xq.shape[0]} predictions)")
    return 0


def cmd_group(args) -> int:
    blob = _load_json(args.config)
    if "columns" not in blob:
        raise ConfigError("group config needs a 'columns' mapping")
    columns = ColumnMap.from_dict(blob["columns"])
    gcfg = GroupConfig.from_dict(blob.get("group", {}))
    if args.seed is not None:
        gcfg = dataclasses.replace(
            gcfg,
            seed=args.seed,
            if_config=_seeded_if_config(gcfg.if_config, args.seed),
        )
    data = load_csv(args.data, columns)
    known = (
        propensity_expression(args.known_propensity)
        if args.known_propensity
        else None
    )
    estimates = fit_group_learner(data, gcfg, known_propensity=known)
    out = args.out or "group_report.csv"
    estimates.to_csv(out)
    _write_manifest(
        out,
        "group",
        {
            "data": str(args.data),
            "columns": dataclasses.asdict(columns),
            "group": dataclasses.asdict(gcfg),
            "known_propensity": args.known_propensity,
        },
    )
    print(f"wrote {out} ({estimates.n_groups} groups)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pseudolearn",
        description="Influence-function pseudo-outcome learning experiments.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="run a replication experiment")
    ps.add_argument("--config", required=True, help="experiment JSON config")
    ps.add_argument("--seed", type=int, default=None, help="override master seed")
    ps.add_argument("--jobs", type=int, default=1, help="parallel worker count")
    ps.add_argument("--out", default=None, help="results CSV path")
    ps.set_defaults(func=cmd_simulate)

    pf = sub.add_parser("fit", help="fit a learner on a CSV, predict at queries")
    pf.add_argument("--data", required=True, help="training data CSV")
    pf.add_argument("--config", required=True, help="fit JSON config")
    pf.add_argument("--query", default=None, help="query-point CSV")
    pf.add_argument("--grid", default=None, help="1-D query grid, 'lo:hi:count'")
    pf.add_argument(
        "--known-propensity", default=None,
        help="expression for a known propensity, e.g. '0.1 + 0.8*(x[0] > 0)'",
    )
    pf.add_argument("--seed", type=int, default=None)
    pf.add_argument("--out", default=None, help="predictions CSV path")
    pf.set_defaults(func=cmd_fit)

    pg = sub.add_parser("group", help="group-wise inference report from a CSV")
    pg.add_argument("--data", required=True, help="data CSV")
    pg.add_argument("--config", required=True, help="group JSON config")
    pg.add_argument(
        "--known-propensity", default=None,
        help="expression for a known propensity",
    )
    pg.add_argument("--seed", type=int, default=None)
    pg.add_argument("--out", default=None, help="report CSV path")
    pg.set_defaults(func=cmd_group)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EstimationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except PseudolearnError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
