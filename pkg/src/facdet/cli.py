"""Command-line front end: run presets, custom cells or configs; render; verify.

Run settings resolve in three layers: built-in defaults, then a JSON
config file (``--config``), then explicit command-line flags. Progress
goes to stderr; data only ever goes to files (or stdout for rendered
tables and verify reports). Exit codes: 0 success, 1 run or verification
failures, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .report import render_table, verify
from .simulation import (ConditionSpec, RunOptions, full_sample_grid,
                         population_grid, run_grid)
from .targets import available_tables

_CELL_KEY_ALIASES = {"q": "q", "ppf": "p_per_factor", "p_per_factor": "p_per_factor",
                     "sl": "sl", "cl": "cl", "phi": "phi", "c": "c", "n": "n"}

_CONFIG_KEYS = {"cells", "preset", "replications", "estimators", "seed",
                "out", "workers", "population_size", "bayes_every",
                "mcmc_burn", "mcmc_draws", "keep_replications"}


def parse_cell(spec: str, master_seed: int, replications: int,
               estimators, require_n: bool) -> ConditionSpec:
    """Parse 'q=3,ppf=5,sl=.4,cl=0,phi=0,c=2[,n=300]' into a condition."""
    fields = {}
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise ValueError(f"cell field {chunk!r} is not key=value")
        key, value = chunk.split("=", 1)
        key = key.strip()
        if key not in _CELL_KEY_ALIASES:
            raise ValueError(f"unknown cell key {key!r}")
        fields[_CELL_KEY_ALIASES[key]] = value.strip()
    try:
        cond = ConditionSpec(
            q=int(fields["q"]), p_per_factor=int(fields["p_per_factor"]),
            sl=float(fields["sl"]), cl=int(fields.get("cl", 0)),
            phi=float(fields.get("phi", 0)), c=int(fields.get("c", 0)),
            n=int(fields["n"]) if "n" in fields else None,
            replications=replications, estimators=tuple(estimators),
            master_seed=master_seed)
    except KeyError as exc:
        raise ValueError(f"cell spec {spec!r} is missing key {exc}") from exc
    if require_n and cond.n is None:
        raise ValueError("sample cells need n=<sample size>")
    if not require_n and cond.n is not None:
        raise ValueError("population cells must not carry n")
    return cond


def load_config(path: str) -> dict:
    """Read a JSON run configuration, diagnosing bad files by line and key."""
    try:
        with open(path) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(
            f"config {path} is not valid JSON "
            f"(line {exc.lineno}, column {exc.colno}): {exc.msg}") from exc
    if not isinstance(config, dict):
        raise ValueError(f"config {path} must hold a JSON object")
    unknown = set(config) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"config {path}: unknown keys {sorted(unknown)}")
    return config


def _add_run_arguments(sub, sample: bool):
    sub.add_argument("--config", metavar="FILE",
                     help="JSON file with run settings; flags override it")
    sub.add_argument("--cells", action="append", default=[],
                     metavar="SPEC", help="cell as q=3,ppf=5,sl=.4,cl=0,phi=0,c=2"
                     + (",n=300 (repeatable)" if sample else " (repeatable)"))
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--estimators", default=None,
                     help="comma list drawn from ml,wlsmv,bayes")
    sub.add_argument("--out", default=None)
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--mcmc-burn", type=int, default=None)
    sub.add_argument("--mcmc-draws", type=int, default=None)
    sub.add_argument("--keep-replications", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facdet",
        description="Determinacy-bias simulations for factor models with "
                    "categorical observed variables")
    subs = parser.add_subparsers(dest="command", required=True)

    pop = subs.add_parser("population", help="finite-population runs")
    _add_run_arguments(pop, sample=False)
    pop.add_argument("--preset", choices=["paper32"], default=None,
                     help="the 32-cell population design")
    pop.add_argument("--pop-size", type=int, default=None)

    samp = subs.add_parser("sample", help="replicated sample runs")
    _add_run_arguments(samp, sample=True)
    samp.add_argument("--preset", choices=["full256"], default=None,
                      help="the 256-cell sample design")
    samp.add_argument("--reps", type=int, default=None)
    samp.add_argument("--bayes-every", type=int, default=None,
                      help="run the Bayes estimator on every k-th replication")

    rep = subs.add_parser("report", help="render a results CSV as a table")
    rep.add_argument("results")
    rep.add_argument("--layout", default="table3",
                     choices=["table2", "table3", "table4", "s1"])
    rep.add_argument("--out", help="write to file instead of stdout")

    ver = subs.add_parser("verify", help="check results against reference targets")
    ver.add_argument("results")
    ver.add_argument("--targets", default="all",
                     help="table id (%s) or 'all'" % ", ".join(available_tables()))
    return parser


def _resolve(cli_value, config, key, default):
    if cli_value is not None:
        return cli_value
    return config.get(key, default)


def _run(args, sample: bool) -> int:
    config = {}
    if args.config:
        config = load_config(args.config)

    seed = _resolve(args.seed, config, "seed", 1234)
    estimators_raw = _resolve(args.estimators, config, "estimators",
                              "ml,wlsmv,bayes")
    if isinstance(estimators_raw, (list, tuple)):
        estimators = tuple(estimators_raw)
    else:
        estimators = tuple(e.strip() for e in estimators_raw.split(",")
                           if e.strip())
    out_dir = _resolve(args.out, config, "out", None) \
        or os.environ.get("FACDET_OUT", ".")
    replications = _resolve(getattr(args, "reps", None), config,
                            "replications", 1000) if sample else 1
    preset = _resolve(getattr(args, "preset", None), config, "preset", None)
    cell_specs = args.cells or config.get("cells", [])

    cells = []
    if preset:
        if sample:
            if preset != "full256":
                print(f"facdet: unknown sample preset {preset!r}", file=sys.stderr)
                return 2
            cells = full_sample_grid(seed, replications, estimators)
        else:
            if preset != "paper32":
                print(f"facdet: unknown population preset {preset!r}",
                      file=sys.stderr)
                return 2
            cells = population_grid(seed, estimators)
    for spec in cell_specs:
        cells.append(parse_cell(spec, seed, replications, estimators,
                                require_n=sample))
    if not cells:
        print("facdet: nothing to run (give --preset, --cells or a config)",
              file=sys.stderr)
        return 2

    options = RunOptions(
        population_size=_resolve(getattr(args, "pop_size", None), config,
                                 "population_size", 200_000),
        mcmc_burn_in=_resolve(args.mcmc_burn, config, "mcmc_burn", 1000),
        mcmc_draws=_resolve(args.mcmc_draws, config, "mcmc_draws", 2000),
        bayes_every=_resolve(getattr(args, "bayes_every", None), config,
                             "bayes_every", 1),
        workers=_resolve(args.workers, config, "workers", None),
        keep_replications=bool(_resolve(args.keep_replications, config,
                                        "keep_replications", False)))
    design = "sample" if sample else "population"
    _, failures = run_grid(cells, options, out_dir=out_dir, design=design,
                           progress=lambda msg: print(msg, file=sys.stderr))
    print(f"wrote {os.path.join(out_dir, 'results.csv')}", file=sys.stderr)
    if failures:
        for failure in failures:
            print(f"facdet: cell {failure['cell']} failed: {failure['error']}",
                  file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("population", "sample"):
        try:
            return _run(args, sample=args.command == "sample")
        except ValueError as exc:
            print(f"facdet: {exc}", file=sys.stderr)
            return 2
    if args.command == "report":
        text = render_table(args.results, args.layout)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            print(text)
        return 0
    if args.command == "verify":
        try:
            report = verify(args.results, args.targets)
        except KeyError as exc:
            print(f"facdet: {exc}", file=sys.stderr)
            return 2
        print(report.text())
        return 0 if report.n_failed == 0 else 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
