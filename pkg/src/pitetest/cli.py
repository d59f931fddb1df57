"""Command-line interface.

Subcommands: ``test``, ``screen``, ``generate``, ``simulate-type1`` and
``simulate-power``. Every option can also come from a JSON file passed with
``--config``, using the option's long name with dashes as underscores;
explicit flags win over the file.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .data import BINARY, Schema, read_csv, write_csv
from .errors import ConfigError, DataError, NumericalError, PiteError
from .harness import ExperimentGrid, power_grid, run_power, run_type1, type1_grid
from .permtest import run_permutation_test
from .pite import estimate_pite, interaction_tests
from .predictors import FOREST, ForestParams, PredictorSpec
from .simgen import AlsDesign, NullDesign, Spread, simulate
from .streams import substream

log = logging.getLogger("pitetest")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
# options that never change results (parallelism, output locations) are left out of echoed configs
_NON_RESULT_KEYS = {"threads", "config", "func", "verbose", "timings", "checkpoint",
                    "out", "histogram", "csv", "sidecar"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _csv_list(s):
    return [v.strip() for v in s.split(",") if v.strip()] if isinstance(s, str) else list(s)


def _int_list(s):
    return [int(v) for v in _csv_list(s)]


def _add_common(p):
    p.add_argument("--config", help="JSON file supplying option values")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="maximum worker threads (default: machine parallelism)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_data(p):
    p.add_argument("--data", help="input CSV (header row first)")
    p.add_argument("--outcome", help="outcome column")
    p.add_argument("--treatment", help="treatment column (0/1)")
    p.add_argument("--covariates", type=_csv_list,
                   help="comma-separated covariate columns (default: all other columns)")
    p.add_argument("--binary", type=_csv_list, default=[],
                   help="covariates to treat as binary regardless of inference")
    p.add_argument("--continuous", type=_csv_list, default=[],
                   help="covariates to treat as continuous regardless of inference")


def _add_model(p):
    p.add_argument("--model", choices=["lm", "rf"], default="lm")
    p.add_argument("--trees", type=int, default=500)
    p.add_argument("--max-depth", type=int, default=10)
    p.add_argument("--nsplit", type=int, default=10, help="random split points per feature")
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--mtry", default=None, help="features per split: integer or 'all' (default ceil(p/3))")
    p.add_argument("--no-bootstrap", action="store_true")


def build_parser():
    parser = _Parser(prog="pitetest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pitetest {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("test", help="permutation test for heterogeneity")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    p.add_argument("--permutations", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="report.json")
    p.add_argument("--histogram", help="also write permuted SDs, one per line")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("screen", help="covariate x treatment interaction screening")
    _add_common(p)
    _add_data(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default="screen.json")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("generate", help="write a synthetic trial CSV and audit sidecar")
    _add_common(p)
    p.add_argument("--design", choices=["null", "als"], default="null")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--ate", type=float, default=0.0)
    p.add_argument("--nuisance-cont", type=int, default=0, help="null design only")
    p.add_argument("--nuisance-bin", type=int, default=0, help="null design only")
    p.add_argument("--nuisance", type=int, default=0, help="ALS design only")
    p.add_argument("--effect-size", type=float, default=0.19)
    p.add_argument("--spread", choices=[s.value for s in Spread], default=Spread.SPREAD.value)
    p.add_argument("--residual-sd", type=float, default=1.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="trial.csv")
    p.add_argument("--sidecar", help="audit document (default: <out>.json)")
    p.set_defaults(func=cmd_generate)

    for name, kind in (("simulate-type1", "type1"), ("simulate-power", "power")):
        p = sub.add_parser(name, help=f"{kind} simulation grid")
        _add_common(p)
        p.add_argument("--grid", help="JSON grid document (cells + master_seed); overrides presets")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--replications", type=int, default=300)
        p.add_argument("--permutations", type=int, default=300)
        p.add_argument("--models", type=_csv_list, default=["lm"], help="lm, rf or lm,rf")
        p.add_argument("--trees", type=int, default=100)
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--sizes", type=_int_list, help="sample sizes to keep")
        if kind == "power":
            p.add_argument("--effect-size", type=float, default=0.19)
            p.add_argument("--nuisance", type=_int_list, default=[0, 20, 50, 100])
            p.add_argument("--spreads", type=_csv_list, default=[s.value for s in Spread])
        p.add_argument("--out", default=f"{kind}.json")
        p.add_argument("--csv", help="flat table, one row per cell")
        p.add_argument("--checkpoint", help="JSON-lines file for resumable runs")
        p.add_argument("--timings", help="write per-cell wall times here")
        p.set_defaults(func=cmd_simulate, kind=kind)
    return parser


def _resolved(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NON_RESULT_KEYS}


def _write_json(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _envelope(kind, args, body):
    return {
        "format": f"pitetest/{kind}",
        "format_version": 1,
        "tool_version": __version__,
        "config": _resolved(args),
        **body,
    }


def _dataset(args):
    if not args.data or not args.outcome or not args.treatment:
        raise ConfigError("--data, --outcome and --treatment are required")
    if not Path(args.data).is_file():
        raise ConfigError(f"data file {args.data!r} not found")
    kinds = {c: BINARY for c in args.binary}
    kinds.update({c: "continuous" for c in args.continuous})
    return read_csv(args.data, Schema(args.outcome, args.treatment, args.covariates, kinds))


def _predictor(args):
    if args.model == "lm":
        return PredictorSpec()
    mtry = args.mtry
    if mtry is not None and mtry != "all":
        try:
            mtry = int(mtry)
        except ValueError:
            raise ConfigError(f"--mtry must be an integer or 'all', got {mtry!r}") from None
    return PredictorSpec(FOREST, ForestParams(
        n_trees=args.trees, max_depth=args.max_depth, n_split_points=args.nsplit,
        min_leaf_size=args.min_leaf, mtry=mtry, bootstrap=not args.no_bootstrap,
    ))


def cmd_test(args):
    d = _dataset(args)
    spec = _predictor(args)
    report = run_permutation_test(d, spec, args.permutations, args.alpha, args.seed, threads=args.threads)
    pite = estimate_pite(d, spec, substream(args.seed, 0))
    body = {"report": report.to_dict(), "pite_summary": pite.summary(),
            "covariates": list(d.covariate_names)}
    _write_json(args.out, _envelope("permutation-report", args, body))
    if args.histogram:
        lines = [f"# observed_sd={report.observed_sd!r} p_value={report.p_value!r} "
                 f"permutations={report.n_permutations}"]
        lines += [repr(float(v)) for v in report.permuted_sds]
        Path(args.histogram).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"observed SD {report.observed_sd:.6g}, p = {report.p_value:.4g} "
          f"({report.n_permutations} permutations), reject at {args.alpha}: {report.reject}")
    return EXIT_OK


def cmd_screen(args):
    d = _dataset(args)
    tab = interaction_tests(d)
    selected = tab.selected(args.alpha)
    rows = [
        {"index": j, "name": tab.names[j], "estimate": float(tab.estimate[j]),
         "std_error": float(tab.std_error[j]), "t_value": float(tab.t_value[j]),
         "p_value": float(tab.p_value[j]), "selected": j in selected}
        for j in range(len(tab.names))
    ]
    body = {"selected": [tab.names[j] for j in selected], "selected_indices": selected,
            "df_resid": tab.df_resid, "interactions": rows}
    _write_json(args.out, _envelope("interaction-screen", args, body))
    print(f"selected {len(selected)} of {len(rows)} covariates: {', '.join(body['selected']) or '-'}")
    return EXIT_OK


def cmd_generate(args):
    if args.seed is None:
        raise ConfigError("--seed is required")
    if args.design == "null":
        design = NullDesign(args.n, args.ate, args.nuisance_cont, args.nuisance_bin, args.residual_sd, args.seed)
    else:
        design = AlsDesign(args.n, args.effect_size, args.spread, args.nuisance, args.residual_sd,
                           None, args.seed, args.ate)
    trial = simulate(design)
    out = Path(args.out)
    write_csv(trial.dataset, out, outcome="y", treatment="treatment")
    sidecar = Path(args.sidecar) if args.sidecar else out.with_suffix(out.suffix + ".json")
    body = {
        "design": {"type": args.design, **{k: (v.value if isinstance(v, Spread) else v)
                                           for k, v in vars(design).items()}},
        "seed": args.seed,
        "csv": out.name,
        "delta": None if trial.delta is None else [float(v) for v in trial.delta],
        "true_effect": [float(v) for v in trial.true_effect],
    }
    _write_json(sidecar, _envelope("generation-audit", args, body))
    print(f"wrote {trial.dataset.n} rows x {trial.dataset.p} covariates to {out}")
    return EXIT_OK


def cmd_simulate(args):
    if args.grid:
        if not Path(args.grid).is_file():
            raise ConfigError(f"grid file {args.grid!r} not found")
        grid = ExperimentGrid.from_dict(json.loads(Path(args.grid).read_text(encoding="utf-8")))
    else:
        if args.seed is None:
            raise ConfigError("--seed is required for simulations")
        if args.kind == "type1":
            grid = type1_grid(args.seed, args.replications, args.permutations, args.models,
                              args.trees, alpha=args.alpha)
        else:
            grid = power_grid(args.seed, args.effect_size, args.replications, args.permutations,
                              args.models, args.trees, nuisance=args.nuisance,
                              spreads=args.spreads, alpha=args.alpha)
        if args.sizes:
            keep = set(args.sizes)
            grid = ExperimentGrid(tuple(c for c in grid.cells if c.design.n in keep),
                                  grid.master_seed, grid.label)
    runner = run_type1 if args.kind == "type1" else run_power
    table = runner(grid, threads=args.threads, checkpoint=args.checkpoint)
    _write_json(args.out, _envelope("simulation-table", args, table.to_dict()))
    if args.csv:
        table.write_csv(args.csv)
    if args.timings:
        _write_json(args.timings, {"wall_time": [r.wall_time for r in table.results]})
    for row in table.rows():
        print(f"{row['label']}: {row['rejection_rate']:.3f} +/- {row['half_width']:.3f}")
    return EXIT_OK


def _apply_config(parser, argv):
    """Re-parse with values from --config as defaults."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {args.config!r} not found")
        try:
            cfg = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        unknown = set(cfg) - set(vars(args))
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return EXIT_CONFIG
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return args.func(args)
    except ConfigError as exc:
        print(f"pitetest: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"pitetest: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"pitetest: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PiteError as exc:
        print(f"pitetest: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"pitetest: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
