"""Command-line interface: ``nlicp <subcommand> ...``.

Exit codes: 0 on success, 1 when a run fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, stattests
from .bands import ace_bounds, confidence_bands
from .bench import GRIDS, BenchGrid, aggregate, draw_setting, read_results, rows_to_csv, run_benchmark, simulate
from .citests import CITestConfig, cond_indep_test, resolve_method
from .data import DataError, Dataset, MissingColumnError, read_csv, write_csv
from .icp import IcpConfig, defining_sets, format_set, pvalue_table, run_icp
from .regress import REGRESSORS, ForestParams
from .scenarios import chain_example, residual_blind_example


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _method(name: str) -> str:
    try:
        return resolve_method(name)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _alpha(text: str) -> float:
    a = float(text)
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _jobs(args) -> int:
    if args.jobs is not None:
        return args.jobs
    raw = os.environ.get("NLICP_JOBS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"NLICP_JOBS must be an integer, got {raw!r}") from None


def _parse_sets(text: str) -> list[frozenset[str]]:
    """``"X1;X1,X3;"`` -> ``[{X1}, {X1, X3}]``; an empty item is the empty set."""
    return [frozenset(c.strip() for c in item.split(",") if c.strip()) for item in text.split(";")]


def _header(command: str, items: dict) -> str:
    lines = [f"# nlicp {__version__} {command}"]
    lines += [f"# {k} = {v}" for k, v in items.items()]
    return "\n".join(lines) + "\n"


def _table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _citest_config(args, method: str) -> CITestConfig:
    forest = ForestParams(num_trees=args.num_trees, mtry=args.mtry, min_leaf=args.min_leaf)
    return CITestConfig(method=method, alpha=args.alpha, seed=args.seed, B=args.B, forest=forest)


def _load(args, **kw) -> Dataset:
    return read_csv(args.data, args.target, args.env, **kw)


def _bootstrap_kind(text: str) -> tuple[str, int]:
    if text == "iid":
        return "iid", 1
    if text.startswith("block"):
        _, _, length = text.partition(":")
        try:
            return "block", int(length or 3)
        except ValueError:
            pass
    raise argparse.ArgumentTypeError("bootstrap must be 'iid' or 'block[:length]'")


def _read_queries(path: str, columns: Sequence[str]) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise MissingColumnError(f"query file {path} lacks column(s) {missing}")
        try:
            return np.array([[float(r[c]) for c in columns] for r in reader])
        except ValueError:
            raise DataError(f"query file {path} has a non-numeric cell") from None


def _ace_table(bands, data: Dataset, x_file: str, xt_file: str) -> tuple[str, list[str]]:
    X0 = _read_queries(x_file, data.columns)
    X1 = _read_queries(xt_file, data.columns)
    if X0.shape != X1.shape:
        raise DataError("the two query files need the same number of rows")
    rows, notes = [], []
    for q, (x0, x1) in enumerate(zip(X0, X1), start=1):
        ace = ace_bounds(bands, x1, x0, columns=data.columns)
        for s, (lo, hi) in sorted(ace.per_set.items(), key=lambda kv: (len(kv[0]), sorted(kv[0]))):
            rows.append([q, "set", format_set(s), lo, hi, ace.level])
        for lo, hi in ace.union:
            rows.append([q, "union", "", lo, hi, ace.level])
        rows.append([q, "hull", "", ace.hull[0], ace.hull[1], ace.level])
        if ace.extrapolated:
            notes.append(f"query {q}: extrapolating outside the training range for " + ", ".join(map(format_set, ace.extrapolated)))
    return _table(["query", "kind", "set", "lower", "upper", "level"], rows), notes


def _emit(args, name: str, text: str) -> None:
    if getattr(args, "out_dir", None):
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


# ---------------------------------------------------------------- commands


def cmd_run(args) -> int:
    if args.ace and not args.bands:
        raise UsageError("--ace needs --bands")
    method = args.method
    kind, block_len = args.bootstrap
    data = _load(args, time=args.time, unit=args.unit)
    cfg = IcpConfig(
        citest=_citest_config(args, method),
        alpha=args.alpha,
        max_set_size=args.max_set_size,
        jobs=_jobs(args),
    )
    res = run_icp(data, cfg)
    settings = {
        "data": args.data,
        "target": args.target,
        "env": args.env,
        "method": method,
        "alpha": args.alpha,
        "seed": args.seed,
        "B": args.B,
        "num_trees": args.num_trees,
        "mtry": args.mtry,
        "min_leaf": args.min_leaf,
        "max_set_size": args.max_set_size,
        "n": data.n,
        "predictors": " ".join(data.columns),
        "environments": len(data.environments),
    }
    if args.bands:
        settings.update(bands=args.bands, bootstrap=f"{kind}:{block_len}" if kind == "block" else kind,
                        regressor=args.regressor, envelope="pointwise")  # fmt: skip
    out = [_header("run", settings)]

    accepted = res.accepted_sets
    pv = _table(["set", "p_value", "accepted"], pvalue_table(res))
    shat = _table(["variable"], [[c] for c in sorted(res.s_hat)])
    out.append(f"\naccepted sets: {len(accepted)} of {len(res.pvalues)}\n")
    out.append(f"S_hat = {format_set(res.s_hat)}\n")
    if res.all_rejected:
        out.append("all sets rejected: the model may be misspecified or the environments too strong\n")
    out.append("\n[pvalues]\n" + pv)
    out.append("\n[s_hat]\n" + shat)
    _emit(args, "pvalues.csv", pv)
    _emit(args, "s_hat.csv", shat)
    if args.defining_sets:
        ds = _table(["defining_set"], [[format_set(s)] for s in defining_sets(accepted)])
        out.append("\n[defining_sets]\n" + ds)
        _emit(args, "defining_sets.csv", ds)

    if args.bands:
        if not accepted:
            raise DataError("no accepted sets: cannot build confidence bands")
        bands = confidence_bands(
            data, accepted, regressor=args.regressor, B=args.bands, alpha=args.alpha,
            bootstrap=kind, block_len=block_len, seed=args.seed,
        )  # fmt: skip
        if args.ace:
            table, notes = _ace_table(bands, data, *args.ace)
            out.append("\n[ace]\n" + table)
            out.extend(f"# {n}\n" for n in notes)
            _emit(args, "ace.csv", table)
    sys.stdout.write("".join(out))
    return 0


def cmd_citest(args) -> int:
    data = _load(args)
    cols = [c for c in (args.set or "").split(",") if c.strip()]
    idx = [data.column_index(c.strip()) for c in cols]
    res = cond_indep_test(data.y, data.env, data.X[:, idx], _citest_config(args, args.method))
    lines = [
        _header("citest", {"data": args.data, "target": args.target, "env": args.env, "seed": args.seed}).rstrip(),
        f"method = {res.method}",
        f"set = {format_set(cols)}",
        f"p_value = {res.p_value:.6g}",
        f"alpha = {res.alpha}",
        f"decision = {'reject' if res.reject else 'accept'}",
        f"correction = {res.correction}",
    ]
    lines += [f"{k} = {v}" for k, v in sorted(res.diagnostics.items())]
    print("\n".join(lines))
    return 0


def cmd_stattest(args) -> int:
    name = args.name
    if name in ("wilcoxon", "ks", "f_test"):
        if args.a is None or args.b is None:
            raise UsageError(f"{name} needs --a and --b")
        if name == "wilcoxon":
            r = stattests.wilcoxon_rank_sum(args.a, args.b, args.alternative)
        elif name == "ks":
            r = stattests.ks_two_sample(args.a, args.b)
        else:
            r = stattests.f_test_accuracy(args.a, args.b)
    elif name == "levene":
        if not args.group or len(args.group) < 2:
            raise UsageError("levene needs at least two --group options")
        r = stattests.levene(args.group)
    elif name == "fisher":
        if args.counts is None or args.counts.size != 4:
            raise UsageError("fisher needs --counts a,b,c,d")
        r = stattests.fisher_exact_2x2(args.counts.astype(int).reshape(2, 2), args.alternative)
    else:  # two_proportion
        if args.counts is None or args.counts.size != 4:
            raise UsageError("two_proportion needs --counts k1,n1,k2,n2")
        k1, n1, k2, n2 = (int(v) for v in args.counts)
        r = stattests.two_proportion_test(k1, n1, k2, n2, args.alternative)
    print(f"test = {r.method}\nstatistic = {r.statistic:.6g}\np_value = {r.p_value:.6g}\nalternative = {r.alternative}")
    if r.flags:
        print("flags = " + ",".join(r.flags))
    return 0


def cmd_bench(args) -> int:
    grid = BenchGrid.load(args.grid) if args.grid else BenchGrid()
    jobs = _jobs(args)

    def progress(done, total):
        if args.progress:
            print(f"\r{done}/{total}", end="", file=sys.stderr, flush=True)

    rows = run_benchmark(grid, args.seed, jobs=jobs, progress=progress)
    if args.progress:
        print(file=sys.stderr)
    Path(args.out).write_text(rows_to_csv(rows))
    errors = sum(1 for r in rows if r["error"])
    print(f"wrote {len(rows)} rows to {args.out} ({errors} errors)")
    sys.stdout.write(rows_to_csv(aggregate(rows)))
    return 0


def cmd_bench_aggregate(args) -> int:
    rows = read_results(args.results)
    by = [b for b in (args.by or "").split(",") if b]
    if rows:
        bad = [b for b in by if b not in rows[0]]
        if bad:
            raise MissingColumnError(f"unknown column(s) {bad} in {args.results}")
    text = rows_to_csv(aggregate(rows, by))
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def _scenario_overrides(args) -> dict:
    over = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        if not isinstance(raw, dict):
            raise UsageError("simulation config must be a JSON object")
        over.update(raw)
    for key in ("n", "target"):
        if getattr(args, key) is not None:
            over[key] = getattr(args, key)
    bad = set(over) - set(GRIDS) - {"intervention_targets"}
    if bad:
        raise UsageError(f"unknown simulation key(s) {sorted(bad)}")
    return over


def cmd_simulate(args) -> int:
    if args.scenario == "figure7":
        setting = draw_setting(args.seed, 0, _scenario_overrides(args))
        data = simulate(setting, np.random.SeedSequence([args.seed, 2]))
        info = {k: getattr(setting, k) for k in (*GRIDS, "targets_env2", "targets_env3")}
    elif args.scenario == "chain":
        per_env = 100 if args.n is None else max(1, args.n // 6)
        data = chain_example(args.seed, per_env)
        info = {"n_per_env": per_env}
    else:
        data = residual_blind_example(args.seed, 1000 if args.n is None else args.n)
        info = {"n": data.n}
    write_csv(data, args.out)
    meta = {"scenario": args.scenario, "seed": args.seed, "response": data.target_name, **info}
    Path(str(args.out) + ".json").write_text(json.dumps({"version": __version__, **meta}, indent=2, default=str) + "\n")
    print(f"wrote {data.n} rows to {args.out}; response column {data.target_name}")
    return 0


def cmd_ace(args) -> int:
    kind, block_len = args.bootstrap
    data = _load(args, time=args.time, unit=args.unit)
    if args.sets is not None:
        sets = _parse_sets(args.sets)
        for s in sets:
            for c in s:
                data.column_index(c)
    else:
        res = run_icp(data, IcpConfig(citest=_citest_config(args, args.method), alpha=args.alpha, jobs=_jobs(args)))
        sets = res.accepted_sets
    if not sets:
        raise DataError("no accepted sets: average causal effect bounds are undefined")
    bands = confidence_bands(
        data, sets, regressor=args.regressor, B=args.bands, alpha=args.alpha,
        bootstrap=kind, block_len=block_len, seed=args.seed,
    )  # fmt: skip
    table, notes = _ace_table(bands, data, args.x, args.x_tilde)
    settings = {"data": args.data, "target": args.target, "alpha": args.alpha, "seed": args.seed,
                "bands": args.bands, "regressor": args.regressor, "envelope": "pointwise",
                "sets": " ".join(format_set(s) for s in sets)}  # fmt: skip
    sys.stdout.write(_header("ace", settings) + table + "".join(f"# {n}\n" for n in notes))
    _emit(args, "ace.csv", table)
    return 0


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="comma-separated input file with a header row")
    p.add_argument("--target", required=True, help="response column")
    p.add_argument("--env", default="env", help="environment column (integer labels)")


def _test_args(p: argparse.ArgumentParser, method_default: str | None = "quantile") -> None:
    p.add_argument("--method", type=_method, default=method_default, required=method_default is None)
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--B", type=int, default=250, help="simulations for residual-prediction tests")
    p.add_argument("--num-trees", type=int, default=500)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=5)


def _band_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--regressor", choices=REGRESSORS, default="additive_model")
    p.add_argument("--bootstrap", type=_bootstrap_kind, default=("iid", 1), help="iid or block[:length]")
    p.add_argument("--time", default=None, help="time column (block bootstrap)")
    p.add_argument("--unit", default=None, help="unit column (block bootstrap)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nlicp", description="Nonlinear invariant causal prediction.")
    parser.add_argument("--version", action="version", version=f"nlicp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="search for invariant predictor sets")
    _data_args(p)
    _test_args(p)
    _band_args(p)
    p.add_argument("--max-set-size", type=int, default=None)
    p.add_argument("--defining-sets", action="store_true")
    p.add_argument("--bands", type=int, default=0, metavar="B", help="bootstrap fits per accepted set")
    p.add_argument("--ace", nargs=2, metavar=("X_FILE", "X_TILDE_FILE"))
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out-dir", default=None, help="also write the tables here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("citest", help="one conditional independence test")
    _data_args(p)
    _test_args(p, method_default=None)
    p.add_argument("--set", default="", help="comma-separated conditioning columns")
    p.set_defaults(func=cmd_citest)

    p = sub.add_parser("stattest", help="one two-sample or contingency test")
    p.add_argument("name", choices=["wilcoxon", "ks", "levene", "fisher", "two_proportion", "f_test"])
    p.add_argument("--a", type=_floats)
    p.add_argument("--b", type=_floats)
    p.add_argument("--group", type=_floats, action="append")
    p.add_argument("--counts", type=_floats)
    p.add_argument("--alternative", choices=["two_sided", "less", "greater"], default="two_sided")
    p.set_defaults(func=cmd_stattest)

    p = sub.add_parser("bench", help="run the simulation benchmark")
    p.add_argument("--grid", default=None, help="JSON grid file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("bench-aggregate", help="FWER and Jaccard means from a results file")
    p.add_argument("results")
    p.add_argument("--by", default="", help="comma-separated stratification columns")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench_aggregate)

    p = sub.add_parser("simulate", help="write a simulated dataset")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--figure7", dest="scenario", action="store_const", const="figure7")
    g.add_argument("--chain", dest="scenario", action="store_const", const="chain")
    g.add_argument("--residual-blind", dest="scenario", action="store_const", const="residual_blind")
    p.set_defaults(scenario="figure7")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--target", type=int, default=None, help="response node (six-node graph)")
    p.add_argument("--config", default=None, help="JSON file with setting values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ace", help="bounds on an average causal effect")
    _data_args(p)
    _test_args(p)
    _band_args(p)
    p.add_argument("--sets", default=None, help="accepted sets, e.g. 'X1;X1,X3' (default: run the search)")
    p.add_argument("--x", required=True, help="file of reference points")
    p.add_argument("--x-tilde", required=True, help="file of intervention points")
    p.add_argument("--bands", type=int, default=100, metavar="B")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_ace)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (UsageError, MissingColumnError) as exc:
        print(f"nlicp: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, RuntimeError, OSError) as exc:
        print(f"nlicp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
