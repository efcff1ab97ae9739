"""Command-line entry point.

Exit codes: 0 success, 2 bad flags or spec, 3 I/O failure, 4 training stalled,
5 invalid data or model/data mismatch.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import bench, data, model
from .constructor import Status, TrainConfig, TrainTrace, Variant, parse_scopes, train

EXIT_OK, EXIT_FLAGS, EXIT_IO, EXIT_STALLED, EXIT_DATA = 0, 2, 3, 4, 5

# Per-dataset settings: (cfnrw lambda, constrained scope schedule, tol, l_max, t_max)
PRESETS = {
    "function": ("150", "150:10:200", 0.05, 200, 20),
    "winequality": ("0.5", "0.5:0.1:5", 0.05, 100, 20),
    "anacal": ("1", "0.5:0.1:5", 0.05, 150, 20),
    "delta_ail": ("1", "1:10:100", 0.05, 100, 20),
    "plastic": ("0.5", "0.5:10:200", 0.05, 100, 20),
    "compactiv": ("0.5", "1:10:50", 0.05, 100, 20),
    "grinding": ("1", "0.5:0.5:10", 0.05, 100, 20),
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _seed(value):
    env = os.environ.get("GEONET_SEED")
    raw = env if env not in (None, "") else value
    try:
        seed = int(raw)
    except (TypeError, ValueError):
        raise CliError(f"invalid seed {raw!r}", EXIT_FLAGS) from None
    if not 0 <= seed < 2**64:
        raise CliError(f"seed {seed} is not a 64-bit unsigned integer", EXIT_FLAGS)
    return seed


def _load_dataset(path, targets):
    try:
        return data.load_csv(path, targets)
    except FileNotFoundError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None
    except data.DataError as exc:
        raise CliError(str(exc), EXIT_DATA) from None


def cmd_gen_data(args):
    seed = _seed(args.seed)
    try:
        if args.kind == "function":
            ds = data.gen_function(args.n, seed, args.sampling)
        else:
            ds = data.gen_grinding_surrogate(data.GrindingSurrogateConfig(args.n, seed, args.noise))
    except ValueError as exc:
        raise CliError(str(exc), EXIT_FLAGS) from None
    try:
        data.write_csv(ds, args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from None
    print(f"wrote {ds.n} rows ({ds.d} features, {ds.m} targets) to {args.out}")
    return EXIT_OK


def build_config(args):
    variant = Variant.parse(args.variant)
    preset = PRESETS[args.preset] if args.preset else None
    scopes = args.scopes
    if scopes is None and preset:
        scopes = preset[0] if variant is Variant.CFN_RW else preset[1]
    if scopes is None:
        raise CliError("give --scopes or --preset", EXIT_FLAGS)
    t_max = args.tmax
    if t_max is None:
        t_max = 1 if variant is Variant.CFN_RW else (preset[4] if preset else 20)
    return TrainConfig(
        variant=variant, tau=args.tau, mu=args.mu, t_max=t_max,
        l_max=args.lmax if args.lmax is not None else (preset[3] if preset else 100),
        tol=args.tol if args.tol is not None else (preset[2] if preset else 0.05),
        scopes=parse_scopes(scopes), seed=_seed(args.seed), fallback=args.fallback,
        pool_policy=args.pool_policy)


def cmd_train(args):
    try:
        config = build_config(args)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_FLAGS) from None
    if not 0 < args.split <= 1:
        raise CliError(f"--split must lie in (0, 1], got {args.split}", EXIT_FLAGS)
    ds = _load_dataset(args.data, args.targets)
    try:
        if args.split < 1:
            train_set, test_set = data.split(ds, args.split, config.seed)
        else:
            train_set, test_set = ds, None
        result = train(config, train_set, test_set)
    except data.DataError as exc:
        raise CliError(str(exc), EXIT_DATA) from None
    try:
        if args.model_out:
            model.save(result.net, args.model_out)
        if args.trace_out:
            result.trace.write(args.trace_out, deterministic=args.deterministic)
    except OSError as exc:
        raise CliError(f"cannot write output: {exc}", EXIT_IO) from None
    recs = result.trace.records
    train_rmse = recs[-1].train_rmse if recs else result.initial_rmse
    print(f"status={result.status.value} nodes={result.net.L} train_rmse={train_rmse:.6g}"
          + (f" test_rmse={recs[-1].test_rmse:.6g}" if recs and recs[-1].test_rmse is not None else ""))
    return EXIT_STALLED if result.status is Status.STALLED else EXIT_OK


def cmd_eval(args):
    try:
        net = model.load(args.model)
    except OSError as exc:
        raise CliError(f"cannot read {args.model}: {exc}", EXIT_IO) from None
    except model.ModelError as exc:
        raise CliError(str(exc), EXIT_DATA) from None
    ds = _load_dataset(args.data, args.targets)
    if ds.d != net.d or ds.m != net.m:
        raise CliError(f"data has d={ds.d}, m={ds.m}; model expects d={net.d}, m={net.m}", EXIT_DATA)
    Yhat = model.predict(net, ds.X)
    st = net.norm_stats
    err = bench.rmse(st.scale_targets(ds.Y), st.scale_targets(Yhat))
    out = sys.stdout
    out.write(f"rmse={err!r}\n")
    if net.m == 1:
        out.write("index,y,yhat\n")
    else:
        out.write("index," + ",".join(f"y{q + 1}" for q in range(net.m)) + ","
                  + ",".join(f"yhat{q + 1}" for q in range(net.m)) + "\n")
    for i, (y, yh) in enumerate(zip(ds.Y, Yhat)):
        out.write(f"{i}," + ",".join(repr(float(v)) for v in np.concatenate([y, yh])) + "\n")
    return EXIT_OK


def cmd_bench(args):
    try:
        with open(args.spec, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {args.spec}: {exc}", EXIT_IO) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.spec}:{exc.lineno}:{exc.colno}: {exc.msg}", EXIT_FLAGS) from None
    try:
        spec = bench.ExperimentSpec.from_dict(doc)
    except (TypeError, ValueError, KeyError) as exc:
        raise CliError(f"{args.spec}: invalid experiment spec: {exc}", EXIT_FLAGS) from None
    fmt = "json" if args.out.endswith(".json") else "csv"
    base_dir = os.path.dirname(os.path.abspath(args.spec))
    try:
        report = bench.run_experiment(spec, jobs=args.jobs, base_dir=base_dir)
    except FileNotFoundError as exc:
        raise CliError(f"cannot read dataset: {exc}", EXIT_IO) from None
    except data.DataError as exc:
        raise CliError(str(exc), EXIT_DATA) from None
    try:
        bench.emit_report(report, fmt, args.out, deterministic=args.deterministic)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from None
    print(bench.summary_table(report))
    return EXIT_OK


def cmd_inspect_trace(args):
    try:
        trace = TrainTrace.read(args.trace)
    except OSError as exc:
        raise CliError(f"cannot read {args.trace}: {exc}", EXIT_IO) from None
    except ValueError as exc:
        raise CliError(f"{args.trace}: {exc}", EXIT_DATA) from None
    recs = trace.records
    print(f"status={trace.status.value if trace.status else 'unknown'}")
    print(f"nodes={len(recs)}")
    if recs:
        print(f"final_train_rmse={recs[-1].train_rmse:.6g}")
        if recs[-1].test_rmse is not None:
            print(f"final_test_rmse={recs[-1].test_rmse:.6g}")
        print(f"fallback_nodes={sum(r.fallback for r in recs)}")
        print(f"elapsed_ms={recs[-1].elapsed_ms:.3f}")
    for t in args.targets:
        hit = trace.nodes_to_reach(t)
        print(f"nodes_to_{t:g}={hit if hit is not None else '-'}")
    return EXIT_OK


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _scopes(text):
    try:
        parse_scopes(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _variant(text):
    try:
        return Variant.parse(text).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    p = argparse.ArgumentParser(prog="geonet", description="Geometric constructive networks with angle-constrained nodes.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    g.add_argument("kind", choices=["function", "grinding"])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise", type=float, default=0.0, help="grinding target noise sd (normalized units)")
    g.add_argument("--sampling", choices=["uniform", "grid"], default="uniform")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one network and write model + trace")
    t.add_argument("--data", required=True)
    t.add_argument("--targets", type=int, default=1, help="number of trailing target columns")
    t.add_argument("--variant", type=_variant, default="lightgcnet2")
    t.add_argument("--preset", choices=sorted(PRESETS))
    t.add_argument("--tau", type=float, default=0.5)
    t.add_argument("--mu", type=float, default=0.5)
    t.add_argument("--tmax", type=int)
    t.add_argument("--lmax", type=int)
    t.add_argument("--tol", type=float)
    t.add_argument("--scopes", type=_scopes, help="'a:s:b' grid or a single scale")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--fallback", choices=["accept_best", "stop"], default="accept_best")
    t.add_argument("--pool-policy", choices=["best", "first"], default=None)
    t.add_argument("--split", type=float, default=0.7, help="training fraction; 1 trains on every row")
    t.add_argument("--model-out")
    t.add_argument("--trace-out")
    t.add_argument("--deterministic", action="store_true", help="write 0 for elapsed times")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="print RMSE and per-row predictions")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--targets", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="run a repeated experiment from a JSON spec")
    b.add_argument("--spec", required=True)
    b.add_argument("--out", required=True, help="report path; .json for JSON, otherwise CSV")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--deterministic", action="store_true", help="zero wall-clock columns")
    b.set_defaults(func=cmd_bench)

    i = sub.add_parser("inspect-trace", help="summarize a training trace CSV")
    i.add_argument("--trace", required=True)
    i.add_argument("--targets", type=_float_list, default=[0.01, 0.02, 0.03, 0.04, 0.1])
    i.set_defaults(func=cmd_inspect_trace)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"geonet {args.command}: {exc}", file=sys.stderr)
        if exc.code == EXIT_FLAGS:
            parser.print_usage(sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
