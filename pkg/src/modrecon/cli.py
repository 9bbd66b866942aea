"""Command-line entry point: ``modrecon {train,eval,infer-bench,scaling,gradcheck}``.

Every experiment field can come from a ``--config`` key-value file and be
overridden by the matching flag (``layer_dims`` -> ``--layer-dims``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import _CONVERTERS, ConfigError, build_spec, format_config, load_config
from .graph import GraphFormatError


def _add_spec_flags(p):
    p.add_argument("--config", help="key = value experiment file")
    g = p.add_argument_group("experiment fields (override the config file)")
    for key in _CONVERTERS:
        g.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="VALUE")


def _spec(args):
    file_values = load_config(args.config) if args.config else {}
    return build_spec(file_values, {k: getattr(args, k) for k in _CONVERTERS})


def _print_summary(report):
    for r in report.seeds:
        parts = [f"seed={r['seed']}", f"k={r['k']}", f"Q={r['Q']:.4f}"]
        parts += [f"{m}={r[m]:.4f}" for m in ("NMI", "AC") if r.get(m) is not None]
        print("  ".join(parts))
    for m, s in report.summary.items():
        print(f"{m}: median {s['median']:.4f}  best {s['best']:.4f}")
    for e in report.errors:
        print("error:", e, file=sys.stderr)


def cmd_train(args):
    from .bench import run_train

    spec = _spec(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(spec))
    _print_summary(run_train(spec, out))
    return 0


def cmd_eval(args):
    from .bench import run_eval, run_new_nodes

    spec = _spec(args)
    checkpoints = list(args.checkpoint or [])
    if args.run_dir:
        checkpoints += sorted(str(p) for p in Path(args.run_dir).glob("checkpoint_seed*.npz"))
    if not checkpoints:
        raise ConfigError("give --checkpoint or --run-dir")
    if args.new_nodes:
        if len(checkpoints) != 1:
            raise ConfigError("--new-nodes needs exactly one checkpoint")
        rows = run_new_nodes(spec, checkpoints[0], args.new_nodes, args.out, args.variant, args.inference_layers)
        for r in rows:
            print(json.dumps(r))
        return 0
    _print_summary(run_eval(spec, checkpoints, args.out))
    return 0


def cmd_infer_bench(args):
    from .bench import run_infer_bench

    spec = _spec(args)
    _, table = run_infer_bench(spec, args.out, n_synthetic=args.n_synthetic)
    print(f"{'variant':<8} {'NMI':>7} {'latency_us':>11} {'speedup':>8} {'fine_tune_s':>11}")
    for r in table:
        print(f"{r['variant']:<8} {r['nmi']:7.4f} {r['mean_latency_us']:11.1f} "
              f"{r['speedup_vs_plain3']:8.2f} {r['fine_tune_s']:11.2f}")
    return 0


def cmd_scaling(args):
    from .bench import run_scaling
    from .config import parse_int_list
    from .nn import TrainingConfig
    from .report import write_table_csv

    config = TrainingConfig(neighbor_samples=args.neighbor_samples, minibatch_size=args.minibatch_size, seed=args.seed)
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    rows, slopes = run_scaling(parse_int_list(args.n_list), kinds, args.degree, args.repeats, args.seed, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table_csv(out / "scaling.csv", rows, ["kind", "n_nodes", "n_edges", "seconds", "repeats"])
    write_table_csv(out / "slopes.csv", [{"kind": k, "slope": s} for k, s in slopes.items()], ["kind", "slope"])
    for r in rows:
        print(f"{r['kind']:<9} N={r['n_nodes']:<6} {r['seconds']:.4f}s")
    for k, s in slopes.items():
        print(f"{k} log-log slope {s:.3f}")
    return 0


def cmd_gradcheck(args):
    from .gradcheck import run_gradchecks
    from .report import write_table_csv

    rows = run_gradchecks(args.instances, args.seed, args.max_nodes)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_table_csv(out / "gradcheck.csv", rows)
    worst = max(r["max_rel_error"] for r in rows)
    failed = [r for r in rows if not r["passed"]]
    print(f"{len(rows)} checks on {args.instances} graphs, worst relative error {worst:.3e}, {len(failed)} failed")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="modrecon", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train per seed, cluster and score")
    _add_spec_flags(p)
    p.add_argument("--out", default="runs/train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="cluster and score saved checkpoints, or assign new nodes")
    _add_spec_flags(p)
    p.add_argument("--checkpoint", action="append", help="checkpoint .npz (repeatable)")
    p.add_argument("--run-dir", help="use every checkpoint_seed*.npz in this directory")
    p.add_argument("--new-nodes", help="JSON records {id, stubs, features} to assign")
    p.add_argument("--variant", choices=("apam", "plain"), default="apam")
    p.add_argument("--inference-layers", type=int, default=1)
    p.add_argument("--out", default="runs/eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer-bench", help="held-out inference latency and NMI per variant")
    _add_spec_flags(p)
    p.add_argument("--n-synthetic", type=int, default=5000, help="graph size when no edge file is given")
    p.add_argument("--out", default="runs/infer_bench")
    p.set_defaults(func=cmd_infer_bench)

    p = sub.add_parser("scaling", help="per-epoch time against graph size")
    p.add_argument("--n-list", default="1000,2000,4000,8000")
    p.add_argument("--kinds", default="twostage")
    p.add_argument("--degree", type=float, default=10.0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--neighbor-samples", type=int, default=10)
    p.add_argument("--minibatch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/scaling")
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-nodes", type=int, default=12)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, GraphFormatError, FileNotFoundError, ValueError) as exc:
        print(f"modrecon {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
