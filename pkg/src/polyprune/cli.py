"""Command-line interface.

Every subcommand reads an optional flat key-value config file
(``--config``) and accepts ``--set key=value`` overrides; see the
package README for the key reference.  Exit codes: 0 success, 1
configuration error, 2 invariant violation or numerical failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (
    BoundReportConfig,
    ConfigError,
    InvariantViolation,
    MembershipConfig,
    SweepConfig,
    SweepGrid,
    _Reader,
    _opt_int,
    apply_overrides,
    derive_seed,
    parse_config_file,
    prepare_dataset,
    run_bound_report,
    run_gradcheck,
    run_membership_experiment,
    run_sweep,
    threshold_trace,
    write_first_epoch_csv,
    write_membership_csv,
    write_threshold_csv,
)
from .network import TwoLayerNetwork
from .pruning import (
    greedy_forward_selection,
    write_counts_csv,
    write_selection_csv,
)
from .simplex import SimplexError
from .thresholds import write_bound_curves_csv
from .training import TrainingDivergedError, write_trace_csv

_DATASET_KEYS = ("dataset", "binarize", "binarize_threshold", "normalize")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _load_mapping(args) -> dict:
    mapping = parse_config_file(args.config) if args.config else {}
    return apply_overrides(mapping, args.set)


def _split_dataset_keys(mapping: dict):
    ds_map = {k: v for k, v in mapping.items() if k in _DATASET_KEYS}
    rest = {k: v for k, v in mapping.items() if k not in _DATASET_KEYS}
    return ds_map, rest


def _build_dataset(ds_map: dict, base_seed: int):
    r = _Reader(ds_map)
    ds = prepare_dataset(
        source=r.take("dataset", str),
        binarize=r.take("binarize", str, "auto"),
        binarize_threshold=r.take("binarize_threshold", int, 5),
        normalize=r.take("normalize", lambda s: s.lower() == "true", False),
        base_seed=base_seed,
    )
    r.finish()
    return ds


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_train(args) -> int:
    mapping = _load_mapping(args)
    ds_map, rest = _split_dataset_keys(mapping)
    r = _Reader(rest)
    base_seed = r.take("base_seed", int, 0)
    net = TwoLayerNetwork(
        n_neurons=r.take("n_neurons", int, 256),
        activation=r.take("activation", str, "sigmoid"),
        output_head=r.take("output_head", str, "linear"),
        criterion=r.take("criterion", str, "l2"),
        learning_rate=r.take("learning_rate", float, 0.5),
        n_iter=r.take("n_iter", int, 1000),
        batch_size=r.take("batch_size", _opt_int, 1),
        momentum=r.take("momentum", float, 0.0),
        weight_decay=r.take("weight_decay", float, 0.0),
        sampling=r.take("sampling", str, "shuffle"),
        record_every=r.take("record_every", int, 100),
        random_state=base_seed,
    )
    r.finish()
    ds = _build_dataset(ds_map, base_seed)
    net.fit(ds.features, ds.labels)
    out = _out_dir(args)
    write_trace_csv(net.trace_, out / "trace.csv")
    net.save(out / "checkpoint.bin")
    print(f"trained {net.n_iter_total_} iterations")
    print(f"final loss {net.trace_.losses[-1]:.17g}")
    print(f"wrote {out / 'trace.csv'} and {out / 'checkpoint.bin'}")
    return 0


def _cmd_prune(args) -> int:
    mapping = _load_mapping(args)
    ds_map, rest = _split_dataset_keys(mapping)
    r = _Reader(rest)
    base_seed = r.take("base_seed", int, 0)
    checkpoint = r.take("checkpoint", str)
    n_select = r.take("n_select", int, 200)
    selection_batch = r.take("selection_batch_size", _opt_int, None)
    scan = r.take("scan", str, "direct")
    r.finish()
    ds = _build_dataset(ds_map, base_seed)
    net = TwoLayerNetwork.load(checkpoint)

    import math

    state = greedy_forward_selection(
        net.scaled_activations(ds.features),
        ds.labels / math.sqrt(ds.n_examples),
        n_steps=n_select,
        selection_batch_size=selection_batch,
        seed=derive_seed(base_seed, "prune"),
        scan=scan,
    )
    out = _out_dir(args)
    write_selection_csv(state, out / "selection.csv")
    write_counts_csv(state.counts, out / "counts.csv")
    print(f"selected {state.k} neurons, {state.n_distinct} distinct")
    print(f"final selection objective {state.loss_history[-1]:.17g}")
    if set(float(v) for v in ds.labels) <= {0.0, 1.0}:
        acc = net.accuracy(ds.features, ds.labels, counts=state.counts)
        print(f"pruned accuracy {acc:.17g}")
    print(f"wrote {out / 'selection.csv'} and {out / 'counts.csv'}")
    return 0


def _cmd_sweep(args) -> int:
    mapping = _load_mapping(args)
    ds_map, rest = _split_dataset_keys(mapping)
    r = _Reader(rest)
    rule = r.take("threshold_rule", str, "fraction")
    fraction = r.take("threshold_fraction", float, 0.95)
    remaining = {k: rest[k] for k in rest if k not in ("threshold_rule", "threshold_fraction")}
    cfg = SweepConfig.from_mapping(remaining)
    ds = _build_dataset(ds_map, cfg.base_seed)
    grid = run_sweep(cfg, ds, n_workers=args.workers)
    out = _out_dir(args)
    grid.write_csv(out / "sweep.csv")
    records = threshold_trace(grid, rule=rule, fraction=fraction)
    write_threshold_csv(records, out / "thresholds.csv")
    print(f"swept {len(grid.cells)} cells")
    print(f"wrote {out / 'sweep.csv'} and {out / 'thresholds.csv'}")
    return 0


def _cmd_trace(args) -> int:
    grid = SweepGrid.read_csv(args.grid)
    records = threshold_trace(grid, rule=args.rule, fraction=args.fraction)
    out = _out_dir(args)
    write_threshold_csv(records, out / "thresholds.csv")
    for rec in records:
        t = "never" if rec.threshold_t is None else rec.threshold_t
        print(f"N={rec.n_neurons} m={rec.m} threshold_t={t}")
    print(f"wrote {out / 'thresholds.csv'}")
    return 0


def _cmd_membership(args) -> int:
    mapping = _load_mapping(args)
    ds_map, rest = _split_dataset_keys(mapping)
    cfg = MembershipConfig.from_mapping(rest)
    ds = _build_dataset(ds_map, cfg.base_seed)
    records = run_membership_experiment(cfg, ds)
    out = _out_dir(args)
    write_membership_csv(records, out / "membership.csv")
    write_first_epoch_csv(records, out / "first_epoch.csv")
    for rec in records:
        word = "INSIDE" if rec.separable else "OUTSIDE"
        print(
            f"m={rec.m} seed={rec.seed} epoch={rec.epoch} {word} "
            f"phase1_objective={rec.phase1_objective:.17g}"
        )
    print(f"wrote {out / 'membership.csv'} and {out / 'first_epoch.csv'}")
    return 0


def _cmd_bounds(args) -> int:
    mapping = _load_mapping(args)
    cfg = BoundReportConfig.from_mapping(mapping)
    report = run_bound_report(cfg)
    out = _out_dir(args)
    write_bound_curves_csv(
        out / "bounds.csv",
        report.ks,
        report.selection_bounds,
        report.pretraining_bounds,
        report.observed,
    )
    print(f"hull diameter {report.hull_diameter:.17g}")
    print(f"decay rate {report.decay_rate:.17g}")
    print(f"rate constant {report.rate_constant:.17g}")
    print(f"initial squared residual {report.l0:.17g}")
    print(
        f"selection bound holds at every step "
        f"(max observed {report.observed.max():.17g})"
    )
    print(f"wrote {out / 'bounds.csv'}")
    return 0


def _cmd_gradcheck(args) -> int:
    worst, lines = run_gradcheck(n_cases=args.cases, seed=args.seed)
    for line in lines:
        print(line)
    print(f"max relative error {worst:.3e}")
    if worst >= 1e-5:
        raise InvariantViolation(
            f"gradient check failed: relative error {worst:.3e} >= 1e-5"
        )
    return 0


def _add_common(sub):
    sub.add_argument("--config", "-c", help="flat key=value config file")
    sub.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    sub.add_argument("--out-dir", default=".", help="directory for output files")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="polyprune",
        description="Train, prune, and audit width-averaged two-layer networks.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", help="train a network, write trace + checkpoint")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = subs.add_parser("prune", help="greedy-select neurons from a checkpoint")
    _add_common(p)
    p.set_defaults(func=_cmd_prune)

    p = subs.add_parser("sweep", help="train/prune a (size x width x trial) grid")
    _add_common(p)
    p.add_argument("--workers", type=int, default=1, help="parallel processes")
    p.set_defaults(func=_cmd_sweep)

    p = subs.add_parser("trace", help="threshold trace from an existing sweep CSV")
    p.add_argument("--grid", required=True, help="sweep CSV to analyze")
    p.add_argument("--rule", default="fraction", choices=["fraction", "best_accuracy"])
    p.add_argument("--fraction", type=float, default=0.95)
    p.add_argument("--out-dir", default=".", help="directory for output files")
    p.set_defaults(func=_cmd_trace)

    p = subs.add_parser(
        "membership", help="per-epoch separability probe across sizes"
    )
    _add_common(p)
    p.set_defaults(func=_cmd_membership)

    p = subs.add_parser("bounds", help="bound report on a theory-mode run")
    _add_common(p)
    p.set_defaults(func=_cmd_bounds)

    p = subs.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--cases", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (InvariantViolation, TrainingDivergedError, SimplexError) as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
