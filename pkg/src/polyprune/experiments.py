"""Experiment harness: sweeps, threshold traces, membership-by-epoch
runs, bound reports, and gradient checking.

Determinism contract: every random choice made here derives its seed
through :func:`derive_seed`, a pure function of the base seed and the
run coordinates (sub-dataset size, width, trial, checkpoint).  Re-
running any single grid cell in isolation therefore reproduces its
value bit for bit, and parallel execution writes byte-identical CSVs
to serial execution.

Configuration is a flat key-value text file (``key = value`` lines,
``#`` comments); command-line overrides take precedence.  Unknown keys
are rejected so typos fail loudly.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datasets import (
    Dataset,
    binarize_labels,
    load_cache,
    load_idx,
    make_class_blobs,
    make_synthetic,
    normalize_rows,
    subsample_uniform,
)
from .activations import require_smooth
from .network import TwoLayerNetwork
from .polytope import classification_membership, diameter
from .pruning import (
    greedy_forward_selection,
    selection_bound_violations,
)
from .network import half_squared_error
from .thresholds import BoundParams, pretraining_bound, selection_loss_bound
from .training import fit_decay_rate, estimate_c


class ConfigError(ValueError):
    """Bad configuration file, key, or value."""


class InvariantViolation(RuntimeError):
    """A quantity the theory guarantees was observed to fail."""


# ----------------------------------------------------------------------
# seeding
# ----------------------------------------------------------------------


def derive_seed(*parts) -> int:
    """Deterministic seed from mixed int/str parts.

    Strings hash through crc32, so the result depends only on the
    values, never on interpreter state; identical parts always give
    the identical seed.
    """
    words = []
    for p in parts:
        if isinstance(p, str):
            words.append(zlib.crc32(p.encode("utf-8")))
        else:
            words.append(int(p) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(words).generate_state(1)[0])


# ----------------------------------------------------------------------
# config files
# ----------------------------------------------------------------------


def parse_config_file(path) -> dict:
    """Read a flat ``key = value`` file into a string mapping."""
    mapping: dict[str, str] = {}
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if key in mapping:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        mapping[key] = value
    return mapping


def apply_overrides(mapping: dict, overrides) -> dict:
    """Merge ``key=value`` override strings over a config mapping."""
    merged = dict(mapping)
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        merged[key.strip()] = value.strip()
    return merged


_REQUIRED = object()


class _Reader:
    """Strict typed access to a config mapping."""

    def __init__(self, mapping: dict):
        self.mapping = mapping
        self.used: set[str] = set()

    def take(self, key: str, cast, default=_REQUIRED):
        self.used.add(key)
        if key not in self.mapping:
            if default is _REQUIRED:
                raise ConfigError(f"missing required config key {key!r}")
            return default
        raw = self.mapping[key]
        try:
            return cast(raw)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"config key {key!r}: bad value {raw!r} ({e})") from e

    def finish(self):
        unknown = sorted(set(self.mapping) - self.used)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")


def _bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _int_list(raw: str) -> list:
    return [int(part) for part in raw.split(",") if part.strip()]


def _opt_int(raw: str):
    return None if raw.lower() in ("none", "full") else int(raw)


def _schedule(raw: str) -> dict:
    """Parse 'auto' or a '500:330,1000:1300' width map."""
    if raw.lower() == "auto":
        return {}
    out = {}
    for part in raw.split(","):
        m_str, sep, n_str = part.partition(":")
        if not sep:
            raise ValueError(f"bad schedule entry {part!r}")
        out[int(m_str)] = int(n_str)
    return out


# ----------------------------------------------------------------------
# dataset sources
# ----------------------------------------------------------------------


def _parse_shape(rest: str):
    m_str, sep, d_str = rest.partition("x")
    if not sep:
        raise ConfigError(f"expected MxD in dataset source, got {rest!r}")
    return int(m_str), int(d_str)


def load_dataset_source(source: str, base_seed: int = 0) -> Dataset:
    """Materialize a dataset from a source string.

    Supported forms:

    * ``blobs:MxD`` (optionally ``blobs:MxD:classes:spread``) --
      balanced multi-class gaussian blobs;
    * ``synthetic:binary:MxD`` / ``synthetic:regression:MxD``;
    * ``idx:IMAGES,LABELS`` -- an IDX image/label file pair;
    * ``cache:PATH`` -- the flat binary cache format.
    """
    kind, sep, rest = source.partition(":")
    if not sep:
        raise ConfigError(f"dataset source {source!r} has no ':'")
    if kind == "blobs":
        parts = rest.split(":")
        m, d = _parse_shape(parts[0])
        n_classes = int(parts[1]) if len(parts) > 1 else 10
        spread = float(parts[2]) if len(parts) > 2 else 0.8
        return make_class_blobs(
            m, d, n_classes=n_classes, seed=derive_seed(base_seed, "data"),
            spread=spread,
        )
    if kind == "synthetic":
        task, sep, shape = rest.partition(":")
        if not sep:
            raise ConfigError(f"synthetic source needs task:MxD, got {rest!r}")
        m, d = _parse_shape(shape)
        return make_synthetic(m, d, task=task, seed=derive_seed(base_seed, "data"))
    if kind == "idx":
        images, sep, labels = rest.partition(",")
        if not sep:
            raise ConfigError("idx source needs 'idx:IMAGES,LABELS'")
        return load_idx(images, labels)
    if kind == "cache":
        return load_cache(rest)
    raise ConfigError(f"unknown dataset source kind {kind!r}")


def prepare_dataset(
    source: str,
    binarize: str = "auto",
    binarize_threshold: int = 5,
    normalize: bool = False,
    base_seed: int = 0,
) -> Dataset:
    """Load a source and apply label binarization / row normalization.

    ``binarize`` is "auto" (binarize whenever multi-class ids are
    present), "true", or "false".
    """
    try:
        ds = load_dataset_source(source, base_seed=base_seed)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"dataset source {source!r}: {e}") from e
    if binarize not in ("auto", "true", "false"):
        raise ConfigError(f"binarize must be auto/true/false, got {binarize!r}")
    wants = (
        binarize == "true"
        or (
            binarize == "auto"
            and ds.class_ids is not None
            and ds.class_ids.max() > 1
        )
    )
    if wants:
        if ds.class_ids is None:
            raise ConfigError("binarize requested but dataset has no class ids")
        ds = binarize_labels(ds, threshold=binarize_threshold)
    if normalize:
        ds = normalize_rows(ds)
    return ds


# ----------------------------------------------------------------------
# sweep grid
# ----------------------------------------------------------------------


@dataclass
class SweepConfig:
    """Grid layout and per-run hyperparameters of an accuracy sweep."""

    sub_sizes: list
    widths: list
    checkpoint_every: int = 1000
    n_checkpoints: int = 8
    n_trials: int = 3
    prune_iterations: int = 200
    selection_batch_size: int | None = None
    activation: str = "relu"
    output_head: str = "sigmoid"
    criterion: str = "bce"
    learning_rate: float = 0.5
    batch_size: int | None = 128
    momentum: float = 0.9
    weight_decay: float = 0.0
    base_seed: int = 0

    @classmethod
    def from_mapping(cls, mapping: dict) -> "SweepConfig":
        r = _Reader(mapping)
        cfg = cls(
            sub_sizes=r.take("sub_sizes", _int_list),
            widths=r.take("widths", _int_list),
            checkpoint_every=r.take("checkpoint_every", int, 1000),
            n_checkpoints=r.take("n_checkpoints", int, 8),
            n_trials=r.take("n_trials", int, 3),
            prune_iterations=r.take("prune_iterations", int, 200),
            selection_batch_size=r.take("selection_batch_size", _opt_int, None),
            activation=r.take("activation", str, "relu"),
            output_head=r.take("output_head", str, "sigmoid"),
            criterion=r.take("criterion", str, "bce"),
            learning_rate=r.take("learning_rate", float, 0.5),
            batch_size=r.take("batch_size", _opt_int, 128),
            momentum=r.take("momentum", float, 0.9),
            weight_decay=r.take("weight_decay", float, 0.0),
            base_seed=r.take("base_seed", int, 0),
        )
        r.finish()
        if not cfg.sub_sizes or not cfg.widths:
            raise ConfigError("sub_sizes and widths must be non-empty")
        if cfg.checkpoint_every < 1 or cfg.n_checkpoints < 1:
            raise ConfigError("checkpoint layout must be positive")
        if cfg.n_trials < 1 or cfg.prune_iterations < 1:
            raise ConfigError("n_trials and prune_iterations must be positive")
        return cfg


@dataclass
class SweepCell:
    """One grid entry: the pruned subnetwork taken from a width-N
    network trained for t iterations on an m-example sub-dataset."""

    m: int
    t: int
    n_neurons: int
    trial: int
    accuracy: float
    loss: float
    dense_loss: float


@dataclass
class SweepGrid:
    cells: list = field(default_factory=list)

    def sorted_cells(self) -> list:
        return sorted(
            self.cells, key=lambda c: (c.n_neurons, c.m, c.trial, c.t)
        )

    def write_csv(self, path) -> None:
        """Long-form export: ``m,t,N,trial,accuracy,loss`` rows."""
        with open(path, "w", newline="") as f:
            f.write("m,t,N,trial,accuracy,loss\n")
            for c in self.sorted_cells():
                f.write(
                    f"{c.m},{c.t},{c.n_neurons},{c.trial},"
                    f"{c.accuracy:.17g},{c.loss:.17g}\n"
                )

    @classmethod
    def read_csv(cls, path) -> "SweepGrid":
        import csv as _csv

        grid = cls()
        with open(path, newline="") as f:
            reader = _csv.reader(f)
            header = next(reader)
            if header != ["m", "t", "N", "trial", "accuracy", "loss"]:
                raise ConfigError(f"{path}: unexpected sweep header {header}")
            for row in reader:
                grid.cells.append(
                    SweepCell(
                        m=int(row[0]),
                        t=int(row[1]),
                        n_neurons=int(row[2]),
                        trial=int(row[3]),
                        accuracy=float(row[4]),
                        loss=float(row[5]),
                        dense_loss=float("nan"),
                    )
                )
        return grid


def _sweep_run(cfg: SweepConfig, ds: Dataset, m_sub: int, width: int, trial: int):
    """All checkpoints of one (sub-size, width, trial) training run."""
    if m_sub < ds.n_examples:
        sub = subsample_uniform(
            ds,
            m_sub,
            seed=derive_seed(cfg.base_seed, "sub", m_sub, trial),
            per_class_uniform=ds.class_ids is not None,
        )
    elif m_sub == ds.n_examples:
        sub = ds
    else:
        raise ConfigError(
            f"sub-dataset size {m_sub} exceeds dataset size {ds.n_examples}"
        )

    net = TwoLayerNetwork(
        n_neurons=width,
        activation=cfg.activation,
        output_head=cfg.output_head,
        criterion=cfg.criterion,
        learning_rate=cfg.learning_rate,
        n_iter=cfg.checkpoint_every,
        batch_size=cfg.batch_size,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        record_every=cfg.checkpoint_every,
        warm_start=True,
        random_state=derive_seed(cfg.base_seed, "train", m_sub, width, trial),
    )
    net.initialize(ds.n_features)

    cells = []
    for step in range(cfg.n_checkpoints + 1):
        t = step * cfg.checkpoint_every
        snapshot = net.copy()
        state = greedy_forward_selection(
            snapshot.scaled_activations(sub.features),
            sub.labels / math.sqrt(sub.n_examples),
            n_steps=cfg.prune_iterations,
            selection_batch_size=cfg.selection_batch_size,
            seed=derive_seed(cfg.base_seed, "prune", m_sub, width, trial, t),
        )
        cells.append(
            SweepCell(
                m=m_sub,
                t=t,
                n_neurons=width,
                trial=trial,
                accuracy=snapshot.accuracy(
                    ds.features, ds.labels, counts=state.counts
                ),
                loss=snapshot.loss(ds.features, ds.labels, counts=state.counts),
                dense_loss=snapshot.loss(sub.features, sub.labels),
            )
        )
        if step < cfg.n_checkpoints:
            net.fit(sub.features, sub.labels)
    return cells


def run_sweep(cfg: SweepConfig, ds: Dataset, n_workers: int = 1) -> SweepGrid:
    """Train/prune over the full (sub-size x width x trial) grid.

    Cell values depend only on (base_seed, m, width, trial, t), so any
    worker count produces the same grid.
    """
    if np.unique(np.asarray(ds.labels)).size > 2:
        raise ConfigError("sweep needs binary labels; binarize the dataset")
    keys = [
        (m_sub, width, trial)
        for width in cfg.widths
        for m_sub in cfg.sub_sizes
        for trial in range(cfg.n_trials)
    ]
    grid = SweepGrid()
    if n_workers <= 1:
        for key in keys:
            grid.cells.extend(_sweep_run(cfg, ds, *key))
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(_sweep_run, cfg, ds, *key) for key in keys]
            for fut in futures:
                grid.cells.extend(fut.result())
    grid.cells = grid.sorted_cells()
    return grid


# ----------------------------------------------------------------------
# threshold traces
# ----------------------------------------------------------------------


@dataclass
class ThresholdRecord:
    n_neurons: int
    m: int
    threshold_t: int | None  # None when the target is never reached


def threshold_trace(
    grid: SweepGrid, rule: str = "fraction", fraction: float = 0.95
) -> list:
    """First checkpoint at which trial-averaged pruned accuracy crosses
    a target, per (width, sub-size).

    Rules: ``fraction`` targets that run's own final accuracy scaled by
    ``fraction``; ``best_accuracy`` targets the best checkpoint-averaged
    accuracy achieved at the largest sub-size of the same width.
    """
    if rule not in ("fraction", "best_accuracy"):
        raise ConfigError(f"unknown threshold rule {rule!r}")
    if not grid.cells:
        raise ConfigError("empty sweep grid")
    if not 0.0 < fraction <= 1.0:
        raise ConfigError("fraction must lie in (0, 1]")

    by_nm: dict = {}
    for c in grid.cells:
        by_nm.setdefault((c.n_neurons, c.m), {}).setdefault(c.t, []).append(
            c.accuracy
        )
    averaged = {
        key: sorted((t, float(np.mean(accs))) for t, accs in series.items())
        for key, series in by_nm.items()
    }

    records = []
    for (n, m), series in sorted(averaged.items()):
        if rule == "fraction":
            target = fraction * series[-1][1]
        else:
            largest = max(mm for (nn, mm) in averaged if nn == n)
            target = max(acc for _, acc in averaged[(n, largest)])
        threshold = next((t for t, acc in series if acc >= target), None)
        records.append(ThresholdRecord(n_neurons=n, m=m, threshold_t=threshold))
    return records


def write_threshold_csv(records, path) -> None:
    with open(path, "w", newline="") as f:
        f.write("n_neurons,m,threshold_t\n")
        for r in records:
            t = "never" if r.threshold_t is None else r.threshold_t
            f.write(f"{r.n_neurons},{r.m},{t}\n")


# ----------------------------------------------------------------------
# membership experiment
# ----------------------------------------------------------------------


@dataclass
class MembershipConfig:
    sizes: list
    n_seeds: int = 3
    epoch_budget: int = 8
    widths: dict = field(default_factory=dict)  # m -> N; empty means auto
    width_slack: float = 1.05
    margin: float = 1e-6
    stop_at_first: bool = True
    normalize: bool = True
    activation: str = "sigmoid"
    learning_rate: float = 1.0
    batch_size: int = 32
    base_seed: int = 0

    @classmethod
    def from_mapping(cls, mapping: dict) -> "MembershipConfig":
        r = _Reader(mapping)
        cfg = cls(
            sizes=r.take("sizes", _int_list),
            n_seeds=r.take("n_seeds", int, 3),
            epoch_budget=r.take("epoch_budget", int, 8),
            widths=r.take("widths", _schedule, {}),
            width_slack=r.take("width_slack", float, 1.05),
            margin=r.take("margin", float, 1e-6),
            stop_at_first=r.take("stop_at_first", _bool, True),
            normalize=r.take("normalize", _bool, True),
            activation=r.take("activation", str, "sigmoid"),
            learning_rate=r.take("learning_rate", float, 1.0),
            batch_size=r.take("batch_size", int, 32),
            base_seed=r.take("base_seed", int, 0),
        )
        r.finish()
        if not cfg.sizes:
            raise ConfigError("sizes must be non-empty")
        if cfg.epoch_budget < 1 or cfg.n_seeds < 1:
            raise ConfigError("epoch_budget and n_seeds must be positive")
        if cfg.margin <= 0:
            raise ConfigError("margin must be positive")
        return cfg

    def width_for(self, m: int, d: int) -> int:
        """Smallest width from the schedule, or the overparameterization
        floor N > m^2/d padded by width_slack."""
        if m in self.widths:
            n = self.widths[m]
        else:
            n = math.ceil(self.width_slack * m * m / d)
        if n * d <= m * m:
            raise ConfigError(
                f"width {n} at m={m}, d={d} breaks the requirement N*d > m^2"
            )
        return n


@dataclass
class MembershipRecord:
    m: int
    seed: int
    epoch: int
    separable: bool
    phase1_objective: float


def _membership_probe(net, ds: Dataset, margin: float):
    phi = net.neuron_outputs(ds.features)
    neg = phi[:, ds.labels == 0.0]
    pos = phi[:, ds.labels == 1.0]
    return classification_membership(neg, pos, margin=margin)


def run_membership_experiment(cfg: MembershipConfig, ds: Dataset) -> list:
    """Per-epoch separability probes across sizes and seeds.

    Each run trains a fresh width-N(m) network on an m-example
    per-class-uniform subsample and asks after every epoch (including
    epoch 0, before any training) whether some convex combination of
    its neurons classifies the subsample perfectly.
    """
    if not np.isin(ds.labels, (0.0, 1.0)).all():
        raise ConfigError("membership experiment needs binarized labels")
    records = []
    for m in cfg.sizes:
        for seed_idx in range(cfg.n_seeds):
            sub = subsample_uniform(
                ds,
                m,
                seed=derive_seed(cfg.base_seed, "msub", m, seed_idx),
                per_class_uniform=ds.class_ids is not None,
            )
            if cfg.normalize:
                sub = normalize_rows(sub)
            width = cfg.width_for(m, sub.n_features)
            steps_per_epoch = -(-m // cfg.batch_size)
            net = TwoLayerNetwork(
                n_neurons=width,
                activation=cfg.activation,
                output_head="sigmoid",
                criterion="bce",
                learning_rate=cfg.learning_rate,
                n_iter=steps_per_epoch,
                batch_size=cfg.batch_size,
                record_every=steps_per_epoch,
                warm_start=True,
                random_state=derive_seed(cfg.base_seed, "mnet", m, seed_idx),
            )
            net.initialize(sub.n_features)
            for epoch in range(cfg.epoch_budget + 1):
                if epoch > 0:
                    net.fit(sub.features, sub.labels)
                probe = _membership_probe(net, sub, cfg.margin)
                records.append(
                    MembershipRecord(
                        m=m,
                        seed=seed_idx,
                        epoch=epoch,
                        separable=probe.inside,
                        phase1_objective=probe.phase1_objective,
                    )
                )
                if probe.inside and cfg.stop_at_first:
                    break
    return records


def first_satisfied_epochs(records) -> list:
    """(m, seed, first separable epoch or None) summaries."""
    seen: dict = {}
    for r in records:
        key = (r.m, r.seed)
        seen.setdefault(key, None)
        if r.separable and seen[key] is None:
            seen[key] = r.epoch
    return [(m, s, e) for (m, s), e in sorted(seen.items())]


def write_membership_csv(records, path) -> None:
    with open(path, "w", newline="") as f:
        f.write("m,seed,epoch,separable,phase1_objective\n")
        for r in records:
            f.write(
                f"{r.m},{r.seed},{r.epoch},{int(r.separable)},"
                f"{r.phase1_objective:.17g}\n"
            )


def write_first_epoch_csv(records, path) -> None:
    with open(path, "w", newline="") as f:
        f.write("m,seed,first_epoch\n")
        for m, s, e in first_satisfied_epochs(records):
            f.write(f"{m},{s},{'never' if e is None else e}\n")


# ----------------------------------------------------------------------
# bound report
# ----------------------------------------------------------------------


@dataclass
class BoundReportConfig:
    m: int = 64
    d: int = 16
    n_neurons: int = 256
    n_iter: int = 500
    prune_iterations: int = 100
    learning_rate: float = 2.0
    activation: str = "sigmoid"
    record_every: int = 25
    rate_min_iteration: int = 0
    zeta: float = 1.0
    task: str = "binary"
    base_seed: int = 0

    @classmethod
    def from_mapping(cls, mapping: dict) -> "BoundReportConfig":
        r = _Reader(mapping)
        cfg = cls(
            m=r.take("m", int, 64),
            d=r.take("d", int, 16),
            n_neurons=r.take("n_neurons", int, 256),
            n_iter=r.take("n_iter", int, 500),
            prune_iterations=r.take("prune_iterations", int, 100),
            learning_rate=r.take("learning_rate", float, 2.0),
            activation=r.take("activation", str, "sigmoid"),
            record_every=r.take("record_every", int, 25),
            rate_min_iteration=r.take("rate_min_iteration", int, 0),
            zeta=r.take("zeta", float, 1.0),
            task=r.take("task", str, "binary"),
            base_seed=r.take("base_seed", int, 0),
        )
        r.finish()
        try:
            require_smooth(cfg.activation)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if cfg.n_iter < cfg.record_every * 3:
            raise ConfigError(
                "n_iter must cover at least three recording points for the "
                "decay-rate fit"
            )
        return cfg


@dataclass
class BoundReport:
    ks: np.ndarray
    observed: np.ndarray
    selection_bounds: np.ndarray
    pretraining_bounds: np.ndarray
    hull_diameter: float
    dense_loss: float
    decay_rate: float
    rate_constant: float
    l0: float


def run_bound_report(cfg: BoundReportConfig) -> BoundReport:
    """Train in theory mode, prune, and compare observed selection
    losses against the closed-form bounds.

    Raises InvariantViolation if any step's observed loss exceeds its
    unconditional selection bound by more than 1e-9.
    """
    ds = make_synthetic(
        cfg.m, cfg.d, task=cfg.task, seed=derive_seed(cfg.base_seed, "bdata")
    )
    net = TwoLayerNetwork(
        n_neurons=cfg.n_neurons,
        activation=cfg.activation,
        output_head="linear",
        criterion="l2",
        learning_rate=cfg.learning_rate,
        n_iter=cfg.n_iter,
        batch_size=1,
        momentum=0.0,
        weight_decay=0.0,
        record_every=cfg.record_every,
        random_state=derive_seed(cfg.base_seed, "bnet"),
    )
    net.initialize(cfg.d)
    l0 = net.residual_norm_squared(ds.features, ds.labels)
    net.warm_start = True
    net.fit(ds.features, ds.labels)

    rho = fit_decay_rate(net.trace_, min_iteration=cfg.rate_min_iteration)
    if rho >= 1.0:
        raise InvariantViolation(
            "trace shows no geometric loss decay; cannot estimate the rate "
            "constant"
        )
    c = estimate_c(rho, cfg.m, cfg.d, mode="sgd")

    phi = net.scaled_activations(ds.features)
    y_vec = ds.labels / math.sqrt(cfg.m)
    state = greedy_forward_selection(phi, y_vec, n_steps=cfg.prune_iterations)
    observed = np.asarray(state.loss_history)
    hull_diameter = diameter(phi)
    dense_loss = half_squared_error(phi.mean(axis=0), y_vec)

    ks = np.arange(1, cfg.prune_iterations + 1)
    selection = np.array(
        [
            selection_loss_bound(int(k), observed[0], hull_diameter, dense_loss)
            for k in ks
        ]
    )
    pretraining = np.array(
        [
            pretraining_bound(
                BoundParams(
                    m=cfg.m,
                    d=cfg.d,
                    k=int(k),
                    t=cfg.n_iter,
                    c=c,
                    l0=l0,
                    zeta=cfg.zeta,
                ),
                observed[0],
                hull_diameter,
            )
            for k in ks
        ]
    )

    violated = selection_bound_violations(observed, hull_diameter, dense_loss)
    if violated.any():
        k_bad = int(np.flatnonzero(violated)[0]) + 1
        raise InvariantViolation(
            f"selection loss at step {k_bad} exceeds its bound: "
            f"{observed[k_bad - 1]:.17g} > "
            f"{selection[k_bad - 1]:.17g} + 1e-9"
        )
    return BoundReport(
        ks=ks,
        observed=observed,
        selection_bounds=selection,
        pretraining_bounds=pretraining,
        hull_diameter=hull_diameter,
        dense_loss=dense_loss,
        decay_rate=rho,
        rate_constant=c,
        l0=l0,
    )


# ----------------------------------------------------------------------
# gradient check
# ----------------------------------------------------------------------


def run_gradcheck(n_cases: int = 20, seed: int = 0, step: float = 1e-6):
    """Central-difference verification of the analytic gradient.

    Each case draws a fresh small network and batch, alternating over
    sigmoid/tanh activations with the l2 and bce criteria, and compares
    sampled weight coordinates.  Returns (max relative error, lines).
    """
    combos = [
        ("sigmoid", "linear", "l2"),
        ("tanh", "linear", "l2"),
        ("sigmoid", "sigmoid", "l2"),
        ("tanh", "sigmoid", "l2"),
        ("sigmoid", "sigmoid", "bce"),
        ("tanh", "sigmoid", "bce"),
    ]
    rng = np.random.default_rng(seed)
    worst = 0.0
    lines = []
    for case in range(n_cases):
        activation, head, criterion = combos[case % len(combos)]
        n = int(rng.integers(3, 12))
        d = int(rng.integers(2, 8))
        b = int(rng.integers(2, 10))
        net = TwoLayerNetwork(
            n_neurons=n,
            activation=activation,
            output_head=head,
            criterion=criterion,
            random_state=int(rng.integers(0, 2**31)),
        )
        net.initialize(d)
        X = rng.standard_normal((b, d))
        y = (
            rng.integers(0, 2, size=b).astype(np.float64)
            if criterion == "bce"
            else rng.standard_normal(b)
        )
        grad_outer, grad_inner = net.loss_gradient(X, y)

        case_err = 0.0
        for _ in range(4):
            i = int(rng.integers(0, n))
            analytic = grad_outer[i]
            net.outer_[i] += step
            up = net.loss(X, y)
            net.outer_[i] -= 2 * step
            down = net.loss(X, y)
            net.outer_[i] += step
            fd = (up - down) / (2 * step)
            case_err = max(
                case_err, abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-10)
            )
        for _ in range(4):
            i = int(rng.integers(0, n))
            j = int(rng.integers(0, d))
            analytic = grad_inner[i, j]
            net.inner_[i, j] += step
            up = net.loss(X, y)
            net.inner_[i, j] -= 2 * step
            down = net.loss(X, y)
            net.inner_[i, j] += step
            fd = (up - down) / (2 * step)
            case_err = max(
                case_err, abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-10)
            )
        worst = max(worst, case_err)
        lines.append(
            f"case {case}: activation={activation} head={head} "
            f"criterion={criterion} max_rel_err={case_err:.3e}"
        )
    return worst, lines
