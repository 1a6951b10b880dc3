"""Harness: seeding, config parsing, sweeps, membership runs, CLI."""

import numpy as np
import pytest

from polyprune import (
    BoundReportConfig,
    ConfigError,
    InvariantViolation,
    MembershipConfig,
    SweepCell,
    SweepConfig,
    SweepGrid,
    apply_overrides,
    derive_seed,
    first_satisfied_epochs,
    parse_config_file,
    prepare_dataset,
    run_bound_report,
    run_gradcheck,
    run_membership_experiment,
    run_sweep,
    threshold_trace,
    write_threshold_csv,
)
from polyprune.cli import main
from polyprune.experiments import _sweep_run


class TestDeriveSeed:
    def test_deterministic(self):
        assert derive_seed(3, "sub", 100, 1) == derive_seed(3, "sub", 100, 1)

    def test_part_order_matters(self):
        assert derive_seed(1, 2) != derive_seed(2, 1)

    def test_labels_disambiguate(self):
        assert derive_seed(0, "train", 5) != derive_seed(0, "prune", 5)

    def test_distinct_over_grid(self):
        seeds = {
            derive_seed(0, "train", m, w, t)
            for m in (128, 256)
            for w in (64, 512)
            for t in range(3)
        }
        assert len(seeds) == 12

    def test_negative_ints_masked(self):
        assert derive_seed(-1) == derive_seed(0xFFFFFFFF)


class TestConfigFile:
    def test_parse_basic(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("a = 1\n# comment\nb = two  # trailing\n\nc=3\n")
        assert parse_config_file(p) == {"a": "1", "b": "two", "c": "3"}

    def test_duplicate_key(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("a = 1\na = 2\n")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_file(p)

    def test_malformed_line_cites_position(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("a = 1\nnonsense\n")
        with pytest.raises(ConfigError, match=":2"):
            parse_config_file(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config_file(tmp_path / "absent.cfg")

    def test_overrides_win(self):
        merged = apply_overrides({"a": "1", "b": "2"}, ["b=3", "c = 4"])
        assert merged == {"a": "1", "b": "3", "c": "4"}

    def test_bad_override(self):
        with pytest.raises(ConfigError, match="key=value"):
            apply_overrides({}, ["oops"])


class TestPrepareDataset:
    def test_blobs_auto_binarize(self):
        ds = prepare_dataset("blobs:40x6", base_seed=1)
        assert set(np.unique(ds.labels)) == {0.0, 1.0}
        assert ds.n_examples == 40

    def test_two_class_blobs_skip_binarize(self):
        ds = prepare_dataset("blobs:16x8:2", base_seed=1)
        assert set(np.unique(ds.labels)) == {0.0, 1.0}

    def test_synthetic_source(self):
        ds = prepare_dataset("synthetic:binary:30x5", base_seed=0)
        assert ds.n_examples == 30 and ds.n_features == 5

    def test_binarize_forced_without_ids_fails(self):
        with pytest.raises(ConfigError, match="class ids"):
            prepare_dataset("synthetic:regression:10x4", binarize="true")

    def test_normalize_flag(self):
        ds = prepare_dataset("synthetic:regression:20x4", normalize=True)
        np.testing.assert_allclose(
            np.linalg.norm(ds.features, axis=1), 1.0, atol=1e-12
        )

    def test_cache_source(self, tmp_path):
        from polyprune import save_cache

        base = prepare_dataset("synthetic:binary:12x3", base_seed=2)
        path = tmp_path / "ds.bin"
        save_cache(base, path)
        back = prepare_dataset(f"cache:{path}")
        np.testing.assert_array_equal(back.features, base.features)

    def test_idx_source(self, tmp_path, rng):
        from test_datasets import write_idx_pair

        pixels = rng.integers(0, 256, size=(20, 3, 3), dtype=np.uint8)
        classes = np.tile(np.arange(10, dtype=np.uint8), 2)
        images, labels = write_idx_pair(tmp_path, pixels, classes)
        ds = prepare_dataset(f"idx:{images},{labels}")
        assert ds.n_examples == 20
        assert set(np.unique(ds.labels)) == {0.0, 1.0}  # auto-binarized

    def test_unknown_source_kind(self):
        with pytest.raises(ConfigError, match="unknown dataset source"):
            prepare_dataset("parquet:foo")

    def test_bad_shape(self):
        with pytest.raises(ConfigError):
            prepare_dataset("blobs:40by6")

    def test_bad_binarize_value(self):
        with pytest.raises(ConfigError, match="binarize"):
            prepare_dataset("blobs:40x6", binarize="maybe")


class TestSweepConfig:
    def test_from_mapping_defaults(self):
        cfg = SweepConfig.from_mapping({"sub_sizes": "10,20", "widths": "8"})
        assert cfg.sub_sizes == [10, 20]
        assert cfg.widths == [8]
        assert cfg.n_trials == 3
        assert cfg.batch_size == 128

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            SweepConfig.from_mapping(
                {"sub_sizes": "10", "widths": "8", "typo_key": "1"}
            )

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="sub_sizes"):
            SweepConfig.from_mapping({"widths": "8"})

    def test_bad_cast_names_key(self):
        with pytest.raises(ConfigError, match="checkpoint_every"):
            SweepConfig.from_mapping(
                {"sub_sizes": "10", "widths": "8", "checkpoint_every": "soon"}
            )

    def test_full_batch_size_keyword(self):
        cfg = SweepConfig.from_mapping(
            {"sub_sizes": "10", "widths": "8", "batch_size": "full"}
        )
        assert cfg.batch_size is None


def tiny_sweep_inputs():
    cfg = SweepConfig(
        sub_sizes=[20, 40],
        widths=[6],
        checkpoint_every=8,
        n_checkpoints=2,
        n_trials=2,
        prune_iterations=8,
        activation="sigmoid",
        learning_rate=0.5,
        batch_size=8,
        momentum=0.0,
        base_seed=7,
    )
    ds = prepare_dataset("blobs:40x6", base_seed=7)
    return cfg, ds


class TestRunSweep:
    def test_grid_shape_and_determinism(self, tmp_path):
        cfg, ds = tiny_sweep_inputs()
        grid = run_sweep(cfg, ds)
        # 2 sizes x 1 width x 2 trials x 3 checkpoints (t = 0, 8, 16)
        assert len(grid.cells) == 12
        assert {c.t for c in grid.cells} == {0, 8, 16}
        again = run_sweep(cfg, ds)
        for a, b in zip(grid.cells, again.cells):
            assert (a.m, a.t, a.n_neurons, a.trial) == (b.m, b.t, b.n_neurons, b.trial)
            assert a.accuracy == b.accuracy
            assert a.loss == b.loss

    def test_parallel_equals_serial_bytes(self, tmp_path):
        cfg, ds = tiny_sweep_inputs()
        serial = run_sweep(cfg, ds, n_workers=1)
        parallel = run_sweep(cfg, ds, n_workers=2)
        p1, p2 = tmp_path / "serial.csv", tmp_path / "parallel.csv"
        serial.write_csv(p1)
        parallel.write_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_single_cell_isolation(self):
        # one (m, width, trial) run recomputed alone matches the grid
        cfg, ds = tiny_sweep_inputs()
        grid = run_sweep(cfg, ds)
        alone = _sweep_run(cfg, ds, 20, 6, 1)
        matching = [
            c for c in grid.cells if (c.m, c.n_neurons, c.trial) == (20, 6, 1)
        ]
        assert len(alone) == len(matching) == 3
        for a, b in zip(sorted(alone, key=lambda c: c.t), matching):
            assert a.t == b.t
            assert a.accuracy == b.accuracy
            assert a.loss == b.loss

    def test_multiclass_labels_rejected(self):
        cfg, _ = tiny_sweep_inputs()
        from polyprune import make_class_blobs

        raw = make_class_blobs(40, 6, seed=1)  # labels 0..9
        with pytest.raises(ConfigError, match="binary"):
            run_sweep(cfg, raw)

    def test_oversize_subset_rejected(self):
        cfg, ds = tiny_sweep_inputs()
        cfg.sub_sizes = [80]
        with pytest.raises(ConfigError, match="exceeds"):
            run_sweep(cfg, ds)

    def test_csv_round_trip(self, tmp_path):
        cfg, ds = tiny_sweep_inputs()
        grid = run_sweep(cfg, ds)
        path = tmp_path / "sweep.csv"
        grid.write_csv(path)
        assert path.read_text().splitlines()[0] == "m,t,N,trial,accuracy,loss"
        back = SweepGrid.read_csv(path)
        assert len(back.cells) == len(grid.cells)
        for a, b in zip(back.cells, grid.cells):
            assert a.accuracy == b.accuracy


def grid_from(rows):
    """rows: (m, t, N, trial, accuracy)"""
    return SweepGrid(
        cells=[
            SweepCell(m=m, t=t, n_neurons=n, trial=tr, accuracy=acc,
                      loss=0.0, dense_loss=0.0)
            for m, t, n, tr, acc in rows
        ]
    )


class TestThresholdTrace:
    def test_fraction_rule_first_crossing(self):
        grid = grid_from([
            (10, 0, 4, 0, 0.50),
            (10, 1, 4, 0, 0.80),
            (10, 2, 4, 0, 0.90),
            (10, 3, 4, 0, 0.95),
        ])
        rec = threshold_trace(grid, rule="fraction", fraction=0.95)[0]
        # target 0.9025: first crossing at t=3
        assert rec.threshold_t == 3
        rec = threshold_trace(grid, rule="fraction", fraction=0.9)[0]
        assert rec.threshold_t == 2

    def test_fraction_rule_averages_trials(self):
        grid = grid_from([
            (10, 0, 4, 0, 0.40), (10, 0, 4, 1, 0.60),
            (10, 1, 4, 0, 0.80), (10, 1, 4, 1, 1.00),
        ])
        rec = threshold_trace(grid, rule="fraction", fraction=0.95)[0]
        # averaged series 0.5, 0.9; target 0.855 -> t=1
        assert rec.threshold_t == 1

    def test_best_accuracy_rule_and_never(self, tmp_path):
        grid = grid_from([
            (10, 0, 4, 0, 0.50), (10, 1, 4, 0, 0.60),
            (20, 0, 4, 0, 0.70), (20, 1, 4, 0, 0.90),
        ])
        recs = threshold_trace(grid, rule="best_accuracy")
        by_m = {r.m: r.threshold_t for r in recs}
        # target for every m is 0.9 (best of m=20); m=10 never gets there
        assert by_m[10] is None
        assert by_m[20] == 1
        path = tmp_path / "thresholds.csv"
        write_threshold_csv(recs, path)
        text = path.read_text()
        assert text.splitlines()[0] == "n_neurons,m,threshold_t"
        assert "4,10,never" in text
        assert "4,20,1" in text

    def test_unknown_rule(self):
        grid = grid_from([(10, 0, 4, 0, 0.5)])
        with pytest.raises(ConfigError):
            threshold_trace(grid, rule="median")

    def test_empty_grid(self):
        with pytest.raises(ConfigError):
            threshold_trace(SweepGrid())


class TestMembershipConfig:
    def test_width_auto(self):
        cfg = MembershipConfig(sizes=[8])
        # ceil(1.05 * 64 / 8) = 9 and 9*8 > 64
        assert cfg.width_for(8, 8) == 9

    def test_width_schedule_wins(self):
        cfg = MembershipConfig(sizes=[8], widths={8: 12})
        assert cfg.width_for(8, 8) == 12

    def test_underparameterized_schedule_rejected(self):
        cfg = MembershipConfig(sizes=[8], widths={8: 8})
        with pytest.raises(ConfigError, match="N\\*d > m\\^2"):
            cfg.width_for(8, 8)

    def test_from_mapping(self):
        cfg = MembershipConfig.from_mapping(
            {"sizes": "8,16", "widths": "8:9,16:33", "epoch_budget": "2"}
        )
        assert cfg.sizes == [8, 16]
        assert cfg.widths == {8: 9, 16: 33}
        assert cfg.epoch_budget == 2


class TestMembershipRun:
    def test_probe_schedule_and_stop_at_first(self):
        cfg = MembershipConfig(
            sizes=[8], n_seeds=2, epoch_budget=2, batch_size=4, base_seed=3
        )
        ds = prepare_dataset("blobs:16x8:2", base_seed=3)
        records = run_membership_experiment(cfg, ds)
        for seed in (0, 1):
            mine = [r for r in records if r.seed == seed]
            # epoch 0 probed before any training
            assert mine[0].epoch == 0
            epochs = [r.epoch for r in mine]
            assert epochs == sorted(epochs)
            # stop_at_first: nothing recorded past the first separable epoch
            seps = [r.epoch for r in mine if r.separable]
            if seps:
                assert max(epochs) == min(seps)

    def test_deterministic(self):
        cfg = MembershipConfig(
            sizes=[8], n_seeds=1, epoch_budget=1, batch_size=4, base_seed=5
        )
        ds = prepare_dataset("blobs:16x8:2", base_seed=5)
        a = run_membership_experiment(cfg, ds)
        b = run_membership_experiment(cfg, ds)
        assert [(r.m, r.seed, r.epoch, r.separable) for r in a] == [
            (r.m, r.seed, r.epoch, r.separable) for r in b
        ]
        assert [r.phase1_objective for r in a] == [r.phase1_objective for r in b]

    def test_first_satisfied_summary(self):
        from polyprune import MembershipRecord

        records = [
            MembershipRecord(8, 0, 0, False, 1.0),
            MembershipRecord(8, 0, 1, True, 0.0),
            MembershipRecord(8, 1, 0, False, 2.0),
        ]
        assert first_satisfied_epochs(records) == [(8, 0, 1), (8, 1, None)]

    def test_multiclass_labels_rejected(self):
        from polyprune import make_class_blobs

        cfg = MembershipConfig(sizes=[8], n_seeds=1)
        with pytest.raises(ConfigError, match="binarized"):
            run_membership_experiment(cfg, make_class_blobs(40, 6, seed=0))


class TestBoundReport:
    def test_small_report(self):
        cfg = BoundReportConfig(
            m=16, d=8, n_neurons=40, n_iter=75, prune_iterations=20,
            record_every=25, base_seed=11,
        )
        report = run_bound_report(cfg)
        assert report.ks.tolist() == list(range(1, 21))
        assert 0.0 < report.decay_rate < 1.0
        assert report.rate_constant > 0.0
        assert report.l0 > 0.0
        assert report.hull_diameter > 0.0
        # every observed loss honors its unconditional bound
        assert (report.observed <= report.selection_bounds + 1e-9).all()

    def test_relu_rejected_in_config(self):
        with pytest.raises(ConfigError, match="second derivative"):
            BoundReportConfig.from_mapping({"activation": "relu"})

    def test_record_budget_validated(self):
        with pytest.raises(ConfigError, match="three recording points"):
            BoundReportConfig.from_mapping({"n_iter": "50", "record_every": "25"})


class TestGradcheckHarness:
    def test_small_run_accurate(self):
        worst, lines = run_gradcheck(n_cases=6, seed=0)
        assert worst < 1e-5
        assert len(lines) == 6
        assert "max_rel_err" in lines[0]


class TestCli:
    def test_gradcheck_exit_zero(self, capsys):
        assert main(["gradcheck", "--cases", "3"]) == 0
        out = capsys.readouterr().out
        assert "max relative error" in out

    def test_train_then_prune(self, tmp_path, capsys):
        rc = main([
            "train",
            "--out-dir", str(tmp_path / "train"),
            "--set", "dataset=synthetic:binary:16x4",
            "--set", "n_neurons=8",
            "--set", "n_iter=20",
            "--set", "record_every=10",
            "--set", "batch_size=4",
        ])
        assert rc == 0
        trace = tmp_path / "train" / "trace.csv"
        checkpoint = tmp_path / "train" / "checkpoint.bin"
        assert trace.exists() and checkpoint.exists()

        rc = main([
            "prune",
            "--out-dir", str(tmp_path / "prune"),
            "--set", "dataset=synthetic:binary:16x4",
            "--set", f"checkpoint={checkpoint}",
            "--set", "n_select=5",
        ])
        assert rc == 0
        assert (tmp_path / "prune" / "selection.csv").exists()
        assert (tmp_path / "prune" / "counts.csv").exists()
        out = capsys.readouterr().out
        assert "selected 5 neurons" in out

    def test_train_rerun_byte_identical(self, tmp_path):
        argv = [
            "train",
            "--set", "dataset=synthetic:binary:16x4",
            "--set", "n_neurons=8",
            "--set", "n_iter=20",
            "--set", "record_every=10",
            "--set", "batch_size=4",
        ]
        assert main(argv + ["--out-dir", str(tmp_path / "a")]) == 0
        assert main(argv + ["--out-dir", str(tmp_path / "b")]) == 0
        for name in ("trace.csv", "checkpoint.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_config_file_with_override(self, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text(
            "dataset = synthetic:binary:16x4\n"
            "n_neurons = 8\n"
            "n_iter = 10\n"
            "record_every = 5\n"
        )
        rc = main([
            "train", "-c", str(cfg),
            "--set", "n_iter=20",
            "--out-dir", str(tmp_path / "out"),
        ])
        assert rc == 0
        last = (tmp_path / "out" / "trace.csv").read_text().splitlines()[-1]
        assert last.startswith("20,")

    def test_sweep_and_trace_commands(self, tmp_path, capsys):
        rc = main([
            "sweep",
            "--out-dir", str(tmp_path),
            "--set", "dataset=blobs:40x6",
            "--set", "sub_sizes=20,40",
            "--set", "widths=6",
            "--set", "checkpoint_every=8",
            "--set", "n_checkpoints=1",
            "--set", "n_trials=1",
            "--set", "prune_iterations=6",
            "--set", "activation=sigmoid",
            "--set", "batch_size=8",
            "--set", "momentum=0.0",
        ])
        assert rc == 0
        assert (tmp_path / "sweep.csv").exists()
        assert (tmp_path / "thresholds.csv").exists()

        rc = main([
            "trace",
            "--grid", str(tmp_path / "sweep.csv"),
            "--rule", "fraction",
            "--fraction", "0.9",
            "--out-dir", str(tmp_path / "trace_out"),
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "threshold_t=" in out

    def test_membership_command(self, tmp_path, capsys):
        rc = main([
            "membership",
            "--out-dir", str(tmp_path),
            "--set", "dataset=blobs:16x8:2",
            "--set", "sizes=8",
            "--set", "n_seeds=1",
            "--set", "epoch_budget=1",
            "--set", "batch_size=4",
        ])
        assert rc == 0
        assert (tmp_path / "membership.csv").exists()
        assert (tmp_path / "first_epoch.csv").exists()
        out = capsys.readouterr().out
        assert "phase1_objective=" in out
        assert ("INSIDE" in out) or ("OUTSIDE" in out)

    def test_bounds_command(self, tmp_path, capsys):
        rc = main([
            "bounds",
            "--out-dir", str(tmp_path),
            "--set", "m=16",
            "--set", "d=8",
            "--set", "n_neurons=40",
            "--set", "n_iter=75",
            "--set", "record_every=25",
            "--set", "prune_iterations=10",
            "--set", "base_seed=11",
        ])
        assert rc == 0
        bounds = tmp_path / "bounds.csv"
        assert bounds.exists()
        header = bounds.read_text().splitlines()[0]
        assert header == "k,selection_bound,pretraining_bound,observed_loss"
        out = capsys.readouterr().out
        assert "selection bound holds" in out

    def test_unknown_key_exit_one(self, capsys):
        rc = main([
            "train",
            "--set", "dataset=synthetic:binary:16x4",
            "--set", "bogus_key=1",
        ])
        assert rc == 1
        assert "config error" in capsys.readouterr().err

    def test_missing_required_key_exit_one(self, tmp_path, capsys):
        rc = main(["sweep", "--out-dir", str(tmp_path)])
        assert rc == 1

    def test_bad_subcommand_exit_one(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_divergence_exit_two(self, tmp_path, capsys):
        rc = main([
            "train",
            "--out-dir", str(tmp_path),
            "--set", "dataset=synthetic:binary:16x4",
            "--set", "n_neurons=8",
            "--set", "n_iter=30",
            "--set", "record_every=10",
            "--set", "learning_rate=1e9",
        ])
        assert rc == 2
        assert "invariant violation" in capsys.readouterr().err

    def test_missing_grid_exit_three(self, tmp_path, capsys):
        rc = main([
            "trace",
            "--grid", str(tmp_path / "no_such.csv"),
            "--out-dir", str(tmp_path),
        ])
        assert rc == 3
        assert "i/o error" in capsys.readouterr().err
