import numpy as np
import pytest

from conftest import synthetic_digits, write_idx_pair
from hqnet import cli
from hqnet import quantum_model as qm
from hqnet import runner
from hqnet.quantum_model import OutputSelection
from oracles import naive_median, nearest_rank_percentile

CLASSICAL_TEMPLATE = """\
model:
  encoder_units: {encoder_units}
  middle: classical
  classical_units: 2
train:
  batch_size: {batch_size}
  epochs: {epochs}
  learning_rate: 0.0001
  train_size: {train_size}
  val_size: {val_size}
data:
  images: {images}
  labels: {labels}
run:
  base_seed: {base_seed}
  bootstrap_count: {bootstrap_count}
  out_dir: {out_dir}
"""

QUANTUM_TEMPLATE = """\
model:
  encoder_units: {encoder_units}
  middle: quantum
  qubits: {qubits}
  layout: {layout}
  selection: {selection}
train:
  batch_size: {batch_size}
  epochs: {epochs}
  learning_rate: {learning_rate}
  train_size: {train_size}
  val_size: {val_size}
data:
  images: {images}
  labels: {labels}
run:
  base_seed: {base_seed}
  bootstrap_count: {bootstrap_count}
  out_dir: {out_dir}
"""


def classical_config(**overrides):
    args = dict(encoder_units=3, batch_size=8, epochs=2, train_size=48,
                val_size=16, images="unused-images", labels="unused-labels",
                base_seed=11, bootstrap_count=2, out_dir="unused-out")
    args.update(overrides)
    return CLASSICAL_TEMPLATE.format(**args)


def quantum_config(**overrides):
    args = dict(encoder_units=3, qubits=1, layout="u1-all", selection="full",
                batch_size=8, epochs=2, learning_rate=0.0001, train_size=48,
                val_size=16, images="unused-images", labels="unused-labels",
                base_seed=11, bootstrap_count=2, out_dir="unused-out")
    args.update(overrides)
    return QUANTUM_TEMPLATE.format(**args)


def make_record(val_acc, train_acc=None, seed=0):
    return runner.RunRecord(seed, [0.5], [train_acc if train_acc is not None
                                          else val_acc], [val_acc],
                            train_acc if train_acc is not None else val_acc,
                            val_acc)


@pytest.fixture()
def idx_files(tmp_path):
    images, labels = synthetic_digits(96, seed=4)
    return write_idx_pair(tmp_path, images, labels, compress=True)


class TestParseConfig:
    def test_classical_round_trip(self):
        config = runner.parse_config(classical_config())
        assert config.model.middle == "classical"
        assert config.model.encoder_units == 3
        assert config.learning_rate == 0.0001
        again = runner.parse_config(runner.format_config(config))
        assert again == config

    def test_quantum_round_trip(self):
        text = quantum_config(encoder_units=15, qubits=2,
                              layout="u1-all, u2-even, u1-all", selection="min")
        config = runner.parse_config(text)
        assert config.model.layout_tokens == ("u1-all", "u2-even", "u1-all")
        assert config.model.selection == "min"
        assert runner.parse_config(runner.format_config(config)) == config

    def test_comments_and_blank_lines(self):
        text = "# leading comment\n" + classical_config() + "\n# trailing\n"
        runner.parse_config(text)

    def test_unknown_key_named(self):
        text = classical_config().replace("learning_rate:", "learning_rte:")
        with pytest.raises(runner.ConfigError, match="train.learning_rte"):
            runner.parse_config(text)

    def test_missing_key_named(self):
        text = classical_config().replace("  batch_size: 8\n", "")
        with pytest.raises(runner.ConfigError, match="train.batch_size"):
            runner.parse_config(text)

    def test_missing_section(self):
        text = classical_config().split("run:")[0]
        with pytest.raises(runner.ConfigError, match="run"):
            runner.parse_config(text)

    def test_unknown_section(self):
        with pytest.raises(runner.ConfigError, match="unknown section"):
            runner.parse_config(classical_config() + "extra:\n  a: 1\n")

    def test_bad_integer(self):
        text = classical_config(batch_size="many")
        with pytest.raises(runner.ConfigError, match="train.batch_size"):
            runner.parse_config(text)

    def test_duplicate_key(self):
        text = classical_config() + "run:\n  base_seed: 1\n"
        with pytest.raises(runner.ConfigError, match="duplicate"):
            runner.parse_config(text)

    def test_dimension_mismatch_fails_at_parse(self):
        text = quantum_config(encoder_units=5, qubits=2,
                              layout="u1-all, u2-even, u1-all")
        with pytest.raises(runner.ConfigError, match="encoder->middle"):
            runner.parse_config(text)

    def test_classical_units_rejected_for_quantum(self):
        text = quantum_config().replace("  qubits: 1\n",
                                        "  qubits: 1\n  classical_units: 2\n")
        with pytest.raises(runner.ConfigError, match="classical_units"):
            runner.parse_config(text)

    def test_bad_layout_token_reported(self):
        text = quantum_config(layout="u1-all, u9-odd")
        with pytest.raises(runner.ConfigError, match="u9-odd"):
            runner.parse_config(text)

    def test_bad_selection(self):
        with pytest.raises(runner.ConfigError, match="model.selection"):
            runner.parse_config(quantum_config(selection="all"))

    def test_parameter_counts(self):
        classical = runner.parse_config(classical_config())
        model = runner.build_model(classical, np.random.default_rng(0))
        from hqnet.hybrid_model import total_parameters
        # 784*3+3 encoder, 3*2+2 middle, 2*2+2 decoder
        assert total_parameters(model) == 2369
        quantum = runner.parse_config(quantum_config())
        qmodel = runner.build_model(quantum, np.random.default_rng(0))
        # 784*3+3 encoder, quantum middle holds nothing, 2*2+2 decoder
        assert total_parameters(qmodel) == 2361


class TestSummarize:
    def test_ten_point_example(self):
        accs = [round(0.1 * k, 1) for k in range(1, 11)]
        summary = runner.summarize([make_record(a) for a in accs])
        assert summary.median_val_accuracy == pytest.approx(0.55)
        assert summary.vr90 == pytest.approx(0.9)
        assert summary.ci68_low == pytest.approx(0.2)
        assert summary.ci68_high == pytest.approx(0.9)

    def test_identical_accuracies_zero_width_ci(self):
        summary = runner.summarize([make_record(0.97)] * 5)
        assert summary.ci68_low == summary.ci68_high == 0.97
        assert not summary.ci68_degenerate

    def test_single_record_flagged_degenerate(self):
        summary = runner.summarize([make_record(0.95)])
        assert summary.ci68_degenerate
        assert summary.median_val_accuracy == 0.95

    def test_against_sort_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            accs = rng.uniform(0.85, 1.0, size=rng.integers(1, 60)).tolist()
            records = [make_record(a) for a in accs]
            summary = runner.summarize(records)
            assert summary.median_val_accuracy == naive_median(accs)
            assert summary.vr90 == nearest_rank_percentile(accs, 90)
            assert summary.ci68_low == nearest_rank_percentile(accs, 16)
            assert summary.ci68_high == nearest_rank_percentile(accs, 84)

    def test_histogram_counts(self):
        records = [make_record(a) for a in (0.85, 0.9005, 0.9995, 1.0)]
        summary = runner.summarize(records)
        assert summary.histogram_underflow == 1
        assert sum(summary.histogram_counts) == 3
        assert len(summary.histogram_counts) == 50
        assert summary.histogram_counts[0] == 1   # 0.9005 in [0.900, 0.902)
        assert summary.histogram_counts[-1] == 2  # 0.9995 and 1.0 in the top bin

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        accs = rng.uniform(0.9, 1.0, size=12)
        records = [make_record(a) for a in accs]
        shuffled = [records[i] for i in rng.permutation(12)]
        assert runner.summarize(records) == runner.summarize(shuffled)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            runner.summarize([])

    def test_summary_text_round_trip(self):
        summary = runner.summarize([make_record(a) for a in (0.91, 0.95, 0.99)],
                                   runs_failed=1)
        again = runner.parse_summary(runner.format_summary(summary))
        assert again == summary


class TestRunTraining:
    def test_deterministic_metrics(self, synthetic_binary):
        config = runner.parse_config(classical_config())
        a = runner.run_training(config, 5, synthetic_binary)
        b = runner.run_training(config, 5, synthetic_binary)
        assert a.train_loss == b.train_loss
        assert a.train_accuracy == b.train_accuracy
        assert a.val_accuracy == b.val_accuracy
        assert a.final_val_accuracy == b.final_val_accuracy
        assert a.total_parameters == b.total_parameters

    def test_different_seeds_differ(self, synthetic_binary):
        config = runner.parse_config(quantum_config())
        a = runner.run_training(config, 5, synthetic_binary)
        b = runner.run_training(config, 6, synthetic_binary)
        assert a.train_loss != b.train_loss

    def test_zero_epochs(self, synthetic_binary):
        config = runner.parse_config(classical_config(epochs=0))
        record = runner.run_training(config, 3, synthetic_binary)
        assert record.train_loss == []
        assert record.val_accuracy == []
        assert 0.0 <= record.final_val_accuracy <= 1.0

    def test_learns_synthetic_data(self, synthetic_binary):
        config = runner.parse_config(quantum_config(epochs=6))
        record = runner.run_training(config, 1, synthetic_binary)
        assert record.final_val_accuracy >= 0.9


class TestRunBootstrap:
    def test_seed_schedule_and_files(self, synthetic_binary, tmp_path):
        out = tmp_path / "results"
        config = runner.parse_config(classical_config(base_seed=40,
                                                      bootstrap_count=3))
        records, summary = runner.run_bootstrap(config, synthetic_binary, out)
        assert [r.seed for r in records] == [40, 41, 42]
        assert summary.runs_total == 3 and summary.runs_failed == 0
        for k in range(3):
            assert (out / f"run_{k}" / "metrics.csv").exists()
        assert (out / "aggregate" / "summary.txt").exists()
        assert (out / "aggregate" / "config_echo.txt").exists()

    def test_reordering_cannot_change_results(self, synthetic_binary, tmp_path):
        # each run depends only on its own seed, so running a single seed
        # directly must reproduce the ensemble member exactly
        config = runner.parse_config(classical_config(base_seed=7,
                                                      bootstrap_count=3))
        solo = runner.run_training(config, 8, synthetic_binary)
        records, _ = runner.run_bootstrap(config, synthetic_binary,
                                          out_dir=tmp_path / "reorder")
        assert records[1].train_loss == solo.train_loss

    def test_byte_identical_reruns(self, synthetic_binary, tmp_path):
        config = runner.parse_config(quantum_config(bootstrap_count=2))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        runner.run_bootstrap(config, synthetic_binary, out_a)
        runner.run_bootstrap(config, synthetic_binary, out_b)
        for rel in ("run_0/metrics.csv", "run_1/metrics.csv",
                    "aggregate/summary.txt", "aggregate/config_echo.txt"):
            assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel

    def test_persisted_artifacts_reparse(self, synthetic_binary, tmp_path):
        out = tmp_path / "results"
        config = runner.parse_config(classical_config(bootstrap_count=2))
        records, summary = runner.run_bootstrap(config, synthetic_binary, out)
        loaded = runner.records_from_results_dir(out)
        assert len(loaded) == 2
        assert loaded[0].train_loss == records[0].train_loss
        assert loaded[1].final_val_accuracy == records[1].final_val_accuracy
        parsed_summary = runner.parse_summary(
            (out / "aggregate" / "summary.txt").read_text())
        assert parsed_summary == summary
        echoed = runner.parse_config(
            (out / "aggregate" / "config_echo.txt").read_text())
        assert echoed == config


class TestShotNoise:
    def _case(self):
        layout = qm.build_layout(1, ["u1-all"])
        angles = np.array([0.9, 0.3, 1.4])
        return layout, angles

    def test_trivial_epsilon_always_succeeds(self):
        layout, angles = self._case()
        report = runner.shot_noise_experiment(layout, angles,
                                              OutputSelection.MIN, 2.0,
                                              seeds=range(20))
        assert report.success_fraction == 1.0

    def test_reports_are_deterministic(self, tmp_path):
        layout, angles = self._case()
        out = tmp_path / "report.txt"
        a = runner.shot_noise_experiment(layout, angles, OutputSelection.MIN,
                                         0.2, seeds=range(10), out_path=out)
        text_a = out.read_text()
        b = runner.shot_noise_experiment(layout, angles, OutputSelection.MIN,
                                         0.2, seeds=range(10), out_path=out)
        assert a.success_fraction == b.success_fraction
        assert out.read_text() == text_a
        assert "success_fraction" in text_a

    def test_more_shots_do_not_hurt(self):
        layout, angles = self._case()
        base = runner.shot_noise_experiment(layout, angles, OutputSelection.MIN,
                                            0.15, seeds=range(60))
        doubled = runner.shot_noise_experiment(layout, angles,
                                               OutputSelection.MIN, 0.15,
                                               seeds=range(60), shots_factor=6.0)
        assert doubled.success_fraction >= base.success_fraction

    def test_bad_epsilon(self):
        layout, angles = self._case()
        with pytest.raises(ValueError):
            runner.shot_noise_experiment(layout, angles, OutputSelection.MIN,
                                         0.0, seeds=range(5))


class TestCli:
    def _config_file(self, tmp_path, idx_files, template=quantum_config, **kw):
        images, labels = idx_files
        out = tmp_path / "results"
        text = template(images=images, labels=labels, out_dir=out, **kw)
        path = tmp_path / "config.yaml"
        path.write_text(text)
        return path, out

    def test_run_command(self, tmp_path, idx_files, capsys):
        path, out = self._config_file(tmp_path, idx_files)
        assert cli.main(["run", str(path)]) == 0
        assert (out / "run_0" / "metrics.csv").exists()
        assert "final_val_accuracy" in capsys.readouterr().out

    def test_bootstrap_command_with_overrides(self, tmp_path, idx_files, capsys):
        path, _ = self._config_file(tmp_path, idx_files)
        override_out = tmp_path / "elsewhere"
        code = cli.main(["bootstrap", str(path), "--out", str(override_out),
                         "--epochs", "1", "--seed", "99"])
        assert code == 0
        assert (override_out / "run_1" / "metrics.csv").exists()
        echoed = runner.parse_config(
            (override_out / "aggregate" / "config_echo.txt").read_text())
        assert echoed.base_seed == 99 and echoed.epochs == 1

    def test_summarize_command(self, tmp_path, idx_files, capsys):
        path, out = self._config_file(tmp_path, idx_files)
        assert cli.main(["bootstrap", str(path)]) == 0
        capsys.readouterr()
        assert cli.main(["summarize", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "median_val_accuracy" in stdout
        reparsed = runner.parse_summary(stdout)
        persisted = runner.parse_summary(
            (out / "aggregate" / "summary.txt").read_text())
        assert reparsed == persisted

    def test_shotnoise_command(self, tmp_path, idx_files, capsys):
        path, out = self._config_file(tmp_path, idx_files)
        code = cli.main(["shotnoise", str(path), "--epsilon", "0.5",
                         "--trials", "5"])
        assert code == 0
        assert (out / "shotnoise_report.txt").exists()
        assert "success_fraction" in capsys.readouterr().out

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text(classical_config().replace("batch_size", "batch_sizes"))
        assert cli.main(["run", str(bad)]) == 2
        assert "batch_sizes" in capsys.readouterr().err

    def test_missing_data_file_exit_code(self, tmp_path, capsys):
        path = tmp_path / "config.yaml"
        path.write_text(quantum_config(images="/nonexistent/images",
                                       labels="/nonexistent/labels",
                                       out_dir=tmp_path / "out"))
        assert cli.main(["run", str(path)]) == 2
