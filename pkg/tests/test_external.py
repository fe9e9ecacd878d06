"""The external-learner process boundary and the reference plugin.

Fake learners (tiny generated scripts) probe every failure mode of the
contract: id coverage, exit codes, malformed output, hangs. The reference
plugin is then held to the strongest promise it makes — invoking it as a
subprocess reproduces the in-process model bit for bit, because only epochs
and seed cross the boundary and everything else is fixed at the defaults.
"""

import subprocess
import sys
import textwrap

import pytest

from tritrain.dataset import (
    LabeledDataset,
    generate_blobs,
    load_csv,
    load_pool_csv,
    save_csv,
    save_examples_csv,
)
from tritrain.learner import (
    ExternalLearnerError,
    TrainConfig,
    external_fit_predict,
    fit_softmax,
    predict,
)

PLUGIN = (sys.executable, "-m", "tritrain.plugin")


@pytest.fixture
def corpus(tmp_path):
    """A labeled training CSV and an unlabeled pool CSV on disk."""

    full = generate_blobs(n=36, k=3, dim=2, separation=8.0, sigma=1.0, seed=3)
    train = LabeledDataset(full.examples[:24], full.alphabet)
    pool = [ex for ex in full.examples[24:]]
    train_file = tmp_path / "train.csv"
    pool_file = tmp_path / "pool.csv"
    save_csv(train, train_file)
    save_examples_csv(
        [type(ex)(ex.id, ex.features) for ex in pool], pool_file
    )
    return train_file, pool_file, train.alphabet


def fake_learner(tmp_path, body: str) -> tuple[str, ...]:
    """A script implementing the plugin argv contract with a custom body."""

    script = tmp_path / "fake_learner.py"
    script.write_text(
        textwrap.dedent(
            """\
            import csv, sys, time
            args = dict(zip(sys.argv[1::2], sys.argv[2::2]))
            with open(args["--pool"], newline="") as fh:
                ids = [row[0] for row in list(csv.reader(fh))[1:]]
            out = args["--out"]
            """
        )
        + textwrap.dedent(body)
    )
    return (sys.executable, str(script))


def write_rows(ids_expr: str) -> str:
    return f"""\
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "label", "score"])
            for i in {ids_expr}:
                w.writerow([i, "c0", "0.5"])
        """


class TestBoundaryContract:
    def test_well_behaved_fake_passes(self, tmp_path, corpus):
        train_file, pool_file, alphabet = corpus
        cmd = fake_learner(tmp_path, write_rows("ids"))
        pset = external_fit_predict(
            train_file, pool_file, TrainConfig(epochs=2), cmd, alphabet=alphabet
        )
        assert sorted(pset.entries) == sorted(
            ex.id for ex in load_pool_csv(pool_file)
        )
        assert all(v == (0, 0.5) for v in pset.entries.values())

    def test_dropped_id_rejected(self, tmp_path, corpus):
        train_file, pool_file, alphabet = corpus
        cmd = fake_learner(tmp_path, write_rows("ids[:-1]"))
        with pytest.raises(ExternalLearnerError, match="do not cover the pool"):
            external_fit_predict(
                train_file, pool_file, TrainConfig(epochs=2), cmd, alphabet=alphabet
            )

    def test_extra_id_rejected(self, tmp_path, corpus):
        train_file, pool_file, alphabet = corpus
        cmd = fake_learner(tmp_path, write_rows('ids + ["ghost"]'))
        with pytest.raises(ExternalLearnerError, match="do not cover the pool"):
            external_fit_predict(
                train_file, pool_file, TrainConfig(epochs=2), cmd, alphabet=alphabet
            )

    def test_nonzero_exit_surfaces_stderr(self, tmp_path, corpus):
        train_file, pool_file, alphabet = corpus
        cmd = fake_learner(
            tmp_path, 'print("boom", file=sys.stderr)\nsys.exit(3)\n'
        )
        with pytest.raises(ExternalLearnerError, match="exited 3: boom"):
            external_fit_predict(
                train_file, pool_file, TrainConfig(epochs=2), cmd, alphabet=alphabet
            )

    def test_garbage_output_rejected(self, tmp_path, corpus):
        train_file, pool_file, alphabet = corpus
        cmd = fake_learner(
            tmp_path, 'open(out, "w").write("pixels,are,not,predictions\\n")\n'
        )
        with pytest.raises(ExternalLearnerError, match="header"):
            external_fit_predict(
                train_file, pool_file, TrainConfig(epochs=2), cmd, alphabet=alphabet
            )

    def test_missing_output_file_rejected(self, tmp_path, corpus):
        train_file, pool_file, alphabet = corpus
        cmd = fake_learner(tmp_path, "pass\n")
        with pytest.raises(ExternalLearnerError, match="prediction file missing"):
            external_fit_predict(
                train_file, pool_file, TrainConfig(epochs=2), cmd, alphabet=alphabet
            )

    def test_hanging_learner_times_out(self, tmp_path, corpus):
        train_file, pool_file, alphabet = corpus
        cmd = fake_learner(tmp_path, "time.sleep(60)\n")
        with pytest.raises(ExternalLearnerError, match="timed out"):
            external_fit_predict(
                train_file,
                pool_file,
                TrainConfig(epochs=2),
                cmd,
                timeout=0.5,
                alphabet=alphabet,
            )

    def test_empty_command_rejected(self, corpus):
        train_file, pool_file, alphabet = corpus
        with pytest.raises(ExternalLearnerError, match="empty learner command"):
            external_fit_predict(
                train_file, pool_file, TrainConfig(epochs=2), [], alphabet=alphabet
            )

    def test_unrunnable_command_rejected(self, corpus):
        train_file, pool_file, alphabet = corpus
        with pytest.raises(ExternalLearnerError, match="cannot run"):
            external_fit_predict(
                train_file,
                pool_file,
                TrainConfig(epochs=2),
                ["/no/such/binary"],
                alphabet=alphabet,
            )

    def test_command_accepts_a_shell_string(self, tmp_path, corpus):
        train_file, pool_file, alphabet = corpus
        cmd = fake_learner(tmp_path, write_rows("ids"))
        as_string = " ".join(cmd)
        pset = external_fit_predict(
            train_file, pool_file, TrainConfig(epochs=2), as_string, alphabet=alphabet
        )
        assert len(pset.entries) == len(load_pool_csv(pool_file))

    def test_caller_alphabet_controls_label_indices(self, tmp_path, corpus):
        train_file, pool_file, _ = corpus
        cmd = fake_learner(tmp_path, write_rows("ids"))
        cfg = TrainConfig(epochs=2)
        natural = external_fit_predict(
            train_file, pool_file, cfg, cmd, alphabet=("c0", "c1", "c2")
        )
        permuted = external_fit_predict(
            train_file, pool_file, cfg, cmd, alphabet=("c2", "c1", "c0")
        )
        # Every fake prediction says "c0": index 0 normally, 2 when permuted.
        assert all(v[0] == 0 for v in natural.entries.values())
        assert all(v[0] == 2 for v in permuted.entries.values())


class TestReferencePlugin:
    def test_matches_in_process_training_exactly(self, corpus):
        train_file, pool_file, alphabet = corpus
        cfg = TrainConfig(epochs=4, seed=9)
        external = external_fit_predict(
            train_file, pool_file, cfg, PLUGIN, alphabet=alphabet
        )
        model = fit_softmax(load_csv(train_file), cfg)
        internal = predict(model, load_pool_csv(pool_file))
        assert external.entries == internal.entries

    def test_only_epochs_and_seed_cross_the_boundary(self, corpus):
        # Exotic in-process hyperparameters must not leak into the subprocess.
        train_file, pool_file, alphabet = corpus
        weird = TrainConfig(epochs=4, seed=9, learning_rate=77.0, l2=0.9, batch_size=2)
        external = external_fit_predict(
            train_file, pool_file, weird, PLUGIN, alphabet=alphabet
        )
        baseline = external_fit_predict(
            train_file, pool_file, TrainConfig(epochs=4, seed=9), PLUGIN,
            alphabet=alphabet,
        )
        assert external.entries == baseline.entries

    def test_output_bytes_are_deterministic(self, tmp_path, corpus):
        train_file, pool_file, _ = corpus
        outs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            proc = subprocess.run(
                [*PLUGIN, "--train", str(train_file), "--pool", str(pool_file),
                 "--out", str(out), "--epochs", "4", "--seed", "9"],
                capture_output=True,
            )
            assert proc.returncode == 0, proc.stderr
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_seed_changes_the_output(self, tmp_path, corpus):
        train_file, pool_file, _ = corpus
        outs = []
        for seed in ("9", "10"):
            out = tmp_path / f"s{seed}.csv"
            proc = subprocess.run(
                [*PLUGIN, "--train", str(train_file), "--pool", str(pool_file),
                 "--out", str(out), "--epochs", "4", "--seed", seed],
                capture_output=True,
            )
            assert proc.returncode == 0, proc.stderr
            outs.append(out.read_bytes())
        assert outs[0] != outs[1]

    def test_usage_errors_exit_2(self, tmp_path, corpus):
        train_file, pool_file, _ = corpus
        out = tmp_path / "o.csv"
        base = [*PLUGIN, "--train", str(train_file), "--pool", str(pool_file),
                "--out", str(out)]
        zero_epochs = subprocess.run(
            base + ["--epochs", "0", "--seed", "1"], capture_output=True, text=True
        )
        assert zero_epochs.returncode == 2
        assert "--epochs" in zero_epochs.stderr
        negative_seed = subprocess.run(
            base + ["--epochs", "2", "--seed", "-1"], capture_output=True, text=True
        )
        assert negative_seed.returncode == 2
        missing_arg = subprocess.run(
            [*PLUGIN, "--train", str(train_file)], capture_output=True, text=True
        )
        assert missing_arg.returncode == 2  # argparse's own usage exit

    def test_bad_data_exits_1(self, tmp_path, corpus):
        _, pool_file, _ = corpus
        out = tmp_path / "o.csv"
        missing = subprocess.run(
            [*PLUGIN, "--train", str(tmp_path / "nope.csv"), "--pool",
             str(pool_file), "--out", str(out), "--epochs", "2", "--seed", "0"],
            capture_output=True, text=True,
        )
        assert missing.returncode == 1
        assert "error:" in missing.stderr

        ragged = tmp_path / "ragged.csv"
        ragged.write_text("id,f0,label\nr0,1.0,a\nr1,2.0\n")
        bad = subprocess.run(
            [*PLUGIN, "--train", str(ragged), "--pool", str(pool_file),
             "--out", str(out), "--epochs", "2", "--seed", "0"],
            capture_output=True, text=True,
        )
        assert bad.returncode == 1
