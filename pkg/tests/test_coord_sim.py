"""Simulated three-worker coordination: convergence, determinism, hazards.

The offline-replay tests re-derive every published artifact from the
blobstore alone (predictions -> selection -> augmented dataset) and demand
exact agreement with what the live run produced, so the store contents are
a complete, trustworthy record of the run.
"""

import io

import numpy as np
import pytest

from tritrain.coord.protocol import (
    WorkerData,
    WorkerSpec,
    accuracy_blob,
    builtin_coord_fit,
    coord_fit_from_fit_predict,
    make_specs,
    model_blob,
    predictions_blob,
    selected_blob,
    validate_specs,
)
from tritrain.coord.sim import (
    KILL_BEFORE_PREDICTIONS_UPLOAD,
    KILL_BEFORE_SELECTED_UPLOAD,
    FaultPlan,
    SimResult,
    converged,
    simulate,
)
from tritrain.coord.stores import AGGREGATE_STATUS_KEY, training_status_key
from tritrain.dataset import (
    LabeledDataset,
    SplitMode,
    apply_augmentation,
    generate_blobs,
    pool_from_labeled,
)
from tritrain.experiment import derive_seed
from tritrain.learner import Model, TrainConfig, predict, predictions_from_bytes
from tritrain.strategy import StrategyKind, select, selections_from_bytes

FIT = builtin_coord_fit(TrainConfig(epochs=3))


def coord_data(n_train: int = 30, n_pool: int = 15, seed: int = 11) -> WorkerData:
    full = generate_blobs(
        n=n_train + n_pool, k=3, dim=2, separation=8.0, sigma=1.0, seed=seed
    )
    train = LabeledDataset(full.examples[:n_train], full.alphabet)
    pool = pool_from_labeled(LabeledDataset(full.examples[n_train:], full.alphabet))
    return WorkerData(train=train, pool=pool)


class TestSpecValidation:
    def test_make_specs_is_valid(self):
        specs = make_specs(aggregator=1)
        validate_specs(specs)
        assert [s.is_aggregator for s in specs] == [False, True, False]
        assert [s.part for s in specs] == [0, 1, 2]

    def test_bad_worker_index(self):
        with pytest.raises(ValueError, match="index"):
            WorkerSpec(index=3, is_aggregator=False)

    def test_bad_iterations(self):
        with pytest.raises(ValueError, match="iterations"):
            WorkerSpec(index=0, is_aggregator=True, iterations=0)

    def test_bad_timing(self):
        with pytest.raises(ValueError, match="positive"):
            WorkerSpec(index=0, is_aggregator=True, poll_interval=0.0)
        with pytest.raises(ValueError, match="positive"):
            WorkerSpec(index=0, is_aggregator=True, timeout=-1.0)

    def test_two_aggregators_rejected(self):
        specs = list(make_specs())
        specs[1] = WorkerSpec(index=1, is_aggregator=True)
        with pytest.raises(ValueError, match="exactly one"):
            validate_specs(specs)

    def test_duplicate_parts_rejected(self):
        specs = list(make_specs())
        specs[1] = WorkerSpec(index=1, is_aggregator=False, split_index=0)
        with pytest.raises(ValueError, match="distinct parts"):
            validate_specs(specs)

    def test_mismatched_seed_rejected(self):
        specs = list(make_specs())
        specs[2] = WorkerSpec(index=2, is_aggregator=False, seed=99)
        with pytest.raises(ValueError, match="must match"):
            validate_specs(specs)

    def test_wrong_count_rejected(self):
        with pytest.raises(ValueError, match="exactly three"):
            validate_specs(list(make_specs())[:2])


class TestConvergence:
    def test_all_workers_finish_and_agree(self):
        specs = make_specs(iterations=3, seed=5)
        result = simulate(specs, coord_data(), FIT, scheduler_seed=0)
        assert result.ok
        assert result.failures == {}
        assert set(result.results) == {0, 1, 2}
        assert converged(result)

    def test_exactly_one_aggregation_per_iteration(self):
        specs = make_specs(iterations=3, seed=5)
        result = simulate(specs, coord_data(), FIT, scheduler_seed=1)
        assert result.aggregation_count() == 3
        names = [ev.detail["name"] for ev in result.events("upload")]
        for i in (1, 2, 3):
            assert names.count(selected_blob(i)) == 1

    def test_bookkeeping_matches_selection_counts(self):
        data = coord_data()
        specs = make_specs(iterations=3, seed=5)
        result = simulate(specs, data, FIT, scheduler_seed=2)
        for res in result.results.values():
            assert len(res.train) == len(data.train) + sum(res.selected_counts)
            assert len(res.pool) == len(data.pool) - sum(res.selected_counts)
            assert len(res.train_accuracies) == 3
        counts = {res.selected_counts for res in result.results.values()}
        assert len(counts) == 1  # every worker applied the same selections

    def test_ground_truth_strategy_labels_match_hidden(self):
        data = coord_data()
        specs = make_specs(iterations=2, seed=5)
        result = simulate(specs, data, FIT, scheduler_seed=3)
        final = result.results[0]
        original = {ex.id for ex in data.train.examples}
        for ex in final.train.examples:
            if ex.id not in original:
                assert ex.label == data.pool.hidden_labels[ex.id]

    def test_initial_statuses_report_finished_iteration_zero(self):
        # The stale-state hazard exists because of exactly this bootstrap.
        specs = make_specs(iterations=1, seed=5)
        result = simulate(specs, coord_data(), FIT, scheduler_seed=0)
        for w in (0, 1, 2):
            first = next(
                ev
                for ev in result.events("put_status")
                if ev.worker == w and ev.detail["key"] == training_status_key(w)
            )
            assert first.detail == {
                "key": training_status_key(w),
                "status": "at iteration: 0",
                "last_iteration": 0,
                "finished": True,
            }
        agg_first = next(
            ev
            for ev in result.events("put_status")
            if ev.detail["key"] == AGGREGATE_STATUS_KEY
        )
        assert agg_first.detail["finished"] is True
        assert agg_first.detail["last_iteration"] == 0

    def test_external_style_fit_converges_too(self):
        cfg = TrainConfig(epochs=3)

        def fit_predict(train, targets, tag, seed):
            from tritrain.learner import fit_softmax
            from dataclasses import replace

            model = fit_softmax(train, replace(cfg, seed=seed))
            return predict(model, targets, tag=tag)

        fit = coord_fit_from_fit_predict(fit_predict)
        specs = make_specs(iterations=2, seed=5)
        result = simulate(specs, coord_data(), fit, scheduler_seed=0)
        assert result.ok and converged(result)
        blob = result.blobstore.download(model_blob(0, 1))
        assert blob is not None and blob.startswith(b"external model:")


class TestDeterminism:
    def test_same_scheduler_seed_reproduces_the_trace(self):
        data = coord_data()
        specs = make_specs(iterations=2, seed=5)
        a = simulate(specs, data, FIT, scheduler_seed=7)
        b = simulate(specs, data, FIT, scheduler_seed=7)
        assert a.trace == b.trace
        assert a.results == b.results
        assert a.steps == b.steps and a.clock == b.clock

    def test_final_state_is_schedule_independent(self):
        data = coord_data()
        specs = make_specs(iterations=2, seed=5)
        finals = [
            simulate(specs, data, FIT, scheduler_seed=s).results[0]
            for s in range(6)
        ]
        assert all(r == finals[0] for r in finals[1:])

    def test_different_seeds_give_different_interleavings(self):
        data = coord_data()
        specs = make_specs(iterations=1, seed=5)
        a = simulate(specs, data, FIT, scheduler_seed=0)
        b = simulate(specs, data, FIT, scheduler_seed=1)
        assert [ev.worker for ev in a.trace] != [ev.worker for ev in b.trace]

    def test_aggregator_placement_does_not_change_the_outcome(self):
        data = coord_data()
        by_agg = [
            simulate(
                make_specs(iterations=2, seed=5, aggregator=a),
                data,
                FIT,
                scheduler_seed=3,
            ).results[0]
            for a in (0, 1, 2)
        ]
        assert by_agg[0] == by_agg[1] == by_agg[2]


class TestStatusHazard:
    def test_safe_check_never_aggregates_prematurely(self):
        data = coord_data()
        specs = make_specs(iterations=3, seed=5)
        for s in range(10):
            result = simulate(specs, data, FIT, scheduler_seed=s)
            assert result.ok
            assert result.events("premature_aggregation") == []

    def test_unsafe_check_fires_on_stale_statuses(self):
        data = coord_data()
        specs = make_specs(iterations=3, seed=5)
        flagged = 0
        for s in range(10):
            result = simulate(
                specs, data, FIT, scheduler_seed=s, unsafe_status_check=True
            )
            if "premature_aggregation" in result.flags:
                flagged += 1
                note = result.events("premature_aggregation")[0]
                stale = note.detail["stale_peers"]
                assert stale, "a premature note must name the stale peers"
                assert all(last != note.detail["iteration"] for _, last in stale)
        assert flagged == 10  # deterministic: every sampled interleaving races

    def test_unsafe_flag_lands_in_flags_not_failures(self):
        result = simulate(
            make_specs(iterations=2, seed=5),
            coord_data(),
            FIT,
            scheduler_seed=0,
            unsafe_status_check=True,
        )
        assert "premature_aggregation" in result.flags
        assert not result.ok


class TestFaults:
    def test_fault_plan_validation(self):
        with pytest.raises(ValueError, match="unknown fault point"):
            FaultPlan(worker=0, point="reboot")
        with pytest.raises(ValueError, match=">= 1"):
            FaultPlan(worker=0, iteration=0)

    def test_killed_aggregator_leaves_no_partial_selection(self):
        data = coord_data()
        specs = make_specs(iterations=2, seed=5, poll_interval=1.0, timeout=30.0)
        plan = FaultPlan(worker=0, iteration=1, point=KILL_BEFORE_SELECTED_UPLOAD)
        result = simulate(specs, data, FIT, scheduler_seed=0, fault_plan=plan)
        assert "fault" in result.flags and "timeout" in result.flags
        assert result.blobstore.download(selected_blob(1)) is None
        assert 0 not in result.results
        assert set(result.failures) == {1, 2}
        for msg in result.failures.values():
            assert "timed out" in msg
        kills = result.events("worker_killed")
        assert len(kills) == 1 and kills[0].worker == 0

    def test_killed_follower_starves_the_aggregator(self):
        data = coord_data()
        specs = make_specs(iterations=2, seed=5, poll_interval=1.0, timeout=30.0)
        plan = FaultPlan(worker=2, iteration=1, point=KILL_BEFORE_PREDICTIONS_UPLOAD)
        result = simulate(specs, data, FIT, scheduler_seed=0, fault_plan=plan)
        assert "fault" in result.flags and "timeout" in result.flags
        assert result.blobstore.download(predictions_blob(2, 1)) is None
        assert result.blobstore.download(selected_blob(1)) is None
        assert set(result.failures) == {0, 1}

    def test_step_budget_reports_deadlock(self):
        result = simulate(
            make_specs(iterations=1, seed=5),
            coord_data(),
            FIT,
            scheduler_seed=0,
            max_steps=5,
        )
        assert "deadlock" in result.flags
        assert set(result.failures) == {0, 1, 2}

    def test_converged_requires_all_three_results(self):
        result = simulate(
            make_specs(iterations=2, seed=5, timeout=30.0),
            coord_data(),
            FIT,
            scheduler_seed=0,
            fault_plan=FaultPlan(worker=0, iteration=1),
        )
        assert not converged(result)


def replay_from_blobs(result: SimResult, data: WorkerData, specs) -> LabeledDataset:
    """Re-derive the whole run offline from the published blobs only."""

    spec = specs[0]
    alphabet = data.train.alphabet
    train, pool = data.train, data.pool
    for i in range(1, spec.iterations + 1):
        psets = []
        for w in (0, 1, 2):
            blob = result.blobstore.download(predictions_blob(w, i))
            assert blob is not None
            psets.append(predictions_from_bytes(blob, alphabet, tag=f"w{w}"))
            assert sorted(psets[-1].ids()) == sorted(pool.ids())

        recomputed = select(spec.strategy, psets[0], psets[1], psets[2], pool)
        published = selections_from_bytes(
            result.blobstore.download(selected_blob(i)), alphabet
        )
        assert published == recomputed

        train, pool = apply_augmentation(train, pool, published)
    return train


class TestOfflineReplay:
    def test_published_selections_match_recomputation(self):
        data = coord_data()
        specs = make_specs(iterations=3, seed=5)
        result = simulate(specs, data, FIT, scheduler_seed=4)
        final_train = replay_from_blobs(result, data, specs)
        for res in result.results.values():
            assert res.train == final_train

    def test_replay_holds_for_every_strategy(self):
        data = coord_data()
        for strategy in StrategyKind:
            specs = make_specs(iterations=2, seed=5, strategy=strategy)
            result = simulate(specs, data, FIT, scheduler_seed=0)
            assert result.ok
            final_train = replay_from_blobs(result, data, specs)
            assert result.results[1].train == final_train

    def test_archived_models_reproduce_their_predictions(self):
        # model.bin is a real, loadable artifact: unpacking [weights | bias]
        # and re-running prediction must give back the published CSV exactly.
        data = coord_data()
        specs = make_specs(iterations=2, seed=5)
        result = simulate(specs, data, FIT, scheduler_seed=0)
        alphabet = data.train.alphabet

        train, pool = data.train, data.pool
        for i in (1, 2):
            for w in (0, 1, 2):
                packed = np.load(io.BytesIO(result.blobstore.download(model_blob(w, i))))
                assert packed.shape == (len(alphabet), data.train.dim + 1)
                model = Model("softmax", packed[:, :-1], packed[:, -1], alphabet)
                fresh = predict(model, pool.examples, tag=f"w{w}/iter{i}")
                published = predictions_from_bytes(
                    result.blobstore.download(predictions_blob(w, i)),
                    alphabet,
                    tag=f"w{w}/iter{i}",
                )
                assert fresh.entries == published.entries
            published = selections_from_bytes(
                result.blobstore.download(selected_blob(i)), alphabet
            )
            train, pool = apply_augmentation(train, pool, published)

    def test_accuracy_blobs_round_trip_exactly(self):
        data = coord_data()
        specs = make_specs(iterations=2, seed=5)
        result = simulate(specs, data, FIT, scheduler_seed=0)
        for w, res in result.results.items():
            for i, acc in enumerate(res.train_accuracies, start=1):
                blob = result.blobstore.download(accuracy_blob(w, i))
                assert blob is not None
                assert float(blob.decode("ascii").strip()) == acc

    def test_train_accuracies_match_an_independent_refit(self):
        # Worker 1's reported training accuracy is recomputed from scratch
        # using only public pieces: the shared re-split and the seed rule.
        from tritrain.dataset import three_way_split
        from tritrain.learner import fit_softmax, accuracy_against
        from dataclasses import replace

        data = coord_data()
        specs = make_specs(iterations=1, seed=5)
        result = simulate(specs, data, FIT, scheduler_seed=0)

        parts = three_way_split(
            data.train, SplitMode.DISJOINT_THIRDS, derive_seed(5, 7, 1)
        )
        part = parts[1]
        model = fit_softmax(
            part, replace(TrainConfig(epochs=3), seed=derive_seed(5, 6, 1, 1))
        )
        preds = predict(model, [ex for ex in part.examples], tag="check")
        expected = accuracy_against(preds, part).accuracy
        assert result.results[1].train_accuracies[0] == expected
