import numpy as np
import pytest

from pclabel import (
    KnnClassifier,
    LabelField,
    PointCloud,
    RefineParams,
    StlpConfig,
    SuperpointPartition,
    UNLABELED,
    galr,
    infer,
    label_update,
    stlp_round,
    stlp_run,
)

from conftest import make_cloud


class EchoClassifier:
    """Reproduces its training labels; unlabeled points get class 0."""

    def fit(self, cloud, labels):
        self._labels = labels
        return self

    def predict(self, cloud):
        values = np.where(self._labels.values == UNLABELED, 0, self._labels.values)
        return (LabelField(values, self._labels.num_classes),
                np.ones(len(self._labels)))


class TestKnnClassifier:
    def test_reproduces_training_labels_with_k1(self, rng):
        cloud = make_cloud(rng, 80)
        labels = LabelField(rng.integers(0, 4, 80), 4)
        clf = KnnClassifier(k=1).fit(cloud, labels)
        pred, conf = clf.predict(cloud)
        assert np.array_equal(pred.values, labels.values)
        assert np.all((conf >= 0) & (conf <= 1))

    def test_fit_ignores_unlabeled(self, rng):
        cloud = make_cloud(rng, 40)
        values = rng.integers(0, 2, 40)
        values[10:] = UNLABELED
        clf = KnnClassifier(k=3).fit(cloud, LabelField(values, 2))
        pred, _ = clf.predict(cloud)
        assert np.all(pred.values != UNLABELED)

    def test_unfitted_predict_raises(self, rng):
        with pytest.raises(RuntimeError, match="not fitted"):
            KnnClassifier().predict(make_cloud(rng, 3))

    def test_fully_unlabeled_fit_raises(self, rng):
        cloud = make_cloud(rng, 5)
        with pytest.raises(ValueError):
            KnnClassifier().fit(cloud, LabelField.full_unlabeled(5, 2))

    def test_deterministic(self, rng):
        cloud = make_cloud(rng, 60)
        labels = LabelField(rng.integers(0, 3, 60), 3)
        clf = KnnClassifier(k=5)
        a = clf.fit(cloud, labels).predict(cloud)
        b = clf.fit(cloud, labels).predict(cloud)
        assert np.array_equal(a[0].values, b[0].values)
        assert np.array_equal(a[1], b[1])

    def test_confidence_decays_with_distance(self):
        # a far query cannot be more confident than the identical near one
        pos = np.array([[0.0, 0, 0], [0.1, 0, 0], [5.0, 0, 0]])
        cloud = PointCloud(pos, np.zeros((3, 3), dtype=np.uint8))
        train = PointCloud(pos[:2], np.zeros((2, 3), dtype=np.uint8))
        clf = KnnClassifier(k=2).fit(train, LabelField(np.array([1, 1]), 2))
        _, conf = clf.predict(cloud)
        assert conf[2] < conf[0]


class TestLabelUpdate:
    def test_fully_labeled_prev_unchanged(self, rng):
        prev = LabelField(rng.integers(0, 3, 30), 3)
        pred = LabelField(rng.integers(0, 3, 30), 3)
        out = label_update(prev, pred, rng.random(30), np.ones(3, bool), 50.0)
        assert np.array_equal(out.values, prev.values)

    def test_all_unlabeled_prev_full_pass_through(self, rng):
        prev = LabelField.full_unlabeled(25, 3)
        pred = LabelField(rng.integers(0, 3, 25), 3)
        out = label_update(prev, pred, rng.random(25), np.ones(3, bool), 100.0)
        assert np.array_equal(out.values, pred.values)

    def test_hand_simulated_trace(self):
        # prev [c0, β, β, β]; gap predictions all c1 with confidences
        # (0.9, 0.5, 0.1); V=34 keeps ceil(0.34*3)=2 of the gap pool
        prev = LabelField(np.array([0, UNLABELED, UNLABELED, UNLABELED]), 2)
        pred = LabelField(np.array([0, 1, 1, 1]), 2)
        conf = np.array([1.0, 0.9, 0.5, 0.1])
        out = label_update(prev, pred, conf, np.ones(2, bool), 34.0)
        assert out.values.tolist() == [0, 1, 1, UNLABELED]

    def test_masked_out_classes_discarded(self, rng):
        prev = LabelField.full_unlabeled(20, 3)
        pred = LabelField(np.full(20, 2), 3)
        mask = np.array([True, True, False])
        out = label_update(prev, pred, rng.random(20), mask, 100.0)
        assert np.all(out.values == UNLABELED)

    def test_monotone_retention(self, rng):
        for _ in range(20):
            n = int(rng.integers(5, 100))
            c = int(rng.integers(2, 5))
            prev = LabelField(rng.integers(-1, c, n), c)
            pred = LabelField(rng.integers(0, c, n), c)
            mask = rng.random(c) < 0.8
            if not mask.any():
                mask[0] = True
            out = label_update(prev, pred, rng.random(n), mask, 40.0)
            was = prev.labeled_mask
            assert np.array_equal(out.values[was], prev.values[was])
            assert out.labeled_mask.sum() >= was.sum()

    def test_rejects_unlabeled_predictions(self, rng):
        prev = LabelField(rng.integers(0, 2, 5), 2)
        pred = LabelField(np.array([0, 1, UNLABELED, 0, 1]), 2)
        with pytest.raises(ValueError):
            label_update(prev, pred, np.ones(5) * 0.5, np.ones(2, bool), 50.0)


class TestStlpRound:
    def test_self_consistent_classifier_fixed_point(self, rng):
        # a classifier echoing unanimous blocks makes galr(prev) a fixed point
        n, blocks = 60, 6
        assignment = np.repeat(np.arange(blocks), n // blocks)
        values = assignment % 3
        prev = LabelField(values, 3)
        partition = SuperpointPartition(assignment)
        config = StlpConfig(rounds=1, refine=RefineParams(top_v=100.0, alpha=0.5))
        out, _ = stlp_round(make_cloud(rng, n), prev, partition,
                            EchoClassifier(), config, np.ones(3, bool))
        expected = galr(prev, partition, 0.5)
        assert np.array_equal(out.values, expected.values)

    def test_entirely_unlabeled_prev_rejected(self, rng):
        cloud = make_cloud(rng, 10)
        partition = SuperpointPartition(np.zeros(10, dtype=np.int64))
        with pytest.raises(ValueError):
            stlp_round(cloud, LabelField.full_unlabeled(10, 2), partition,
                       KnnClassifier(), StlpConfig(), np.ones(2, bool))


class TestStlpRun:
    def _setup(self, rng, n=240):
        cloud = make_cloud(rng, n)
        blocks = 12
        assignment = rng.integers(0, blocks, n)
        assignment[:blocks] = np.arange(blocks)
        partition = SuperpointPartition(assignment)
        gt = LabelField(assignment % 4, 4)
        sparse = gt.values.copy()
        drop = rng.random(n) < 0.7
        sparse[drop] = UNLABELED
        if not (sparse != UNLABELED).any():
            sparse[0] = gt.values[0]
        return cloud, LabelField(sparse, 4), partition, gt

    def test_zero_rounds_untouched(self, rng):
        cloud, y0, partition, gt = self._setup(rng)
        final, clf, report = stlp_run(cloud, y0, partition,
                                      StlpConfig(rounds=0), np.ones(4, bool))
        assert final is y0
        assert report == []
        pred, _ = clf.predict(cloud)  # classifier usable
        assert len(pred) == cloud.count

    def test_report_rows_match_rounds(self, rng):
        cloud, y0, partition, gt = self._setup(rng)
        _, _, report = stlp_run(cloud, y0, partition, StlpConfig(rounds=3),
                                np.ones(4, bool), gt=gt)
        assert [row["round"] for row in report] == [1, 2, 3]
        assert all("miou" in row and "labeled_rate" in row for row in report)

    def test_labeled_rate_grows_from_sparse_seeds(self, rng):
        cloud, y0, partition, gt = self._setup(rng)
        _, _, report = stlp_run(cloud, y0, partition, StlpConfig(rounds=1),
                                np.ones(4, bool))
        before = float((y0.values != UNLABELED).mean())
        assert report[0]["labeled_rate"] > before

    def test_mask_safety_every_round(self, rng):
        cloud, y0, partition, gt = self._setup(rng)
        mask = np.array([True, True, True, False])
        values = np.where(y0.values == 3, UNLABELED, y0.values)
        y0 = LabelField(values, 4)
        final, _, _ = stlp_run(cloud, y0, partition, StlpConfig(rounds=2), mask)
        labeled = final.values != UNLABELED
        assert mask[final.values[labeled]].all()

    def test_determinism(self, rng):
        cloud, y0, partition, gt = self._setup(rng)
        a = stlp_run(cloud, y0, partition, StlpConfig(rounds=2), np.ones(4, bool))
        b = stlp_run(cloud, y0, partition, StlpConfig(rounds=2), np.ones(4, bool))
        assert np.array_equal(a[0].values, b[0].values)

    def test_full_update_strategy_runs(self, rng):
        cloud, y0, partition, gt = self._setup(rng)
        final, _, report = stlp_run(cloud, y0, partition,
                                    StlpConfig(rounds=2, update="full"),
                                    np.ones(4, bool), gt=gt)
        assert len(report) == 2
        assert len(final) == cloud.count


class TestInfer:
    def test_unanimous_block_identity(self, rng):
        cloud = make_cloud(rng, 30)
        labels = LabelField(np.ones(30, dtype=np.int64), 2)
        clf = KnnClassifier(k=3).fit(cloud, labels)
        partition = SuperpointPartition(np.zeros(30, dtype=np.int64))
        out = infer(cloud, clf, partition, 0.5)
        assert np.all(out.values == 1)

    def test_majority_block_vote(self, rng):
        # 60/40 split at alpha 0.5: whole block goes to the majority
        cloud = make_cloud(rng, 10)
        partition = SuperpointPartition(np.zeros(10, dtype=np.int64))

        class Fixed:
            def predict(self, cloud):
                values = np.array([0] * 6 + [1] * 4)
                return LabelField(values, 2), np.ones(10)

        out = infer(cloud, Fixed(), partition, 0.5)
        assert np.all(out.values == 0)

    def test_rejected_blocks_keep_raw_predictions(self, rng):
        cloud = make_cloud(rng, 8)
        partition = SuperpointPartition(np.zeros(8, dtype=np.int64))

        class Split:
            def predict(self, cloud):
                values = np.array([0, 1] * 4)
                return LabelField(values, 2), np.ones(8)

        out = infer(cloud, Split(), partition, 0.5)
        assert out.values.tolist() == [0, 1] * 4
        unlabeled = infer(cloud, Split(), partition, 0.5, keep_rejected=False)
        assert np.all(unlabeled.values == UNLABELED)

    def test_unfitted_classifier_propagates(self, rng):
        cloud = make_cloud(rng, 5)
        partition = SuperpointPartition(np.zeros(5, dtype=np.int64))
        with pytest.raises(RuntimeError):
            infer(cloud, KnnClassifier(), partition, 0.5)

    def test_output_labels_every_point(self, rng):
        cloud = make_cloud(rng, 100)
        values = rng.integers(0, 3, 100)
        values[50:] = UNLABELED
        clf = KnnClassifier(k=5).fit(cloud, LabelField(values, 3))
        partition = SuperpointPartition(rng.integers(0, 5, 100) % 5)
        out = infer(cloud, clf, partition, 0.5)
        assert np.all(out.values != UNLABELED)
