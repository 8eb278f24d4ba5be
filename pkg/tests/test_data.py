"""Dataset types, IO round-trips, preprocessing, synthesis, and fold splits."""

import os

import numpy as np
import pytest

from covertrain.data import (
    Bag,
    Dataset,
    Instance,
    datasets_equal,
    kfold_split,
    load_dataset,
    load_truth,
    save_dataset,
    save_truth,
    split_dataset,
    standardize,
    synth_generate,
    synth_generate_confounded,
)
from covertrain.errors import DataError, ParseError


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _toy_dataset():
    bags = (
        Bag(1, 1, (Instance(0, [0.5, 1.0]), Instance(1, [0.0, 2.0]))),
        Bag(2, -1, (Instance(0, [1.5, -1.0]),)),
    )
    return Dataset(2, bags, "toy")


class TestTypes:
    def test_label_must_be_binary(self):
        with pytest.raises(DataError):
            Bag(0, 0, (Instance(0, [1.0]),))

    def test_bag_must_be_nonempty(self):
        with pytest.raises(DataError):
            Bag(0, 1, ())

    def test_nonfinite_features_rejected(self):
        with pytest.raises(DataError):
            Instance(0, [1.0, np.nan])

    def test_dimension_consistency_enforced(self):
        with pytest.raises(DataError):
            Dataset(3, (Bag(0, 1, (Instance(0, [1.0, 2.0]),)),))

    def test_duplicate_bag_ids_rejected(self):
        bag = Bag(0, 1, (Instance(0, [1.0]),))
        with pytest.raises(DataError):
            Dataset(1, (bag, Bag(0, -1, (Instance(0, [2.0]),))))

    def test_features_are_read_only(self):
        inst = Instance(0, [1.0, 2.0])
        with pytest.raises(ValueError):
            inst.features[0] = 3.0


class TestLoadDense:
    def test_basic_readback(self, tmp_path):
        path = _write(tmp_path, "1,+1,0.5,1.0\n1,+1,0.0,2.0\n")
        ds = load_dataset(path)
        assert len(ds.bags) == 1
        assert len(ds.bags[0]) == 2
        assert ds.dim == 2
        assert ds.bags[0].label == 1
        np.testing.assert_array_equal(ds.bags[0].feature_matrix, [[0.5, 1.0], [0.0, 2.0]])

    def test_comments_and_blank_lines_skipped(self, tmp_path):
        path = _write(tmp_path, "# header\n\n1,+1,0.5\n2,-1,1.5\n")
        ds = load_dataset(path)
        assert [b.bag_id for b in ds.bags] == [1, 2]

    def test_dimension_mismatch_reports_line(self, tmp_path):
        path = _write(tmp_path, "1,+1,0.5,1.0\n1,+1,1.0,2.0,3.0\n")
        with pytest.raises(ParseError) as err:
            load_dataset(path)
        assert err.value.lineno == 2

    def test_unknown_label(self, tmp_path):
        path = _write(tmp_path, "1,2,0.5\n")
        with pytest.raises(ParseError):
            load_dataset(path)

    def test_empty_file(self, tmp_path):
        path = _write(tmp_path, "")
        with pytest.raises(DataError):
            load_dataset(path)

    def test_conflicting_bag_label(self, tmp_path):
        path = _write(tmp_path, "1,+1,0.5\n1,-1,0.6\n")
        with pytest.raises(ParseError):
            load_dataset(path)

    def test_bad_feature_value(self, tmp_path):
        path = _write(tmp_path, "1,+1,abc\n")
        with pytest.raises(ParseError):
            load_dataset(path)


class TestLoadSparse:
    def test_header_and_omitted_zeros(self, tmp_path):
        path = _write(tmp_path, "#dim 4\n1 +1 1:0.5 3:2.0\n2 -1\n", "data.sb")
        ds = load_dataset(path, "sparse-bag")
        assert ds.dim == 4
        np.testing.assert_array_equal(ds.bags[0].feature_matrix, [[0.5, 0.0, 2.0, 0.0]])
        np.testing.assert_array_equal(ds.bags[1].feature_matrix, [[0.0] * 4])

    def test_missing_header(self, tmp_path):
        path = _write(tmp_path, "1 +1 1:0.5\n", "data.sb")
        with pytest.raises(ParseError):
            load_dataset(path, "sparse-bag")

    def test_out_of_range_index(self, tmp_path):
        path = _write(tmp_path, "#dim 2\n1 +1 3:0.5\n", "data.sb")
        with pytest.raises(ParseError):
            load_dataset(path, "sparse-bag")


class TestRoundTrip:
    @pytest.mark.parametrize("fmt", ["dense-csv", "sparse-bag"])
    def test_bit_exact(self, tmp_path, fmt):
        rng = np.random.default_rng(7)
        bags = []
        for bid in range(6):
            feats = rng.standard_normal((int(rng.integers(1, 5)), 3))
            feats[rng.random(feats.shape) < 0.3] = 0.0  # exercise sparse omission
            label = 1 if bid % 2 == 0 else -1
            bags.append(Bag(bid, label, tuple(Instance(i, f) for i, f in enumerate(feats))))
        ds = Dataset(3, tuple(bags), "rt")
        path = tmp_path / "rt.txt"
        save_dataset(ds, path, fmt)
        again = load_dataset(path, fmt, name="rt")
        assert datasets_equal(ds, again)

    def test_truth_sidecar_round_trip(self, tmp_path):
        truth = {0: 3, 1: 0, 5: 2}
        path = tmp_path / "truth.txt"
        save_truth(truth, path, header_comments=["note"])
        assert load_truth(path) == truth


class TestStandardize:
    def test_hand_example(self):
        ds = Dataset(2, (Bag(0, 1, (Instance(0, [1.0, 0.0]), Instance(1, [3.0, 0.0]))),))
        out = standardize(ds)
        np.testing.assert_allclose(out.bags[0].feature_matrix, [[-1.0, 0.0], [1.0, 0.0]])

    def test_single_instance_becomes_zero(self):
        ds = Dataset(3, (Bag(0, 1, (Instance(0, [4.0, -2.0, 7.0]),)),))
        out = standardize(ds)
        np.testing.assert_array_equal(out.bags[0].feature_matrix, [[0.0, 0.0, 0.0]])

    def test_random_matrix_centered_and_normalized(self):
        rng = np.random.default_rng(0)
        feats = rng.standard_normal((10, 5))
        ds = Dataset(5, (Bag(0, 1, tuple(Instance(i, f) for i, f in enumerate(feats))),))
        out = standardize(ds)
        X = out.bags[0].feature_matrix
        # recover the pre-normalization means: each row was scaled individually,
        # so instead center the raw data and verify directly
        centered = feats - feats.mean(axis=0)
        assert np.abs(centered.mean(axis=0)).max() < 1e-12
        norms = np.linalg.norm(X, axis=1)
        assert np.all((np.abs(norms - 1.0) < 1e-12) | (norms == 0.0))
        expected = centered / np.linalg.norm(centered, axis=1, keepdims=True)
        np.testing.assert_allclose(X, expected, atol=1e-15)

    def test_idempotent_on_normalized_zero_mean_data(self):
        rng = np.random.default_rng(1)
        feats = rng.standard_normal((8, 4))
        feats -= feats.mean(axis=0)
        # symmetrize so the second pass sees zero means again
        feats = np.vstack([feats, -feats])
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        ds = Dataset(4, (Bag(0, 1, tuple(Instance(i, f) for i, f in enumerate(feats))),))
        out = standardize(ds)
        np.testing.assert_allclose(out.bags[0].feature_matrix, feats, atol=1e-9)

    def test_external_means_applied(self):
        ds = _toy_dataset()
        out = standardize(ds, means=np.zeros(2))
        row = ds.bags[0].feature_matrix[0]
        np.testing.assert_allclose(out.bags[0].feature_matrix[0], row / np.linalg.norm(row))


class TestSynth:
    def test_zero_counts_rejected(self):
        with pytest.raises(ValueError):
            synth_generate(0, 5, 4, 3, 1.0, seed=0)

    def test_negative_separation_rejected(self):
        with pytest.raises(ValueError):
            synth_generate(2, 2, 2, 2, -1.0, seed=0)

    def test_same_seed_bit_identical(self):
        a, ta = synth_generate(5, 4, 3, 6, 2.5, seed=42)
        b, tb = synth_generate(5, 4, 3, 6, 2.5, seed=42)
        assert ta == tb
        assert datasets_equal(a, b)

    def test_labels_and_truth_shape(self):
        ds, truth = synth_generate(3, 2, 4, 5, 2.0, seed=1)
        assert [b.label for b in ds.bags] == [1, 1, 1, -1, -1]
        assert set(truth) == {0, 1, 2}
        assert all(0 <= slot < 4 for slot in truth.values())

    def test_signal_instances_linearly_separable(self):
        # train a linear classifier on the ground-truth split of instances
        from covertrain.lsvm import TrainConfig, train_initial_svm

        ds, truth = synth_generate(40, 40, 10, 10, 6.0, seed=0)
        positives = sorted(truth.items())
        model = train_initial_svm(ds, positives, TrainConfig(c=10.0, use_bias=True))
        correct = 0
        total = 0
        for bag in ds.bags:
            scores = bag.feature_matrix @ model.w + model.bias
            for pos, inst in enumerate(bag.instances):
                is_signal = truth.get(bag.bag_id) == inst.instance_id
                predicted = scores[pos] > 0
                correct += int(predicted == is_signal)
                total += 1
        assert correct / total >= 0.99

    def test_confounded_has_distinct_slots(self):
        ds, truth = synth_generate_confounded(5, 5, 4, 6, 3.0, 9.0, seed=3)
        assert len(ds.bags) == 10
        norms = []
        for bag in ds.bags[:5]:
            norms.append(np.linalg.norm(bag.feature_matrix, axis=1).max())
        # every positive bag carries one far-out clutter instance
        assert min(norms) > 6.0


class TestKfold:
    def test_even_split(self):
        ds, _ = synth_generate(10, 10, 2, 3, 1.0, seed=0)
        split = kfold_split(ds, 10, seed=0)
        for fold in range(10):
            ids = split.bag_ids_in(fold)
            assert len(ids) == 2
            labels = [ds.bag_by_id[b].label for b in ids]
            assert sorted(labels) == [-1, 1]

    def test_uneven_positive_counts(self):
        ds, _ = synth_generate(3, 2, 2, 3, 1.0, seed=0)
        split = kfold_split(ds, 2, seed=5)
        pos_counts = sorted(
            sum(1 for b in split.bag_ids_in(f) if ds.bag_by_id[b].label > 0) for f in range(2)
        )
        assert pos_counts == [1, 2]

    def test_deterministic(self):
        ds, _ = synth_generate(7, 9, 2, 3, 1.0, seed=0)
        a = kfold_split(ds, 4, seed=11)
        b = kfold_split(ds, 4, seed=11)
        assert a.assignments == b.assignments

    def test_too_few_bags(self):
        ds, _ = synth_generate(3, 3, 2, 3, 1.0, seed=0)
        with pytest.raises(DataError):
            kfold_split(ds, 4, seed=0)

    def test_stratification_invariant_exhaustive(self):
        rng = np.random.default_rng(2)
        for trial in range(10):
            n_pos = int(rng.integers(10, 25))
            n_neg = int(rng.integers(10, 25))
            ds, _ = synth_generate(n_pos, n_neg, 2, 3, 1.0, seed=trial)
            for k in range(2, 11):
                split = kfold_split(ds, k, seed=trial)
                sizes = [len(split.bag_ids_in(f)) for f in range(k)]
                pos_counts = [
                    sum(1 for b in split.bag_ids_in(f) if ds.bag_by_id[b].label > 0)
                    for f in range(k)
                ]
                assert sum(sizes) == n_pos + n_neg
                assert max(sizes) - min(sizes) <= 1
                assert max(pos_counts) - min(pos_counts) <= 1
                mean_pos = n_pos / k
                assert all(abs(c - mean_pos) <= 1.0 for c in pos_counts)

    def test_split_dataset_partition(self):
        ds, _ = synth_generate(6, 6, 2, 3, 1.0, seed=0)
        split = kfold_split(ds, 3, seed=1)
        train, test = split_dataset(ds, split, 1)
        assert len(train.bags) + len(test.bags) == len(ds.bags)
        assert {b.bag_id for b in test.bags} == set(split.bag_ids_in(1))


@pytest.mark.skipif(
    "COVERTRAIN_MUSK1" not in os.environ,
    reason="musk1 dense-csv not supplied (set COVERTRAIN_MUSK1)",
)
def test_musk1_counts():
    ds = load_dataset(os.environ["COVERTRAIN_MUSK1"])
    assert len(ds.bags) == 92
    assert ds.n_instances == 476
    assert ds.dim == 166
