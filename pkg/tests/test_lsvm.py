"""Max-instance decision rule, objective, initial SVM, and the alternating
latent refinement."""

import numpy as np
import pytest

from covertrain.data import Bag, Dataset, Instance, standardize, synth_generate
from covertrain.errors import DataError
from covertrain.losses import LossKind, loss_value
from covertrain.lsvm import (
    Model,
    TrainConfig,
    _impute,
    decision,
    load_model,
    lsvm_objective,
    save_model,
    train_initial_svm,
    train_lsvm_cccp,
)
from covertrain.optim import OptConfig


def _bag(bid, label, rows, ids=None):
    ids = ids if ids is not None else range(len(rows))
    return Bag(bid, label, tuple(Instance(i, r) for i, r in zip(ids, rows)))


class TestDecision:
    def test_zero_model_sign_convention(self):
        bag = _bag(0, 1, [[1.0, 2.0]])
        label, inst, score = decision(Model(np.zeros(2), 0.0), bag)
        assert (label, score) == (1, 0.0)

    def test_max_over_instances(self):
        bag = _bag(0, 1, [[-1.0], [2.0]])
        label, inst, score = decision(Model(np.ones(1)), bag)
        assert (label, inst, score) == (1, 1, 2.0)

    def test_argmax_tie_break_lowest_id(self):
        bag = _bag(0, 1, [[1.0], [1.0]], ids=[7, 3])
        _, inst, _ = decision(Model(np.ones(1)), bag)
        assert inst == 3

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            m = int(rng.integers(1, 8))
            bag = _bag(0, 1, rng.standard_normal((m, 4)))
            model = Model(rng.standard_normal(4), float(rng.standard_normal()))
            label, inst, score = decision(model, bag)
            scores = [float(model.w @ x.features + model.bias) for x in bag.instances]
            best = max(range(m), key=lambda j: (scores[j], -j))
            assert inst == bag.instances[best].instance_id
            assert score == pytest.approx(scores[best], rel=1e-12)
            assert label == (1 if score >= 0 else -1)

    def test_dimension_mismatch(self):
        bag = _bag(0, 1, [[1.0, 2.0]])
        with pytest.raises(DataError):
            decision(Model(np.zeros(3)), bag)

    def test_scaling_invariance(self):
        rng = np.random.default_rng(1)
        bag = _bag(0, 1, rng.standard_normal((5, 3)))
        model = Model(rng.standard_normal(3), 0.4)
        label, inst, score = decision(model, bag)
        for c in (0.5, 2.0, 117.0):
            scaled = Model(c * model.w, c * model.bias)
            l2, i2, s2 = decision(scaled, bag)
            assert (l2, i2) == (label, inst)
            assert s2 == pytest.approx(c * score, rel=1e-12)


class TestObjective:
    def test_zero_model_hinge(self):
        ds, _ = synth_generate(3, 3, 2, 4, 1.0, seed=0)
        cfg = TrainConfig(c=2.5, loss=LossKind.hinge)
        assert lsvm_objective(Model(np.zeros(4), 0.0), ds, cfg) == pytest.approx(2.5 * 6)

    def test_satisfied_negative_bag_contributes_nothing(self):
        bag = _bag(0, -1, [[-2.0], [-3.0]])
        ds = Dataset(1, (bag,))
        model = Model(np.array([1.0]))
        cfg = TrainConfig(c=10.0, loss=LossKind.hinge)
        assert lsvm_objective(model, ds, cfg) == pytest.approx(0.5)

    def test_matches_term_by_term_oracle(self):
        rng = np.random.default_rng(2)
        ds, _ = synth_generate(4, 4, 3, 5, 1.0, seed=3)
        for loss in LossKind:
            model = Model(rng.standard_normal(5), float(rng.standard_normal()))
            cfg = TrainConfig(c=1.7, loss=loss)
            expected = 0.5 * float(model.w @ model.w)
            for bag in ds.bags:
                s = max(float(model.w @ inst.features + model.bias) for inst in bag.instances)
                expected += 1.7 * loss_value(loss, bag.label, s)
            assert lsvm_objective(model, ds, cfg) == pytest.approx(expected, rel=1e-12)

    def test_single_instance_bags_reduce_to_standard_svm(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((12, 3))
        y = np.where(rng.random(12) < 0.5, 1, -1)
        bags = tuple(_bag(i, int(y[i]), [X[i]]) for i in range(12))
        ds = Dataset(3, bags)
        model = Model(rng.standard_normal(3), 0.3)
        cfg = TrainConfig(c=2.0, loss=LossKind.squared_hinge)
        direct = 0.5 * float(model.w @ model.w) + 2.0 * float(
            loss_value(LossKind.squared_hinge, y, X @ model.w + model.bias).sum()
        )
        assert lsvm_objective(model, ds, cfg) == pytest.approx(direct, rel=1e-12)


class TestInitialSvm:
    def test_separable_toy_is_perfect(self):
        bags = (
            _bag(0, 1, [[2.0, 0.1]]),
            _bag(1, 1, [[2.2, -0.1]]),
            _bag(2, -1, [[-2.0, 0.2]]),
            _bag(3, -1, [[-2.1, 0.0]]),
        )
        ds = Dataset(2, bags)
        model = train_initial_svm(ds, None, TrainConfig(c=10.0, use_bias=True))
        from covertrain.evaluate import bag_accuracy

        assert bag_accuracy(model, ds) == 100.0

    def test_identical_features_give_near_zero_weights(self):
        bags = (
            _bag(0, 1, [[1.0, 1.0]]),
            _bag(1, -1, [[1.0, 1.0]]),
        )
        ds = Dataset(2, bags)
        model = train_initial_svm(ds, None, TrainConfig(c=1.0, use_bias=True))
        assert np.abs(model.w).max() < 1e-4

    def test_gradient_norm_certificate(self):
        ds, _ = synth_generate(5, 5, 3, 4, 2.0, seed=7)
        cfg = TrainConfig(c=1.0, use_bias=True, inner=OptConfig(grad_tol=1e-8))
        model = train_initial_svm(ds, None, cfg)
        # recompute the convex objective gradient at the returned model
        X = np.vstack(
            [np.vstack([b.feature_matrix.mean(axis=0) for b in ds.positive_bags])]
            + [b.feature_matrix for b in ds.negative_bags]
        )
        y = np.concatenate(
            [np.ones(len(ds.positive_bags)), -np.ones(sum(len(b) for b in ds.negative_bags))]
        )
        s = X @ model.w + model.bias
        margin = np.maximum(0.0, 1.0 - y * s)
        grad_w = model.w + 1.0 * (X.T @ (-2.0 * y * margin))
        grad_b = float((-2.0 * y * margin).sum())
        assert max(np.abs(grad_w).max(), abs(grad_b)) <= 1e-6

    def test_empty_positive_set_rejected(self):
        ds, _ = synth_generate(2, 2, 2, 3, 1.0, seed=0)
        with pytest.raises(DataError):
            train_initial_svm(ds, [], TrainConfig())

    def test_explicit_positive_instances_used(self):
        ds, truth = synth_generate(6, 6, 4, 4, 5.0, seed=1)
        model = train_initial_svm(ds, sorted(truth.items()), TrainConfig(c=10.0, use_bias=True))
        # the planted signals should score higher than their bags' backgrounds
        margins = []
        for bag in ds.positive_bags:
            scores = bag.feature_matrix @ model.w + model.bias
            sig_pos = [i for i, inst in enumerate(bag.instances) if inst.instance_id == truth[bag.bag_id]][0]
            margins.append(scores[sig_pos] - np.delete(scores, sig_pos).max())
        assert np.median(margins) > 0


class TestCccp:
    def _trained_setup(self, seed=0, use_bias=True):
        ds, _ = synth_generate(10, 10, 5, 6, 4.0, seed=seed)
        ds = standardize(ds)
        cfg = TrainConfig(c=5.0, loss=LossKind.hinge, use_bias=use_bias)
        init = train_initial_svm(ds, None, cfg)
        return ds, cfg, init

    def test_trace_monotone(self):
        ds, cfg, init = self._trained_setup()
        model, trace = train_lsvm_cccp(init, ds, cfg)
        assert len(trace) >= 2
        assert all(trace[i + 1] <= trace[i] + 1e-9 for i in range(len(trace) - 1))
        assert trace[-1] <= trace[0]

    def test_fixed_point_converges_in_one_outer(self):
        ds, cfg, init = self._trained_setup(seed=3)
        model, _ = train_lsvm_cccp(init, ds, cfg)
        # retraining from the optimum must stop after a single alternation
        _, trace = train_lsvm_cccp(model, ds, cfg)
        assert len(trace) == 2

    def test_imputation_stable_at_fixed_point(self):
        ds, cfg, init = self._trained_setup(seed=5)
        model, _ = train_lsvm_cccp(init, ds, cfg)
        before = _impute(model, ds)
        # one more alternation from the converged model must keep every
        # latent assignment
        refined, trace = train_lsvm_cccp(model, ds, cfg)
        assert len(trace) == 2
        assert _impute(refined, ds) == before

    def test_dimension_mismatch(self):
        ds, cfg, init = self._trained_setup()
        bad = Model(np.zeros(ds.dim + 1), 0.0)
        with pytest.raises(DataError):
            train_lsvm_cccp(bad, ds, cfg)

    def test_monotone_across_losses_and_bias(self):
        for loss in (LossKind.hinge, LossKind.squared_hinge, LossKind.logistic):
            for use_bias in (False, True):
                ds, _ = synth_generate(6, 6, 4, 5, 3.0, seed=11)
                ds = standardize(ds)
                cfg = TrainConfig(c=2.0, loss=loss, use_bias=use_bias)
                init = train_initial_svm(ds, None, cfg)
                _, trace = train_lsvm_cccp(init, ds, cfg)
                assert all(trace[i + 1] <= trace[i] + 1e-9 for i in range(len(trace) - 1))


class TestModelIO:
    @pytest.mark.parametrize("bias", [None, -0.75])
    def test_round_trip(self, tmp_path, bias):
        rng = np.random.default_rng(8)
        model = Model(rng.standard_normal(6), bias)
        path = tmp_path / "model.txt"
        save_model(model, path, footer_comments=["run info"])
        again = load_model(path)
        assert np.array_equal(model.w, again.w)
        assert model.bias == again.bias

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "model.txt"
        path.write_text("dims 3 bias\n1\n2\n3\n0.5\n")
        with pytest.raises(DataError):
            load_model(path)
