import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitrobust.hcn import (HcnArch, HcnModel, TrainConfig, evaluate_accuracy, fit_hcn,
                            hcn_forward, hcn_id_score, score_from_probabilities,
                            temporal_difference, train_hcn)
from gaitrobust.numerics import evaluate
from gaitrobust.skeldata import SkeletonDataset
from gradient_cases import hcn_input_gradient_errors
from oracles import inception_style_score


@pytest.fixture
def model():
    return HcnModel.initialize(HcnArch(num_classes=5), np.random.default_rng(0))


def test_temporal_difference_examples():
    assert not temporal_difference(np.ones((3, 3, 13))).any()
    x = np.array([0.0, 1.0, 3.0]).reshape(1, 3, 1)
    np.testing.assert_array_equal(temporal_difference(x)[0, :, 0], [1, 2, 0])
    v = np.linspace(-0.5, 0.5, 3 * 13).reshape(3, 1, 13)
    lin = v * np.arange(5).reshape(1, 5, 1)
    d = temporal_difference(lin)
    np.testing.assert_allclose(d[:, :4], np.repeat(v, 4, axis=1), atol=1e-15)
    assert not d[:, 4].any()
    with pytest.raises(ValueError):
        temporal_difference(np.zeros((3, 1, 13)))


def test_time_diff_node_matches_function(model):
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, (4, 3, 3, 13))
    g, n = model.loss_graph()
    td = next(node.name for node in g.nodes if node.op == "time_diff")
    got = evaluate(g, {n["x"]: x, n["y"]: np.zeros(4, int)}, [td])[td]
    np.testing.assert_array_equal(got, temporal_difference(x))


def test_forward_rows_are_distributions(model):
    rng = np.random.default_rng(2)
    p = hcn_forward(model, rng.uniform(-1, 1, (20, 3, 3, 13)))
    assert p.shape == (20, 5)
    assert np.abs(p.sum(axis=1) - 1).max() < 1e-9
    assert (p >= 0).all()


def test_zero_final_layer_gives_uniform(model):
    model.params["out.w"][:] = 0.0
    model.params["out.b"][:] = 0.0
    p = model.predict_proba(np.random.default_rng(3).uniform(-1, 1, (6, 3, 3, 13)))
    np.testing.assert_allclose(p, 0.2, atol=1e-15)


def test_identical_samples_identical_rows(model):
    x = np.random.default_rng(4).uniform(-1, 1, (1, 3, 3, 13))
    p = model.predict_proba(np.concatenate([x, x]))
    assert p[0].tobytes() == p[1].tobytes()


def test_constant_sample_invariant_to_frame_permutation(model):
    frame = np.random.default_rng(5).uniform(-1, 1, (3, 1, 13))
    x = np.repeat(frame, 3, axis=1)[None]
    assert not temporal_difference(x).any()
    p = model.predict_proba(x)
    np.testing.assert_array_equal(p, model.predict_proba(x[:, :, [2, 0, 1]]))


def test_shape_mismatch(model):
    with pytest.raises(ValueError):
        model.predict_proba(np.zeros((2, 3, 4, 13)))


def test_input_gradient_matches_directional_differences(model):
    errors = hcn_input_gradient_errors(model, np.random.default_rng(6), 100)
    assert max(errors) < 1e-4


def test_input_gradient_rows_are_per_sample(model):
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, (3, 3, 3, 13))
    y = np.array([0, 1, 2])
    full = model.input_gradient(x, y)
    for i in range(3):
        np.testing.assert_allclose(full[i], model.input_gradient(x[i:i + 1], y[i:i + 1])[0],
                                   rtol=1e-12, atol=1e-15)


# -- training ----------------------------------------------------------------------


def _toy():
    rng = np.random.default_rng(8)
    x = np.concatenate([rng.uniform(0.3, 0.9, (2, 3, 3, 13)), rng.uniform(-0.9, -0.3, (2, 3, 3, 13))])
    return SkeletonDataset(x, [0, 0, 1, 1], 2)


def test_toy_overfit():
    ds = _toy()
    model = train_hcn(ds, TrainConfig(batch_size=64, epochs=100), seed=0)
    assert evaluate_accuracy(model, ds) == 1.0


def test_first_epoch_descends(small_corpus):
    before, after = [], []
    for seed in range(5):
        init = fit_hcn(small_corpus, TrainConfig(epochs=0), seed=seed).model
        trained = train_hcn(small_corpus, TrainConfig(epochs=1), seed=seed)
        before.append(init.mean_loss(small_corpus.samples, small_corpus.labels))
        after.append(trained.mean_loss(small_corpus.samples, small_corpus.labels))
    assert np.mean(after) < np.mean(before)


def test_training_deterministic(small_corpus):
    a = train_hcn(small_corpus, TrainConfig(epochs=2), seed=3)
    b = train_hcn(small_corpus, TrainConfig(epochs=2), seed=3)
    c = train_hcn(small_corpus, TrainConfig(epochs=2), seed=4)
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)
    assert any(a.params[k].tobytes() != c.params[k].tobytes() for k in a.params)


def test_glorot_init_bounds():
    m = HcnModel.initialize(HcnArch(9), np.random.default_rng(0))
    w = m.params["fc.w"]
    assert np.abs(w).max() <= np.sqrt(6 / sum(w.shape))
    assert not m.params["fc.b"].any()


def test_empty_training_set():
    with pytest.raises(ValueError):
        train_hcn(SkeletonDataset(np.zeros((0, 3, 3, 13)), [], 2), TrainConfig(epochs=1))


def test_checkpoint_roundtrip(tmp_path, model):
    model.save(tmp_path / "m.skw", {"train": {"epochs": 3}})
    back = HcnModel.load(tmp_path / "m.skw")
    assert back.arch == model.arch
    x = np.random.default_rng(9).uniform(-1, 1, (3, 3, 3, 13))
    assert back.predict_proba(x).tobytes() == model.predict_proba(x).tobytes()


# -- accuracy ------------------------------------------------------------------------


class _Fixed(HcnModel):
    def __init__(self, probs):
        self._probs = probs

    @property
    def num_classes(self):
        return self._probs.shape[1]

    def predict_proba(self, x, chunk=1024):
        return self._probs[:len(x)]


def test_constant_predictor_accuracy():
    labels = np.repeat(np.arange(9), 4)
    probs = np.tile(np.eye(9)[0], (36, 1))
    ds = SkeletonDataset(np.zeros((36, 3, 3, 13)), labels, 9)
    assert evaluate_accuracy(_Fixed(probs), ds) == pytest.approx(1 / 9)


def test_ties_break_to_lowest_index():
    ds = SkeletonDataset(np.zeros((2, 3, 3, 13)), [0, 1], 2)
    assert evaluate_accuracy(_Fixed(np.full((2, 2), 0.5)), ds) == 0.5


def test_self_consistent_labels(model):
    x = np.random.default_rng(10).uniform(-1, 1, (30, 3, 3, 13))
    ds = SkeletonDataset(x, model.predict(x), 5)
    assert evaluate_accuracy(model, ds) == 1.0


# -- quality score ---------------------------------------------------------------------


def test_score_uniform_is_one():
    assert score_from_probabilities(np.full((10, 9), 1 / 9)) == pytest.approx(1.0, abs=1e-9)


def test_score_balanced_one_hot_is_k():
    probs = np.eye(9)[np.arange(27) % 9]
    assert score_from_probabilities(probs) == pytest.approx(9.0, abs=1e-6)


def test_score_matches_longhand_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        p = rng.dirichlet(np.full(4, 0.3), size=7)
        assert score_from_probabilities(p) == pytest.approx(inception_style_score(p), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.integers(2, 9), st.integers(0, 10_000))
def test_score_bounds_and_order_invariance(n, k, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.full(k, rng.uniform(0.05, 3)), size=n)
    s = score_from_probabilities(p)
    assert 1.0 <= s <= k
    assert s == pytest.approx(score_from_probabilities(p[rng.permutation(n)]), rel=1e-12)


def test_score_needs_two_samples(model):
    with pytest.raises(ValueError):
        hcn_id_score(model, np.zeros((1, 3, 3, 13)))
