import math

import numpy as np
import pytest

import pgfa


def test_primitives():
    np.testing.assert_allclose(pgfa.l2_normalize(np.array([3.0, 4.0])), [0.6, 0.8])
    assert pgfa.cosine_sim(np.array([1.0, 0.0]), np.array([-1.0, 0.0])) == -1.0
    np.testing.assert_allclose(pgfa.softmax(np.array([math.log(2.0), 0.0])), [2 / 3, 1 / 3])
    assert pgfa.shannon_entropy(np.full(4, 0.25)) == pytest.approx(math.log(4))
    assert pgfa.kl_divergence(np.array([0.5, 0.5]), np.array([0.75, 0.25])) == pytest.approx(0.143841, abs=1e-6)


def test_similarity_matrix_matches_numpy():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(3, 5)), rng.normal(size=(4, 5))
    expected = (x / np.linalg.norm(x, axis=1, keepdims=True)) @ (y / np.linalg.norm(y, axis=1, keepdims=True)).T
    np.testing.assert_allclose(pgfa.similarity_matrix(x, y), expected, atol=1e-12)


def test_errors_carry_codes():
    with pytest.raises(pgfa.PgfaError) as info:
        pgfa.l2_normalize(np.zeros(2))
    assert info.value.args[1] == "ZeroVector"
    with pytest.raises(RuntimeError):
        pgfa.softmax(np.ones(2), 0.0)


def test_training_reduces_loss_and_is_deterministic():
    means = pgfa.clustered_means(16, 4, 0.6)
    mix = pgfa.make_mixture(means, 30.0, 60, 0.3, seed=1)
    labels = mix["labels"]
    text = mix["biased_anchors"][labels]
    state = pgfa.TrainerState.initialize([16, 32, 16], pgfa.Activation.relu, text_dim=16, seed=2)
    trained, losses = pgfa.fit(state, mix["features"], text, labels, epochs=10, batch_size=32, lr=5e-2, seed=3)
    again, losses2 = pgfa.fit(state, mix["features"], text, labels, epochs=10, batch_size=32, lr=5e-2, seed=3)
    assert len(losses) == 10
    assert losses[-1] < losses[0]
    assert losses == losses2
    assert trained == again
    emb = pgfa.embed(trained, mix["features"])
    assert emb.shape == (240, 16)
    assert pgfa.contrastive_loss(state, mix["features"][:1], text[:1], labels[:1]) == 0.0


def test_alignment_pipeline():
    means = pgfa.clustered_means(32, 5, math.radians(30))
    mix = pgfa.make_mixture(means, 30.0, 500, math.radians(25), seed=0)
    base = pgfa.classify_with_anchors(mix["features"], mix["biased_anchors"])
    zero = pgfa.align_and_classify(mix["features"], mix["biased_anchors"], alpha=0.0)
    assert zero["final_labels"] == base["pseudo_labels"]
    aligned = pgfa.align_and_classify(mix["features"], mix["biased_anchors"], alpha=0.9)
    assert pgfa.accuracy(mix["labels"], aligned["final_labels"]) > pgfa.accuracy(mix["labels"], base["pseudo_labels"])
    full = pgfa.align_and_classify(mix["features"], mix["biased_anchors"], alpha=1.0)
    assert full["filtered_sizes"] == full["support_sizes"]
    weighted = pgfa.align_and_classify(mix["features"], mix["biased_anchors"], strategy="weighted")
    assert len(weighted["final_labels"]) == 2500


def test_vmf_and_metrics():
    assert pgfa.a_d(2.0, 3) == pytest.approx(1 / math.tanh(2.0) - 0.5, abs=1e-12)
    mu = np.zeros(3)
    mu[0] = 1.0
    x = pgfa.sample_vmf(mu, 50.0, 5000, seed=4)
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-9)
    assert np.linalg.norm(x.mean(axis=0)) == pytest.approx(pgfa.a_d(50.0, 3), rel=0.01)
    rows = pgfa.verify_theorem1(dim=6, classes=3, kappa=10.0, n_list=[5, 50], trials=2, eval_per_class=50)
    assert len(rows) == 4 and all(0.0 <= r["agreement"] <= 1.0 for r in rows)

    cm = pgfa.confusion([0, 0, 1, 1], [0, 1, 1, 1], 2)
    assert cm.tolist() == [[1, 1], [0, 2]]
    pts = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]])
    assert pgfa.silhouette_cosine(pts, [0, 0, 1, 1]) == pytest.approx(1.0)
    report = pgfa.evaluate([0, 0, 1, 1], [0, 1, 1, 1], 2, pts)
    assert report["accuracy"] == 0.75 and report["fdr"] is None


def test_gradcheck():
    ok = pgfa.gradcheck(configs=5)
    assert ok["passed"] and ok["max_error"] < 1e-5
    bad = pgfa.gradcheck(configs=5, corrupt="log_tau")
    assert not bad["passed"] and bad["worst"] == "log_tau"


def test_checkpoint_round_trip(tmp_path):
    state = pgfa.TrainerState.initialize([4, 3], pgfa.Activation.tanh, text_dim=2, seed=1)
    path = tmp_path / "m.ckpt"
    state.save(path)
    assert pgfa.TrainerState.load(path) == state
