import time
from dataclasses import replace

import numpy as np
import pytest

from src.aspectrating.corpus import Review, split_by_author
from src.aspectrating.evaluation import mae
from src.aspectrating.generator import generate
from src.aspectrating.model import rating_table
from src.aspectrating.predictor import predict, predict_batch, review_rng, to_model_index
from src.aspectrating.schemas import GenSpec, HyperParams, PredictConfig, TrainConfig
from src.aspectrating.trainer import train

QUICK = PredictConfig(sweeps=30, burn_in=10, seed=3)


def _review(tokens, author=0, review_id="r000", rating=4.0):
    return Review(review_id=review_id, author_index=author, rating=rating, tokens=np.asarray(tokens))


def _one_topic_model(make_model, pi_row, psi_row, V=2):
    """A single dominant topic; the unseen-topic row is effectively never chosen."""
    pi = np.tile(np.asarray(pi_row, dtype=float), (1, V, 1))
    psi = np.asarray(psi_row, dtype=float).reshape(1, 1, 2)
    return make_model(np.full((1, V), 1.0 / V), pi, psi, topic_tables=[10**9], hyper=HyperParams(gamma=1e-6))


class TestPredict:
    def test_all_neutral_words_predict_mu(self, make_model):
        model = _one_topic_model(make_model, [0.0, 1.0, 0.0], [0.5, 0.5])
        p = predict(model, _review([0, 1, 1]), QUICK)
        assert p.predicted_rating == 3.5
        assert not p.oov and p.tokens_used == 3

    def test_forced_strong_positive_predicts_five(self, make_model):
        model = _one_topic_model(make_model, [0.0, 0.0, 1.0], [0.0, 1.0])
        p = predict(model, _review([0, 1]), QUICK)
        assert p.predicted_rating == 5.0

    def test_out_of_vocabulary_review(self, hand_model):
        p = predict(hand_model, _review([-1, -1]), QUICK)
        assert p.predicted_rating == hand_model.hyper.mu
        assert p.oov and p.tokens_used == 0

    def test_unknown_tokens_are_dropped(self, hand_model):
        p = predict(hand_model, _review([0, -1, 2]), QUICK)
        assert p.tokens_used == 2

    def test_unseen_author(self, hand_model):
        p = predict(hand_model, _review([0, 1, 2], author=7), QUICK)
        assert 1.0 <= p.predicted_rating <= 5.0
        assert p.error is None

    def test_trace_covers_post_burn_in_sweeps(self, hand_model):
        p = predict(hand_model, _review([0, 1, 2, 3]), QUICK)
        assert len(p.trace) == QUICK.sweeps - QUICK.burn_in
        assert p.predicted_rating == pytest.approx(np.clip(np.mean(p.trace), 1, 5))
        allowed = set(rating_table(3.5).ravel())
        assert all(1.0 <= r <= 5.0 for r in p.trace)
        # a one-word review's mean is always one of the word ratings
        single = predict(hand_model, _review([1]), QUICK)
        assert set(single.trace) <= allowed

    def test_final_state(self, hand_model):
        config = PredictConfig(sweeps=30, burn_in=10, seed=3, average_over_sweeps=False)
        p = predict(hand_model, _review([0, 1, 2, 3]), config)
        assert p.predicted_rating == pytest.approx(p.trace[-1])

    def test_rating_variance_is_not_used(self, make_model, hand_model):
        review = _review([0, 3, 1, 1, 2])
        results = []
        for sigma2 in (0.04, 0.08, 0.16):
            model = make_model(hand_model.phi, hand_model.pi, hand_model.psi, hand_model.topic_tables,
                               hyper=HyperParams(sigma2=sigma2))
            results.append(predict(model, review, QUICK))
        assert results[0].trace == results[1].trace == results[2].trace
        assert results[0].predicted_rating == results[1].predicted_rating == results[2].predicted_rating

    def test_seeded_per_review(self, hand_model):
        review = _review([0, 1, 2, 3])
        assert predict(hand_model, review, QUICK).trace == predict(hand_model, review, QUICK).trace

    @pytest.mark.slow
    def test_single_word_matches_topic_mixture(self, hand_model):
        w, x = 0, 0
        m = hand_model
        weights = np.append(m.topic_tables * m.phi[:, w], m.hyper.gamma / m.V)
        psi = np.vstack([m.psi[:, x, :], np.full((1, 2), 0.5)])
        pi = np.vstack([m.pi[:, w, :], np.full((1, 3), 1 / 3)])
        cells = np.einsum("k,ku,ks->us", weights / weights.sum(), psi, pi)

        ratings = rating_table(m.hyper.mu)
        values = np.unique(ratings)
        expected = np.array([cells[ratings == v].sum() for v in values])

        p = predict(m, _review([w], author=x), PredictConfig(sweeps=40_001, burn_in=1, seed=8))
        trace = np.asarray(p.trace)
        observed = np.array([np.isclose(trace, v).mean() for v in values])
        assert np.abs(observed - expected).sum() < 0.05


class TestReviewRng:
    def test_keyed_on_seed_and_id(self):
        a = review_rng(0, "r1").random(4)
        np.testing.assert_array_equal(a, review_rng(0, "r1").random(4))
        assert not np.array_equal(a, review_rng(0, "r2").random(4))
        assert not np.array_equal(a, review_rng(1, "r1").random(4))


class TestPredictBatch:
    def _corpus(self, make_corpus):
        docs = [[0, 1], [2, 3, 3], [1], [0, 0, 2], [3, 2, 1, 0], [2]]
        return make_corpus(docs, [4, 2, 5, 3, 1, 4], [0, 1, 0, 1, 0, 1], V=4)

    def test_batch_of_one_equals_single(self, make_corpus, hand_model):
        corpus = make_corpus([[0, 2, 3]], [4.0], [1], V=4)
        [batched] = predict_batch(hand_model, corpus, QUICK)
        single = predict(hand_model, corpus.reviews[0], QUICK)
        assert batched.predicted_rating == single.predicted_rating
        assert batched.trace == single.trace

    def test_order_does_not_matter(self, make_corpus, hand_model):
        corpus = self._corpus(make_corpus)
        forward = {p.review_id: p.predicted_rating for p in predict_batch(hand_model, corpus, QUICK)}
        reversed_corpus = replace(corpus, reviews=list(reversed(corpus.reviews)))
        backward = {p.review_id: p.predicted_rating for p in predict_batch(hand_model, reversed_corpus, QUICK)}
        assert forward == backward

    def test_worker_processes_match_inline(self, make_corpus, hand_model):
        corpus = self._corpus(make_corpus)
        inline = predict_batch(hand_model, corpus, QUICK, jobs=1)
        pooled = predict_batch(hand_model, corpus, QUICK, jobs=2)
        assert [p.predicted_rating for p in inline] == [p.predicted_rating for p in pooled]

    def test_empty_corpus(self, make_corpus, hand_model):
        assert predict_batch(hand_model, make_corpus([], [], [], V=4, X=1), QUICK) == []

    def test_words_mapped_by_name(self, make_corpus, hand_model):
        corpus = make_corpus([[0, 1]], [3.0], [0], V=6)
        words, authors = to_model_index(hand_model, corpus)
        np.testing.assert_array_equal(words, [0, 1, 2, 3, -1, -1])
        np.testing.assert_array_equal(authors, [0])

    def test_out_of_vocabulary_only_review(self, make_corpus, hand_model):
        corpus = make_corpus([[4, 5]], [2.0], [0], V=6)
        [p] = predict_batch(hand_model, corpus, QUICK)
        assert p.oov and p.predicted_rating == 3.5 and p.true_rating == 2.0


def _polar_blocks(V, K):
    """Topic k's own words lean positive for even k and negative for odd k; the rest neutral."""
    block = V // K
    pi = np.tile([0.1, 0.8, 0.1], (K, V, 1))
    for k in range(K):
        lean = [0.02, 0.08, 0.9] if k % 2 == 0 else [0.9, 0.08, 0.02]
        pi[k, k * block:(k + 1) * block] = lean
    return pi


@pytest.mark.slow
def test_beats_constant_baselines(separated_phi):
    K, V, X = 3, 50, 10
    spec = GenSpec(
        k_true=K, vocab_size=V, num_authors=X, num_docs=300, doc_length_mean=40, doc_length_min=10,
        hyper=HyperParams(alpha=0.2),
        phi=separated_phi(K, V).tolist(),
        pi=_polar_blocks(V, K).tolist(),
        psi=np.tile([0.2, 0.8], (K, X, 1)).tolist(),
        seed=12,
    )
    started = time.perf_counter()
    corpus = generate(spec).corpus
    train_corpus, test_corpus = split_by_author(corpus, seed=spec.seed)
    model = train(train_corpus, spec.hyper, TrainConfig(sweeps=1000, burn_in=500, seed=1))

    preds = predict_batch(model, test_corpus, PredictConfig(seed=1))
    elapsed = time.perf_counter() - started
    true = [p.true_rating for p in preds]
    model_mae = mae(true, [p.predicted_rating for p in preds])
    constant_mae = mae(true, [spec.hyper.mu] * len(true))
    train_mean_mae = mae(true, [float(train_corpus.ratings().mean())] * len(true))
    assert model_mae <= 0.9 * constant_mae
    assert model_mae <= 0.9 * train_mean_mae
    assert elapsed < 300
