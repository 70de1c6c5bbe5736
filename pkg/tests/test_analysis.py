import numpy as np
import pytest

from src.aspectrating.analysis import (
    aspect_preference,
    aspect_sentiment,
    critical_aspects,
    is_critical,
    polarity_extremes,
    polarity_histogram,
    polarity_table,
    preference_sentiment_correlation,
    top_words,
    word_polarity,
)
from src.aspectrating.errors import MetricError
from src.aspectrating.generator import generate, plant_critical_aspect
from src.aspectrating.schemas import GenSpec, HyperParams, TrainConfig
from src.aspectrating.trainer import train


def _pi(*rows):
    """pi rows given as (positive, negative) pairs; the rest of the mass is neutral."""
    return np.array([[[neg, 1.0 - pos - neg, pos] for pos, neg in row] for row in rows])


def _model(make_model, pi, psi=None, phi=None):
    pi = np.asarray(pi, dtype=float)
    K, V = pi.shape[:2]
    phi = np.full((K, V), 1.0 / V) if phi is None else phi
    psi = np.full((K, 2, 2), 0.5) if psi is None else psi
    return make_model(phi, pi, psi)


class TestWordPolarity:
    def test_symmetric_is_zero(self, make_model):
        model = _model(make_model, _pi([(0.3, 0.3)], [(0.1, 0.1)]))
        assert word_polarity(model, 0) == 0.0

    def test_maximally_positive(self, make_model):
        model = _model(make_model, _pi([(0.8, 0.0)]))
        assert word_polarity(model, 0) == pytest.approx(1.0)

    def test_sums_over_topics(self, make_model):
        model = _model(make_model, _pi([(0.6, 0.2)], [(0.1, 0.3)]))
        assert word_polarity(model, 0) == pytest.approx(0.2 / 1.2)

    def test_neutral_only_word_is_zero(self, make_model):
        model = _model(make_model, _pi([(0.0, 0.0), (0.5, 0.1)]))
        assert word_polarity(model, 0) == 0.0

    def test_table_matches_per_word(self, hand_model):
        table = polarity_table(hand_model)
        np.testing.assert_allclose(table, [word_polarity(hand_model, w) for w in range(hand_model.V)])
        assert np.all(np.abs(table) <= 1.0)

    def test_swapping_sentiments_negates_exactly(self, hand_model, make_model):
        flipped = make_model(hand_model.phi, hand_model.pi[:, :, ::-1], hand_model.psi, hand_model.topic_tables)
        np.testing.assert_array_equal(polarity_table(flipped), -polarity_table(hand_model))
        for k in range(hand_model.K):
            assert aspect_sentiment(flipped, k) == -aspect_sentiment(hand_model, k)


class TestAspectScores:
    def test_preference_bounds(self, make_model):
        pi = _pi([(0.5, 0.1)])
        assert aspect_preference(_model(make_model, pi, psi=np.tile([0.0, 1.0], (1, 2, 1))), 0) == 1.0
        assert aspect_preference(_model(make_model, pi, psi=np.tile([1.0, 0.0], (1, 2, 1))), 0) == 0.0

    def test_preference_averages_authors(self, make_model):
        psi = np.array([[[0.8, 0.2], [0.2, 0.8]]])
        assert aspect_preference(_model(make_model, _pi([(0.5, 0.1)]), psi=psi), 0) == pytest.approx(0.5)

    def test_sentiment_examples(self, make_model):
        assert aspect_sentiment(_model(make_model, _pi([(0.9, 0.1), (0.3, 0.5)])), 0) == pytest.approx(1 / 3)
        assert aspect_sentiment(_model(make_model, _pi([(0.2, 0.2), (0.4, 0.4)])), 0) == 0.0
        assert aspect_sentiment(_model(make_model, _pi([(1.0, 0.0), (1.0, 0.0)])), 0) == pytest.approx(1.0)

    def test_sentiment_without_polar_mass(self, make_model):
        assert aspect_sentiment(_model(make_model, _pi([(0.0, 0.0), (0.0, 0.0)])), 0) == 0.0


class TestCriticalRule:
    @pytest.mark.parametrize(
        "pref, senti, expected",
        [
            (0.556, 0.145, True),
            (0.447, -0.539, True),
            (0.650, 0.606, False),
            (0.001, -0.463, False),
        ],
    )
    def test_reference_rows(self, pref, senti, expected):
        assert is_critical(pref, senti, 0.3, 2.0) is expected

    def test_floor_is_inclusive(self):
        assert is_critical(0.3, -0.1, 0.3, 2.0)

    def test_matches_brute_force(self, make_model):
        rng = np.random.default_rng(0)
        for _ in range(50):
            K, V, X = 4, 6, 3
            pi = rng.dirichlet([0.5, 0.5, 0.5], size=(K, V))
            psi = rng.dirichlet([0.5, 0.5], size=(K, X))
            model = make_model(rng.dirichlet(np.ones(V), size=K), pi, psi)
            flags = {a.topic: a.critical for a in critical_aspects(model)}
            for k in range(K):
                pref = sum(psi[k, x, 1] for x in range(X)) / X
                senti = sum(pi[k, w, 2] - pi[k, w, 0] for w in range(V)) / sum(pi[k, w, 2] + pi[k, w, 0] for w in range(V))
                expected = pref >= 0.3 and (senti <= 0 or pref / senti > 2.0)
                assert flags[k] == expected

    def test_summaries_sorted_by_preference(self, hand_model):
        summaries = critical_aspects(hand_model, top_n=2)
        prefs = [a.preference for a in summaries]
        assert prefs == sorted(prefs, reverse=True)
        assert {a.topic for a in summaries} == {0, 1}
        assert all(len(a.top_words) == 2 for a in summaries)

    def test_planted_aspects(self, small_spec):
        spec = plant_critical_aspect(small_spec, 0, 0.6, -0.4)
        spec = plant_critical_aspect(spec, 2, 0.65, 0.6)
        flags = {a.topic: a.critical for a in critical_aspects(generate(spec).as_model())}
        assert flags[0] is True
        assert flags[2] is False


class TestListings:
    def test_top_words_strict_max(self, hand_model):
        assert top_words(hand_model, 0, 1) == [("w0", pytest.approx(0.4))]
        assert [w for w, _ in top_words(hand_model, 1, 2)] == ["w3", "w2"]

    def test_top_words_saturates(self, hand_model):
        assert len(top_words(hand_model, 0, 10)) == hand_model.V

    def test_top_words_ties_by_id(self, make_model):
        model = _model(make_model, _pi([(0.5, 0.1)] * 5))
        assert [w for w, _ in top_words(model, 0, 3)] == ["w0", "w1", "w2"]

    def test_extremes(self, make_model):
        pi = _pi([(0.9, 0.0), (0.0, 0.9), (0.5, 0.4), (0.2, 0.3)])
        positive, negative = polarity_extremes(_model(make_model, pi), 2)
        assert [w for w, _ in positive] == ["w0", "w2"]
        assert [w for w, _ in negative] == ["w1", "w3"]
        assert positive[0][1] == pytest.approx(1.0)
        assert negative[0][1] == pytest.approx(-1.0)

    def test_extremes_of_symmetric_model_follow_ids(self, make_model):
        model = _model(make_model, _pi([(0.2, 0.2)] * 4))
        positive, negative = polarity_extremes(model, 10)
        assert [w for w, _ in positive] == [w for w, _ in negative] == ["w0", "w1", "w2", "w3"]

    def test_histogram(self, hand_model):
        edges, counts = polarity_histogram(hand_model, bins=20)
        assert edges[0] == -1.0 and edges[-1] == 1.0 and len(edges) == 21
        assert counts.sum() == hand_model.V


class TestCorrelation:
    def test_single_topic_is_undefined(self, make_model):
        with pytest.raises(MetricError):
            preference_sentiment_correlation(_model(make_model, _pi([(0.5, 0.1)])))

    def test_linear_relation(self, make_model):
        pi = _pi([(0.9, 0.1)], [(0.5, 0.5)], [(0.1, 0.9)])
        psi = np.array([np.full((2, 2), [1 - p, p]) for p in (0.8, 0.5, 0.2)])
        value = preference_sentiment_correlation(_model(make_model, pi, psi=psi))
        assert value == pytest.approx(1.0)


@pytest.mark.slow
def test_polarity_recovered_from_ratings():
    """One topic; word 0 is nearly always positive, word 1 nearly always negative."""
    V = 12
    phi = np.full(V, 0.6 / (V - 2))
    phi[:2] = 0.2
    pi = np.tile([0.05, 0.9, 0.05], (1, V, 1))
    pi[0, 0] = [0.02, 0.03, 0.95]
    pi[0, 1] = [0.95, 0.03, 0.02]
    spec = GenSpec(
        k_true=1, vocab_size=V, num_authors=4, num_docs=200, doc_length_mean=10, doc_length_min=5,
        phi=[phi.tolist()], pi=pi.tolist(), psi=np.tile([0.1, 0.9], (1, 4, 1)).tolist(), seed=8,
    )
    corpus = generate(spec).corpus
    model = train(corpus, HyperParams(gamma=0.1), TrainConfig(sweeps=40, burn_in=20, seed=2))

    assert word_polarity(model, 0) > 0.5
    assert word_polarity(model, 1) < -0.5
    positive, negative = polarity_extremes(model, 3)
    assert "w000" in [w for w, _ in positive]
    assert "w001" in [w for w, _ in negative]
