import numpy as np
import pytest

from src.aspectrating.corpus import Corpus, Review, Vocabulary
from src.aspectrating.model import Assignments, ModelState, TrainedModel, rating_table, recount
from src.aspectrating.schemas import GenSpec, HyperParams


def _corpus(docs, ratings, authors, V, X=None):
    X = X if X is not None else max(authors) + 1
    reviews = [
        Review(review_id=f"r{d:03d}", author_index=a, rating=float(r), tokens=np.asarray(toks, dtype=np.int64))
        for d, (toks, r, a) in enumerate(zip(docs, ratings, authors))
    ]
    return Corpus(
        vocabulary=Vocabulary(tuple(f"w{i}" for i in range(V))),
        reviews=reviews,
        authors=tuple(f"a{x}" for x in range(X)),
    )


@pytest.fixture
def make_corpus():
    """make_corpus(docs, ratings, authors, V) -> Corpus with words w0.. and authors a0.."""
    return _corpus


@pytest.fixture
def toy_corpus():
    """20 short reviews, V=8, 4 authors."""
    rng = np.random.default_rng(11)
    docs, ratings, authors = [], [], []
    for d in range(20):
        docs.append(rng.integers(0, 8, size=int(rng.integers(3, 9))))
        ratings.append(float(rng.integers(1, 6)))
        authors.append(d % 4)
    return _corpus(docs, ratings, authors, V=8, X=4)


@pytest.fixture
def make_state():
    """
    make_state(corpus, tables, table_topic, sentiment, preference, hyper=None, seed=0)
    Sentiment is given in storage order (0 = negative, 1 = neutral, 2 = positive).
    """

    def _make(corpus, tables, table_topic, sentiment, preference, hyper=None, seed=0):
        hyper = hyper or HyperParams()
        ratings = rating_table(hyper.mu)
        sentiment = [np.asarray(s, dtype=np.int64) for s in sentiment]
        preference = [np.asarray(u, dtype=np.int64) for u in preference]
        assign = Assignments(
            tables=[np.asarray(t, dtype=np.int64) for t in tables],
            table_topic=[np.asarray(k, dtype=np.int64) for k in table_topic],
            sentiment=sentiment,
            preference=preference,
            word_rating=[ratings[u, s] for s, u in zip(sentiment, preference)],
        )
        return ModelState(corpus, hyper, np.random.default_rng(seed), assign, recount(assign, corpus))

    return _make


@pytest.fixture
def make_model():
    """make_model(phi, pi, psi, topic_tables=None, hyper=None) -> TrainedModel"""

    def _make(phi, pi, psi, topic_tables=None, hyper=None):
        phi = np.asarray(phi, dtype=float)
        psi = np.asarray(psi, dtype=float)
        K, V = phi.shape
        X = psi.shape[1]
        tables = np.ones(K, dtype=np.int64) if topic_tables is None else np.asarray(topic_tables)
        return TrainedModel(
            phi=phi,
            pi=pi,
            psi=psi,
            topic_tables=tables,
            total_tables=int(np.sum(tables)),
            hyper=hyper or HyperParams(),
            vocabulary=tuple(f"w{i}" for i in range(V)),
            authors=tuple(f"a{x}" for x in range(X)),
        )

    return _make


@pytest.fixture
def hand_model(make_model):
    """Two topics over four words and two authors."""
    phi = [[0.4, 0.3, 0.2, 0.1], [0.1, 0.2, 0.3, 0.4]]
    pi = [
        [[0.1, 0.2, 0.7], [0.2, 0.6, 0.2], [0.6, 0.3, 0.1], [0.3, 0.4, 0.3]],
        [[0.2, 0.2, 0.6], [0.5, 0.4, 0.1], [0.1, 0.8, 0.1], [0.7, 0.2, 0.1]],
    ]
    psi = [[[0.3, 0.7], [0.6, 0.4]], [[0.8, 0.2], [0.5, 0.5]]]
    return make_model(phi, pi, psi, topic_tables=[5, 3])


def _separated_phi(K, V, share=0.95):
    """Each topic puts `share` of its mass uniformly on its own block of words."""
    block = V // K
    phi = np.full((K, V), (1.0 - share) / (V - block))
    for k in range(K):
        phi[k, k * block:(k + 1) * block] = share / block
    return phi / phi.sum(axis=1, keepdims=True)


@pytest.fixture
def separated_phi():
    return _separated_phi


@pytest.fixture
def small_spec():
    """Three well-separated topics, small enough for quick generator checks."""
    return GenSpec(
        k_true=3,
        vocab_size=30,
        num_authors=5,
        num_docs=60,
        doc_length_mean=12,
        doc_length_min=4,
        phi=_separated_phi(3, 30).tolist(),
        seed=3,
    )
