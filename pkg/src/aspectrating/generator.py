from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np

from .config import FORMAT_VERSION
from .corpus import Corpus, Review, Vocabulary
from .errors import DataError
from .model import NEUTRAL, S, U, Assignments, TrainedModel, rating_table, review_mean
from .sampling import sample_categorical
from .schemas import GenSpec
from .storage import TRUTH_FORMAT, write_json

logger = logging.getLogger(__name__)

# polar mass given to every word when a planted topic has none
DEFAULT_POLAR_MASS = 0.6


@dataclass(frozen=True, eq=False)
class SyntheticCorpus:
    """A generated corpus together with the parameters and assignments that produced it."""

    corpus: Corpus
    phi: np.ndarray
    pi: np.ndarray
    psi: np.ndarray
    assignments: Assignments
    topic_tables: np.ndarray
    review_means: np.ndarray
    raw_ratings: np.ndarray
    spec: GenSpec

    def topics(self, d: int) -> np.ndarray:
        return self.assignments.topics(d)

    def as_model(self) -> TrainedModel:
        """The planted tables wrapped as a model, for analyses against ground truth."""
        return TrainedModel(
            phi=self.phi,
            pi=self.pi,
            psi=self.psi,
            topic_tables=self.topic_tables,
            total_tables=int(self.topic_tables.sum()),
            hyper=self.spec.hyper,
            vocabulary=self.corpus.vocabulary.words,
            authors=self.corpus.authors,
        )


def word_names(V: int) -> Tuple[str, ...]:
    width = max(3, len(str(V - 1)))
    return tuple(f"w{w:0{width}d}" for w in range(V))


def author_names(X: int) -> Tuple[str, ...]:
    width = max(3, len(str(X - 1)))
    return tuple(f"u{x:0{width}d}" for x in range(X))


def draw_tables(spec: GenSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Planted phi, pi, psi where given, prior draws otherwise (in that order)."""
    K, V, X = spec.k_true, spec.vocab_size, spec.num_authors
    h = spec.hyper
    if spec.phi is not None:
        phi = np.asarray(spec.phi, dtype=float)
    else:
        phi = rng.dirichlet(np.full(V, h.beta), size=K)
    if spec.pi is not None:
        pi = np.asarray(spec.pi, dtype=float)
    else:
        concentration = spec.sentiment_prior or (h.lambda_,) * S
        pi = rng.dirichlet(np.asarray(concentration, dtype=float), size=(K, V))
    if spec.psi is not None:
        psi = np.asarray(spec.psi, dtype=float)
    else:
        psi = rng.dirichlet(np.full(U, h.eta), size=(K, X))
    return phi, pi, psi


def generate(spec: GenSpec) -> SyntheticCorpus:
    rng = np.random.default_rng(spec.seed)
    phi, pi, psi = draw_tables(spec, rng)
    h = spec.hyper
    K, V, X, D = spec.k_true, spec.vocab_size, spec.num_authors, spec.num_docs
    ratings_of = rating_table(h.mu)
    sigma = math.sqrt(h.sigma2)

    doc_author = rng.permutation(np.arange(D) % X)
    lengths = np.maximum(spec.doc_length_min, rng.poisson(spec.doc_length_mean, size=D))

    m_k = np.zeros(K, dtype=np.int64)
    assign = Assignments.empty(lengths)
    reviews: List[Review] = []
    means = np.zeros(D)
    raw = np.zeros(D)

    for d in range(D):
        x = int(doc_author[d])
        n = int(lengths[d])
        n_t: List[int] = []
        table_topic: List[int] = []
        tokens = np.zeros(n, dtype=np.int64)

        for i in range(n):
            t = sample_categorical(rng, n_t + [h.alpha])
            if t == len(n_t):
                k = sample_categorical(rng, m_k + h.gamma / K)
                m_k[k] += 1
                table_topic.append(k)
                n_t.append(0)
            n_t[t] += 1
            k = table_topic[t]
            w = sample_categorical(rng, phi[k])
            s = sample_categorical(rng, pi[k, w])
            u = sample_categorical(rng, psi[k, x])
            tokens[i] = w
            assign.tables[d][i] = t
            assign.sentiment[d][i] = s
            assign.preference[d][i] = u
            assign.word_rating[d][i] = ratings_of[u, s]

        assign.table_topic[d] = np.asarray(table_topic, dtype=np.int64)
        means[d] = review_mean(assign.word_rating[d], assign.sentiment[d] - NEUTRAL, h.mu)
        raw[d] = rng.normal(means[d], sigma)
        reviews.append(
            Review(
                review_id=f"syn{d:06d}",
                author_index=x,
                rating=float(np.clip(raw[d], 1.0, 5.0)),
                tokens=tokens,
                product_id="synthetic",
            )
        )

    corpus = Corpus(
        vocabulary=Vocabulary(word_names(V)),
        reviews=reviews,
        authors=author_names(X),
        num_products=1,
    )
    logger.info("[synth] %d reviews, %d tokens, %d tables over %d topics", D, corpus.num_tokens, int(m_k.sum()), K)
    return SyntheticCorpus(
        corpus=corpus,
        phi=phi,
        pi=pi,
        psi=psi,
        assignments=assign,
        topic_tables=m_k,
        review_means=means,
        raw_ratings=raw,
        spec=spec,
    )


def plant_critical_aspect(spec: GenSpec, aspect: int, preference_level: float, sentiment_level: float) -> GenSpec:
    """
    Return `spec` with planted tables adjusted so that topic `aspect` has average
    strong-preference probability `preference_level` and aspect sentiment
    `sentiment_level`. Tables `spec` does not plant are drawn from its priors first.
    """
    if not 0 <= aspect < spec.k_true:
        raise DataError(f"aspect {aspect} is not a topic of a {spec.k_true}-topic spec")
    if not 0.0 <= preference_level <= 1.0:
        raise DataError(f"preference level {preference_level} is outside [0, 1]; psi rows cannot reach it")
    if not -1.0 <= sentiment_level <= 1.0:
        raise DataError(f"sentiment level {sentiment_level} is outside [-1, 1]; pi rows cannot reach it")

    phi, pi, psi = draw_tables(spec, np.random.default_rng(spec.seed))
    pi, psi = pi.copy(), psi.copy()

    psi[aspect, :, 0] = 1.0 - preference_level
    psi[aspect, :, 1] = preference_level

    polar = pi[aspect, :, 0] + pi[aspect, :, 2]
    if not polar.sum() > 0:
        polar = np.full_like(polar, DEFAULT_POLAR_MASS)
    pi[aspect, :, 2] = polar * (1.0 + sentiment_level) / 2.0
    pi[aspect, :, 0] = polar * (1.0 - sentiment_level) / 2.0
    pi[aspect, :, 1] = np.clip(1.0 - polar, 0.0, None)

    fields = spec.model_dump()
    fields.update(phi=phi.tolist(), pi=pi.tolist(), psi=psi.tolist())
    return GenSpec.model_validate(fields)


def truth_document(synth: SyntheticCorpus) -> Dict[str, Any]:
    a = synth.assignments
    return {
        "format": TRUTH_FORMAT,
        "version": FORMAT_VERSION,
        "spec": synth.spec.model_dump(by_alias=True, mode="json", exclude={"phi", "pi", "psi"}),
        "vocabulary": list(synth.corpus.vocabulary.words),
        "authors": list(synth.corpus.authors),
        "phi": synth.phi.tolist(),
        "pi": synth.pi.tolist(),
        "psi": synth.psi.tolist(),
        "topic_tables": [int(m) for m in synth.topic_tables],
        "reviews": [
            {
                "review_id": r.review_id,
                "review_mean": float(synth.review_means[d]),
                "raw_rating": float(synth.raw_ratings[d]),
                "topics": [int(k) for k in a.topics(d)],
                "sentiments": [int(s) - NEUTRAL for s in a.sentiment[d]],
                "preferences": [int(u) for u in a.preference[d]],
            }
            for d, r in enumerate(synth.corpus.reviews)
        ],
    }


def save_truth(path: Path, synth: SyntheticCorpus) -> None:
    write_json(path, truth_document(synth))
