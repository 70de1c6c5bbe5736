from __future__ import annotations
import hashlib
import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from .corpus import Corpus, Review
from .errors import AspectRatingError
from .jobs import run_parallel
from .kernels import log_sum
from .model import S, U, TrainedModel, rating_table, review_mean
from .sampling import sample_log_categorical
from .schemas import PredictConfig, Prediction

logger = logging.getLogger(__name__)


def review_rng(seed: int, review_id: str) -> np.random.Generator:
    """Random stream keyed on (seed, review id), independent of the review's batch position."""
    digest = hashlib.sha256(review_id.encode("utf-8")).digest()
    return np.random.default_rng([int(seed), int.from_bytes(digest[:8], "big")])


class _ReviewSampler:
    """
    CRF sampler for one held-out review against frozen parameters.

    Topic rows 0..K-1 are the trained topics. Row K stands for every topic
    the model has not seen: they all share the uniform parameters 1/V, 1/U,
    1/S, so one row with popularity gamma covers them.
    """

    def __init__(self, model: TrainedModel, tokens: np.ndarray, author: int, rng: np.random.Generator):
        h = model.hyper
        self.rng = rng
        self.alpha = h.alpha
        self.log_new_table_norm = math.log(model.total_tables + h.gamma)
        n = tokens.size

        with np.errstate(divide="ignore"):
            self.log_m = np.append(np.log(model.topic_tables.astype(float)), math.log(h.gamma))
            self.log_phi = np.vstack([np.log(model.phi[:, tokens]), np.full((1, n), -math.log(model.V))])
            self.log_pi = np.concatenate([np.log(model.pi[:, tokens, :]), np.full((1, n, S), -math.log(S))])
            psi = model.psi[:, author, :] if 0 <= author < model.X else np.full((model.K, U), 1.0 / U)
            self.log_psi = np.vstack([np.log(psi), np.full((1, U), -math.log(U))])

        self.ratings = rating_table(h.mu)
        self.mu = h.mu
        self.tables = np.full(n, -1, dtype=np.int64)
        self.table_topic = np.zeros(0, dtype=np.int64)
        self.n_t = np.zeros(0, dtype=np.int64)
        self.sentiment = np.zeros(n, dtype=np.int64)
        self.preference = np.zeros(n, dtype=np.int64)

    def _open_table(self, k: int) -> int:
        free = np.flatnonzero(self.n_t == 0)
        if free.size:
            t = int(free[0])
        else:
            t = self.n_t.size
            self.n_t = np.append(self.n_t, 0)
            self.table_topic = np.append(self.table_topic, -1)
        self.table_topic[t] = k
        return t

    def _draw_rating(self, i: int, k: int) -> None:
        log_w = self.log_psi[k][:, None] + self.log_pi[k, i][None, :]
        self.preference[i], self.sentiment[i] = divmod(sample_log_categorical(self.rng, log_w), S)

    def table_step(self, i: int) -> None:
        t_old = self.tables[i]
        if t_old >= 0:
            self.n_t[t_old] -= 1
        log_f = self.log_phi[:, i]
        live = np.flatnonzero(self.n_t > 0)
        log_topic = self.log_m + log_f
        log_new = math.log(self.alpha) + log_sum(log_topic, log_topic.size) - self.log_new_table_norm
        log_w = np.append(np.log(self.n_t[live]) + log_f[self.table_topic[live]], log_new)

        j = sample_log_categorical(self.rng, log_w)
        if j < live.size:
            t = int(live[j])
        else:
            t = self._open_table(sample_log_categorical(self.rng, log_topic))
        self.tables[i] = t
        self.n_t[t] += 1
        self._draw_rating(i, int(self.table_topic[t]))

    def topic_step(self, t: int) -> None:
        members = np.flatnonzero(self.tables == t)
        log_w = self.log_m + np.sum(
            self.log_phi[:, members]
            + self.log_pi[:, members, self.sentiment[members]]
            + self.log_psi[:, self.preference[members]],
            axis=1,
        )
        self.table_topic[t] = sample_log_categorical(self.rng, log_w)

    def rating_step(self, i: int) -> None:
        self._draw_rating(i, int(self.table_topic[self.tables[i]]))

    def sweep(self) -> None:
        n = self.tables.size
        for i in range(n):
            self.table_step(i)
        for t in np.flatnonzero(self.n_t > 0):
            self.topic_step(int(t))
        for i in range(n):
            self.rating_step(i)

    def review_mean(self) -> float:
        r = self.ratings[self.preference, self.sentiment]
        return review_mean(r, self.sentiment - 1, self.mu)


def predict(
    model: TrainedModel,
    review: Review,
    config: PredictConfig,
    rng: Optional[np.random.Generator] = None,
) -> Prediction:
    """
    Predict one review's rating. `review` must already be in the model's index
    space: token ids < model.V (negative ids are out-of-vocabulary and dropped)
    and author_index < model.X (anything else is an unseen author).
    """
    if rng is None:
        rng = review_rng(config.seed, review.review_id)
    tokens = review.tokens[(review.tokens >= 0) & (review.tokens < model.V)]
    mu = model.hyper.mu

    if tokens.size == 0:
        return Prediction(
            review_id=review.review_id,
            true_rating=review.rating,
            predicted_rating=mu,
            oov=True,
            tokens_used=0,
        )

    sampler = _ReviewSampler(model, tokens, review.author_index, rng)
    for i in range(tokens.size):
        sampler.table_step(i)

    trace: List[float] = []
    for n in range(1, config.sweeps + 1):
        sampler.sweep()
        if n > config.burn_in:
            trace.append(sampler.review_mean())

    value = float(np.mean(trace)) if config.average_over_sweeps else trace[-1]
    return Prediction(
        review_id=review.review_id,
        true_rating=review.rating,
        predicted_rating=float(np.clip(value, 1.0, 5.0)),
        tokens_used=int(tokens.size),
        trace=trace,
    )


# worker-process globals, installed once per worker
_WORKER_MODEL: Optional[TrainedModel] = None
_WORKER_CONFIG: Optional[PredictConfig] = None


def _install(model: TrainedModel, config: PredictConfig) -> None:
    global _WORKER_MODEL, _WORKER_CONFIG
    _WORKER_MODEL = model
    _WORKER_CONFIG = config


def _predict_task(task: Tuple[str, float, np.ndarray, int]) -> Prediction:
    review_id, rating, tokens, author = task
    model, config = _WORKER_MODEL, _WORKER_CONFIG
    try:
        review = Review(review_id=review_id, author_index=author, rating=rating, tokens=tokens)
        return predict(model, review, config)
    except (AspectRatingError, ValueError, FloatingPointError) as e:
        return Prediction(
            review_id=review_id,
            true_rating=rating,
            predicted_rating=model.hyper.mu,
            error=f"{type(e).__name__}: {e}",
        )


def to_model_index(model: TrainedModel, corpus: Corpus) -> Tuple[np.ndarray, np.ndarray]:
    """Map corpus word ids and author ids onto the model's, by string; -1 where the model has none."""
    words = np.array([model.word_index.get(w, -1) for w in corpus.vocabulary.words], dtype=np.int64)
    authors = np.array([model.author_index.get(a, -1) for a in corpus.authors], dtype=np.int64)
    return words, authors


def predict_batch(
    model: TrainedModel,
    corpus: Corpus,
    config: PredictConfig,
    jobs: int = 1,
) -> List[Prediction]:
    if not corpus.reviews:
        return []
    words, authors = to_model_index(model, corpus)
    tasks = [
        (r.review_id, r.rating, words[r.tokens], int(authors[r.author_index]))
        for r in corpus.reviews
    ]
    unseen = sum(1 for _, _, _, a in tasks if a < 0)
    if unseen:
        logger.warning("[predict] %d reviews by authors unseen in training; using a uniform preference", unseen)

    predictions = run_parallel(_predict_task, tasks, jobs, initializer=_install, initargs=(model, config))

    failed = [p for p in predictions if p.error]
    for p in failed:
        logger.warning("[predict] review %s failed: %s", p.review_id, p.error)
    logger.info(
        "[predict] %d reviews predicted (%d out-of-vocabulary, %d failed)",
        len(predictions), sum(p.oov for p in predictions), len(failed),
    )
    return predictions
