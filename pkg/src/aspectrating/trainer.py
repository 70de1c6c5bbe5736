from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from . import kernels
from .corpus import Corpus
from .errors import DataError
from .kernels import CELLS, LIKELIHOOD_MODES
from .model import S, U, ModelState, TrainedModel, estimate_parameters, log_score
from .sampling import sample_log_categorical
from .schemas import HyperParams, TrainConfig

logger = logging.getLogger(__name__)

Checkpoint = Callable[[int, TrainedModel], None]

# uniforms one document pass can consume: three per table draw, one per table topic, one per rating
UNIFORMS_PER_WORD = 5


@dataclass(frozen=True)
class TableProposal:
    """Candidate weights for re-seating one word.

    `topics` are the live topic ids; row len(topics) of `log_cells` and of
    `log_topic_weights` stands for a brand-new topic. The last entry of
    `log_weights` is the new table.
    """

    tables: np.ndarray
    topics: np.ndarray
    log_cells: np.ndarray
    log_weights: np.ndarray
    log_topic_weights: np.ndarray


def _likelihood_mode(mode: str) -> int:
    try:
        return LIKELIHOOD_MODES[mode]
    except KeyError:
        raise ValueError(f"unknown table topic likelihood: {mode}") from None


def _topic_rows(state: ModelState) -> np.ndarray:
    """Live topic ids followed by the new-topic row."""
    return np.append(state.counts.live_topics(), state.counts.capacity)


def _topic_for(state: ModelState, topics: np.ndarray, j: int) -> int:
    return state.allocate_topic() if j == len(topics) else int(topics[j])


# -----------------------
# Per-word terms
# -----------------------

def _word_cells(state: ModelState, d: int, i: int) -> Tuple[np.ndarray, np.ndarray]:
    """(capacity + 1, U * S) cells and their row sums for a detached word."""
    h, a = state.hyper, state.assign
    log_g = np.empty(CELLS)
    kernels.rating_cells(i, float(state.ratings[d]), a.sentiment[d], a.word_rating[d],
                         state.rating_table, h.mu, h.sigma2, log_g)
    cap = state.counts.capacity
    cells = np.empty((cap + 1, CELLS))
    log_f = np.empty(cap + 1)
    kernels.word_cells(int(state.tokens[d][i]), int(state.authors[d]), log_g, state.count_arrays(),
                       h.beta, h.lambda_, h.eta, cells, log_f)
    return cells, log_f


def word_cell_terms(state: ModelState, d: int, i: int) -> Tuple[np.ndarray, np.ndarray]:
    """Log weight of every (topic, u, s) cell for a detached word; last row is a new topic."""
    cells, _ = _word_cells(state, d, i)
    return state.counts.live_topics(), cells[_topic_rows(state)].reshape(-1, U, S)


def table_conditional(state: ModelState, d: int, i: int) -> TableProposal:
    """Seating weights for word (d, i), which must already be detached."""
    c, h = state.counts, state.hyper
    cells, log_f = _word_cells(state, d, i)
    n_dt = c.n_dt[d]
    slots = np.empty(n_dt.size, dtype=np.int64)
    log_w = np.empty(n_dt.size + 1)
    log_topic = np.empty(c.capacity + 1)
    n_live = kernels.seating_weights(n_dt, state.assign.table_topic[d], c.m_k, log_f, h.alpha, h.gamma,
                                     slots, log_w, log_topic)
    rows = _topic_rows(state)
    return TableProposal(
        tables=slots[:n_live],
        topics=rows[:-1],
        log_cells=cells[rows].reshape(-1, U, S),
        log_weights=log_w[:n_live + 1],
        log_topic_weights=log_topic[rows],
    )


def resample_table(state: ModelState, d: int, i: int) -> None:
    """Re-seat word (d, i), drawing its table, the table's topic when new, and its (s, u) as one block."""
    state.detach_word(d, i)
    p = table_conditional(state, d, i)
    rng = state.rng

    j = sample_log_categorical(rng, p.log_weights)
    if j < len(p.tables):
        t = int(p.tables[j])
        kpos = int(np.searchsorted(p.topics, state.assign.table_topic[d][t]))
    else:
        kpos = sample_log_categorical(rng, p.log_topic_weights)
        t = state.open_table(d, _topic_for(state, p.topics, kpos))

    u, s = divmod(sample_log_categorical(rng, p.log_cells[kpos]), S)
    state.seat_word(d, i, t, s, u)


# -----------------------
# Per-table terms
# -----------------------

def table_topic_conditional(state: ModelState, d: int, members: np.ndarray, mode: str = "exact") -> Tuple[np.ndarray, np.ndarray]:
    """(live topic ids, log weights over live topics + one new topic) for a detached table."""
    code = _likelihood_mode(mode)
    c, h, a = state.counts, state.hyper, state.assign
    log_f = np.empty(c.capacity + 1)
    kernels.block_log_likelihood(
        state.tokens[d][members], a.sentiment[d][members], a.preference[d][members], int(state.authors[d]),
        state.count_arrays(), h.beta, h.lambda_, h.eta, code, log_f,
    )
    rows = _topic_rows(state)
    topics = rows[:-1]
    log_prior = np.append(np.log(c.m_k[topics]), math.log(h.gamma))
    return topics, log_prior + log_f[rows]


def resample_table_topic(state: ModelState, d: int, t: int, mode: str = "exact") -> None:
    members = state.detach_table(d, t)
    topics, log_w = table_topic_conditional(state, d, members, mode)
    k = _topic_for(state, topics, sample_log_categorical(state.rng, log_w))
    state.attach_table(d, t, k, members)


# -----------------------
# Per-word ratings
# -----------------------

def sentiment_preference_log_weights(state: ModelState, d: int, i: int) -> np.ndarray:
    """(U, S) log weights for word (d, i), whose sentiment/preference counts are removed."""
    out = np.empty(CELLS)
    kernels.rating_weights(i, state.doc_arrays(d), int(state.authors[d]), float(state.ratings[d]),
                           state.count_arrays(), state.params, state.rating_table, out)
    return out.reshape(U, S)


def resample_sentiment_preference(state: ModelState, d: int, i: int) -> None:
    state.unrate_word(d, i)
    u, s = divmod(sample_log_categorical(state.rng, sentiment_preference_log_weights(state, d, i)), S)
    state.rate_word(d, i, s, u)


# -----------------------
# Chain
# -----------------------

def _prepare_document(state: ModelState, d: int) -> int:
    """Room for any seating of document d: a table slot per word and a free topic id per table draw."""
    n = len(state.tokens[d])
    state.reserve_tables(d)
    state.reserve_topics(n + 1)
    return n


def init_state(corpus: Corpus, hyper: HyperParams, seed: int) -> ModelState:
    """Sentiment and preference drawn uniformly, then words seated one by one through the CRF."""
    if not corpus.reviews:
        raise DataError("cannot train on an empty corpus")
    state = ModelState.empty(corpus, hyper, seed)
    rng = state.rng
    for d in range(state.num_docs):
        n = _prepare_document(state, d)
        s = rng.integers(0, S, size=n)
        u = rng.integers(0, U, size=n)
        state.assign.sentiment[d][:] = s
        state.assign.preference[d][:] = u
        state.assign.word_rating[d][:] = state.rating_table[u, s]
        kernels.seat_document(state.doc_arrays(d), int(state.authors[d]), state.count_arrays(),
                              state.params, rng.random(2 * n))
    state.sync_table_total()
    return state


def sweep(state: ModelState, mode: str = "exact") -> None:
    """One pass over every document: tables, then table topics, then word ratings."""
    code = _likelihood_mode(mode)
    rng = state.rng
    for d in range(state.num_docs):
        n = _prepare_document(state, d)
        kernels.sweep_document(
            state.doc_arrays(d), int(state.authors[d]), float(state.ratings[d]), state.count_arrays(),
            state.params, state.rating_table, code, rng.random(UNIFORMS_PER_WORD * n),
        )
    state.sync_table_total()


def _log_progress(state: ModelState, n: int, total: int) -> None:
    if not logger.isEnabledFor(logging.INFO):
        return
    score = log_score(state)
    logger.info(
        "[train] sweep %d/%d: K=%d tables=%d word=%.3f sentiment=%.3f preference=%.3f rating=%.3f",
        n, total, state.counts.K, state.counts.m_total,
        score["word"], score["sentiment"], score["preference"], score["rating"],
    )


def train_state(
    corpus: Corpus,
    hyper: HyperParams,
    config: TrainConfig,
    checkpoint: Optional[Checkpoint] = None,
) -> ModelState:
    """Run the chain and return its final state."""
    logger.info(
        "[train] %d reviews, %d tokens, V=%d, X=%d; %d sweeps (burn-in %d), seed %d",
        len(corpus), corpus.num_tokens, corpus.vocab_size, corpus.num_authors,
        config.sweeps, config.burn_in, config.seed,
    )
    state = init_state(corpus, hyper, config.seed)
    if config.debug_invariants:
        state.check_consistency()
    _log_progress(state, 0, config.sweeps)

    for n in range(1, config.sweeps + 1):
        sweep(state, config.table_topic_likelihood)
        if config.debug_invariants:
            state.check_consistency()
        _log_progress(state, n, config.sweeps)
        if n == config.burn_in:
            logger.info("[train] burn-in complete after %d sweeps", n)
        if checkpoint is not None and config.checkpoint_every and n % config.checkpoint_every == 0:
            checkpoint(n, estimate_parameters(state, config.topic_threshold))

    logger.info("[train] finished: K=%d, %d tables", state.counts.K, state.counts.m_total)
    return state


def train(
    corpus: Corpus,
    hyper: HyperParams,
    config: TrainConfig,
    checkpoint: Optional[Checkpoint] = None,
) -> TrainedModel:
    return estimate_parameters(train_state(corpus, hyper, config, checkpoint), config.topic_threshold)
