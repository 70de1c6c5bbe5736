from __future__ import annotations
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from .config import FORMAT_VERSION
from .corpus import Corpus
from .errors import SchemaMismatchError, StateError
from .schemas import HyperParams, model_to_dict
from .storage import MODEL_FORMAT, MODEL_SCHEMA, read_json, write_json

logger = logging.getLogger(__name__)

# storage order of sentiment polarities (-1, 0, +1) and preference strengths (weak, strong)
SENTIMENT_VALUES = (-1, 0, 1)
NEGATIVE, NEUTRAL, POSITIVE = 0, 1, 2
WEAK, STRONG = 0, 1

S = HyperParams.S
U = HyperParams.U


# -----------------------
# Rating rules
# -----------------------

def word_rating(u: int, s: int, mu: float) -> float:
    """Rating implied by a word with preference u in {0,1} and sentiment s in {-1,0,+1}."""
    if s == 0:
        return float(mu)
    if s > 0:
        return 5.0 if u == STRONG else (5.0 + mu) / 2.0
    return 1.0 if u == STRONG else (1.0 + mu) / 2.0


def rating_table(mu: float) -> np.ndarray:
    """(U, S) word ratings indexed by [preference, sentiment storage index]."""
    return np.array(
        [[word_rating(u, s, mu) for s in SENTIMENT_VALUES] for u in (WEAK, STRONG)],
        dtype=float,
    )


def review_mean(word_ratings: Sequence[float], sentiments: Sequence[int], mu: float) -> float:
    """Mean of the non-neutral word ratings; mu when every word is neutral."""
    if len(word_ratings) != len(sentiments):
        raise ValueError("word_ratings and sentiments must have the same length")
    r = np.asarray(word_ratings, dtype=float)
    polar = np.asarray(sentiments) != 0
    if not polar.any():
        return float(mu)
    return float(r[polar].mean())


def rating_log_likelihood(r_d, r_bar, sigma2: float):
    """Log of the unnormalized Gaussian rating factor."""
    return -np.square(np.subtract(r_d, r_bar)) / (2.0 * sigma2)


# -----------------------
# Latent state
# -----------------------

@dataclass
class Assignments:
    """Per-word and per-table latent variables; -1 marks a detached word or a free table slot."""

    tables: List[np.ndarray]
    table_topic: List[np.ndarray]
    sentiment: List[np.ndarray]
    preference: List[np.ndarray]
    word_rating: List[np.ndarray]

    @classmethod
    def empty(cls, doc_lengths: Sequence[int]) -> "Assignments":
        return cls(
            tables=[np.full(n, -1, dtype=np.int64) for n in doc_lengths],
            table_topic=[np.zeros(0, dtype=np.int64) for _ in doc_lengths],
            sentiment=[np.full(n, NEUTRAL, dtype=np.int64) for n in doc_lengths],
            preference=[np.zeros(n, dtype=np.int64) for n in doc_lengths],
            word_rating=[np.zeros(n, dtype=float) for n in doc_lengths],
        )

    def topics(self, d: int) -> np.ndarray:
        """z_di = k_{d, t_di}"""
        return self.table_topic[d][self.tables[d]]

    def copy(self) -> "Assignments":
        return Assignments(*[[a.copy() for a in arrs] for arrs in (
            self.tables, self.table_topic, self.sentiment, self.preference, self.word_rating)])


@dataclass
class CountTables:
    n_dt: List[np.ndarray]
    m_k: np.ndarray
    m_total: int
    l_kw: np.ndarray
    l_k: np.ndarray
    l_kws: np.ndarray
    c_kxu: np.ndarray

    @classmethod
    def zeros(cls, num_docs: int, V: int, X: int, capacity: int = 0) -> "CountTables":
        return cls(
            n_dt=[np.zeros(0, dtype=np.int64) for _ in range(num_docs)],
            m_k=np.zeros(capacity, dtype=np.int64),
            m_total=0,
            l_kw=np.zeros((capacity, V), dtype=np.int64),
            l_k=np.zeros(capacity, dtype=np.int64),
            l_kws=np.zeros((capacity, V, S), dtype=np.int64),
            c_kxu=np.zeros((capacity, X, U), dtype=np.int64),
        )

    @property
    def capacity(self) -> int:
        return int(self.m_k.shape[0])

    @property
    def K(self) -> int:
        return int(np.count_nonzero(self.m_k))

    def live_topics(self) -> np.ndarray:
        return np.flatnonzero(self.m_k > 0)

    def grow(self, capacity: int) -> None:
        extra = capacity - self.capacity
        if extra <= 0:
            return
        self.m_k = np.concatenate([self.m_k, np.zeros(extra, dtype=np.int64)])
        self.l_k = np.concatenate([self.l_k, np.zeros(extra, dtype=np.int64)])
        self.l_kw = np.concatenate([self.l_kw, np.zeros((extra,) + self.l_kw.shape[1:], dtype=np.int64)])
        self.l_kws = np.concatenate([self.l_kws, np.zeros((extra,) + self.l_kws.shape[1:], dtype=np.int64)])
        self.c_kxu = np.concatenate([self.c_kxu, np.zeros((extra,) + self.c_kxu.shape[1:], dtype=np.int64)])

    def copy(self) -> "CountTables":
        return CountTables(
            n_dt=[a.copy() for a in self.n_dt],
            m_k=self.m_k.copy(),
            m_total=self.m_total,
            l_kw=self.l_kw.copy(),
            l_k=self.l_k.copy(),
            l_kws=self.l_kws.copy(),
            c_kxu=self.c_kxu.copy(),
        )

    def same_tallies(self, other: "CountTables") -> bool:
        """Equality up to trailing all-zero topic slots and free table slots."""
        cap = max(self.capacity, other.capacity)
        a, b = self.copy(), other.copy()
        a.grow(cap)
        b.grow(cap)
        if a.m_total != b.m_total or len(a.n_dt) != len(b.n_dt):
            return False
        for x, y in zip(a.n_dt, b.n_dt):
            n = max(len(x), len(y))
            if not np.array_equal(np.pad(x, (0, n - len(x))), np.pad(y, (0, n - len(y)))):
                return False
        return all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("m_k", "l_kw", "l_k", "l_kws", "c_kxu"))

    def check_marginals(self, doc_lengths: Sequence[int]) -> None:
        if np.any(self.m_k < 0) or np.any(self.l_kw < 0) or np.any(self.l_kws < 0) or np.any(self.c_kxu < 0):
            raise StateError("negative count")
        if not np.array_equal(self.l_kw.sum(axis=1), self.l_k):
            raise StateError("sum_w l_kw != l_k")
        if not np.array_equal(self.l_kws.sum(axis=2), self.l_kw):
            raise StateError("sum_s l_kws != l_kw")
        if not np.array_equal(self.c_kxu.sum(axis=(1, 2)), self.l_k):
            raise StateError("sum_xu c_kxu != l_k")
        if int(self.m_k.sum()) != self.m_total:
            raise StateError("sum_k m_k != m_total")
        for d, (n, length) in enumerate(zip(self.n_dt, doc_lengths)):
            if int(n.sum()) != length:
                raise StateError(f"document {d}: sum_t n_dt = {int(n.sum())} != length {length}")


def recount(assign: Assignments, corpus: Corpus) -> CountTables:
    """Rebuild every count table from the assignments alone."""
    topic_ids = [tt[tt >= 0] for tt in assign.table_topic]
    capacity = int(max((int(t.max()) for t in topic_ids if t.size), default=-1)) + 1
    counts = CountTables.zeros(len(corpus.reviews), corpus.vocab_size, corpus.num_authors, capacity)

    for d, review in enumerate(corpus.reviews):
        tables, table_topic = assign.tables[d], assign.table_topic[d]
        if tables.size and (tables.min() < 0 or tables.max() >= table_topic.size):
            raise StateError(f"document {d}: word assigned to a table that does not exist")
        n = np.bincount(tables, minlength=table_topic.size).astype(np.int64)
        if np.any(table_topic[n > 0] < 0):
            raise StateError(f"document {d}: occupied table has no topic")
        if np.any(table_topic[n == 0] >= 0):
            raise StateError(f"document {d}: empty table still serves a topic")
        counts.n_dt[d] = n

        live = table_topic[table_topic >= 0]
        np.add.at(counts.m_k, live, 1)

        z = table_topic[tables]
        w = review.tokens
        np.add.at(counts.l_kw, (z, w), 1)
        np.add.at(counts.l_k, z, 1)
        np.add.at(counts.l_kws, (z, w, assign.sentiment[d]), 1)
        np.add.at(counts.c_kxu, (z, review.author_index, assign.preference[d]), 1)

    counts.m_total = int(counts.m_k.sum())
    return counts


class ModelState:
    """Collapsed sampler state: assignments plus the count tables they imply.

    Topic ids are stable handles. A topic id is free while its m_k is zero;
    the lowest free id is handed out first, and the count tables grow only
    when none is left.
    """

    def __init__(
        self,
        corpus: Corpus,
        hyper: HyperParams,
        rng: np.random.Generator,
        assign: Assignments,
        counts: CountTables,
    ):
        self.corpus = corpus
        self.hyper = hyper
        self.rng = rng
        self.assign = assign
        self.counts = counts
        self.tokens = [r.tokens for r in corpus.reviews]
        self.authors = np.array([r.author_index for r in corpus.reviews], dtype=np.int64)
        self.ratings = corpus.ratings()
        self.rating_table = rating_table(hyper.mu)
        self.params = (hyper.alpha, hyper.gamma, hyper.beta, hyper.lambda_, hyper.eta, hyper.mu, hyper.sigma2)

    @classmethod
    def empty(cls, corpus: Corpus, hyper: HyperParams, seed: int) -> "ModelState":
        lengths = [len(r) for r in corpus.reviews]
        counts = CountTables.zeros(len(lengths), corpus.vocab_size, corpus.num_authors)
        return cls(corpus, hyper, np.random.default_rng(seed), Assignments.empty(lengths), counts)

    @property
    def num_docs(self) -> int:
        return len(self.tokens)

    @property
    def doc_lengths(self) -> List[int]:
        return [len(t) for t in self.tokens]

    # -- topics and tables --

    def reserve_topics(self, n: int) -> None:
        """Grow the count tables until at least n topic ids are free."""
        free = self.counts.capacity - self.counts.K
        if free < n:
            old = self.counts.capacity
            self.counts.grow(max(8, 2 * old, old + n - free))

    def allocate_topic(self) -> int:
        """Lowest free topic id; it stays free until a table takes it."""
        self.reserve_topics(1)
        return int(np.flatnonzero(self.counts.m_k == 0)[0])

    def reserve_tables(self, d: int) -> None:
        """Pad document d's table slots to one per word, enough for any seating."""
        extra = len(self.tokens[d]) - self.assign.table_topic[d].size
        if extra > 0:
            self.assign.table_topic[d] = np.append(self.assign.table_topic[d], np.full(extra, -1, dtype=np.int64))
            self.counts.n_dt[d] = np.append(self.counts.n_dt[d], np.zeros(extra, dtype=np.int64))

    def doc_arrays(self, d: int) -> Tuple[np.ndarray, ...]:
        a = self.assign
        return (self.tokens[d], a.tables[d], a.table_topic[d], self.counts.n_dt[d],
                a.sentiment[d], a.preference[d], a.word_rating[d])

    def count_arrays(self) -> Tuple[np.ndarray, ...]:
        c = self.counts
        return c.m_k, c.l_kw, c.l_k, c.l_kws, c.c_kxu

    def sync_table_total(self) -> None:
        self.counts.m_total = int(self.counts.m_k.sum())

    def live_tables(self, d: int) -> np.ndarray:
        return np.flatnonzero(self.counts.n_dt[d] > 0)

    def open_table(self, d: int, k: int) -> int:
        topics = self.assign.table_topic[d]
        free = np.flatnonzero(topics < 0)
        if free.size:
            t = int(free[0])
        else:
            t = int(topics.size)
            self.assign.table_topic[d] = np.append(topics, -1)
            self.counts.n_dt[d] = np.append(self.counts.n_dt[d], 0)
        self.assign.table_topic[d][t] = k
        self.counts.n_dt[d][t] = 0
        self.counts.m_k[k] += 1
        self.counts.m_total += 1
        return t

    def _close_table(self, d: int, t: int) -> None:
        k = int(self.assign.table_topic[d][t])
        self.assign.table_topic[d][t] = -1
        self.counts.m_k[k] -= 1
        self.counts.m_total -= 1

    # -- words --

    def _tally_word(self, d: int, i: int, k: int, sign: int) -> None:
        w = self.tokens[d][i]
        x = self.authors[d]
        c = self.counts
        c.l_kw[k, w] += sign
        c.l_k[k] += sign
        c.l_kws[k, w, self.assign.sentiment[d][i]] += sign
        c.c_kxu[k, x, self.assign.preference[d][i]] += sign

    def topic_of(self, d: int, i: int) -> int:
        return int(self.assign.table_topic[d][self.assign.tables[d][i]])

    def detach_word(self, d: int, i: int) -> None:
        """Remove word (d, i) from its table, closing the table (and topic) if it empties."""
        t = int(self.assign.tables[d][i])
        self._tally_word(d, i, self.topic_of(d, i), -1)
        self.counts.n_dt[d][t] -= 1
        self.assign.tables[d][i] = -1
        if self.counts.n_dt[d][t] == 0:
            self._close_table(d, t)

    def _set_rating(self, d: int, i: int, s: int, u: int) -> None:
        self.assign.sentiment[d][i] = s
        self.assign.preference[d][i] = u
        self.assign.word_rating[d][i] = self.rating_table[u, s]

    def seat_word(self, d: int, i: int, t: int, s: int, u: int) -> None:
        self._set_rating(d, i, s, u)
        self.assign.tables[d][i] = t
        self.counts.n_dt[d][t] += 1
        self._tally_word(d, i, int(self.assign.table_topic[d][t]), +1)

    def unrate_word(self, d: int, i: int) -> None:
        k, w, x = self.topic_of(d, i), self.tokens[d][i], self.authors[d]
        self.counts.l_kws[k, w, self.assign.sentiment[d][i]] -= 1
        self.counts.c_kxu[k, x, self.assign.preference[d][i]] -= 1

    def rate_word(self, d: int, i: int, s: int, u: int) -> None:
        self._set_rating(d, i, s, u)
        k, w, x = self.topic_of(d, i), self.tokens[d][i], self.authors[d]
        self.counts.l_kws[k, w, s] += 1
        self.counts.c_kxu[k, x, u] += 1

    def _tally_table(self, d: int, members: np.ndarray, k: int, sign: int) -> None:
        w = self.tokens[d][members]
        c = self.counts
        np.add.at(c.l_kw[k], w, sign)
        c.l_k[k] += sign * members.size
        np.add.at(c.l_kws[k], (w, self.assign.sentiment[d][members]), sign)
        np.add.at(c.c_kxu[k, self.authors[d]], self.assign.preference[d][members], sign)

    def table_members(self, d: int, t: int) -> np.ndarray:
        return np.flatnonzero(self.assign.tables[d] == t)

    def detach_table(self, d: int, t: int) -> np.ndarray:
        """Remove a table's words from its topic; the table keeps its customers but has no topic."""
        members = self.table_members(d, t)
        k = int(self.assign.table_topic[d][t])
        self._tally_table(d, members, k, -1)
        self._close_table(d, t)
        return members

    def attach_table(self, d: int, t: int, k: int, members: np.ndarray) -> None:
        self.assign.table_topic[d][t] = k
        self.counts.m_k[k] += 1
        self.counts.m_total += 1
        self._tally_table(d, members, k, +1)

    def review_means(self) -> np.ndarray:
        mu = self.hyper.mu
        return np.array([
            review_mean(self.assign.word_rating[d], self.assign.sentiment[d] - NEUTRAL, mu)
            for d in range(self.num_docs)
        ])

    def check_consistency(self) -> None:
        fresh = recount(self.assign, self.corpus)
        if not fresh.same_tallies(self.counts):
            raise StateError("count tables disagree with a full recount of the assignments")
        self.counts.check_marginals(self.doc_lengths)
        expected = [self.rating_table[u, s] for d in range(self.num_docs)
                    for u, s in zip(self.assign.preference[d], self.assign.sentiment[d])]
        actual = np.concatenate(self.assign.word_rating) if self.num_docs else np.zeros(0)
        if not np.array_equal(np.asarray(expected, dtype=float).reshape(actual.shape), actual):
            raise StateError("cached word ratings disagree with the rating rules")


def log_score(state: ModelState) -> Dict[str, float]:
    """Collapsed log marginal likelihood components of the current state."""
    h, c = state.hyper, state.counts
    V = state.corpus.vocab_size
    live = c.live_topics()
    lkw, lk = c.l_kw[live], c.l_k[live]
    lkws, ckxu = c.l_kws[live], c.c_kxu[live]

    words = float(np.sum(gammaln(V * h.beta) - gammaln(lk + V * h.beta))
                  + np.sum(gammaln(lkw + h.beta) - gammaln(h.beta)))
    occupied = lkw > 0
    sentiment = float(np.sum((gammaln(S * h.lambda_) - gammaln(lkw + S * h.lambda_))[occupied])
                      + np.sum(gammaln(lkws + h.lambda_) - gammaln(h.lambda_)))
    ckx = ckxu.sum(axis=2)
    preference = float(np.sum((gammaln(U * h.eta) - gammaln(ckx + U * h.eta))[ckx > 0])
                       + np.sum(gammaln(ckxu + h.eta) - gammaln(h.eta)))
    rating = float(np.sum(rating_log_likelihood(state.ratings, state.review_means(), h.sigma2))) if state.num_docs else 0.0
    return {"word": words, "sentiment": sentiment, "preference": preference, "rating": rating}


# -----------------------
# Point estimates
# -----------------------

def _frozen(a: Any) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TrainedModel:
    phi: np.ndarray
    pi: np.ndarray
    psi: np.ndarray
    topic_tables: np.ndarray
    total_tables: int
    hyper: HyperParams
    vocabulary: Tuple[str, ...]
    authors: Tuple[str, ...]
    word_index: Dict[str, int] = field(init=False, repr=False)
    author_index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        K, V, X = len(self.topic_tables), len(self.vocabulary), len(self.authors)
        object.__setattr__(self, "phi", _frozen(self.phi).reshape(K, V))
        object.__setattr__(self, "pi", _frozen(self.pi).reshape(K, V, S))
        object.__setattr__(self, "psi", _frozen(self.psi).reshape(K, X, U))
        tables = np.array(self.topic_tables, dtype=np.int64)
        tables.setflags(write=False)
        object.__setattr__(self, "topic_tables", tables)
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        object.__setattr__(self, "authors", tuple(self.authors))
        object.__setattr__(self, "word_index", {w: j for j, w in enumerate(self.vocabulary)})
        object.__setattr__(self, "author_index", {a: j for j, a in enumerate(self.authors)})

    @property
    def K(self) -> int:
        return int(self.topic_tables.shape[0])

    @property
    def V(self) -> int:
        return len(self.vocabulary)

    @property
    def X(self) -> int:
        return len(self.authors)

    def to_document(self, sweep: Optional[int] = None) -> Dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "version": FORMAT_VERSION,
            "hyper": model_to_dict(self.hyper),
            "vocabulary": list(self.vocabulary),
            "authors": list(self.authors),
            "K": self.K,
            "phi": self.phi.tolist(),
            "pi": self.pi.tolist(),
            "psi": self.psi.tolist(),
            "topic_tables": [int(m) for m in self.topic_tables],
            "total_tables": int(self.total_tables),
            "sweep": sweep,
        }

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "TrainedModel":
        if doc["K"] != len(doc["topic_tables"]):
            raise ValueError(f"K = {doc['K']} but {len(doc['topic_tables'])} topic table counts")
        return cls(
            phi=doc["phi"],
            pi=doc["pi"],
            psi=doc["psi"],
            topic_tables=doc["topic_tables"],
            total_tables=doc["total_tables"],
            hyper=HyperParams.model_validate(doc["hyper"]),
            vocabulary=doc["vocabulary"],
            authors=doc["authors"],
        )


def accepted_topics(counts: CountTables, topic_threshold: float = 0.0) -> np.ndarray:
    """Live topic ids holding at least `topic_threshold` of all tables; the largest topic always stays."""
    live = counts.live_topics()
    if live.size == 0:
        return live
    tables = counts.m_k[live]
    keep = live[tables >= topic_threshold * counts.m_total]
    return keep if keep.size else live[tables == tables.max()]


def estimate_parameters(state: ModelState, topic_threshold: float = 0.0) -> TrainedModel:
    """
    Smoothed point estimates from the counts; accepted topics are relabeled
    densely in id order. Topics below `topic_threshold` of the tables are left
    out, and so are their tables.
    """
    h, c = state.hyper, state.counts
    V = state.corpus.vocab_size
    live = accepted_topics(c, topic_threshold)
    if live.size < c.K:
        logger.info("[train] %d of %d topics below %.3g of the tables left out", c.K - live.size, c.K, topic_threshold)
    lkws, ckxu = c.l_kws[live], c.c_kxu[live]
    phi = (c.l_kw[live] + h.beta) / (c.l_k[live, None] + V * h.beta)
    pi = (lkws + h.lambda_) / (lkws.sum(axis=2, keepdims=True) + S * h.lambda_)
    psi = (ckxu + h.eta) / (ckxu.sum(axis=2, keepdims=True) + U * h.eta)
    return TrainedModel(
        phi=phi,
        pi=pi,
        psi=psi,
        topic_tables=c.m_k[live],
        total_tables=int(c.m_k[live].sum()),
        hyper=h,
        vocabulary=state.corpus.vocabulary.words,
        authors=state.corpus.authors,
    )


def save_model(path: Path, model: TrainedModel, sweep: Optional[int] = None) -> None:
    write_json(path, model.to_document(sweep))


def load_model(path: Path) -> TrainedModel:
    doc = read_json(path, MODEL_SCHEMA)
    try:
        return TrainedModel.from_document(doc)
    except ValueError as e:
        raise SchemaMismatchError(f"{path}: {e}") from e
