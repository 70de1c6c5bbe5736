from __future__ import annotations
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from . import config
from .config import FORMAT_VERSION
from .errors import DataError, InputFileError
from .schemas import RawReview
from .storage import CORPUS_FORMAT, CORPUS_SCHEMA, read_json, read_text_with_encoding, write_json
from .text import normalize_text

logger = logging.getLogger(__name__)

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"


@dataclass(frozen=True)
class Vocabulary:
    words: Tuple[str, ...]
    index: Mapping[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        if len(set(self.words)) != len(self.words):
            raise DataError("vocabulary words must be distinct")
        object.__setattr__(self, "index", {w: i for i, w in enumerate(self.words)})

    def __len__(self) -> int:
        return len(self.words)


@dataclass(frozen=True, eq=False)
class Review:
    review_id: str
    author_index: int
    rating: float
    tokens: np.ndarray
    product_id: str = ""
    timestamp: Optional[float] = None

    def __post_init__(self) -> None:
        toks = np.asarray(self.tokens, dtype=np.int64)
        toks.setflags(write=False)
        object.__setattr__(self, "tokens", toks)

    def __len__(self) -> int:
        return int(self.tokens.shape[0])


@dataclass(frozen=True, eq=False)
class Corpus:
    vocabulary: Vocabulary
    reviews: List[Review]
    authors: Tuple[str, ...]
    num_products: int = 0

    @property
    def num_authors(self) -> int:
        return len(self.authors)

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    @property
    def num_tokens(self) -> int:
        return int(sum(len(r) for r in self.reviews))

    def __len__(self) -> int:
        return len(self.reviews)

    def ratings(self) -> np.ndarray:
        return np.array([r.rating for r in self.reviews], dtype=float)


def load_reviews(path: Path) -> Tuple[List[RawReview], int]:
    """Parse a JSON Lines review file. Returns (reviews in file order, skipped line count)."""
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"review file not found: {path}")
    text = read_text_with_encoding(path)

    reviews: List[RawReview] = []
    skipped = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            reviews.append(RawReview.model_validate(json.loads(line)))
        except (json.JSONDecodeError, ValidationError, TypeError) as e:
            skipped += 1
            logger.warning("[corpus] skipping malformed line %d of %s: %s", lineno, path.name, str(e).splitlines()[0])

    logger.info("[corpus] loaded %d reviews from %s (%d skipped)", len(reviews), path, skipped)
    return reviews, skipped


def build_corpus(
    reviews: Sequence[RawReview],
    min_word_count: int = config.DEFAULT_MIN_WORD_COUNT,
    stopwords: Optional[Iterable[str]] = None,
) -> Corpus:
    if not reviews:
        raise DataError("cannot build a corpus from zero reviews")
    repeated = sorted(rid for rid, n in Counter(r.review_id for r in reviews).items() if n > 1)
    if repeated:
        raise DataError(f"duplicate review_id values: {', '.join(repeated[:5])}")
    stop = None if stopwords is None else frozenset(stopwords)

    normalized = [normalize_text(r.text, stop) for r in reviews]
    freq = Counter(tok for toks in normalized for tok in toks)

    words: List[str] = []
    seen = set()
    for toks in normalized:
        for tok in toks:
            if tok not in seen and freq[tok] >= min_word_count:
                seen.add(tok)
                words.append(tok)
    vocab = Vocabulary(tuple(words))

    author_index: Dict[str, int] = {}
    products = set()
    encoded: List[Review] = []
    dropped = 0
    for raw, toks in zip(reviews, normalized):
        ids = [vocab.index[t] for t in toks if t in vocab.index]
        if not ids:
            dropped += 1
            continue
        x = author_index.setdefault(raw.author_id, len(author_index))
        products.add(raw.product_id)
        encoded.append(
            Review(
                review_id=raw.review_id,
                author_index=x,
                rating=float(raw.rating),
                tokens=np.asarray(ids, dtype=np.int64),
                product_id=raw.product_id,
                timestamp=raw.timestamp,
            )
        )

    if not encoded:
        raise DataError("every review was empty after preprocessing")
    if dropped:
        logger.info("[corpus] dropped %d reviews with no in-vocabulary tokens", dropped)

    return Corpus(
        vocabulary=vocab,
        reviews=encoded,
        authors=tuple(author_index.keys()),
        num_products=len(products),
    )


def _train_count(n: int, train_fraction: float) -> int:
    # tolerance keeps e.g. 0.7 * 10 from rounding up to 8
    return int(math.ceil(train_fraction * n - 1e-9))


def _author_order(reviews: List[Review], idxs: List[int], rng: np.random.Generator) -> List[int]:
    stamps = [reviews[i].timestamp for i in idxs]
    if all(s is not None for s in stamps):
        return [i for _, i in sorted(zip(stamps, idxs))]
    return [idxs[j] for j in rng.permutation(len(idxs))]


def split_by_author(
    corpus: Corpus,
    train_fraction: float = config.DEFAULT_TRAIN_FRACTION,
    min_train: int = config.DEFAULT_MIN_TRAIN,
    min_test: int = config.DEFAULT_MIN_TEST,
    max_train_total: int = config.DEFAULT_MAX_TRAIN,
    seed: int = config.DEFAULT_SEED,
) -> Tuple[Corpus, Corpus]:
    """Per-author train/test split; train gets each author's earliest (or a seeded random) share."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)

    by_author: Dict[int, List[int]] = defaultdict(list)
    for i, r in enumerate(corpus.reviews):
        by_author[r.author_index].append(i)

    kept: Dict[int, Tuple[List[int], List[int]]] = {}
    for x in sorted(by_author):
        idxs = by_author[x]
        n_train = _train_count(len(idxs), train_fraction)
        if n_train < min_train or len(idxs) - n_train < min_test:
            continue
        ordered = _author_order(corpus.reviews, idxs, rng)
        kept[x] = (ordered[:n_train], ordered[n_train:])

    total = sum(len(tr) for tr, _ in kept.values())
    if total > max_train_total:
        for x in [list(kept)[j] for j in rng.permutation(len(kept))]:
            if total <= max_train_total:
                break
            total -= len(kept.pop(x)[0])

    if not kept:
        raise DataError("no author satisfies the split requirements")

    remap = {x: j for j, x in enumerate(sorted(kept))}
    authors = tuple(corpus.authors[x] for x in sorted(kept))

    def _subset(which: int) -> Corpus:
        idxs = sorted(i for x in kept for i in kept[x][which])
        reviews = [replace(corpus.reviews[i], author_index=remap[corpus.reviews[i].author_index]) for i in idxs]
        return Corpus(
            vocabulary=corpus.vocabulary,
            reviews=reviews,
            authors=authors,
            num_products=len({r.product_id for r in reviews}),
        )

    train, test = _subset(0), _subset(1)
    logger.info(
        "[corpus] split: %d authors, %d train / %d test reviews",
        len(authors), len(train), len(test),
    )
    return train, test


def _review_record(r: Review, split: Optional[str]) -> Dict[str, object]:
    return {
        "review_id": r.review_id,
        "author": int(r.author_index),
        "product_id": r.product_id,
        "rating": float(r.rating),
        "tokens": [int(t) for t in r.tokens],
        "split": split,
        "timestamp": r.timestamp,
    }


def save_corpus(path: Path, train: Corpus, test: Optional[Corpus] = None) -> None:
    """Write an encoded corpus; when `test` is given the reviews carry their split."""
    if test is not None and (test.vocabulary.words != train.vocabulary.words or test.authors != train.authors):
        raise DataError("train and test corpora must share vocabulary and author index")
    split = SPLIT_TRAIN if test is not None else None
    records = [_review_record(r, split) for r in train.reviews]
    if test is not None:
        records += [_review_record(r, SPLIT_TEST) for r in test.reviews]
    write_json(path, {
        "format": CORPUS_FORMAT,
        "version": FORMAT_VERSION,
        "vocabulary": list(train.vocabulary.words),
        "authors": list(train.authors),
        "num_products": len({r.product_id for r in train.reviews} | ({r.product_id for r in test.reviews} if test else set())),
        "reviews": records,
    })


def load_corpus(path: Path, split: Optional[str] = None) -> Corpus:
    """Read an encoded corpus, optionally keeping one split. Reviews without a split belong to every split."""
    doc = read_json(path, CORPUS_SCHEMA)
    vocab = Vocabulary(tuple(doc["vocabulary"]))
    authors = tuple(doc["authors"])
    V, X = len(vocab), len(authors)

    reviews: List[Review] = []
    for rec in doc["reviews"]:
        if split is not None and rec.get("split") not in (split, None):
            continue
        if rec["author"] >= X or any(t >= V for t in rec["tokens"]):
            raise DataError(f"{path}: review {rec['review_id']} references an unknown author or word")
        reviews.append(
            Review(
                review_id=rec["review_id"],
                author_index=rec["author"],
                rating=float(rec["rating"]),
                tokens=np.asarray(rec["tokens"], dtype=np.int64),
                product_id=rec.get("product_id", ""),
                timestamp=rec.get("timestamp"),
            )
        )
    return Corpus(
        vocabulary=vocab,
        reviews=reviews,
        authors=authors,
        num_products=len({r.product_id for r in reviews}),
    )
