from __future__ import annotations
import logging
from typing import List, Tuple

import numpy as np

from . import config
from .evaluation import pearson
from .model import NEGATIVE, POSITIVE, STRONG, TrainedModel
from .schemas import AspectSummary

logger = logging.getLogger(__name__)


def _signed_ratio(pos: np.ndarray, neg: np.ndarray, axis=None):
    """(sum pos - sum neg) / (sum pos + sum neg), 0 where the denominator is 0."""
    num = np.sum(pos - neg, axis=axis)
    den = np.sum(pos + neg, axis=axis)
    out = np.divide(num, den, out=np.zeros_like(np.asarray(num, dtype=float)), where=den > 0)
    return np.clip(out, -1.0, 1.0)


def polarity_table(model: TrainedModel) -> np.ndarray:
    """Polarity of every vocabulary word; the neutral probability is ignored."""
    return _signed_ratio(model.pi[:, :, POSITIVE], model.pi[:, :, NEGATIVE], axis=0)


def word_polarity(model: TrainedModel, w: int) -> float:
    return float(_signed_ratio(model.pi[:, w, POSITIVE], model.pi[:, w, NEGATIVE]))


def aspect_preference(model: TrainedModel, k: int) -> float:
    """Average probability of a strong preference for topic k over all authors."""
    if model.X == 0:
        return 0.0
    return float(np.clip(model.psi[k, :, STRONG].mean(), 0.0, 1.0))


def aspect_sentiment(model: TrainedModel, k: int) -> float:
    return float(_signed_ratio(model.pi[k, :, POSITIVE], model.pi[k, :, NEGATIVE]))


def is_critical(preference: float, sentiment: float, pref_floor: float, ratio_threshold: float) -> bool:
    if preference < pref_floor:
        return False
    # a zero sentiment has no ratio; it counts with the negative branch
    if sentiment <= 0:
        return True
    return preference / sentiment > ratio_threshold


def top_words(model: TrainedModel, k: int, n: int) -> List[Tuple[str, float]]:
    """The n highest-probability words of topic k, ties broken by word id."""
    row = model.phi[k]
    order = np.lexsort((np.arange(row.size), -row))[:n]
    return [(model.vocabulary[w], float(row[w])) for w in order]


def critical_aspects(
    model: TrainedModel,
    pref_floor: float = config.DEFAULT_PREF_FLOOR,
    ratio_threshold: float = config.DEFAULT_RATIO_THRESHOLD,
    top_n: int = config.DEFAULT_TOP_N,
) -> List[AspectSummary]:
    """Summaries of every topic, flagged by the critical-aspect rule, by preference descending."""
    summaries = []
    for k in range(model.K):
        pref = aspect_preference(model, k)
        senti = aspect_sentiment(model, k)
        summaries.append(
            AspectSummary(
                topic=k,
                preference=pref,
                sentiment=senti,
                critical=is_critical(pref, senti, pref_floor, ratio_threshold),
                top_words=top_words(model, k, top_n),
            )
        )
    summaries.sort(key=lambda a: (-a.preference, a.topic))
    flagged = sum(a.critical for a in summaries)
    logger.info("[analyze] %d of %d aspects flagged critical", flagged, len(summaries))
    return summaries


def polarity_extremes(model: TrainedModel, n: int) -> Tuple[List[Tuple[str, float]], List[Tuple[str, float]]]:
    """(most positive n words, most negative n words), ties broken by word id."""
    pol = polarity_table(model)
    ids = np.arange(pol.size)
    positive = np.lexsort((ids, -pol))[:n]
    negative = np.lexsort((ids, pol))[:n]
    words = model.vocabulary
    return (
        [(words[w], float(pol[w])) for w in positive],
        [(words[w], float(pol[w])) for w in negative],
    )


def polarity_histogram(model: TrainedModel, bins: int = config.DEFAULT_HISTOGRAM_BINS) -> Tuple[np.ndarray, np.ndarray]:
    """(bin edges, counts) of word polarities over [-1, 1]."""
    counts, edges = np.histogram(polarity_table(model), bins=bins, range=(-1.0, 1.0))
    return edges, counts


def preference_sentiment_correlation(model: TrainedModel) -> float:
    """Pearson correlation of aspect preference and aspect sentiment across topics.

    Raises MetricError when there are fewer than two topics or either side is constant.
    """
    prefs = [aspect_preference(model, k) for k in range(model.K)]
    sents = [aspect_sentiment(model, k) for k in range(model.K)]
    return pearson(prefs, sents)
