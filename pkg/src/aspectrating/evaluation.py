from __future__ import annotations
import itertools
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import toml
from scipy import stats

from .corpus import Corpus
from .errors import AspectRatingError, DataError, MetricError
from .jobs import run_parallel
from .predictor import predict_batch
from .schemas import HyperParams, MetricReport, PredictConfig, TrainConfig
from .trainer import train

logger = logging.getLogger(__name__)

Grid = List[Tuple[float, float]]


def _pair(true: Sequence[float], pred: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    t = np.asarray(true, dtype=float)
    p = np.asarray(pred, dtype=float)
    if t.shape != p.shape or t.ndim != 1:
        raise DataError(f"true and predicted ratings differ in length ({t.size} vs {p.size})")
    return t, p


def mae(true: Sequence[float], pred: Sequence[float]) -> float:
    t, p = _pair(true, pred)
    if t.size == 0:
        raise DataError("mean absolute error of zero ratings")
    return float(np.mean(np.abs(t - p)))


def pearson(true: Sequence[float], pred: Sequence[float]) -> float:
    t, p = _pair(true, pred)
    if t.size < 2:
        raise MetricError(f"Pearson correlation needs at least 2 pairs, got {t.size}")
    if np.ptp(t) == 0 or np.ptp(p) == 0:
        raise MetricError("Pearson correlation is undefined for a constant rating list")
    return float(stats.pearsonr(t, p)[0])


def inverted_pairs(true: Sequence[float], pred: Sequence[float]) -> int:
    """Unordered pairs whose predicted order strictly contradicts their true order."""
    t, p = _pair(true, pred)
    count = 0
    for i in range(t.size - 1):
        dt = np.sign(t[i + 1:] - t[i])
        dp = np.sign(p[i + 1:] - p[i])
        count += int(np.count_nonzero(dt * dp < 0))
    return count


def evaluate(true: Sequence[float], pred: Sequence[float], label: str = "model") -> MetricReport:
    """All three metrics; an undefined Pearson is reported in `pearson_error`, never as 0."""
    value: Optional[float] = None
    error: Optional[str] = None
    try:
        value = pearson(true, pred)
    except MetricError as e:
        error = str(e)
    return MetricReport(
        label=label,
        mae=mae(true, pred),
        pearson=value,
        pearson_error=error,
        inverted_pairs=inverted_pairs(true, pred),
        n=len(true),
    )


def evaluate_with_baselines(
    true: Sequence[float],
    pred: Sequence[float],
    mu: float,
    train_mean: Optional[float] = None,
) -> List[MetricReport]:
    """The model's report followed by the constant-mu and (when known) train-mean baselines."""
    n = len(true)
    reports = [evaluate(true, pred, "model"), evaluate(true, [mu] * n, "constant-mu")]
    if train_mean is not None:
        reports.append(evaluate(true, [train_mean] * n, "train-mean"))
    return reports


# -----------------------
# mu / sigma2 sweep
# -----------------------

def parse_grid(spec: str) -> Grid:
    """
    Grid points from a TOML file or an inline "mu:sigma2,mu:sigma2" list.
    A TOML file holds either `points = [[mu, sigma2], ...]` or `mu = [...]`
    and `sigma2 = [...]`, which expand to their cartesian product.
    """
    path = Path(spec)
    try:
        if path.is_file():
            doc = toml.load(path)
            if "points" in doc:
                grid = [(float(m), float(s)) for m, s in doc["points"]]
            else:
                grid = [(float(m), float(s)) for m, s in itertools.product(doc["mu"], doc["sigma2"])]
        else:
            grid = []
            for item in spec.split(","):
                if item.strip():
                    m, s = item.split(":")
                    grid.append((float(m), float(s)))
    except (toml.TomlDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataError(f"cannot read parameter grid {spec!r}: {e}") from e
    if not grid:
        raise DataError(f"parameter grid {spec!r} is empty")
    return grid


def _sweep_point(task: Tuple[Corpus, Corpus, Dict[str, Any], TrainConfig, PredictConfig]) -> Dict[str, Any]:
    train_corpus, test_corpus, fields, train_config, predict_config = task
    row: Dict[str, Any] = {"mu": fields["mu"], "sigma2": fields["sigma2"]}
    try:
        hyper = HyperParams.model_validate(fields)
        model = train(train_corpus, hyper, train_config)
        preds = predict_batch(model, test_corpus, predict_config)
        report = evaluate([p.true_rating for p in preds], [p.predicted_rating for p in preds])
        row.update(report.model_dump(exclude={"label"}))
    except (AspectRatingError, ValueError) as e:
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def sweep_parameters(
    corpus_train: Corpus,
    corpus_test: Corpus,
    grid: Grid,
    hyper: HyperParams,
    train_config: TrainConfig,
    predict_config: PredictConfig,
    jobs: int = 1,
) -> Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]:
    """Train and evaluate one model per (mu, sigma2) point, all with the same seeds.

    Returns (successful rows, failed rows) in grid order.
    """
    if not grid:
        raise DataError("parameter grid is empty")
    tasks = [
        (corpus_train, corpus_test, {**hyper.model_dump(), "mu": mu, "sigma2": sigma2}, train_config, predict_config)
        for mu, sigma2 in grid
    ]

    results = run_parallel(_sweep_point, tasks, jobs)
    rows = [r for r in results if "error" not in r]
    failures = [r for r in results if "error" in r]
    for f in failures:
        logger.warning("[sweep] mu=%s sigma2=%s failed: %s", f["mu"], f["sigma2"], f["error"])
    logger.info("[sweep] %d of %d grid points evaluated", len(rows), len(grid))
    return rows, failures
