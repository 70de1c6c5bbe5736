from __future__ import annotations
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import __version__
from .errors import InputFileError, SchemaMismatchError
from .model import TrainedModel
from .schemas import AspectSummary, FileFingerprint, MetricReport, Prediction, RunManifest, model_to_dict
from .storage import sha256_file, write_json

logger = logging.getLogger(__name__)

RECOMMENDED_POINT = (3.5, 0.08)

PREDICTION_COLUMNS = ["review_id", "true_rating", "predicted_rating", "oov", "tokens_used", "error"]
METRIC_COLUMNS = ["label", "mae", "pearson", "pearson_error", "inverted_pairs", "n"]
SWEEP_COLUMNS = ["mu", "sigma2", "mae", "pearson", "pearson_error", "inverted_pairs", "n", "recommended", "best"]


def write_table(df: pd.DataFrame, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n")


# ----------------------------
# Predictions and metrics
# ----------------------------

def predictions_frame(predictions: Sequence[Prediction]) -> pd.DataFrame:
    rows = [p.model_dump(include=set(PREDICTION_COLUMNS)) for p in predictions]
    return pd.DataFrame(rows, columns=PREDICTION_COLUMNS)


def read_predictions(path: Path) -> Tuple[List[float], List[float]]:
    """(true ratings, predicted ratings) for every row that has a true rating."""
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"predictions file not found: {path}")
    try:
        df = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise SchemaMismatchError(f"{path} is not a predictions table: {e}") from e
    missing = {"review_id", "true_rating", "predicted_rating"} - set(df.columns)
    if missing:
        raise SchemaMismatchError(f"{path}: missing columns {sorted(missing)}")
    unknown = df["true_rating"].isna()
    if unknown.any():
        logger.info("[evaluate] %d predictions have no true rating and are skipped", int(unknown.sum()))
    df = df[~unknown]
    return df["true_rating"].astype(float).tolist(), df["predicted_rating"].astype(float).tolist()


def metrics_frame(reports: Iterable[MetricReport]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in reports], columns=METRIC_COLUMNS)


def sweep_frame(rows: Sequence[Dict[str, Any]], recommended: Tuple[float, float] = RECOMMENDED_POINT) -> pd.DataFrame:
    df = pd.DataFrame(list(rows), columns=SWEEP_COLUMNS[:-2])
    df["recommended"] = [bool(np.isclose(m, recommended[0]) and np.isclose(s, recommended[1]))
                         for m, s in zip(df["mu"], df["sigma2"])]
    df["best"] = False
    if len(df):
        df.loc[df["mae"].astype(float).idxmin(), "best"] = True
    return df


# ----------------------------
# Analysis tables
# ----------------------------

def polarity_frame(model: TrainedModel, polarity: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame({"word": list(model.vocabulary), "polarity": polarity})


def aspects_frame(model: TrainedModel, summaries: Sequence[AspectSummary]) -> pd.DataFrame:
    rows = []
    for a in summaries:
        rows.append({
            "topic": a.topic,
            "preference": a.preference,
            "sentiment": a.sentiment,
            "critical": a.critical,
            "tables": int(model.topic_tables[a.topic]),
        })
    return pd.DataFrame(rows, columns=["topic", "preference", "sentiment", "critical", "tables"])


def top_words_frame(summaries: Sequence[AspectSummary]) -> pd.DataFrame:
    rows = [
        {"topic": a.topic, "critical": a.critical, "rank": rank, "word": word, "weight": weight}
        for a in summaries
        for rank, (word, weight) in enumerate(a.top_words, start=1)
    ]
    return pd.DataFrame(rows, columns=["topic", "critical", "rank", "word", "weight"])


def extremes_frame(positive: Sequence[Tuple[str, float]], negative: Sequence[Tuple[str, float]]) -> pd.DataFrame:
    rows = [{"side": "positive", "rank": r, "word": w, "polarity": p} for r, (w, p) in enumerate(positive, start=1)]
    rows += [{"side": "negative", "rank": r, "word": w, "polarity": p} for r, (w, p) in enumerate(negative, start=1)]
    return pd.DataFrame(rows, columns=["side", "rank", "word", "polarity"])


def histogram_frame(edges: np.ndarray, counts: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame({"bin_left": edges[:-1], "bin_right": edges[1:], "count": counts})


# ----------------------------
# Run manifests
# ----------------------------

def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def manifest_path(primary_output: Path) -> Path:
    primary_output = Path(primary_output)
    return primary_output.with_name(primary_output.name + ".manifest.json")


def write_manifest(
    primary_output: Path,
    subcommand: str,
    options: Dict[str, Any],
    inputs: Sequence[Path],
    outputs: Sequence[Path],
    started_at: str,
    seconds: float,
    seed: Optional[int] = None,
) -> Path:
    manifest = RunManifest(
        subcommand=subcommand,
        options={k: (str(v) if isinstance(v, Path) else v) for k, v in options.items()},
        inputs=[FileFingerprint(path=str(p), sha256=sha256_file(p) if Path(p).is_file() else None) for p in inputs],
        outputs=[str(p) for p in outputs],
        seed=seed,
        tool_version=__version__,
        started_at=started_at,
        finished_at=utc_now(),
        seconds=round(seconds, 3),
    )
    path = manifest_path(primary_output)
    write_json(path, model_to_dict(manifest))
    return path


def correlation_frame(value: Optional[float], error: Optional[str]) -> pd.DataFrame:
    return pd.DataFrame([{"pearson": value, "pearson_error": error}], columns=["pearson", "pearson_error"])
