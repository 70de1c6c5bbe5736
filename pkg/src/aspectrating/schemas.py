from __future__ import annotations
from typing import Any, ClassVar, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import config


class RawReview(BaseModel):
    """One input record as it appears in the JSON Lines file."""

    review_id: str
    author_id: str = Field(min_length=1)
    product_id: str
    rating: float = Field(ge=1.0, le=5.0)
    text: str
    timestamp: Optional[float] = None

    model_config = ConfigDict(extra="ignore", frozen=True)

    @field_validator("author_id")
    @classmethod
    def _author_not_blank(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("author_id must be non-empty")
        return v


class HyperParams(BaseModel):
    gamma: float = Field(config.DEFAULT_GAMMA, gt=0)
    alpha: float = Field(config.DEFAULT_ALPHA, gt=0)
    beta: float = Field(config.DEFAULT_BETA, gt=0)
    eta: float = Field(config.DEFAULT_ETA, gt=0)
    lambda_: float = Field(config.DEFAULT_LAMBDA, gt=0, alias="lambda")
    mu: float = Field(config.DEFAULT_MU, ge=1.0, le=5.0)
    sigma2: float = Field(config.DEFAULT_SIGMA2, gt=0)

    # sentiment polarities and preference strengths
    S: ClassVar[int] = 3
    U: ClassVar[int] = 2

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")


class TrainConfig(BaseModel):
    sweeps: int = Field(config.DEFAULT_TRAIN_SWEEPS, ge=0)
    burn_in: int = Field(config.DEFAULT_TRAIN_BURN_IN, ge=0)
    seed: int = Field(config.DEFAULT_SEED, ge=0)
    checkpoint_every: int = Field(config.DEFAULT_CHECKPOINT_EVERY, ge=0)
    debug_invariants: bool = False
    table_topic_likelihood: Literal["exact", "printed"] = "exact"
    topic_threshold: float = Field(config.DEFAULT_TOPIC_THRESHOLD, ge=0.0, lt=1.0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def _burn_in_below_sweeps(self) -> "TrainConfig":
        # sweeps == 0 is the smoke run: initial state only
        if self.sweeps == 0 and self.burn_in == 0:
            return self
        if not self.sweeps > self.burn_in:
            raise ValueError(f"sweeps ({self.sweeps}) must exceed burn_in ({self.burn_in})")
        return self


class PredictConfig(BaseModel):
    sweeps: int = Field(config.DEFAULT_PREDICT_SWEEPS, ge=1)
    burn_in: int = Field(config.DEFAULT_PREDICT_BURN_IN, ge=0)
    seed: int = Field(config.DEFAULT_SEED, ge=0)
    average_over_sweeps: bool = True

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def _burn_in_below_sweeps(self) -> "PredictConfig":
        if not self.sweeps > self.burn_in:
            raise ValueError(f"sweeps ({self.sweeps}) must exceed burn_in ({self.burn_in})")
        return self


def _check_simplex_rows(name: str, table: Optional[List[Any]], shape: Tuple[int, ...]) -> None:
    if table is None:
        return
    arr = np.asarray(table, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"planted {name} has shape {arr.shape}, expected {shape}")
    if np.any(arr < 0) or not np.allclose(arr.sum(axis=-1), 1.0, atol=1e-9):
        raise ValueError(f"planted {name} rows must be non-negative and sum to 1")


class GenSpec(BaseModel):
    """Synthetic corpus recipe. Planted tables are optional; missing ones are drawn from the priors."""

    k_true: int = Field(3, ge=1)
    vocab_size: int = Field(50, ge=1)
    num_authors: int = Field(10, ge=1)
    num_docs: int = Field(300, ge=1)
    doc_length_mean: float = Field(40.0, gt=0)
    doc_length_min: int = Field(5, ge=1)
    hyper: HyperParams = Field(default_factory=HyperParams)
    phi: Optional[List[List[float]]] = None
    pi: Optional[List[List[List[float]]]] = None
    psi: Optional[List[List[List[float]]]] = None
    sentiment_prior: Optional[Tuple[float, float, float]] = None
    seed: int = Field(config.DEFAULT_SEED, ge=0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def _planted_tables_normalized(self) -> "GenSpec":
        K, V, X = self.k_true, self.vocab_size, self.num_authors
        _check_simplex_rows("phi", self.phi, (K, V))
        _check_simplex_rows("pi", self.pi, (K, V, HyperParams.S))
        _check_simplex_rows("psi", self.psi, (K, X, HyperParams.U))
        if self.sentiment_prior is not None and min(self.sentiment_prior) <= 0:
            raise ValueError("sentiment_prior concentrations must be positive")
        return self


class Prediction(BaseModel):
    review_id: str
    true_rating: Optional[float] = None
    predicted_rating: float
    oov: bool = False
    tokens_used: int = 0
    trace: List[float] = Field(default_factory=list)
    error: Optional[str] = None


class MetricReport(BaseModel):
    label: str = "model"
    mae: float = Field(ge=0)
    pearson: Optional[float] = None
    pearson_error: Optional[str] = None
    inverted_pairs: int = Field(ge=0)
    n: int = Field(ge=0)


class AspectSummary(BaseModel):
    topic: int
    preference: float = Field(ge=0.0, le=1.0)
    sentiment: float = Field(ge=-1.0, le=1.0)
    critical: bool
    top_words: List[Tuple[str, float]] = Field(default_factory=list)


class FileFingerprint(BaseModel):
    path: str
    sha256: Optional[str] = None


class RunManifest(BaseModel):
    subcommand: str
    options: Dict[str, Any] = Field(default_factory=dict)
    inputs: List[FileFingerprint] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)
    seed: Optional[int] = None
    tool_version: str
    started_at: str
    finished_at: Optional[str] = None
    seconds: Optional[float] = None


def model_to_dict(m: Optional[BaseModel]) -> Dict[str, Any]:
    if m is None:
        return {}
    return m.model_dump(by_alias=True, mode="json")
