from __future__ import annotations
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional

from chardet.universaldetector import UniversalDetector
from jsonschema import Draft202012Validator

from .config import FORMAT_VERSION
from .errors import InputFileError, SchemaMismatchError

CORPUS_FORMAT = "aspectrating.corpus"
MODEL_FORMAT = "aspectrating.model"
TRUTH_FORMAT = "aspectrating.truth"

_NUMBER_GRID = {"type": "array", "items": {"type": "array"}}

CORPUS_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["format", "version", "vocabulary", "authors", "num_products", "reviews"],
    "properties": {
        "format": {"const": CORPUS_FORMAT},
        "version": {"const": FORMAT_VERSION},
        "vocabulary": {"type": "array", "items": {"type": "string"}, "uniqueItems": True},
        "authors": {"type": "array", "items": {"type": "string"}},
        "num_products": {"type": "integer", "minimum": 0},
        "reviews": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["review_id", "author", "rating", "tokens"],
                "properties": {
                    "review_id": {"type": "string"},
                    "author": {"type": "integer", "minimum": 0},
                    "product_id": {"type": "string"},
                    "rating": {"type": "number"},
                    "tokens": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "split": {"enum": ["train", "test", None]},
                    "timestamp": {"type": ["number", "null"]},
                },
            },
        },
    },
}

MODEL_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": [
        "format", "version", "hyper", "vocabulary", "authors",
        "K", "phi", "pi", "psi", "topic_tables", "total_tables",
    ],
    "properties": {
        "format": {"const": MODEL_FORMAT},
        "version": {"const": FORMAT_VERSION},
        "hyper": {
            "type": "object",
            "required": ["gamma", "alpha", "beta", "eta", "lambda", "mu", "sigma2"],
        },
        "vocabulary": {"type": "array", "items": {"type": "string"}},
        "authors": {"type": "array", "items": {"type": "string"}},
        "K": {"type": "integer", "minimum": 0},
        "phi": _NUMBER_GRID,
        "pi": _NUMBER_GRID,
        "psi": _NUMBER_GRID,
        "topic_tables": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "total_tables": {"type": "integer", "minimum": 0},
        "sweep": {"type": ["integer", "null"]},
    },
}


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(8192), b""):
            h.update(chunk)
    return h.hexdigest()


def read_text_with_encoding(path: Path) -> str:
    try:
        detector = UniversalDetector()
        with open(path, "rb") as f:
            for line in f:
                detector.feed(line)
                if detector.done:
                    break
        detector.close()
    except OSError as e:
        raise InputFileError(f"cannot read {path}: {e}") from e
    enc = detector.result.get("encoding") or "utf-8"
    # ascii is a subset; decoding as utf-8 keeps stray multibyte records intact
    if enc.lower() == "ascii":
        enc = "utf-8"
    try:
        return path.read_text(encoding=enc, errors="replace")
    except LookupError:
        return path.read_text(encoding="utf-8", errors="replace")


def write_json(path: Path, doc: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def read_json(path: Path, schema: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise InputFileError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise SchemaMismatchError(f"{path} is not valid JSON: {e}") from e
    if schema is not None:
        errors = sorted(Draft202012Validator(schema).iter_errors(doc), key=lambda e: list(e.path))
        if errors:
            first = errors[0]
            where = "/".join(str(p) for p in first.path) or "<root>"
            raise SchemaMismatchError(f"{path}: {where}: {first.message}")
    return doc
