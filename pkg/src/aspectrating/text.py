from __future__ import annotations
import re
from functools import lru_cache
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Tuple

from .config import STOPWORDS_PATH

_APOSTROPHES_RE = re.compile(r"['’`]")
_TOKEN_RE = re.compile(r"[a-z]+")

# (suffix, replacement, minimum word length); first match wins.
# A None replacement protects the word from the remaining rules.
SUFFIX_RULES: Tuple[Tuple[str, Optional[str], int], ...] = (
    ("sses", "ss", 5),
    ("ies", "y", 5),
    ("ss", None, 0),
    ("us", None, 0),
    ("is", None, 0),
    ("s", "", 4),
    ("ing", "", 7),
    ("ed", "", 6),
)


@lru_cache(maxsize=8)
def load_stopwords(path: Path = STOPWORDS_PATH) -> FrozenSet[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(ln.strip().lower() for ln in lines if ln.strip() and not ln.startswith("#"))


def _apply_one_rule(word: str) -> str:
    for suffix, repl, min_len in SUFFIX_RULES:
        if word.endswith(suffix) and len(word) >= min_len:
            if repl is None:
                return word
            return word[: len(word) - len(suffix)] + repl
    return word


def normalize_word(word: str) -> str:
    """Apply the suffix rules until the word stops changing."""
    while True:
        nxt = _apply_one_rule(word)
        if nxt == word:
            return word
        word = nxt


def normalize_text(text: str, stopwords: Optional[Iterable[str]] = None) -> List[str]:
    """Lowercase, keep alphabetic runs, drop stopwords, normalize suffixes.

    Stopwords are checked before and after suffix normalization so that the
    output is a fixed point: normalizing " ".join(output) returns output.
    """
    stop = load_stopwords() if stopwords is None else frozenset(stopwords)
    cleaned = _APOSTROPHES_RE.sub("", (text or "").lower())

    out: List[str] = []
    for tok in _TOKEN_RE.findall(cleaned):
        if tok in stop:
            continue
        norm = normalize_word(tok)
        if not norm or norm in stop:
            continue
        out.append(norm)
    return out
