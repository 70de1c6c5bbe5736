import pytest

from src.aspectrating.text import load_stopwords, normalize_text, normalize_word


class TestNormalizeWord:
    @pytest.mark.parametrize(
        "word, expected",
        [
            ("classes", "class"),
            ("ponies", "pony"),
            ("cats", "cat"),
            ("played", "play"),
            ("running", "runn"),
            ("bus", "bus"),
            ("this", "this"),
            ("glass", "glass"),
            ("is", "is"),
        ],
    )
    def test_suffix_rules(self, word, expected):
        assert normalize_word(word) == expected

    def test_short_words_are_left_alone(self):
        assert normalize_word("bed") == "bed"
        assert normalize_word("sing") == "sing"

    def test_idempotent(self):
        for w in ["classes", "ponies", "waitresses", "stayed", "smelling", "goods"]:
            once = normalize_word(w)
            assert normalize_word(once) == once


class TestNormalizeText:
    def test_lowercases_and_splits_on_non_letters(self):
        assert normalize_text("Great FOOD, 10/10 service!!", stopwords=()) == ["great", "food", "service"]

    def test_apostrophes_are_removed_before_splitting(self):
        assert normalize_text("Don't", stopwords=()) == ["dont"]

    def test_stopwords_dropped(self):
        assert normalize_text("the cats and the dogs", stopwords={"the", "and"}) == ["cat", "dog"]

    def test_stopword_after_normalization_dropped(self):
        # "played" survives the first check and normalizes to a stopword
        assert normalize_text("played", stopwords={"play"}) == []

    def test_fixed_point(self):
        stop = load_stopwords()
        for text in [
            "The waitresses were smiling and the rooms looked spotless.",
            "Ponies, classes, buses; nothing else.",
            "",
        ]:
            out = normalize_text(text, stop)
            assert normalize_text(" ".join(out), stop) == out

    def test_empty_and_none(self):
        assert normalize_text("", stopwords=()) == []
        assert normalize_text(None, stopwords=()) == []


def test_bundled_stopwords():
    stop = load_stopwords()
    assert {"a", "and", "the"} <= stop
