import itertools

import numpy as np
import pytest

from src.aspectrating.corpus import split_by_author
from src.aspectrating.errors import DataError, MetricError
from src.aspectrating.evaluation import (
    evaluate,
    evaluate_with_baselines,
    inverted_pairs,
    mae,
    parse_grid,
    pearson,
    sweep_parameters,
)
from src.aspectrating.generator import generate
from src.aspectrating.predictor import predict_batch
from src.aspectrating.reporting import sweep_frame
from src.aspectrating.schemas import GenSpec, HyperParams, PredictConfig, TrainConfig
from src.aspectrating.trainer import train

TRAIN = TrainConfig(sweeps=4, burn_in=2, seed=1)
PREDICT = PredictConfig(sweeps=6, burn_in=2, seed=1)


class TestMae:
    def test_examples(self):
        assert mae([4, 3], [5, 1]) == pytest.approx(1.5)
        assert mae([5], [3.5]) == pytest.approx(1.5)
        assert mae([2, 2, 2], [2, 2, 2]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            mae([1, 2], [1])

    def test_empty(self):
        with pytest.raises(DataError):
            mae([], [])


class TestPearson:
    def test_example(self):
        assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198, abs=1e-4)

    def test_perfect_anticorrelation(self):
        true = [1.0, 2.5, 4.0, 5.0]
        assert pearson(true, [6.0 - t for t in true]) == pytest.approx(-1.0)

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        true, pred = rng.uniform(1, 5, 30), rng.uniform(1, 5, 30)
        assert pearson(true, 2.0 * pred + 1.0) == pytest.approx(pearson(true, pred))

    @pytest.mark.parametrize("true, pred", [([1, 2, 3], [4, 4, 4]), ([3, 3], [1, 2]), ([4], [5])])
    def test_undefined(self, true, pred):
        with pytest.raises(MetricError):
            pearson(true, pred)

    def test_metric_error_is_a_data_error(self):
        assert issubclass(MetricError, DataError)


class TestInvertedPairs:
    def test_examples(self):
        assert inverted_pairs([1, 2], [2, 1]) == 1
        assert inverted_pairs([5, 3, 1], [1, 3, 5]) == 3
        assert inverted_pairs([1, 2, 3], [1, 2, 3]) == 0

    def test_ties_are_not_inversions(self):
        assert inverted_pairs([1, 1, 2], [2, 3, 3]) == 0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(0, 51))
            true = rng.integers(1, 6, n).tolist()
            pred = rng.integers(1, 6, n).tolist()
            expected = sum(
                1 for i, j in itertools.combinations(range(n), 2)
                if (true[i] - true[j]) * (pred[i] - pred[j]) < 0
            )
            assert inverted_pairs(true, pred) == expected


class TestEvaluate:
    def test_report(self):
        report = evaluate([1, 2, 3], [1, 2, 4])
        assert report.label == "model" and report.n == 3
        assert report.mae == pytest.approx(1 / 3)
        assert report.inverted_pairs == 0
        assert report.pearson_error is None

    def test_constant_predictions_report_the_error(self):
        report = evaluate([1, 2, 3], [3.5, 3.5, 3.5])
        assert report.pearson is None
        assert "constant" in report.pearson_error

    def test_baselines(self):
        reports = evaluate_with_baselines([4, 5], [4.5, 4.5], mu=3.5, train_mean=4.0)
        assert [r.label for r in reports] == ["model", "constant-mu", "train-mean"]
        assert reports[1].mae == pytest.approx(1.0)
        assert reports[2].mae == pytest.approx(0.5)
        assert len(evaluate_with_baselines([4, 5], [4.5, 4.5], mu=3.5)) == 2


class TestParseGrid:
    def test_inline(self):
        assert parse_grid("3.0:0.08, 3.5:0.16") == [(3.0, 0.08), (3.5, 0.16)]

    def test_toml_points(self, tmp_path):
        path = tmp_path / "grid.toml"
        path.write_text("points = [[3.0, 0.08], [4.0, 0.5]]\n", encoding="utf-8")
        assert parse_grid(str(path)) == [(3.0, 0.08), (4.0, 0.5)]

    def test_toml_product(self, tmp_path):
        path = tmp_path / "grid.toml"
        path.write_text("mu = [3.0, 3.5]\nsigma2 = [0.08, 0.16]\n", encoding="utf-8")
        assert parse_grid(str(path)) == [(3.0, 0.08), (3.0, 0.16), (3.5, 0.08), (3.5, 0.16)]

    @pytest.mark.parametrize("spec", ["", "3.0", "a:b", "3.0:0.08:1"])
    def test_bad_inline(self, spec):
        with pytest.raises(DataError):
            parse_grid(spec)

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "grid.toml"
        path.write_text("sigma2 = [0.08]\n", encoding="utf-8")
        with pytest.raises(DataError):
            parse_grid(str(path))


class TestSweep:
    def test_single_point_matches_manual_run(self, toy_corpus):
        hyper = HyperParams()
        rows, failures = sweep_parameters(toy_corpus, toy_corpus, [(3.5, 0.08)], hyper, TRAIN, PREDICT)
        assert failures == []

        model = train(toy_corpus, hyper, TRAIN)
        preds = predict_batch(model, toy_corpus, PREDICT)
        expected = mae([p.true_rating for p in preds], [p.predicted_rating for p in preds])
        assert rows[0]["mae"] == expected
        assert rows[0]["n"] == len(toy_corpus)

    def test_failed_point_is_recorded(self, toy_corpus):
        grid = [(3.5, 0.08), (7.0, 0.08), (3.0, 0.16)]
        rows, failures = sweep_parameters(toy_corpus, toy_corpus, grid, HyperParams(), TRAIN, PREDICT)
        assert [(r["mu"], r["sigma2"]) for r in rows] == [(3.5, 0.08), (3.0, 0.16)]
        assert len(failures) == 1 and failures[0]["mu"] == 7.0
        assert "error" in failures[0]

    def test_worker_processes_match_inline(self, toy_corpus):
        grid = [(3.5, 0.08), (3.0, 0.16)]
        inline, _ = sweep_parameters(toy_corpus, toy_corpus, grid, HyperParams(), TRAIN, PREDICT, jobs=1)
        pooled, _ = sweep_parameters(toy_corpus, toy_corpus, grid, HyperParams(), TRAIN, PREDICT, jobs=2)
        assert [r["mae"] for r in inline] == [r["mae"] for r in pooled]

    def test_empty_grid(self, toy_corpus):
        with pytest.raises(DataError):
            sweep_parameters(toy_corpus, toy_corpus, [], HyperParams(), TRAIN, PREDICT)

    def test_frame_flags(self):
        rows = [
            {"mu": 3.0, "sigma2": 0.08, "mae": 0.9, "pearson": 0.1, "pearson_error": None, "inverted_pairs": 3, "n": 5},
            {"mu": 3.5, "sigma2": 0.08, "mae": 0.7, "pearson": 0.2, "pearson_error": None, "inverted_pairs": 2, "n": 5},
            {"mu": 4.0, "sigma2": 0.08, "mae": 0.5, "pearson": 0.3, "pearson_error": None, "inverted_pairs": 1, "n": 5},
        ]
        df = sweep_frame(rows)
        assert df["recommended"].tolist() == [False, True, False]
        assert df["best"].tolist() == [False, False, True]


@pytest.mark.slow
def test_sweep_prefers_mu_near_the_data():
    """Mostly neutral words on data generated with mu=4; a low mu should lose."""
    spec = GenSpec(
        k_true=2, vocab_size=20, num_authors=5, num_docs=100, doc_length_mean=6, doc_length_min=3,
        hyper=HyperParams(mu=4.0), sentiment_prior=(0.2, 3.0, 1.0),
        psi=np.tile([0.9, 0.1], (2, 5, 1)).tolist(), seed=4,
    )
    corpus = generate(spec).corpus
    train_corpus, test_corpus = split_by_author(corpus, seed=spec.seed)
    grid = [(mu, 0.08) for mu in (3.0, 3.25, 3.5, 3.75, 4.0)]
    rows, failures = sweep_parameters(
        train_corpus, test_corpus, grid, HyperParams(),
        TrainConfig(sweeps=20, burn_in=10, seed=1), PredictConfig(sweeps=20, burn_in=10, seed=1),
    )
    assert failures == []
    best = min(rows, key=lambda r: r["mae"])
    assert best["mu"] > 3.0
    assert rows[-1]["mae"] < rows[0]["mae"]
