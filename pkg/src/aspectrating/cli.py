from __future__ import annotations
import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import click
import toml
from pydantic import ValidationError

from . import __version__, config
from .analysis import (
    critical_aspects,
    polarity_extremes,
    polarity_histogram,
    polarity_table,
    preference_sentiment_correlation,
)
from .corpus import SPLIT_TEST, SPLIT_TRAIN, build_corpus, load_corpus, load_reviews, save_corpus, split_by_author
from .errors import AspectRatingError, DataError, InputFileError, MetricError
from .evaluation import evaluate_with_baselines, parse_grid, sweep_parameters
from .generator import generate, plant_critical_aspect, save_truth
from .model import load_model, save_model
from .predictor import predict_batch
from .reporting import (
    aspects_frame,
    correlation_frame,
    extremes_frame,
    histogram_frame,
    metrics_frame,
    polarity_frame,
    predictions_frame,
    read_predictions,
    sweep_frame,
    top_words_frame,
    utc_now,
    write_manifest,
    write_table,
)
from .schemas import GenSpec, HyperParams, PredictConfig, TrainConfig
from .trainer import train

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class CategorizedError(click.ClickException):
    """A library error shown as `error[<category>]: <detail>` with the category's exit code."""

    def __init__(self, err: AspectRatingError):
        super().__init__(f"error[{err.category}]: {err}")
        self.exit_code = err.exit_code

    def show(self, file=None) -> None:
        click.echo(self.format_message(), err=True, file=file)


class AspectRatingGroup(click.Group):
    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except AspectRatingError as e:
            raise CategorizedError(e) from e
        except ValidationError as e:
            raise CategorizedError(DataError(_validation_summary(e))) from e


def _validation_summary(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        where = ".".join(str(p) for p in err.get("loc", ())) or e.title
        parts.append(f"{where}: {err.get('msg')}")
    return "; ".join(parts)


def _configure_logging(verbose: int) -> None:
    level = logging.WARNING if verbose <= 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)


class _Run:
    """Collects what a subcommand read and wrote, for its manifest."""

    def __init__(self, subcommand: str, options: Dict[str, Any]):
        self.subcommand = subcommand
        self.options = options
        self.inputs: List[Path] = []
        self.outputs: List[Path] = []
        self.started_at = utc_now()
        self._t0 = time.perf_counter()

    def finish(self, primary: Path, seed: Optional[int] = None) -> None:
        path = write_manifest(
            primary, self.subcommand, self.options, self.inputs, self.outputs,
            self.started_at, time.perf_counter() - self._t0, seed,
        )
        logger.info("[%s] manifest written to %s", self.subcommand, path)


def hyper_options(f: Callable) -> Callable:
    options = [
        click.option("--gamma", type=float, default=config.DEFAULT_GAMMA, show_default=True, help="Top-level DP concentration."),
        click.option("--alpha", type=float, default=config.DEFAULT_ALPHA, show_default=True, help="Per-review DP concentration."),
        click.option("--beta", type=float, default=config.DEFAULT_BETA, show_default=True, help="Topic-word Dirichlet prior."),
        click.option("--eta", type=float, default=config.DEFAULT_ETA, show_default=True, help="Preference prior."),
        click.option("--lambda", "lambda_", type=float, default=config.DEFAULT_LAMBDA, show_default=True, help="Sentiment Dirichlet prior."),
        click.option("--mu", type=float, default=config.DEFAULT_MU, show_default=True, help="Neutral rating."),
        click.option("--sigma2", type=float, default=config.DEFAULT_SIGMA2, show_default=True, help="Rating noise variance."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _hyper(kw: Dict[str, Any]) -> HyperParams:
    return HyperParams(
        gamma=kw["gamma"], alpha=kw["alpha"], beta=kw["beta"], eta=kw["eta"],
        lambda_=kw["lambda_"], mu=kw["mu"], sigma2=kw["sigma2"],
    )


def _options(params: Dict[str, Any]) -> Dict[str, Any]:
    opts = {k: v for k, v in params.items() if k != "hyper_kw"}
    opts.update(params.get("hyper_kw", {}))
    return opts


def _checkpoint_path(out: Path, sweep: int) -> Path:
    return out.with_name(f"{out.stem}.sweep-{sweep:06d}{out.suffix}")


def _config_defaults(doc: Dict[str, Any]) -> Dict[str, Any]:
    """Per-subcommand defaults keyed by option name; `lambda` is accepted for `--lambda`."""
    defaults = {}
    for section, values in doc.items():
        if isinstance(values, dict) and "lambda" in values:
            values = {("lambda_" if k == "lambda" else k): v for k, v in values.items()}
        defaults[section] = values
    return defaults


@click.group(cls=AspectRatingGroup)
@click.version_option(__version__, prog_name=config.APP_NAME)
@click.option("--config", "config_file", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="TOML file with per-subcommand defaults, e.g. [train] sweeps = 200.")
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug output.")
@click.pass_context
def cli(ctx: click.Context, config_file: Optional[Path], verbose: int) -> None:
    """Review topics, word sentiments and user preferences, jointly sampled."""
    _configure_logging(verbose)
    if config_file is not None:
        if not config_file.is_file():
            raise InputFileError(f"config file not found: {config_file}")
        try:
            ctx.default_map = _config_defaults(toml.load(config_file))
        except toml.TomlDecodeError as e:
            raise DataError(f"cannot parse config file {config_file}: {e}") from e


# ----------------------------
# preprocess
# ----------------------------

@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path(path_type=Path), help="JSON Lines review file.")
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Encoded corpus file to write.")
@click.option("--min-count", type=int, default=config.DEFAULT_MIN_WORD_COUNT, show_default=True)
@click.option("--train-frac", type=float, default=config.DEFAULT_TRAIN_FRACTION, show_default=True)
@click.option("--min-train", type=int, default=config.DEFAULT_MIN_TRAIN, show_default=True)
@click.option("--min-test", type=int, default=config.DEFAULT_MIN_TEST, show_default=True)
@click.option("--max-train", type=int, default=config.DEFAULT_MAX_TRAIN, show_default=True)
@click.option("--seed", type=int, default=config.DEFAULT_SEED, show_default=True)
def preprocess(input_path: Path, out: Path, min_count: int, train_frac: float,
               min_train: int, min_test: int, max_train: int, seed: int) -> None:
    """Normalize, encode and split a review file."""
    run = _Run("preprocess", _options(locals()))
    run.inputs.append(input_path)

    reviews, skipped = load_reviews(input_path)
    if not reviews:
        raise DataError(f"{input_path} holds no valid reviews ({skipped} malformed lines)")
    corpus = build_corpus(reviews, min_word_count=min_count)
    train_corpus, test_corpus = split_by_author(corpus, train_frac, min_train, min_test, max_train, seed)
    save_corpus(out, train_corpus, test_corpus)
    run.outputs.append(out)
    logger.info("[preprocess] V=%d, %d authors, %d train / %d test reviews written to %s",
                corpus.vocab_size, train_corpus.num_authors, len(train_corpus), len(test_corpus), out)
    run.finish(out, seed)


# ----------------------------
# train
# ----------------------------

@cli.command("train")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(path_type=Path), help="Encoded corpus (train split is used).")
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Model file to write.")
@click.option("--sweeps", type=int, default=config.DEFAULT_TRAIN_SWEEPS, show_default=True)
@click.option("--burn-in", type=int, default=config.DEFAULT_TRAIN_BURN_IN, show_default=True)
@click.option("--seed", type=int, default=config.DEFAULT_SEED, show_default=True)
@click.option("--checkpoint-every", type=int, default=config.DEFAULT_CHECKPOINT_EVERY, show_default=True,
              help="Write <model>.sweep-NNNNNN files every n sweeps; 0 disables.")
@click.option("--table-topic-likelihood", type=click.Choice(["exact", "printed"]), default="exact", show_default=True)
@click.option("--topic-threshold", type=float, default=config.DEFAULT_TOPIC_THRESHOLD, show_default=True,
              help="Leave out topics holding less than this share of all tables.")
@click.option("--debug-invariants", is_flag=True, help="Recount and check every count table after each sweep.")
@hyper_options
def train_cmd(corpus_path: Path, out: Path, sweeps: int, burn_in: int, seed: int, checkpoint_every: int,
              table_topic_likelihood: str, topic_threshold: float, debug_invariants: bool, **hyper_kw: Any) -> None:
    """Train a model by collapsed Gibbs sampling."""
    run = _Run("train", _options(locals()))
    run.inputs.append(corpus_path)

    corpus = load_corpus(corpus_path, SPLIT_TRAIN)
    hyper = _hyper(hyper_kw)
    train_config = TrainConfig(
        sweeps=sweeps, burn_in=burn_in, seed=seed, checkpoint_every=checkpoint_every,
        debug_invariants=debug_invariants, table_topic_likelihood=table_topic_likelihood,
        topic_threshold=topic_threshold,
    )

    def checkpoint(n: int, model) -> None:
        path = _checkpoint_path(out, n)
        save_model(path, model, sweep=n)
        run.outputs.append(path)
        logger.info("[train] checkpoint written to %s", path)

    model = train(corpus, hyper, train_config, checkpoint)
    save_model(out, model, sweep=sweeps)
    run.outputs.append(out)
    run.finish(out, seed)


# ----------------------------
# predict
# ----------------------------

@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(path_type=Path))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(path_type=Path), help="Encoded corpus (test split is used).")
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Predictions table to write.")
@click.option("--sweeps", type=int, default=config.DEFAULT_PREDICT_SWEEPS, show_default=True)
@click.option("--burn-in", type=int, default=config.DEFAULT_PREDICT_BURN_IN, show_default=True)
@click.option("--seed", type=int, default=config.DEFAULT_SEED, show_default=True)
@click.option("--final-state", is_flag=True, help="Use the last sweep's review mean instead of the post-burn-in average.")
@click.option("--jobs", type=int, default=1, show_default=True, help="Worker processes.")
def predict(model_path: Path, corpus_path: Path, out: Path, sweeps: int, burn_in: int, seed: int,
            final_state: bool, jobs: int) -> None:
    """Predict ratings of held-out reviews."""
    run = _Run("predict", _options(locals()))
    run.inputs += [model_path, corpus_path]

    model = load_model(model_path)
    corpus = load_corpus(corpus_path, SPLIT_TEST)
    predict_config = PredictConfig(sweeps=sweeps, burn_in=burn_in, seed=seed, average_over_sweeps=not final_state)
    predictions = predict_batch(model, corpus, predict_config, jobs=jobs)
    write_table(predictions_frame(predictions), out)
    run.outputs.append(out)
    run.finish(out, seed)


# ----------------------------
# evaluate
# ----------------------------

@cli.command()
@click.option("--predictions", "predictions_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Metric report table to write.")
@click.option("--mu", type=float, default=config.DEFAULT_MU, show_default=True, help="Rating of the constant baseline.")
@click.option("--corpus", "corpus_path", type=click.Path(path_type=Path), default=None,
              help="Encoded corpus whose train split gives the global-mean baseline.")
def evaluate(predictions_path: Path, out: Path, mu: float, corpus_path: Optional[Path]) -> None:
    """Score predictions against true ratings and the baselines."""
    run = _Run("evaluate", _options(locals()))
    run.inputs.append(predictions_path)

    true, pred = read_predictions(predictions_path)
    train_mean = None
    if corpus_path is not None:
        run.inputs.append(corpus_path)
        ratings = load_corpus(corpus_path, SPLIT_TRAIN).ratings()
        train_mean = float(ratings.mean()) if ratings.size else None
    reports = evaluate_with_baselines(true, pred, mu, train_mean)
    write_table(metrics_frame(reports), out)
    run.outputs.append(out)
    run.finish(out)


# ----------------------------
# analyze
# ----------------------------

@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path), help="Report directory.")
@click.option("--pref-floor", type=float, default=config.DEFAULT_PREF_FLOOR, show_default=True)
@click.option("--ratio", type=float, default=config.DEFAULT_RATIO_THRESHOLD, show_default=True)
@click.option("--top-n", type=int, default=config.DEFAULT_TOP_N, show_default=True)
@click.option("--bins", type=int, default=config.DEFAULT_HISTOGRAM_BINS, show_default=True, help="Polarity histogram bins.")
def analyze(model_path: Path, out: Path, pref_floor: float, ratio: float, top_n: int, bins: int) -> None:
    """Word polarities, aspect preference/sentiment and critical aspects."""
    run = _Run("analyze", _options(locals()))
    run.inputs.append(model_path)
    model = load_model(model_path)

    summaries = critical_aspects(model, pref_floor, ratio, top_n)
    positive, negative = polarity_extremes(model, top_n)
    edges, counts = polarity_histogram(model, bins)
    try:
        correlation, correlation_error = preference_sentiment_correlation(model), None
    except MetricError as e:
        correlation, correlation_error = None, str(e)

    tables = {
        "polarity.csv": polarity_frame(model, polarity_table(model)),
        "aspects.csv": aspects_frame(model, summaries),
        "top_words.csv": top_words_frame(summaries),
        "polarity_extremes.csv": extremes_frame(positive, negative),
        "polarity_histogram.csv": histogram_frame(edges, counts),
    }
    for name, df in tables.items():
        write_table(df, out / name)
        run.outputs.append(out / name)

    corr_path = out / "aspect_correlation.csv"
    write_table(correlation_frame(correlation, correlation_error), corr_path)
    run.outputs.append(corr_path)
    run.finish(out)


# ----------------------------
# synth
# ----------------------------

def _parse_plant(value: str):
    try:
        k, pref, senti = value.split(":")
        return int(k), float(pref), float(senti)
    except ValueError as e:
        raise click.BadParameter(f"expected TOPIC:PREFERENCE:SENTIMENT, got {value!r}") from e


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(path_type=Path), help="TOML generator spec.")
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Encoded corpus file to write.")
@click.option("--truth-out", required=True, type=click.Path(path_type=Path), help="Ground-truth file to write.")
@click.option("--plant", "plants", multiple=True, help="TOPIC:PREFERENCE:SENTIMENT, planted before sampling.")
@click.option("--no-split", is_flag=True, help="Write the corpus without a train/test split.")
def synth(spec_path: Path, out: Path, truth_out: Path, plants: Sequence[str], no_split: bool) -> None:
    """Sample a synthetic corpus with known parameters."""
    run = _Run("synth", _options(locals()))
    run.inputs.append(spec_path)
    if not spec_path.is_file():
        raise InputFileError(f"spec file not found: {spec_path}")
    try:
        spec = GenSpec.model_validate(toml.load(spec_path))
    except toml.TomlDecodeError as e:
        raise DataError(f"cannot parse spec file {spec_path}: {e}") from e
    for value in plants:
        spec = plant_critical_aspect(spec, *_parse_plant(value))

    synthetic = generate(spec)
    if no_split:
        save_corpus(out, synthetic.corpus)
    else:
        train_corpus, test_corpus = split_by_author(synthetic.corpus, seed=spec.seed)
        save_corpus(out, train_corpus, test_corpus)
    save_truth(truth_out, synthetic)
    run.outputs += [out, truth_out]
    run.finish(out, spec.seed)


# ----------------------------
# sweep
# ----------------------------

@cli.command("sweep")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(path_type=Path))
@click.option("--grid", required=True, help='TOML grid file, or inline "mu:sigma2,mu:sigma2".')
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Sweep table to write.")
@click.option("--sweeps", type=int, default=config.DEFAULT_TRAIN_SWEEPS, show_default=True)
@click.option("--burn-in", type=int, default=config.DEFAULT_TRAIN_BURN_IN, show_default=True)
@click.option("--predict-sweeps", type=int, default=config.DEFAULT_PREDICT_SWEEPS, show_default=True)
@click.option("--predict-burn-in", type=int, default=config.DEFAULT_PREDICT_BURN_IN, show_default=True)
@click.option("--seed", type=int, default=config.DEFAULT_SEED, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True, help="Grid points evaluated in parallel.")
@hyper_options
def sweep_cmd(corpus_path: Path, grid: str, out: Path, sweeps: int, burn_in: int, predict_sweeps: int,
              predict_burn_in: int, seed: int, jobs: int, **hyper_kw: Any) -> None:
    """Error of train+predict over a grid of (mu, sigma2)."""
    run = _Run("sweep", _options(locals()))
    run.inputs.append(corpus_path)
    if Path(grid).is_file():
        run.inputs.append(Path(grid))

    points = parse_grid(grid)
    train_corpus = load_corpus(corpus_path, SPLIT_TRAIN)
    test_corpus = load_corpus(corpus_path, SPLIT_TEST)
    rows, failures = sweep_parameters(
        train_corpus, test_corpus, points, _hyper(hyper_kw),
        TrainConfig(sweeps=sweeps, burn_in=burn_in, seed=seed, checkpoint_every=0),
        PredictConfig(sweeps=predict_sweeps, burn_in=predict_burn_in, seed=seed),
        jobs=jobs,
    )
    write_table(sweep_frame(rows), out)
    run.outputs.append(out)
    run.options["failed_points"] = [[f["mu"], f["sigma2"]] for f in failures]
    run.finish(out, seed)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return its exit code instead of exiting."""
    try:
        rv = cli.main(args=list(argv) if argv is not None else None, prog_name=config.APP_NAME, standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except Exception:
        logger.exception("unexpected error")
        return 1
    return rv if isinstance(rv, int) else 0
