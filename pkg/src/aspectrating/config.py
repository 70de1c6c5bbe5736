from pathlib import Path

APP_NAME = "aspectrating"
FORMAT_VERSION = 1

# Model hyperparameters
DEFAULT_GAMMA = 1.5
DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 0.5
DEFAULT_ETA = 0.5
DEFAULT_LAMBDA = 0.5
DEFAULT_MU = 3.5
DEFAULT_SIGMA2 = 0.08

# Corpus preparation
DEFAULT_MIN_WORD_COUNT = 2
DEFAULT_TRAIN_FRACTION = 0.8
DEFAULT_MIN_TRAIN = 3
DEFAULT_MIN_TEST = 1
DEFAULT_MAX_TRAIN = 8000

# Sampling
DEFAULT_SEED = 0
DEFAULT_TRAIN_SWEEPS = 1000
DEFAULT_TRAIN_BURN_IN = 500
DEFAULT_CHECKPOINT_EVERY = 100
# share of all tables a topic needs to be kept in the saved model; 0 keeps every live topic
DEFAULT_TOPIC_THRESHOLD = 0.0
DEFAULT_PREDICT_SWEEPS = 200
DEFAULT_PREDICT_BURN_IN = 100

# Analysis
DEFAULT_PREF_FLOOR = 0.3
DEFAULT_RATIO_THRESHOLD = 2.0
DEFAULT_TOP_N = 20
DEFAULT_HISTOGRAM_BINS = 20

PACKAGE_ROOT = Path(__file__).resolve().parent
ASSETS_DIR = PACKAGE_ROOT / "assets"
STOPWORDS_PATH = ASSETS_DIR / "stopwords.txt"
