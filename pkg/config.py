"""
Configuration for the dialogue corpus toolkit
Defaults for extraction, triple generation and ranker training
"""
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
LOG_FILE = os.getenv("LOG_FILE", "")

# Parallel file parsing during extraction
MAX_WORKERS = int(os.getenv("MAX_WORKERS", "1"))

DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", "1234"))

# Disentanglement
WINDOW_MINS = int(os.getenv("WINDOW_MINS", "3"))
MIN_TURNS = int(os.getenv("MIN_TURNS", "3"))
DOMINANCE_LEN = int(os.getenv("DOMINANCE_LEN", "5"))
DOMINANCE_FRAC = float(os.getenv("DOMINANCE_FRAC", "0.8"))
PREV_DAYS = int(os.getenv("PREV_DAYS", "1"))
COMMON_WORDS_FILE = os.getenv(
    "COMMON_WORDS_FILE",
    str(Path(__file__).resolve().parent / "pipeline" / "common_words.txt"),
)

# Triples
CONTEXT_MAX_C = int(os.getenv("CONTEXT_MAX_C", "20"))
TEST_FRACTION = float(os.getenv("TEST_FRACTION", "0.02"))
NEGATIVES = int(os.getenv("NEGATIVES", "1"))

# Dual encoder training
RNN_HIDDEN = int(os.getenv("RNN_HIDDEN", "50"))
LSTM_HIDDEN = int(os.getenv("LSTM_HIDDEN", "200"))
EMBEDDING_DIM = int(os.getenv("EMBEDDING_DIM", "50"))
LEARNING_RATE = float(os.getenv("LEARNING_RATE", "0.001"))
BATCH_SIZE = int(os.getenv("BATCH_SIZE", "32"))
EPOCHS = int(os.getenv("EPOCHS", "10"))
CLIP_NORM = float(os.getenv("CLIP_NORM", "10.0"))
L2_LAMBDA = float(os.getenv("L2_LAMBDA", "0.0"))
MAX_CONTEXT_TOKENS = int(os.getenv("MAX_CONTEXT_TOKENS", "160"))
MAX_RESPONSE_TOKENS = int(os.getenv("MAX_RESPONSE_TOKENS", "80"))
MIN_COUNT = int(os.getenv("MIN_COUNT", "1"))
