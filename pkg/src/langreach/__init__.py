"""Language-conditioned reach tasks with hindsight instruction relabeling."""

import os

# Desk-scale matrices: BLAS thread fan-out costs more than it saves. Only a
# default; respected env vars win. Must precede the first numpy import.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

__version__ = "0.1.0"

from .language import TaskMode, build_vocabulary, enumerate_goals  # noqa: E402,F401
from .env import EnvConfig, ReachEnv  # noqa: E402,F401
