"""Hierarchical LSTM geometric scene parsing at desk scale.

Setting ``HLSTM_THREADS`` before the first import caps the BLAS thread pools
numpy uses; every other source of randomness flows from the config seed.
"""
import os

_threads = os.environ.get("HLSTM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from .config import ConfigError, ModelConfig, desk_preset, paper_preset  # noqa: E402
from .model import HLSTM  # noqa: E402

__all__ = ["ConfigError", "ModelConfig", "desk_preset", "paper_preset", "HLSTM"]
