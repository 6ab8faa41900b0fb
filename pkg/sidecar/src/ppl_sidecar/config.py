"""Sidecar configuration."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)

USUAL_EPOCHS = (0, 5, 10, 20, 30)

# base model built locally when no pretrained checkpoint is configured;
# works fully offline
TINY_RANDOM = "tiny-random"


@dataclass
class SidecarConfig:
    """Model and training settings.

    ``base_model_id`` is either :data:`TINY_RANDOM` (a small randomly
    initialized causal transformer over a byte vocabulary, always available)
    or any pretrained causal-LM checkpoint name resolvable by the
    transformers library.
    """

    base_model_id: str = TINY_RANDOM
    epochs: int = 0
    block_size: int = 1024
    eval_window: int = 20
    eval_stride: int = 1
    seed: int = 0
    device: str = "cpu"
    # training hyperparameters the protocol does not carry
    learning_rate: float = 5e-4
    batch_blocks: int = 8

    def __post_init__(self) -> None:
        if self.block_size < 2:
            raise ValueError(f"block_size must be >= 2, got {self.block_size}")
        if self.eval_window < 2:
            raise ValueError(f"eval_window must be >= 2, got {self.eval_window}")
        if not 1 <= self.eval_stride <= self.eval_window - 1:
            raise ValueError(
                f"eval_stride must be in [1, eval_window-1], got {self.eval_stride}"
            )
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.epochs not in USUAL_EPOCHS:
            logger.warning("epochs=%d is outside the usual set %s", self.epochs, USUAL_EPOCHS)

    @classmethod
    def from_file(cls, path: str | Path) -> "SidecarConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))
