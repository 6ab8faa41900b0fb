"""Out-of-process perplexity scorer.

Hosts one causal language model per process and answers ``train`` /
``score`` / ``reset`` requests as line-delimited JSON on stdin/stdout.
"""

__version__ = "0.1.0"

from .config import SidecarConfig
from .windowed import windowed_perplexity

__all__ = ["SidecarConfig", "windowed_perplexity"]
