"""Sliding-window perplexity with truncated left context.

Every token is predicted (the window advances by ``stride`` positions and
scores the ``stride`` newest tokens, so coverage is total either way); the
context for a position is whatever precedes it inside its window, at most
``window - 1`` tokens, with a sequence-start symbol standing in at the
beginning. With ``stride=1`` every token gets the maximal truncated
context; with a window at least as long as the text this reduces to
ordinary full-context perplexity.
"""

from __future__ import annotations

import math
from typing import Sequence

import torch


def windowed_perplexity(
    model: torch.nn.Module,
    token_ids: Sequence[int],
    window: int,
    bos_id: int,
    stride: int = 1,
    device: str = "cpu",
    batch_rows: int = 128,
) -> tuple[float, int]:
    """exp of the mean negative log-likelihood over all token positions.

    Returns ``(ppl, k)`` with ``k`` the number of predicted positions.
    """
    if window < 2:
        raise ValueError(f"window must be >= 2, got {window}")
    if not 1 <= stride <= window - 1:
        raise ValueError(f"stride must be in [1, window-1], got {stride}")
    ids = list(token_ids)
    if not ids:
        raise ValueError("cannot score an empty token sequence")
    padded = [bos_id] + ids
    # row per target token: its window-local context followed by the target
    rows = []
    pos = 1
    while pos < len(padded):
        end = min(pos + stride, len(padded))  # this window scores [pos, end)
        base = max(0, end - window)
        for i in range(pos, end):
            rows.append(padded[base : i + 1])
        pos = end

    total_logprob = 0.0
    model.eval()
    with torch.no_grad():
        for chunk_start in range(0, len(rows), batch_rows):
            chunk = rows[chunk_start : chunk_start + batch_rows]
            width = max(len(r) for r in chunk)
            input_ids = torch.zeros((len(chunk), width), dtype=torch.long)
            mask = torch.zeros((len(chunk), width), dtype=torch.long)
            for r, row in enumerate(chunk):
                input_ids[r, : len(row)] = torch.tensor(row, dtype=torch.long)
                mask[r, : len(row)] = 1
            logits = model(
                input_ids=input_ids.to(device), attention_mask=mask.to(device)
            ).logits
            logprobs = torch.log_softmax(logits.float(), dim=-1)
            for r, row in enumerate(chunk):
                # distribution after the last context token predicts the target
                total_logprob += float(logprobs[r, len(row) - 2, row[-1]])
    k = len(ids)
    return math.exp(-total_logprob / k), k
