"""Model construction and causal-LM fine-tuning."""

from __future__ import annotations

import logging
import os
from typing import Callable, Sequence

import torch

from .config import TINY_RANDOM, SidecarConfig
from .tokenizer import VOCAB_SIZE, ByteTokenizer, PretrainedTokenizer
from .windowed import windowed_perplexity

logger = logging.getLogger(__name__)


def _build_tiny_model(seed: int, block_size: int) -> torch.nn.Module:
    from transformers import GPT2Config, GPT2LMHeadModel

    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=VOCAB_SIZE,
        n_positions=max(block_size, 64),
        n_embd=64,
        n_layer=2,
        n_head=2,
        resid_pdrop=0.0,
        embd_pdrop=0.0,
        attn_pdrop=0.0,
        bos_token_id=ByteTokenizer.bos_id,
        eos_token_id=ByteTokenizer.bos_id,
    )
    return GPT2LMHeadModel(config)


def group_into_blocks(ids: Sequence[int], block_size: int) -> list[list[int]]:
    """Chunk a token stream into training blocks.

    Full blocks of ``block_size``; a shorter trailing block is kept when it
    still contains a next-token prediction (tiny corpora would otherwise
    contribute nothing).
    """
    ids = list(ids)
    blocks = [ids[i : i + block_size] for i in range(0, len(ids), block_size)]
    return [b for b in blocks if len(b) >= 2]


class ModelHost:
    """One in-memory model, built lazily on the first request that needs it."""

    def __init__(self, config: SidecarConfig):
        self.config = config
        self.window = config.eval_window
        self._model: torch.nn.Module | None = None
        self._base_state: dict | None = None
        self.tokenizer = None

    # --- lifecycle -----------------------------------------------------------

    def _ensure_model(self) -> torch.nn.Module:
        if self._model is None:
            if self.config.base_model_id == TINY_RANDOM:
                self.tokenizer = ByteTokenizer()
                self._model = _build_tiny_model(self.config.seed, self.config.block_size)
            else:
                from transformers import AutoModelForCausalLM

                self.tokenizer = PretrainedTokenizer(self.config.base_model_id)
                self._model = AutoModelForCausalLM.from_pretrained(self.config.base_model_id)
            self._model.to(self.config.device)
            self._model.eval()
            self._base_state = {
                k: v.detach().clone() for k, v in self._model.state_dict().items()
            }
        return self._model

    def reset(self) -> None:
        """Back to base weights and default window."""
        if self._model is not None:
            self._model.load_state_dict(self._base_state)
            self._model.eval()
        self.window = self.config.eval_window

    # --- training ---------------------------------------------------------------

    def train(
        self,
        texts: Sequence[Sequence[str]],
        params: dict,
        heartbeat: Callable[[float], None] | None = None,
    ) -> None:
        """Fine-tune from base weights with the causal objective.

        ``params`` may carry ``epochs``, ``seed``, ``block_size`` and
        ``window``; missing values fall back to the environment seed and the
        sidecar config.
        """
        epochs = int(params.get("epochs", self.config.epochs))
        if epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {epochs}")
        env_seed = os.environ.get("PPL_SCORER_SEED")
        seed = int(params.get("seed", env_seed if env_seed is not None else self.config.seed))
        block_size = int(params.get("block_size", self.config.block_size))
        self.window = int(params.get("window", self.config.eval_window))

        model = self._ensure_model()
        self.reset()
        if epochs == 0:
            if heartbeat is not None:
                heartbeat(1.0)
            return
        if not any(len(utt) for utt in texts):
            raise ValueError("training with epochs > 0 requires non-empty texts")

        ids = self.tokenizer.encode_text(texts)
        blocks = group_into_blocks(ids, block_size)
        if not blocks:
            raise ValueError("training text is too short to form one block")
        width = max(len(b) for b in blocks)
        input_ids = torch.zeros((len(blocks), width), dtype=torch.long)
        labels = torch.full((len(blocks), width), -100, dtype=torch.long)
        mask = torch.zeros((len(blocks), width), dtype=torch.long)
        for row, block in enumerate(blocks):
            t = torch.tensor(block, dtype=torch.long)
            input_ids[row, : len(block)] = t
            labels[row, : len(block)] = t
            mask[row, : len(block)] = 1
        device = self.config.device
        input_ids, labels, mask = input_ids.to(device), labels.to(device), mask.to(device)

        generator = torch.Generator().manual_seed(seed)
        torch.manual_seed(seed)
        optimizer = torch.optim.AdamW(model.parameters(), lr=self.config.learning_rate)
        batch = self.config.batch_blocks
        model.train()
        for epoch in range(epochs):
            order = torch.randperm(len(blocks), generator=generator)
            for start in range(0, len(blocks), batch):
                rows = order[start : start + batch]
                optimizer.zero_grad()
                out = model(
                    input_ids=input_ids[rows],
                    attention_mask=mask[rows],
                    labels=labels[rows],
                )
                out.loss.backward()
                optimizer.step()
            logger.info("epoch %d/%d loss %.4f", epoch + 1, epochs, float(out.loss.detach()))
            if heartbeat is not None:
                heartbeat((epoch + 1) / epochs)
        model.eval()

    # --- scoring -----------------------------------------------------------------

    def score(self, texts: Sequence[Sequence[str]]) -> tuple[float, int]:
        model = self._ensure_model()
        ids = self.tokenizer.encode_text(texts)
        if not ids:
            raise ValueError("cannot score empty text")
        return windowed_perplexity(
            model,
            ids,
            window=self.window,
            bos_id=self.tokenizer.bos_id,
            stride=self.config.eval_stride,
            device=self.config.device,
        )
