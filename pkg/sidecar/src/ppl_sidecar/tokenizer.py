"""Byte-level tokenizer for the self-contained tiny model.

Utterances arrive over the wire as word-token lists; they are joined with
single spaces and encoded as UTF-8 bytes, so the vocabulary is fixed (256
byte values plus one sequence-start symbol) and nothing is ever out of
vocabulary.
"""

from __future__ import annotations

from typing import Sequence

BOS_ID = 256
VOCAB_SIZE = 257


class ByteTokenizer:
    bos_id = BOS_ID
    vocab_size = VOCAB_SIZE

    def encode_text(self, texts: Sequence[Sequence[str]]) -> list[int]:
        """Flatten utterances into one byte-id stream."""
        joined = " ".join(" ".join(utt) for utt in texts if utt)
        return list(joined.encode("utf-8"))

    def decode(self, ids: Sequence[int]) -> str:
        return bytes(i for i in ids if 0 <= i < 256).decode("utf-8", errors="replace")


class PretrainedTokenizer:
    """Wrapper giving a transformers tokenizer the same surface."""

    def __init__(self, name: str):
        from transformers import AutoTokenizer

        self._tok = AutoTokenizer.from_pretrained(name)
        self.bos_id = self._tok.bos_token_id
        if self.bos_id is None:
            raise ValueError(f"tokenizer {name!r} has no sequence-start token")
        self.vocab_size = len(self._tok)

    def encode_text(self, texts: Sequence[Sequence[str]]) -> list[int]:
        joined = " ".join(" ".join(utt) for utt in texts if utt)
        return self._tok.encode(joined)

    def decode(self, ids: Sequence[int]) -> str:
        return self._tok.decode(list(ids))
