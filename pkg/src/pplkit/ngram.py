"""Closed-vocabulary n-gram language models (orders 2-5).

Two estimators over the same count tables:

* ``smoothing="mle"`` -- plain relative frequency: ``C(context, w) / C(context)``
  where the denominator is the raw occurrence count of the context tokens.
  Unseen events get probability 0.
* ``smoothing="kn"`` -- interpolated Kneser-Ney with a single absolute
  discount ``d`` applied at every order. Each conditional backs off
  recursively to the next shorter context; the unigram level is a
  continuation-count distribution interpolated with the uniform
  distribution over the vocabulary, so every conditional sums to exactly 1
  over the closed vocabulary.

Counting convention: every utterance is padded with ``order - 1`` start
symbols and one end symbol, and k-grams for all k up to the model order are
counted over the padded sequence. Scoring predicts each real token plus the
end symbol; histories never cross utterance boundaries.
"""

from __future__ import annotations

import json
import math
from typing import Iterable, Iterator, Sequence

from ._estimator import ParamsMixin
from ._validation import check_is_fitted, check_non_empty, check_token_sequences
from .errors import (
    InvalidOrderError,
    OutOfVocabularyError,
    UnknownWordError,
    ZeroLengthError,
)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
RESERVED = (BOS, EOS, UNK)

MIN_ORDER = 2
MAX_ORDER = 5

MODEL_FORMAT = "pplkit-ngram"
MODEL_FORMAT_VERSION = 1


class Vocabulary:
    """Ordered closed vocabulary including the reserved boundary/unknown symbols."""

    __slots__ = ("_items", "_set")

    def __init__(self, items: Iterable[str]):
        items = tuple(items)
        seen = set()
        for tok in items:
            if tok in seen:
                raise ValueError(f"duplicate vocabulary item: {tok!r}")
            seen.add(tok)
        for symbol in RESERVED:
            if symbol not in seen:
                raise ValueError(f"reserved symbol {symbol!r} missing from vocabulary")
        self._items = items
        self._set = seen

    @property
    def items(self) -> tuple[str, ...]:
        return self._items

    def __contains__(self, token: object) -> bool:
        return token in self._set

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._items == other._items

    def __hash__(self) -> int:
        return hash(self._items)

    def __repr__(self) -> str:
        return f"Vocabulary({len(self)} items)"


def build_vocabulary(texts: Sequence[Sequence[str]]) -> Vocabulary:
    """Collect the distinct tokens of ``texts`` plus the reserved symbols.

    The ordering is deterministic (reserved symbols first, then sorted
    tokens), so two builds over the same token multiset are identical.
    """
    check_non_empty(texts)
    tokens = check_token_sequences(texts, name="texts")
    distinct = {tok for seq in tokens for tok in seq}
    ordered = list(RESERVED) + sorted(distinct - set(RESERVED))
    return Vocabulary(ordered)


class NgramCounts:
    """k-gram occurrence tables for k = 1..order, with the derived totals
    Kneser-Ney needs (per-context totals, distinct-continuation counts, and
    unigram continuation counts)."""

    def __init__(self, order: int):
        self.order = order
        # grams[k] maps a k-tuple of tokens to its occurrence count
        self.grams: dict[int, dict[tuple[str, ...], int]] = {k: {} for k in range(1, order + 1)}
        self.context_totals: dict[int, dict[tuple[str, ...], int]] = {}
        self.context_continuations: dict[int, dict[tuple[str, ...], int]] = {}
        self.continuations: dict[str, int] = {}
        self.bigram_type_count = 0
        self.continued_word_count = 0

    @classmethod
    def from_texts(cls, order: int, texts: Sequence[Sequence[str]]) -> "NgramCounts":
        counts = cls(order)
        for utterance in texts:
            padded = [BOS] * (order - 1) + list(utterance) + [EOS]
            for k in range(1, order + 1):
                table = counts.grams[k]
                for i in range(len(padded) - k + 1):
                    gram = tuple(padded[i : i + k])
                    table[gram] = table.get(gram, 0) + 1
        counts._finalize()
        return counts

    def _finalize(self) -> None:
        """Derive the aggregate tables from the raw gram counts."""
        for k in range(2, self.order + 1):
            totals: dict[tuple[str, ...], int] = {}
            branches: dict[tuple[str, ...], int] = {}
            for gram, c in self.grams[k].items():
                ctx = gram[:-1]
                totals[ctx] = totals.get(ctx, 0) + c
                branches[ctx] = branches.get(ctx, 0) + 1
            self.context_totals[k] = totals
            self.context_continuations[k] = branches
        predecessors: dict[str, set[str]] = {}
        for (left, right) in self.grams.get(2, {}):
            predecessors.setdefault(right, set()).add(left)
        self.continuations = {w: len(s) for w, s in predecessors.items()}
        self.bigram_type_count = len(self.grams.get(2, {}))
        self.continued_word_count = len(self.continuations)

    def count(self, gram: tuple[str, ...]) -> int:
        return self.grams.get(len(gram), {}).get(gram, 0)


class NgramLanguageModel(ParamsMixin):
    """n-gram language model estimator.

    Parameters
    ----------
    order:
        Markov order, between 2 and 5.
    discount:
        Kneser-Ney absolute discount in (0, 1) applied at every level.
    smoothing:
        ``"kn"`` (interpolated Kneser-Ney) or ``"mle"``.
    vocabulary:
        Optional closed :class:`Vocabulary` shared across models of one
        experiment. When omitted, ``fit`` builds one from the training texts.

    After ``fit`` the learned state lives in ``vocabulary_`` and ``counts_``;
    the fitted model is immutable and safe for concurrent scoring.
    """

    def __init__(
        self,
        order: int = 2,
        discount: float = 0.1,
        smoothing: str = "kn",
        vocabulary: Vocabulary | None = None,
    ):
        self.order = order
        self.discount = discount
        self.smoothing = smoothing
        self.vocabulary = vocabulary

    # --- fitting -------------------------------------------------------------

    def fit(self, X: Sequence[Sequence[str]], y: object = None) -> "NgramLanguageModel":
        """Count padded k-grams of the utterances in ``X``."""
        self._check_hyperparams()
        check_non_empty(X)
        texts = check_token_sequences(X)
        vocab = self.vocabulary if self.vocabulary is not None else build_vocabulary(texts)
        for seq in texts:
            for tok in seq:
                if tok not in vocab:
                    raise OutOfVocabularyError(
                        f"training token {tok!r} is not in the closed vocabulary"
                    )
        self.vocabulary_ = vocab
        self.counts_ = NgramCounts.from_texts(self.order, texts)
        return self

    def _check_hyperparams(self) -> None:
        if not isinstance(self.order, int) or not MIN_ORDER <= self.order <= MAX_ORDER:
            raise InvalidOrderError(
                f"order must be an integer in [{MIN_ORDER}, {MAX_ORDER}], got {self.order!r}"
            )
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must be in (0, 1), got {self.discount!r}")
        if self.smoothing not in ("kn", "mle"):
            raise ValueError(f"smoothing must be 'kn' or 'mle', got {self.smoothing!r}")

    # --- probabilities -------------------------------------------------------

    def prob(self, word: str, context: Sequence[str]) -> float:
        """Conditional probability of ``word`` after the ``order - 1`` tokens
        of ``context``."""
        check_is_fitted(self, "counts_")
        context = tuple(context)
        if len(context) != self.order - 1:
            raise ValueError(
                f"context must have {self.order - 1} tokens for an order-{self.order} model"
            )
        vocab = self.vocabulary_
        for tok in (word, *context):
            if tok not in vocab:
                raise UnknownWordError(f"token {tok!r} is not in the closed vocabulary")
        if self.smoothing == "mle":
            return self._mle_prob(word, context)
        return self._kn_prob(word, context)

    def _mle_prob(self, word: str, context: tuple[str, ...]) -> float:
        denom = self.counts_.count(context)
        if denom == 0:
            return 0.0
        return self.counts_.count(context + (word,)) / denom

    def _kn_prob(self, word: str, context: tuple[str, ...]) -> float:
        counts = self.counts_
        d = self.discount
        if context:
            k = len(context) + 1
            total = counts.context_totals.get(k, {}).get(context, 0)
            lower = self._kn_prob(word, context[1:])
            if total == 0:
                # context never observed at this order: all mass goes down
                return lower
            c = counts.count(context + (word,))
            lam = d * counts.context_continuations[k][context] / total
            return max(c - d, 0.0) / total + lam * lower
        # unigram level: continuation counts interpolated with uniform
        uniform = 1.0 / len(self.vocabulary_)
        if counts.bigram_type_count == 0:
            return uniform
        cont = counts.continuations.get(word, 0)
        lam = d * counts.continued_word_count / counts.bigram_type_count
        return max(cont - d, 0.0) / counts.bigram_type_count + lam * uniform

    # --- sequence scoring ----------------------------------------------------

    def _position_logprobs(self, texts: list[list[str]]) -> list[float]:
        vocab = self.vocabulary_
        for seq in texts:
            for tok in seq:
                if tok not in vocab:
                    raise UnknownWordError(f"token {tok!r} is not in the closed vocabulary")
        n_ctx = self.order - 1
        logps: list[float] = []
        prob = self._mle_prob if self.smoothing == "mle" else self._kn_prob
        for seq in texts:
            history = (BOS,) * n_ctx
            for tok in seq + [EOS]:
                p = prob(tok, history)
                logps.append(math.log(p) if p > 0.0 else -math.inf)
                history = history[1:] + (tok,)
        return logps

    def sequence_logprob(self, X: Sequence[Sequence[str]]) -> float:
        """Natural-log probability of the utterances in ``X``.

        Each utterance restarts from the padded boundary history; the sum
        covers every real token plus one end symbol per utterance.
        """
        check_is_fitted(self, "counts_")
        texts = check_token_sequences(X)
        return math.fsum(self._position_logprobs(texts))

    def num_positions(self, X: Sequence[Sequence[str]]) -> int:
        """Number of predicted positions (tokens plus one end per utterance)."""
        texts = check_token_sequences(X)
        return sum(len(seq) + 1 for seq in texts)

    def perplexity(self, X: Sequence[Sequence[str]]) -> float:
        """exp of the mean negative log-probability per predicted position."""
        check_is_fitted(self, "counts_")
        texts = check_token_sequences(X)
        k = sum(len(seq) + 1 for seq in texts)
        if k == 0:
            raise ZeroLengthError("perplexity requires at least one predicted position")
        logprob = math.fsum(self._position_logprobs(texts))
        if logprob == -math.inf:
            return math.inf
        return math.exp(-logprob / k)

    # --- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        """Lossless JSON-friendly container; round-trips score bit-identically."""
        check_is_fitted(self, "counts_")
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "order": self.order,
            "discount": self.discount,
            "smoothing": self.smoothing,
            "vocabulary": list(self.vocabulary_.items),
            "counts": {
                str(k): [[list(gram), c] for gram, c in sorted(table.items())]
                for k, table in self.counts_.grams.items()
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "NgramLanguageModel":
        if payload.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a {MODEL_FORMAT} container: format={payload.get('format')!r}")
        if payload.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model container version {payload.get('version')!r}")
        vocab = Vocabulary(payload["vocabulary"])
        model = cls(
            order=payload["order"],
            discount=payload["discount"],
            smoothing=payload["smoothing"],
            vocabulary=vocab,
        )
        model._check_hyperparams()
        counts = NgramCounts(model.order)
        for k_str, entries in payload["counts"].items():
            k = int(k_str)
            counts.grams[k] = {tuple(gram): int(c) for gram, c in entries}
        counts._finalize()
        model.vocabulary_ = vocab
        model.counts_ = counts
        return model

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "NgramLanguageModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def uniform(cls, vocabulary: Vocabulary, order: int = 2, discount: float = 0.1):
        """Model with no observations: every conditional is 1/|V|.

        Useful as a perplexity baseline (its perplexity is the vocabulary
        size on any text) and as a serialization stub.
        """
        model = cls(order=order, discount=discount, smoothing="kn", vocabulary=vocabulary)
        model._check_hyperparams()
        model.vocabulary_ = vocabulary
        model.counts_ = NgramCounts(order)
        model.counts_._finalize()
        return model


def train(
    order: int,
    texts: Sequence[Sequence[str]],
    vocabulary: Vocabulary,
    discount: float = 0.1,
    smoothing: str = "kn",
) -> NgramLanguageModel:
    """Functional wrapper: fit an :class:`NgramLanguageModel` on ``texts``."""
    return NgramLanguageModel(
        order=order, discount=discount, smoothing=smoothing, vocabulary=vocabulary
    ).fit(texts)
