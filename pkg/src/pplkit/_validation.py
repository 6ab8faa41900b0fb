"""Input validation helpers shared by the estimators."""

from __future__ import annotations

from typing import Any, Sequence

from .errors import EmptyInputError, NotFittedError


def check_token_sequences(
    X: Any, *, allow_empty_sequences: bool = True, name: str = "X"
) -> list[list[str]]:
    """Validate a list of utterances (each a list of string tokens).

    Returns a concrete ``list[list[str]]`` copy so later mutation of the
    caller's structure cannot corrupt a fitted model.
    """
    if X is None or isinstance(X, (str, bytes)):
        raise TypeError(f"{name} must be a sequence of token sequences, got {type(X).__name__}")
    out: list[list[str]] = []
    for i, seq in enumerate(X):
        if isinstance(seq, (str, bytes)):
            raise TypeError(
                f"{name}[{i}] is a string; expected a sequence of tokens "
                "(did you forget to tokenize?)"
            )
        tokens = list(seq)
        for tok in tokens:
            if not isinstance(tok, str):
                raise TypeError(f"{name}[{i}] contains a non-string token: {tok!r}")
        if not tokens and not allow_empty_sequences:
            raise EmptyInputError(f"{name}[{i}] is an empty utterance")
        out.append(tokens)
    return out


def check_non_empty(X: Sequence, name: str = "texts") -> None:
    if len(X) == 0:
        raise EmptyInputError(f"{name} must contain at least one sequence")


def check_is_fitted(estimator: Any, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() before using this method"
        )
