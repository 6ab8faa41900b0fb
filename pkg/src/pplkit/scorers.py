"""Uniform perplexity-scorer contract.

Every scorer exposes ``fit(texts)`` and ``score(utterances) ->
PerplexityScore`` so the evaluation harness never branches on the model
family. Two implementations ship here:

* :class:`NgramScorer` -- in-process n-gram models;
* :class:`ExternalScorer` -- client for an out-of-process scorer speaking
  line-delimited JSON over stdin/stdout, so heavyweight neural models can
  plug in without becoming a dependency of this package.

Wire protocol (one JSON object per line):

    -> {"id": 1, "cmd": "train", "texts": [["tok", ...], ...], "params": {...}}
    -> {"id": 2, "cmd": "score", "texts": [["tok", ...], ...]}
    -> {"id": 3, "cmd": "reset"}
    <- {"id": 2, "ok": true, "ppl": 12.5, "k": 40}
    <- {"id": 3, "ok": false, "error": "..."}
    <- {"id": 1, "progress": 0.25}          # heartbeat while training

The seed parameter, when present, is mirrored into the child's environment
as ``PPL_SCORER_SEED``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import queue
import subprocess
import threading
from collections import deque
from dataclasses import dataclass
from typing import Sequence

from ._estimator import ParamsMixin
from ._validation import check_is_fitted, check_non_empty, check_token_sequences
from .errors import (
    ProtocolViolationError,
    ScorerCrashedError,
    ScorerStartError,
    TrainingFailedError,
)
from .ngram import NgramLanguageModel, Vocabulary

logger = logging.getLogger(__name__)

NGRAM_KINDS = ("ngram-mle", "ngram-kn")
SCORER_KINDS = NGRAM_KINDS + ("external",)
DEFAULT_EPOCHS_SET = (0, 5, 10, 20, 30)

SEED_ENV_VAR = "PPL_SCORER_SEED"


@dataclass(frozen=True)
class PerplexityScore:
    value: float
    token_count: int
    scorer_id: str


@dataclass
class ScorerSpec:
    """Declarative description of a scorer, serializable into run configs."""

    kind: str
    order: int | None = None
    discount: float | None = None
    command: list[str] | None = None
    params: dict | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCORER_KINDS:
            raise ValueError(f"kind must be one of {SCORER_KINDS}, got {self.kind!r}")
        if self.kind in NGRAM_KINDS:
            if self.command is not None or self.params is not None:
                raise ValueError(f"{self.kind} specs take no command/params")
            if self.order is None:
                self.order = 2
            if self.discount is None:
                self.discount = 0.1
        else:
            if not self.command:
                raise ValueError("external specs require a command line")
            if self.order is not None or self.discount is not None:
                raise ValueError("external specs take no order/discount")
            epochs = (self.params or {}).get("epochs")
            if epochs is not None and epochs not in DEFAULT_EPOCHS_SET:
                logger.warning("epochs=%r is outside the usual set %s", epochs, DEFAULT_EPOCHS_SET)

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind in NGRAM_KINDS:
            out["order"] = self.order
            out["discount"] = self.discount
        else:
            out["command"] = list(self.command or [])
            out["params"] = dict(self.params or {})
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "ScorerSpec":
        return cls(
            kind=payload["kind"],
            order=payload.get("order"),
            discount=payload.get("discount"),
            command=payload.get("command"),
            params=payload.get("params"),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class NgramScorer(NgramLanguageModel):
    """n-gram language model wearing the scorer contract."""

    @property
    def scorer_id(self) -> str:
        kind = "ngram-mle" if self.smoothing == "mle" else "ngram-kn"
        return f"{kind}(order={self.order},discount={self.discount})"

    def score(self, utterances: Sequence[Sequence[str]]) -> PerplexityScore:
        texts = check_token_sequences(utterances)
        return PerplexityScore(
            value=self.perplexity(texts),
            token_count=self.num_positions(texts),
            scorer_id=self.scorer_id,
        )


class ExternalScorer(ParamsMixin):
    """Client for a sidecar scorer process.

    One process hosts one model. A crash surfaces as
    :class:`ScorerCrashedError` on the pending call (never a partial score);
    calling ``fit`` again relaunches the process.
    """

    def __init__(
        self,
        command: Sequence[str],
        params: dict | None = None,
        train_timeout: float | None = None,
        score_timeout: float | None = 300.0,
    ):
        self.command = command
        self.params = params
        self.train_timeout = train_timeout
        self.score_timeout = score_timeout
        self._proc: subprocess.Popen | None = None
        self._replies: queue.Queue = queue.Queue()
        self._stderr_tail: deque[str] = deque(maxlen=50)
        self._next_id = 0
        self._lock = threading.Lock()

    @property
    def scorer_id(self) -> str:
        return f"external({' '.join(str(c) for c in self.command)})"

    # --- process management ---------------------------------------------------

    def _launch(self) -> None:
        env = dict(os.environ)
        seed = (self.params or {}).get("seed")
        if seed is not None:
            env[SEED_ENV_VAR] = str(seed)
        try:
            self._proc = subprocess.Popen(
                [str(c) for c in self.command],
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
                env=env,
            )
        except OSError as exc:
            raise ScorerStartError(f"could not launch {self.command!r}: {exc}") from exc
        self._replies = queue.Queue()
        threading.Thread(
            target=self._pump, args=(self._proc.stdout, self._replies), daemon=True
        ).start()
        threading.Thread(
            target=self._pump_stderr, args=(self._proc.stderr,), daemon=True
        ).start()

    @staticmethod
    def _pump(stream, sink: queue.Queue) -> None:
        for line in stream:
            sink.put(line)
        sink.put(None)  # EOF marker

    def _pump_stderr(self, stream) -> None:
        for line in stream:
            self._stderr_tail.append(line.rstrip("\n"))

    def _ensure_running(self) -> None:
        if self._proc is None or self._proc.poll() is not None:
            self._launch()

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._proc = None

    def __enter__(self) -> "ExternalScorer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # --- request/reply ----------------------------------------------------------

    def _crash(self, detail: str, *, kill: bool = False) -> ScorerCrashedError:
        """Reap the dead process and build the error; the handle is dropped so
        the next call relaunches."""
        code = None
        if self._proc is not None:
            if kill:
                self._proc.kill()
            try:
                code = self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                code = self._proc.wait()
            self._proc = None
        tail = "\n".join(self._stderr_tail)
        return ScorerCrashedError(
            f"{detail} (exit code {code}); captured stderr:\n{tail}" if tail else
            f"{detail} (exit code {code})"
        )

    def _request(self, payload: dict, timeout: float | None) -> dict:
        with self._lock:
            self._next_id += 1
            request_id = self._next_id
            payload = {"id": request_id, **payload}
            try:
                self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise self._crash(f"write failed: {exc}") from exc
            while True:
                try:
                    line = self._replies.get(timeout=timeout)
                except queue.Empty:
                    raise self._crash(f"no reply within {timeout}s; process killed", kill=True)
                if line is None:
                    raise self._crash("process exited while a request was pending")
                line = line.strip()
                if not line:
                    continue
                try:
                    reply = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ProtocolViolationError(f"reply is not valid JSON: {line!r}") from exc
                if not isinstance(reply, dict):
                    raise ProtocolViolationError(f"reply is not an object: {line!r}")
                if "ok" not in reply and "progress" in reply:
                    continue  # training heartbeat
                if reply.get("id") != request_id:
                    raise ProtocolViolationError(
                        f"reply id {reply.get('id')!r} does not match request id {request_id}"
                    )
                return reply

    # --- scorer contract -----------------------------------------------------------

    def fit(self, X: Sequence[Sequence[str]], y: object = None) -> "ExternalScorer":
        texts = check_token_sequences(X)
        check_non_empty(texts)
        self._ensure_running()
        reply = self._request(
            {"cmd": "train", "texts": texts, "params": dict(self.params or {})},
            timeout=self.train_timeout,
        )
        if not reply.get("ok"):
            raise TrainingFailedError(str(reply.get("error", "unspecified training failure")))
        self.fitted_ = True
        return self

    def score(self, utterances: Sequence[Sequence[str]]) -> PerplexityScore:
        check_is_fitted(self, "fitted_")
        texts = check_token_sequences(utterances)
        reply = self._request({"cmd": "score", "texts": texts}, timeout=self.score_timeout)
        if not reply.get("ok"):
            raise ProtocolViolationError(
                f"scorer refused to score: {reply.get('error', 'no error text')}"
            )
        ppl = reply.get("ppl")
        k = reply.get("k", 0)
        if not isinstance(ppl, (int, float)) or not math.isfinite(ppl) or ppl <= 0:
            raise ProtocolViolationError(f"invalid ppl in reply: {ppl!r}")
        if not isinstance(k, int) or k < 1:
            raise ProtocolViolationError(f"invalid token count in reply: {k!r}")
        return PerplexityScore(value=float(ppl), token_count=k, scorer_id=self.scorer_id)

    def reset(self) -> None:
        """Ask the sidecar to drop any fine-tuned state."""
        self._ensure_running()
        reply = self._request({"cmd": "reset"}, timeout=self.score_timeout)
        if not reply.get("ok"):
            raise ProtocolViolationError(f"reset failed: {reply.get('error')!r}")
        if hasattr(self, "fitted_"):
            del self.fitted_


def make_scorer(spec: ScorerSpec, vocabulary: Vocabulary | None = None):
    """Instantiate the (unfitted) scorer a spec describes."""
    if spec.kind in NGRAM_KINDS:
        return NgramScorer(
            order=spec.order,
            discount=spec.discount,
            smoothing="mle" if spec.kind == "ngram-mle" else "kn",
            vocabulary=vocabulary,
        )
    return ExternalScorer(command=list(spec.command), params=dict(spec.params or {}))


def fit_scorer(
    spec: ScorerSpec,
    texts: Sequence[Sequence[str]],
    vocabulary: Vocabulary | None = None,
):
    """Build and fit the scorer described by ``spec`` on ``texts``."""
    return make_scorer(spec, vocabulary).fit(texts)
