"""CHAT transcript ingestion and normalization.

Reads ``.cha`` files, keeps only the target participant's tiers, and reduces
each utterance to plain lowercase word tokens. The annotation-stripping rules
are applied in a fixed, documented order so that a normalized corpus is
reproducible and auditable:

1. remove time-alignment spans (``\\x15...\\x15`` bullets and bare ``ms_ms``
   ranges);
2. remove retraced or repeated material: the ``<...>`` group or the single
   word before a ``[/]``, ``[//]`` or ``[///]`` marker, together with the
   marker itself;
3. unwrap the remaining ``<...>`` groups (the words are kept; their trailing
   code, e.g. an overlap mark, is handled by the next rule);
4. remove every remaining bracketed code ``[...]`` (replacements, error
   codes, comments, postcodes, overlap marks, repetition multipliers);
   codes with an unrecognized leading character are still removed, with a
   logged warning;
5. split on whitespace;
6. drop pause tokens ``(.)``, ``(..)``, ``(...)`` and timed pauses ``(2.5)``;
7. drop ``&``-prefixed tokens (fillers ``&uh``/``&-uh``, fragments ``&+fr``,
   nonverbal events ``&=laughs``);
8. cut each token at a special-form marker ``@``, strip characters other
   than letters, digits, apostrophe, hyphen and underscore, strip those
   three from the edges, and lowercase;
9. drop tokens that are now empty, lexical fillers (``uh``, ``um``, ...),
   unintelligible/untranscribed markers (``xxx``, ``yyy``, ``www``) and
   ``0``-prefixed omission codes.

Terminal punctuation and terminator codes (``+...``, ``+/.`` and friends)
consist entirely of stripped characters, so rule 8 removes them.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from statistics import fmean
from typing import Iterable, Iterator

from .errors import (
    DuplicateSessionError,
    EmptyGroupError,
    EmptyTranscriptError,
    MalformedChatError,
    MissingClassDirectoryError,
)

logger = logging.getLogger(__name__)


class Group(str, Enum):
    CONTROL = "Control"
    AD = "AD"


DEFAULT_CLASS_DIRS = {"Control": Group.CONTROL, "Dementia": Group.AD}

# file stems like "001-2" -> subject "001", session "2"
DEFAULT_ID_PATTERN = r"(?P<subject>.+)-(?P<session>[^-]+)$"

FILLER_WORDS = frozenset(
    "uh um uhm er erm eh em hm hmm mm mhm mmhm uhhuh ahem".split()
)
UNINTELLIGIBLE = frozenset({"xxx", "yyy", "www"})

# leading characters of bracket codes we expect to see; anything else is
# still dropped but logged, so corpus-specific surprises stay visible
_KNOWN_CODE_LEADS = set(":=!?*%+-^<>x/ ")

_TIMESTAMP = re.compile(r"\x15[^\x15]*\x15|(?<!\S)\d+_\d+(?!\S)")
_MS_RANGE = re.compile(r"\d+_\d+$")
_RETRACE = re.compile(r"(?:<[^<>]*>|[^\s<>\[\]]+)\s*\[/{1,3}\]")
_BRACKET_CODE = re.compile(r"\[([^\][]*)\]")
_PAUSE_TOKEN = re.compile(r"\((?:\.{1,3}|\d+(?:[.:]\d+)?)\)$")
_STRIP_CHARS = re.compile(r"[^A-Za-z0-9'_-]+")
_TIER_LINE = re.compile(r"^([*%@])([^:]*):?\s?(.*)$")


@dataclass
class Transcript:
    """One interview: the target speaker's normalized utterances."""

    subject_id: str
    session_id: str
    group: Group | None
    tokens: list[list[str]]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError("a transcript must contain at least one utterance")
        for utt in self.tokens:
            if not utt:
                raise ValueError("utterances must contain at least one token")
            for tok in utt:
                if not tok or any(ch.isspace() for ch in tok):
                    raise ValueError(f"invalid token {tok!r}")

    def num_tokens(self) -> int:
        return sum(len(u) for u in self.tokens)

    def unique_tokens(self) -> set[str]:
        return {t for u in self.tokens for t in u}


@dataclass
class SubjectRecord:
    subject_id: str
    group: Group
    transcripts: list[Transcript] = field(default_factory=list)


@dataclass
class Corpus:
    """Subjects grouped by diagnostic class, plus the per-file parse log."""

    subjects: list[SubjectRecord]
    failures: list[tuple[str, str]] = field(default_factory=list)

    def iter_transcripts(self) -> Iterator[Transcript]:
        for record in self.subjects:
            yield from record.transcripts

    def group_subjects(self, group: Group) -> list[SubjectRecord]:
        return [s for s in self.subjects if s.group == group]

    @property
    def num_transcripts(self) -> int:
        return sum(len(s.transcripts) for s in self.subjects)


@dataclass
class GroupStats:
    avg_tokens_per_interview: float
    avg_unique_tokens_per_interview: float
    participants: int
    transcripts: int
    ttr: float


# --- utterance normalization ---------------------------------------------------


def normalize_utterance(line: str, *, fillers: frozenset[str] = FILLER_WORDS) -> list[str]:
    """Apply the normalization table to one tier's content.

    May return an empty list; the caller decides what an empty utterance
    means.
    """
    text = _TIMESTAMP.sub(" ", line)
    # rule 2: drop retraced material together with its marker
    prev = None
    while prev != text:
        prev = text
        text = _RETRACE.sub(" ", text, count=1)
    text = text.replace("<", " ").replace(">", " ")
    for match in _BRACKET_CODE.finditer(text):
        code = match.group(1)
        if code and code[0] not in _KNOWN_CODE_LEADS:
            logger.warning("dropping unrecognized annotation code [%s]", code)
    text = _BRACKET_CODE.sub(" ", text)

    tokens: list[str] = []
    for raw in text.split():
        if _PAUSE_TOKEN.match(raw):
            continue
        if raw.startswith("&"):
            continue
        word = raw.split("@", 1)[0]
        word = _STRIP_CHARS.sub("", word)
        word = word.strip("'-_").lower()
        if not word or word.startswith("0") or _MS_RANGE.match(word):
            continue
        if word in fillers or word in UNINTELLIGIBLE:
            continue
        tokens.append(word)
    return tokens


# --- file parsing ----------------------------------------------------------------


def _iter_tiers(text: str) -> Iterator[tuple[str, str, str]]:
    """Yield (kind, label, content) for each tier, joining continuation lines."""
    current: tuple[str, str, list[str]] | None = None
    for line in text.splitlines():
        if line[:1] in ("\t", " ") and current is not None:
            current[2].append(line.strip())
            continue
        if current is not None:
            yield current[0], current[1], " ".join(current[2])
            current = None
        m = _TIER_LINE.match(line)
        if m:
            kind, label, content = m.groups()
            current = (kind, label.strip(), [content.strip()])
    if current is not None:
        yield current[0], current[1], " ".join(current[2])


def parse_chat_file(
    text: str,
    *,
    speaker: str = "PAR",
    subject_id: str = "",
    session_id: str = "",
    group: Group | None = None,
    fillers: frozenset[str] = FILLER_WORDS,
) -> Transcript:
    """Extract the target speaker's normalized utterances from a CHAT document.

    Header lines (``@``) and dependent tiers (``%``) are discarded, as are
    the tiers of every other speaker.
    """
    saw_any_tier = False
    saw_target_tier = False
    saw_header = False
    utterances: list[list[str]] = []
    for kind, label, content in _iter_tiers(text):
        if kind == "@":
            saw_header = True
            continue
        if kind == "%":
            continue
        saw_any_tier = True
        if label != speaker:
            continue
        saw_target_tier = True
        tokens = normalize_utterance(content, fillers=fillers)
        if tokens:
            utterances.append(tokens)

    if not saw_header and not saw_any_tier:
        raise MalformedChatError("document contains no CHAT header or speaker tiers")
    if saw_any_tier and not saw_target_tier:
        raise MalformedChatError(f"no tier for speaker {speaker!r} found")
    if not utterances:
        raise EmptyTranscriptError(
            f"no non-empty utterances for speaker {speaker!r} after normalization"
        )
    return Transcript(
        subject_id=subject_id, session_id=session_id, group=group, tokens=utterances
    )


# --- corpus assembly ----------------------------------------------------------------


def load_corpus(
    root: str | Path,
    *,
    class_dirs: dict[str, Group] | None = None,
    speaker: str = "PAR",
    id_pattern: str = DEFAULT_ID_PATTERN,
    encoding: str = "utf-8",
    fillers: frozenset[str] = FILLER_WORDS,
) -> Corpus:
    """Walk ``root``'s class subdirectories and parse every ``.cha`` file.

    Files that cannot be parsed are recorded in ``Corpus.failures`` with the
    reason rather than silently dropped.
    """
    root = Path(root)
    class_dirs = dict(DEFAULT_CLASS_DIRS if class_dirs is None else class_dirs)
    id_rx = re.compile(id_pattern)

    records: dict[str, SubjectRecord] = {}
    seen_sessions: set[tuple[str, str]] = set()
    failures: list[tuple[str, str]] = []

    for dirname, group in class_dirs.items():
        class_path = root / dirname
        if not class_path.is_dir():
            raise MissingClassDirectoryError(f"class directory not found: {class_path}")
        for path in sorted(class_path.glob("*.cha")):
            m = id_rx.match(path.stem)
            if m and "subject" in m.groupdict():
                subject_id = m.group("subject")
                session_id = m.groupdict().get("session") or "0"
            else:
                subject_id, session_id = path.stem, "0"
            if (subject_id, session_id) in seen_sessions:
                raise DuplicateSessionError(
                    f"duplicate subject/session {subject_id}/{session_id} at {path}"
                )
            record = records.get(subject_id)
            if record is not None and record.group != group:
                raise DuplicateSessionError(
                    f"subject {subject_id!r} appears in more than one class directory"
                )
            try:
                transcript = parse_chat_file(
                    path.read_text(encoding=encoding),
                    speaker=speaker,
                    subject_id=subject_id,
                    session_id=session_id,
                    group=group,
                    fillers=fillers,
                )
            except (MalformedChatError, EmptyTranscriptError, UnicodeDecodeError) as exc:
                failures.append((str(path), f"{type(exc).__name__}: {exc}"))
                continue
            seen_sessions.add((subject_id, session_id))
            if record is None:
                record = records[subject_id] = SubjectRecord(subject_id=subject_id, group=group)
            record.transcripts.append(transcript)

    return Corpus(subjects=list(records.values()), failures=failures)


def filter_multi_session(corpus: Corpus, min_sessions: int = 2) -> Corpus:
    """Keep only subjects with at least ``min_sessions`` transcripts."""
    kept = [s for s in corpus.subjects if len(s.transcripts) >= min_sessions]
    return Corpus(subjects=kept, failures=list(corpus.failures))


def corpus_stats(corpus: Corpus) -> dict[Group, GroupStats]:
    """Per-group token statistics (averages per interview, then TTR per group)."""
    if corpus.num_transcripts == 0:
        raise EmptyGroupError("corpus contains no transcripts")
    out: dict[Group, GroupStats] = {}
    for group in Group:
        subjects = corpus.group_subjects(group)
        transcripts = [t for s in subjects for t in s.transcripts]
        if not transcripts:
            continue
        token_totals = [t.num_tokens() for t in transcripts]
        unique_totals = [len(t.unique_tokens()) for t in transcripts]
        all_tokens = [tok for t in transcripts for u in t.tokens for tok in u]
        out[group] = GroupStats(
            avg_tokens_per_interview=fmean(token_totals),
            avg_unique_tokens_per_interview=fmean(unique_totals),
            participants=len(subjects),
            transcripts=len(transcripts),
            ttr=len(set(all_tokens)) / len(all_tokens),
        )
    return out


# --- serialization --------------------------------------------------------------------


def corpus_to_records(corpus: Corpus) -> list[dict]:
    return [
        {
            "subject_id": s.subject_id,
            "group": s.group.value,
            "sessions": [t.session_id for t in s.transcripts],
            "transcripts": [t.tokens for t in s.transcripts],
        }
        for s in corpus.subjects
    ]


def corpus_from_records(records: Iterable[dict]) -> Corpus:
    subjects = []
    for rec in records:
        group = Group(rec["group"])
        sessions = rec.get("sessions") or [str(i) for i in range(len(rec["transcripts"]))]
        transcripts = [
            Transcript(
                subject_id=rec["subject_id"],
                session_id=str(session),
                group=group,
                tokens=[list(u) for u in tokens],
            )
            for session, tokens in zip(sessions, rec["transcripts"])
        ]
        subjects.append(
            SubjectRecord(subject_id=rec["subject_id"], group=group, transcripts=transcripts)
        )
    return Corpus(subjects=subjects)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(corpus_to_records(corpus), fh, sort_keys=True, separators=(",", ":"))


def load_corpus_json(path: str | Path) -> Corpus:
    with open(path, "r", encoding="utf-8") as fh:
        return corpus_from_records(json.load(fh))


def write_stats_csv(stats: dict[Group, GroupStats], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["class", "avg_tokens", "avg_unique_tokens", "participants", "transcripts", "ttr"]
        )
        for group, gs in stats.items():
            writer.writerow(
                [
                    group.value,
                    f"{gs.avg_tokens_per_interview:.2f}",
                    f"{gs.avg_unique_tokens_per_interview:.2f}",
                    gs.participants,
                    gs.transcripts,
                    f"{gs.ttr:.4f}",
                ]
            )
