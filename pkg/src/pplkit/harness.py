"""Leave-one-subject-out evaluation and threshold classification.

For every subject, each of their transcripts is scored twice: once under a
model of control-group language and once under a model of the dementia
group's language. The model of the subject's *own* group is always refit
with that subject's transcripts removed, so no subject influences the model
that scores them; the opposite group's model uses the whole group. The
per-subject means of the two scores, and their difference, feed four
decision rules:

``pbar_c``
    dementia iff the subject's mean control-model perplexity exceeds the
    mean over the other eligible control subjects (ties break to control:
    the comparison is strict).
``pbar_ad``
    control iff the subject's mean dementia-model perplexity exceeds the
    mean over the other eligible dementia subjects (ties break to dementia).
``dbar``
    nearest group mean of the difference score.
``dstar``
    nearest group mean after shifting each mean outward by ``k_sigma``
    standard deviations of its group's difference scores.

Thresholds are recomputed per test subject, always excluding that subject
from their own group's aggregates.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean, pstdev, stdev
from typing import Iterable, Sequence

from .chat import Corpus, Group, SubjectRecord, corpus_to_records
from .errors import (
    DegenerateGroupError,
    InsufficientGroupError,
    PplkitError,
)
from .metrics import RULE_ORDER, EvaluationReport, RuleResult
from .ngram import build_vocabulary
from .scorers import ScorerSpec, make_scorer

logger = logging.getLogger(__name__)

RULES = RULE_ORDER


@dataclass(frozen=True)
class SubjectProfile:
    """A subject's perplexity profile over their transcripts."""

    subject_id: str
    group: Group
    control_ppls: tuple[float, ...]
    ad_ppls: tuple[float, ...]
    mean_control_ppl: float
    mean_ad_ppl: float
    diff: float  # mean_ad_ppl - mean_control_ppl

    @classmethod
    def build(
        cls,
        subject_id: str,
        group: Group,
        control_ppls: Sequence[float],
        ad_ppls: Sequence[float],
    ) -> "SubjectProfile":
        mean_c = fmean(control_ppls)
        mean_ad = fmean(ad_ppls)
        return cls(
            subject_id=subject_id,
            group=group,
            control_ppls=tuple(control_ppls),
            ad_ppls=tuple(ad_ppls),
            mean_control_ppl=mean_c,
            mean_ad_ppl=mean_ad,
            diff=mean_ad - mean_c,
        )


@dataclass(frozen=True)
class ThresholdSet:
    """Aggregates used by the decision rules, excluding one held-out subject
    from their own group."""

    control_ppl_mean: float
    ad_ppl_mean: float
    diff_mean_control: float
    diff_mean_ad: float
    diff_std_control: float
    diff_std_ad: float
    k_sigma: int
    shifted_diff_control: float
    shifted_diff_ad: float


@dataclass(frozen=True)
class Prediction:
    subject_id: str
    rule: str
    predicted: Group
    margin: float


# --- leave-one-subject-out scoring ------------------------------------------------


def _texts_of(subjects: Iterable[SubjectRecord]) -> list[list[str]]:
    return [utt for s in subjects for t in s.transcripts for utt in t.tokens]


class _FoldCache:
    """On-disk per-fold score cache so interrupted long runs can resume.

    Keyed by a digest of the scorer spec plus the full corpus content, so a
    stale cache can never leak into a different experiment.
    """

    def __init__(self, cache_dir: str | Path, spec: ScorerSpec, corpus: Corpus):
        blob = json.dumps(
            {"spec": spec.to_dict(), "corpus": corpus_to_records(corpus)},
            sort_keys=True,
            separators=(",", ":"),
        )
        run_key = hashlib.sha256(blob.encode()).hexdigest()[:16]
        self.root = Path(cache_dir) / run_key
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, group: Group, excluded: str | None) -> Path:
        safe = re.sub(r"[^A-Za-z0-9_.-]", "_", excluded) if excluded else "ALL"
        return self.root / f"{group.value}__{safe}.json"

    def get(self, group: Group, excluded: str | None) -> dict[str, float] | None:
        path = self._path(group, excluded)
        if not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    def put(self, group: Group, excluded: str | None, scores: dict[str, float]) -> None:
        path = self._path(group, excluded)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(scores, fh, sort_keys=True)


def _transcript_key(subject_id: str, session_id: str) -> str:
    return f"{subject_id}/{session_id}"


def run_loso(
    corpus: Corpus,
    spec: ScorerSpec,
    *,
    workers: int = 1,
    cache_dir: str | Path | None = None,
) -> list[SubjectProfile]:
    """Score every subject's transcripts under the two group models.

    The vocabulary is closed over every transcript of the experiment and
    shared by all models. One fold is run per subject (their own-group model
    without them) plus one whole-group model per group for scoring the
    opposite group; folds are independent and can run in parallel.
    """
    controls = corpus.group_subjects(Group.CONTROL)
    ads = corpus.group_subjects(Group.AD)
    if len(controls) < 2 or len(ads) < 2:
        raise InsufficientGroupError(
            f"need at least 2 subjects per group, got {len(controls)} control / {len(ads)} AD"
        )
    thin = [s.subject_id for s in corpus.subjects if len(s.transcripts) < 2]
    if thin:
        raise InsufficientGroupError(
            f"subjects with fewer than 2 transcripts (filter the corpus first): {thin[:5]}"
        )

    vocabulary = build_vocabulary(_texts_of(corpus.subjects))
    cache = _FoldCache(cache_dir, spec, corpus) if cache_dir is not None else None
    by_group = {Group.CONTROL: controls, Group.AD: ads}

    # fold plan: (train group, excluded subject id, subjects to score)
    folds: list[tuple[Group, str | None, list[SubjectRecord]]] = [
        (Group.CONTROL, None, ads),
        (Group.AD, None, controls),
    ]
    folds += [(s.group, s.subject_id, [s]) for s in corpus.subjects]

    def run_fold(fold: tuple[Group, str | None, list[SubjectRecord]]) -> dict[str, float]:
        group, excluded, targets = fold
        label = f"group={group.value} excluded={excluded or 'none'}"
        if cache is not None:
            cached = cache.get(group, excluded)
            needed = {_transcript_key(s.subject_id, t.session_id) for s in targets for t in s.transcripts}
            if cached is not None and needed <= set(cached):
                logger.info("fold %s: using %d cached scores", label, len(needed))
                return cached
        train_subjects = [s for s in by_group[group] if s.subject_id != excluded]
        scorer = make_scorer(spec, vocabulary)
        try:
            scorer.fit(_texts_of(train_subjects))
            scores: dict[str, float] = {}
            for s in targets:
                for t in s.transcripts:
                    scores[_transcript_key(s.subject_id, t.session_id)] = scorer.score(
                        t.tokens
                    ).value
        except PplkitError as exc:
            raise type(exc)(f"[fold {label}] {exc}") from exc
        finally:
            close = getattr(scorer, "close", None)
            if close is not None:
                close()
        logger.info("fold %s: scored %d transcripts", label, len(scores))
        if cache is not None:
            cache.put(group, excluded, scores)
        return scores

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_fold, folds))
    else:
        results = [run_fold(fold) for fold in folds]
    fold_scores = {(g, ex): scores for (g, ex, _), scores in zip(folds, results)}

    profiles = []
    for s in corpus.subjects:
        own = fold_scores[(s.group, s.subject_id)]
        other_group = Group.AD if s.group == Group.CONTROL else Group.CONTROL
        other = fold_scores[(other_group, None)]
        keys = [_transcript_key(s.subject_id, t.session_id) for t in s.transcripts]
        own_ppls = [own[k] for k in keys]
        other_ppls = [other[k] for k in keys]
        if s.group == Group.CONTROL:
            control_ppls, ad_ppls = own_ppls, other_ppls
        else:
            control_ppls, ad_ppls = other_ppls, own_ppls
        profiles.append(SubjectProfile.build(s.subject_id, s.group, control_ppls, ad_ppls))
    return profiles


# --- thresholds --------------------------------------------------------------------


def build_thresholds(
    profiles: Sequence[SubjectProfile],
    held_out: str,
    k_sigma: int = 2,
    sigma_mode: str = "population",
) -> ThresholdSet:
    """Group aggregates with ``held_out`` excluded from its own group only.

    ``sigma_mode`` selects the population (divide by n) or sample (divide by
    n-1) standard deviation of the difference scores.
    """
    if held_out not in {p.subject_id for p in profiles}:
        raise ValueError(f"held-out subject {held_out!r} not present in the profile table")
    if k_sigma < 0:
        raise ValueError(f"k_sigma must be non-negative, got {k_sigma}")
    if sigma_mode not in ("population", "sample"):
        raise ValueError(f"sigma_mode must be 'population' or 'sample', got {sigma_mode!r}")
    # subject ids are unique, so filtering by id only ever removes the
    # subject from its own group
    controls = [p for p in profiles if p.group == Group.CONTROL and p.subject_id != held_out]
    ads = [p for p in profiles if p.group == Group.AD and p.subject_id != held_out]
    if not controls or not ads:
        raise DegenerateGroupError("a group is empty after excluding the held-out subject")

    def spread(values: list[float]) -> float:
        if sigma_mode == "population":
            return pstdev(values)
        if len(values) < 2:
            raise DegenerateGroupError("sample standard deviation needs at least 2 subjects")
        return stdev(values)

    diff_c = [p.diff for p in controls]
    diff_ad = [p.diff for p in ads]
    mean_diff_c = fmean(diff_c)
    mean_diff_ad = fmean(diff_ad)
    sigma_c = spread(diff_c)
    sigma_ad = spread(diff_ad)
    return ThresholdSet(
        control_ppl_mean=fmean([p.mean_control_ppl for p in controls]),
        ad_ppl_mean=fmean([p.mean_ad_ppl for p in ads]),
        diff_mean_control=mean_diff_c,
        diff_mean_ad=mean_diff_ad,
        diff_std_control=sigma_c,
        diff_std_ad=sigma_ad,
        k_sigma=k_sigma,
        shifted_diff_control=mean_diff_c - k_sigma * sigma_c,
        shifted_diff_ad=mean_diff_ad + k_sigma * sigma_ad,
    )


# --- decision rules --------------------------------------------------------------------


def classify_pbar_c(profile: SubjectProfile, thresholds: ThresholdSet) -> Prediction:
    """Dementia iff the control-model mean perplexity exceeds the control
    group's; the comparison is strict, so a tie stays control."""
    margin = profile.mean_control_ppl - thresholds.control_ppl_mean
    predicted = Group.AD if margin > 0 else Group.CONTROL
    return Prediction(profile.subject_id, "pbar_c", predicted, margin)


def classify_pbar_ad(profile: SubjectProfile, thresholds: ThresholdSet) -> Prediction:
    """Control iff the dementia-model mean perplexity exceeds the dementia
    group's; the comparison is strict, so a tie stays dementia."""
    margin = profile.mean_ad_ppl - thresholds.ad_ppl_mean
    predicted = Group.CONTROL if margin > 0 else Group.AD
    return Prediction(profile.subject_id, "pbar_ad", predicted, margin)


def _nearest(
    profile: SubjectProfile,
    rule: str,
    center_control: float,
    center_ad: float,
    tie: Group,
) -> Prediction:
    dist_control = abs(profile.diff - center_control)
    dist_ad = abs(profile.diff - center_ad)
    margin = dist_control - dist_ad  # positive: closer to the dementia center
    if margin > 0:
        predicted = Group.AD
    elif margin < 0:
        predicted = Group.CONTROL
    else:
        predicted = tie
    return Prediction(profile.subject_id, rule, predicted, margin)


def classify_dbar(
    profile: SubjectProfile, thresholds: ThresholdSet, tie: Group = Group.AD
) -> Prediction:
    """Nearest group mean of the difference score."""
    return _nearest(
        profile, "dbar", thresholds.diff_mean_control, thresholds.diff_mean_ad, tie
    )


def classify_dstar(
    profile: SubjectProfile, thresholds: ThresholdSet, tie: Group = Group.AD
) -> Prediction:
    """Nearest sigma-shifted group mean of the difference score."""
    return _nearest(
        profile, "dstar", thresholds.shifted_diff_control, thresholds.shifted_diff_ad, tie
    )


_CLASSIFIERS = {
    "pbar_c": classify_pbar_c,
    "pbar_ad": classify_pbar_ad,
    "dbar": classify_dbar,
    "dstar": classify_dstar,
}


def apply_rules(
    profiles: Sequence[SubjectProfile],
    k_sigma: int = 2,
    sigma_mode: str = "population",
    tie: Group = Group.AD,
) -> dict[str, dict[str, Prediction]]:
    """Classify every subject under every rule, recomputing the thresholds
    with that subject held out each time."""
    predictions: dict[str, dict[str, Prediction]] = {rule: {} for rule in RULES}
    for profile in profiles:
        thresholds = build_thresholds(
            profiles, held_out=profile.subject_id, k_sigma=k_sigma, sigma_mode=sigma_mode
        )
        for rule in RULES:
            classifier = _CLASSIFIERS[rule]
            if rule in ("dbar", "dstar"):
                prediction = classifier(profile, thresholds, tie)
            else:
                prediction = classifier(profile, thresholds)
            predictions[rule][profile.subject_id] = prediction
    return predictions


def model_label(spec: ScorerSpec) -> str:
    if spec.kind == "external":
        return "external"
    flavor = "mle" if spec.kind == "ngram-mle" else "kn"
    return f"{spec.order}-gram-{flavor}"


def build_report(
    label: str,
    predictions: dict[str, dict[str, Prediction]],
    profiles: Sequence[SubjectProfile],
) -> EvaluationReport:
    gold = {p.subject_id: p.group for p in profiles}
    report = EvaluationReport(model=label)
    for rule, preds in predictions.items():
        labels = {sid: pred.predicted for sid, pred in preds.items()}
        report.rules[rule] = RuleResult.from_predictions(rule, labels, gold)
    return report


@dataclass
class ExperimentResult:
    profiles: list[SubjectProfile]
    predictions: dict[str, dict[str, Prediction]]
    report: EvaluationReport


def evaluate_all(
    corpus: Corpus,
    spec: ScorerSpec,
    k_sigma: int = 2,
    *,
    sigma_mode: str = "population",
    tie: Group = Group.AD,
    workers: int = 1,
    cache_dir: str | Path | None = None,
) -> ExperimentResult:
    """Run the full experiment: one LOSO pass, then all four rules."""
    profiles = run_loso(corpus, spec, workers=workers, cache_dir=cache_dir)
    predictions = apply_rules(profiles, k_sigma=k_sigma, sigma_mode=sigma_mode, tie=tie)
    report = build_report(model_label(spec), predictions, profiles)
    return ExperimentResult(profiles=profiles, predictions=predictions, report=report)


def profiles_to_csv(
    profiles: Sequence[SubjectProfile],
    predictions: dict[str, dict[str, Prediction]] | None = None,
) -> str:
    """Per-subject table: id, group, the two mean perplexities, their
    difference, and (when given) the prediction of each rule."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    header = ["subject_id", "group", "pbar_c", "pbar_ad", "d"]
    if predictions is not None:
        header += [f"pred_{rule}" for rule in RULES]
    writer.writerow(header)
    for p in profiles:
        row = [
            p.subject_id,
            p.group.value,
            repr(p.mean_control_ppl),
            repr(p.mean_ad_ppl),
            repr(p.diff),
        ]
        if predictions is not None:
            row += [predictions[rule][p.subject_id].predicted.value for rule in RULES]
        writer.writerow(row)
    return buf.getvalue()
