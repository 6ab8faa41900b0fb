"""Tests for the leave-one-subject-out harness and the decision rules."""

import dataclasses
import random
from statistics import fmean, pstdev

import pytest

from pplkit.chat import Group
from pplkit.errors import DegenerateGroupError, InsufficientGroupError
from pplkit.harness import (
    RULES,
    SubjectProfile,
    ThresholdSet,
    apply_rules,
    build_report,
    build_thresholds,
    classify_dbar,
    classify_dstar,
    classify_pbar_ad,
    classify_pbar_c,
    evaluate_all,
    model_label,
    profiles_to_csv,
    run_loso,
)
from pplkit.scorers import ScorerSpec

from synth import make_corpus, make_profiles

C, AD = Group.CONTROL, Group.AD
KN2 = ScorerSpec(kind="ngram-kn", order=2, discount=0.1)


def profile(sid, group, diff, base=100.0):
    """Profile with a prescribed difference score."""
    return SubjectProfile.build(
        sid, group, control_ppls=[base, base], ad_ppls=[base + diff, base + diff]
    )


# --- build_thresholds ---------------------------------------------------------


def test_thresholds_hand_arithmetic():
    profiles = [
        profile("c1", C, 2.0),
        profile("c2", C, 4.0),
        profile("d1", AD, -2.0),
        profile("d2", AD, 0.0),
    ]
    th = build_thresholds(profiles, held_out="d1", k_sigma=2)
    assert th.diff_mean_control == pytest.approx(3.0)
    assert th.diff_mean_ad == pytest.approx(0.0)
    assert th.diff_std_ad == 0.0
    assert th.diff_std_control == pytest.approx(1.0)  # pstdev of {2, 4}


def test_thresholds_exclude_held_out_from_own_group_only():
    profiles = [profile("c1", C, 1.0), profile("c2", C, 3.0), profile("d1", AD, -1.0),
                profile("d2", AD, -3.0)]
    th = build_thresholds(profiles, held_out="c1")
    assert th.diff_mean_control == pytest.approx(3.0)  # c1 excluded
    assert th.diff_mean_ad == pytest.approx(-2.0)  # both AD subjects kept


def test_thresholds_zero_k_sigma_identity():
    profiles = make_profiles(seed=1)
    th = build_thresholds(profiles, held_out=profiles[0].subject_id, k_sigma=0)
    assert th.shifted_diff_control == th.diff_mean_control
    assert th.shifted_diff_ad == th.diff_mean_ad


def test_thresholds_shift_directions():
    profiles = make_profiles(seed=2)
    th = build_thresholds(profiles, held_out=profiles[0].subject_id, k_sigma=2)
    assert th.shifted_diff_ad >= th.diff_mean_ad
    assert th.shifted_diff_control <= th.diff_mean_control


def test_thresholds_degenerate_group():
    profiles = [profile("c1", C, 1.0), profile("d1", AD, -1.0)]
    with pytest.raises(DegenerateGroupError):
        build_thresholds(profiles, held_out="c1")


def test_thresholds_unknown_subject():
    profiles = make_profiles(seed=3)
    with pytest.raises(ValueError):
        build_thresholds(profiles, held_out="nobody")


def test_thresholds_sample_sigma():
    profiles = [
        profile("c1", C, 2.0),
        profile("c2", C, 4.0),
        profile("c3", C, 6.0),
        profile("d1", AD, 0.0),
        profile("d2", AD, -2.0),
        profile("d3", AD, -4.0),
    ]
    th = build_thresholds(profiles, held_out="d1", k_sigma=1, sigma_mode="sample")
    assert th.diff_std_control == pytest.approx(2.0)  # sample stdev of {2,4,6}
    # excluding one subject from a 2-subject group leaves a singleton, where
    # the sample form is undefined
    two_ads = profiles[:5]
    with pytest.raises(DegenerateGroupError):
        build_thresholds(two_ads, held_out="d2", k_sigma=1, sigma_mode="sample")


def test_thresholds_match_physical_deletion():
    profiles = make_profiles(seed=4)
    held = profiles[3].subject_id
    th = build_thresholds(profiles, held_out=held, k_sigma=2)
    deleted = [p for p in profiles if p.subject_id != held]
    th_deleted = build_thresholds(deleted, held_out=deleted[0].subject_id, k_sigma=2)
    # recompute aggregates over the deleted table by hand instead (the
    # held-out id is gone, so compare against direct recomputation)
    controls = [p.diff for p in deleted if p.group == C]
    ads = [p.diff for p in deleted if p.group == AD]
    if profiles[3].group == C:
        assert th.diff_mean_control == fmean(controls)
        assert th.diff_std_control == pstdev(controls)
    else:
        assert th.diff_mean_ad == fmean(ads)
        assert th.diff_std_ad == pstdev(ads)


# --- decision rules ----------------------------------------------------------------


def make_thresholds(**overrides):
    values = dict(
        control_ppl_mean=100.0,
        ad_ppl_mean=100.0,
        diff_mean_control=0.0,
        diff_mean_ad=0.0,
        diff_std_control=0.0,
        diff_std_ad=0.0,
        k_sigma=2,
        shifted_diff_control=0.0,
        shifted_diff_ad=0.0,
    )
    values.update(overrides)
    return ThresholdSet(**values)


def test_pbar_c_rule():
    th = make_thresholds(control_ppl_mean=100.0)
    above = SubjectProfile.build("s", C, [101.0, 101.0], [50.0, 50.0])
    at = SubjectProfile.build("s", C, [100.0, 100.0], [50.0, 50.0])
    assert classify_pbar_c(above, th).predicted is AD
    assert classify_pbar_c(above, th).margin == pytest.approx(1.0)
    assert classify_pbar_c(at, th).predicted is C  # tie stays control
    assert classify_pbar_c(at, th).margin == 0.0


def test_pbar_ad_rule():
    th = make_thresholds(ad_ppl_mean=100.0)
    above = SubjectProfile.build("s", AD, [50.0, 50.0], [101.0, 101.0])
    at = SubjectProfile.build("s", AD, [50.0, 50.0], [100.0, 100.0])
    assert classify_pbar_ad(above, th).predicted is C
    assert classify_pbar_ad(at, th).predicted is AD  # tie stays dementia


def test_dbar_rule_hand_arithmetic():
    th = make_thresholds(diff_mean_control=-3.0, diff_mean_ad=10.0)
    p = profile("s", AD, 5.0)
    pred = classify_dbar(p, th)
    assert pred.predicted is AD  # |5-10| < |5+3|
    assert pred.margin == pytest.approx(8.0 - 5.0)


def test_dbar_tie_breaks_to_ad_by_default():
    th = make_thresholds(diff_mean_control=-1.0, diff_mean_ad=1.0)
    p = profile("s", C, 0.0)
    assert classify_dbar(p, th).predicted is AD
    assert classify_dbar(p, th, tie=C).predicted is C


def test_dstar_equals_dbar_when_sigma_zero():
    profiles = make_profiles(seed=5)
    for p in profiles:
        th = build_thresholds(profiles, held_out=p.subject_id, k_sigma=0)
        assert classify_dstar(p, th).predicted is classify_dbar(p, th).predicted


def test_dstar_uses_shifted_centers():
    th = make_thresholds(
        diff_mean_control=0.0,
        diff_mean_ad=4.0,
        diff_std_ad=2.0,
        shifted_diff_control=0.0,
        shifted_diff_ad=8.0,  # 4 + 2*2
    )
    p = profile("s", AD, 8.0)  # exactly at the shifted dementia center
    pred = classify_dstar(p, th)
    assert pred.predicted is AD
    assert pred.margin == pytest.approx(8.0 - 0.0)


def test_translation_invariance_of_diff_rules():
    profiles = make_profiles(seed=6)
    baseline = apply_rules(profiles, k_sigma=2)
    rng = random.Random(0)
    for _ in range(10):
        c = rng.uniform(-500, 500)
        shifted = [
            dataclasses.replace(
                p,
                ad_ppls=tuple(v + c for v in p.ad_ppls),
                mean_ad_ppl=p.mean_ad_ppl + c,
                diff=p.diff + c,
            )
            for p in profiles
        ]
        moved = apply_rules(shifted, k_sigma=2)
        for rule in ("dbar", "dstar"):
            for sid in baseline[rule]:
                assert moved[rule][sid].predicted is baseline[rule][sid].predicted


def test_symmetry_label_swap_negated_diff():
    profiles = make_profiles(seed=7)
    mirrored = [
        SubjectProfile.build(
            p.subject_id,
            AD if p.group is C else C,
            control_ppls=p.ad_ppls,
            ad_ppls=p.control_ppls,
        )
        for p in profiles
    ]
    for p, m in zip(profiles, mirrored):
        assert m.diff == pytest.approx(-p.diff)
    base = apply_rules(profiles, k_sigma=2)
    flipped = apply_rules(mirrored, k_sigma=2)
    for sid in base["dbar"]:
        if base["dbar"][sid].margin != 0:
            assert flipped["dbar"][sid].predicted is not base["dbar"][sid].predicted


# --- run_loso -------------------------------------------------------------------------


def test_run_loso_separates_disjoint_vocabularies():
    corpus = make_corpus(seed=11)
    profiles = run_loso(corpus, KN2)
    assert len(profiles) == 8
    for p in profiles:
        own = p.mean_control_ppl if p.group is C else p.mean_ad_ppl
        other = p.mean_ad_ppl if p.group is C else p.mean_control_ppl
        assert own < other


def test_run_loso_profile_identities():
    corpus = make_corpus(seed=12)
    for p in run_loso(corpus, KN2):
        assert p.diff == p.mean_ad_ppl - p.mean_control_ppl
        assert len(p.control_ppls) == len(p.ad_ppls) == 3
        assert p.mean_control_ppl == fmean(p.control_ppls)


def test_run_loso_insufficient_group():
    corpus = make_corpus(seed=13, subjects_per_group=1)
    with pytest.raises(InsufficientGroupError):
        run_loso(corpus, KN2)


def test_run_loso_rejects_single_transcript_subjects():
    corpus = make_corpus(seed=14, transcripts_per_subject=1)
    with pytest.raises(InsufficientGroupError):
        run_loso(corpus, KN2)


def test_run_loso_deterministic_and_worker_invariant():
    corpus = make_corpus(seed=15)
    serial = run_loso(corpus, KN2)
    parallel = run_loso(corpus, KN2, workers=4)
    again = run_loso(corpus, KN2)
    assert serial == parallel == again


def test_run_loso_exclusion_matters():
    # scoring a subject's own transcripts with the full-group model would
    # include their data; verify the held-out model scores differ
    corpus = make_corpus(seed=16, control_alphabet="abcdef", ad_alphabet="abcdef")
    profiles = run_loso(corpus, KN2)
    from pplkit.ngram import build_vocabulary
    from pplkit.scorers import make_scorer

    vocab = build_vocabulary(
        [u for s in corpus.subjects for t in s.transcripts for u in t.tokens]
    )
    full_control = make_scorer(KN2, vocab).fit(
        [u for s in corpus.group_subjects(C) for t in s.transcripts for u in t.tokens]
    )
    first_control = corpus.group_subjects(C)[0]
    leaky = fmean(full_control.score(t.tokens).value for t in first_control.transcripts)
    held_out_score = profiles[0].mean_control_ppl
    assert held_out_score != leaky


def test_run_loso_cache_round_trip(tmp_path):
    corpus = make_corpus(seed=17)
    first = run_loso(corpus, KN2, cache_dir=tmp_path)
    cached_files = list(tmp_path.rglob("*.json"))
    assert len(cached_files) == 2 + 8  # two group models + one fold per subject
    second = run_loso(corpus, KN2, cache_dir=tmp_path)
    assert first == second
    # a different spec must not reuse the same cache entries
    run_loso(corpus, ScorerSpec(kind="ngram-kn", order=3), cache_dir=tmp_path)
    assert len(list(tmp_path.rglob("*.json"))) == 2 * (2 + 8)


# --- evaluate_all ------------------------------------------------------------------------


def test_evaluate_all_perfect_separation():
    corpus = make_corpus(seed=18, subjects_per_group=4)
    result = evaluate_all(corpus, KN2, k_sigma=2)
    assert result.report.rules["dbar"].accuracy == 1.0
    assert result.report.rules["dstar"].accuracy == 1.0
    assert set(result.predictions) == set(RULES)
    assert len(result.profiles) == 8


def test_evaluate_all_report_labels():
    corpus = make_corpus(seed=19)
    result = evaluate_all(corpus, KN2)
    assert result.report.model == "2-gram-kn"
    assert model_label(ScorerSpec(kind="ngram-mle", order=4)) == "4-gram-mle"
    assert model_label(ScorerSpec(kind="external", command=["x"])) == "external"


def test_profiles_csv_shape():
    profiles = make_profiles(seed=20, n_control=2, n_ad=2)
    predictions = apply_rules(profiles)
    text = profiles_to_csv(profiles, predictions)
    lines = text.strip().splitlines()
    assert lines[0] == "subject_id,group,pbar_c,pbar_ad,d,pred_pbar_c,pred_pbar_ad,pred_dbar,pred_dstar"
    assert len(lines) == 5


def test_build_report_covers_all_rules():
    profiles = make_profiles(seed=21, shift=200.0)
    predictions = apply_rules(profiles)
    report = build_report("test-model", predictions, profiles)
    assert set(report.rules) == set(RULES)
    for result in report.rules.values():
        assert 0.0 <= result.accuracy <= 1.0
