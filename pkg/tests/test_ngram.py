"""Tests for the n-gram language models.

The reference probabilities here are computed by deliberately naive code
(nested-loop counting, per-call scans, plain products) so they stay
independent of the lookup-table implementation they check.
"""

import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pplkit.errors import (
    EmptyInputError,
    InvalidOrderError,
    OutOfVocabularyError,
    UnknownWordError,
    ZeroLengthError,
)
from pplkit.ngram import (
    BOS,
    EOS,
    NgramLanguageModel,
    Vocabulary,
    build_vocabulary,
    train,
)


# --- naive reference implementation ------------------------------------------


def pad(order, utterance):
    return [BOS] * (order - 1) + list(utterance) + [EOS]


def naive_count(order, texts, gram):
    """Occurrences of ``gram`` in the padded texts, by direct scan."""
    gram = tuple(gram)
    n = 0
    for utt in texts:
        padded = pad(order, utt)
        for i in range(len(padded) - len(gram) + 1):
            if tuple(padded[i : i + len(gram)]) == gram:
                n += 1
    return n


def naive_mle_prob(order, texts, word, context):
    denom = naive_count(order, texts, context)
    if denom == 0:
        return 0.0
    return naive_count(order, texts, tuple(context) + (word,)) / denom


def naive_kn_prob(order, texts, vocab, d, word, context):
    context = tuple(context)
    if not context:
        bigrams = set()
        for utt in texts:
            padded = pad(order, utt)
            for i in range(len(padded) - 1):
                bigrams.add((padded[i], padded[i + 1]))
        if not bigrams:
            return 1.0 / len(vocab)
        cont = len({left for (left, right) in bigrams if right == word})
        continued = len({right for (_, right) in bigrams})
        lam = d * continued / len(bigrams)
        return max(cont - d, 0.0) / len(bigrams) + lam / len(vocab)
    lower = naive_kn_prob(order, texts, vocab, d, word, context[1:])
    total = 0
    followers = set()
    for utt in texts:
        padded = pad(order, utt)
        for i in range(len(padded) - len(context)):
            if tuple(padded[i : i + len(context)]) == context:
                total += 1
                followers.add(padded[i + len(context)])
    if total == 0:
        return lower
    c = naive_count(order, texts, context + (word,))
    lam = d * len(followers) / total
    return max(c - d, 0.0) / total + lam * lower


def naive_perplexity(model_prob, order, utterances):
    """Chain-rule product over padded positions, then the k-th root."""
    prod = 1.0
    k = 0
    for utt in utterances:
        padded = pad(order, utt)
        for i in range(order - 1, len(padded)):
            prod *= model_prob(padded[i], tuple(padded[i - order + 1 : i]))
            k += 1
    return prod ** (-1.0 / k)


def random_texts(rng, alphabet, n_utts=6, max_len=8):
    return [
        [rng.choice(alphabet) for _ in range(rng.randint(1, max_len))] for _ in range(n_utts)
    ]


# --- vocabulary ---------------------------------------------------------------


def test_build_vocabulary_counts_distinct_tokens():
    vocab = build_vocabulary([["a", "b"], ["b", "c"]])
    assert len(vocab) == 6
    assert all(sym in vocab for sym in (BOS, EOS, "a", "b", "c"))


def test_build_vocabulary_singleton():
    assert len(build_vocabulary([["a"]])) == 4


def test_build_vocabulary_deterministic_order():
    v1 = build_vocabulary([["b", "a"], ["c"]])
    v2 = build_vocabulary([["c"], ["a", "b"]])
    assert v1.items == v2.items


def test_build_vocabulary_empty_raises():
    with pytest.raises(EmptyInputError):
        build_vocabulary([])


def test_vocabulary_requires_reserved_symbols():
    with pytest.raises(ValueError):
        Vocabulary(["a", "b", "c"])
    with pytest.raises(ValueError):
        Vocabulary([BOS, EOS, "<unk>", "a", "a"])


# --- counting -----------------------------------------------------------------


def test_bigram_counts_match_hand_tally():
    model = NgramLanguageModel(order=2).fit([["a", "b", "a", "b", "a"]])
    counts = model.counts_
    assert counts.count(("a", "b")) == 2
    assert counts.count(("b", "a")) == 2
    assert counts.count(("a",)) == 3
    assert counts.count((BOS, "a")) == 1
    assert counts.count(("a", EOS)) == 1


def test_counts_cover_all_orders():
    texts = [["x", "y", "z"], ["x", "y"]]
    model = NgramLanguageModel(order=3).fit(texts)
    for k in (1, 2, 3):
        for gram in model.counts_.grams[k]:
            assert model.counts_.count(gram) == naive_count(3, texts, gram)
    # spot-check a gram the model never saw
    assert model.counts_.count(("z", "x", "y")) == 0


def test_fit_rejects_empty_texts():
    with pytest.raises(EmptyInputError):
        NgramLanguageModel(order=2).fit([])


def test_fit_rejects_out_of_vocabulary_token():
    vocab = build_vocabulary([["a"]])
    with pytest.raises(OutOfVocabularyError):
        NgramLanguageModel(order=2, vocabulary=vocab).fit([["a", "b"]])


@pytest.mark.parametrize("order", [0, 1, 6, 2.5])
def test_invalid_order_rejected(order):
    with pytest.raises(InvalidOrderError):
        NgramLanguageModel(order=order).fit([["a"]])


# --- MLE probabilities ----------------------------------------------------------


def test_mle_matches_count_ratio():
    model = NgramLanguageModel(order=2, smoothing="mle").fit([["a", "b", "a", "b", "a"]])
    assert model.prob("b", ("a",)) == pytest.approx(2 / 3)


def test_mle_unseen_context_is_zero():
    model = NgramLanguageModel(order=2, smoothing="mle").fit([["a", "b"]])
    assert model.prob("a", (EOS,)) == 0.0


def test_mle_matches_naive_on_random_corpus():
    rng = random.Random(7)
    texts = random_texts(rng, "abc")
    for order in (2, 3):
        model = NgramLanguageModel(order=order, smoothing="mle").fit(texts)
        vocab = list(model.vocabulary_)
        for _ in range(50):
            ctx = tuple(rng.choice(vocab) for _ in range(order - 1))
            w = rng.choice(vocab)
            assert model.prob(w, ctx) == pytest.approx(
                naive_mle_prob(order, texts, w, ctx), abs=1e-12
            )


# --- Kneser-Ney probabilities ----------------------------------------------------


def test_kn_matches_naive_on_random_corpus():
    rng = random.Random(11)
    texts = random_texts(rng, "abcd")
    for order in (2, 3, 4):
        model = NgramLanguageModel(order=order, discount=0.1).fit(texts)
        vocab = list(model.vocabulary_)
        for _ in range(40):
            ctx = tuple(rng.choice(vocab) for _ in range(order - 1))
            w = rng.choice(vocab)
            expected = naive_kn_prob(order, texts, vocab, 0.1, w, ctx)
            assert model.prob(w, ctx) == pytest.approx(expected, rel=1e-12)


def test_kn_distribution_sums_to_one():
    rng = random.Random(3)
    texts = random_texts(rng, "abcde")
    for order in (2, 3, 5):
        model = NgramLanguageModel(order=order, discount=0.1).fit(texts)
        vocab = list(model.vocabulary_)
        for _ in range(25):
            ctx = tuple(rng.choice(vocab) for _ in range(order - 1))
            total = math.fsum(model.prob(w, ctx) for w in vocab)
            assert total == pytest.approx(1.0, abs=1e-6)


def test_kn_approaches_mle_for_vanishing_discount():
    texts = [["a", "b", "a", "b", "a", "b"]]
    kn = NgramLanguageModel(order=2, discount=1e-6).fit(texts)
    mle = NgramLanguageModel(order=2, smoothing="mle").fit(texts)
    # context "a" was always followed by something, so the limit is exact
    assert abs(kn.prob("b", ("a",)) - mle.prob("b", ("a",))) < 1e-3


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.lists(st.sampled_from("abcd"), min_size=1, max_size=6), min_size=1, max_size=5
    ),
    st.integers(min_value=2, max_value=4),
)
def test_kn_normalization_property(texts, order):
    model = NgramLanguageModel(order=order, discount=0.1).fit(texts)
    vocab = list(model.vocabulary_)
    contexts = [tuple(vocab[i % len(vocab)] for i in range(j, j + order - 1)) for j in range(5)]
    contexts.append((BOS,) * (order - 1))
    for ctx in contexts:
        assert math.fsum(model.prob(w, ctx) for w in vocab) == pytest.approx(1.0, abs=1e-6)


def test_prob_rejects_unknown_word_and_context():
    model = NgramLanguageModel(order=2).fit([["a", "b"]])
    with pytest.raises(UnknownWordError):
        model.prob("zzz", ("a",))
    with pytest.raises(UnknownWordError):
        model.prob("a", ("zzz",))


def test_prob_rejects_wrong_context_length():
    model = NgramLanguageModel(order=3).fit([["a", "b"]])
    with pytest.raises(ValueError):
        model.prob("a", ("a",))


# --- sequence scoring -------------------------------------------------------------


def test_certain_model_has_zero_logprob_and_unit_ppl():
    # MLE trained and scored on the same deterministic chain assigns
    # probability 1 to every position
    texts = [["a", "b", "c"]]
    model = NgramLanguageModel(order=2, smoothing="mle").fit(texts)
    assert model.sequence_logprob(texts) == 0.0
    assert model.perplexity(texts) == 1.0


def test_uniform_fallback_logprob():
    vocab = build_vocabulary([["a"]])  # size 4
    model = NgramLanguageModel.uniform(vocab)
    got = model.sequence_logprob([["a"]])
    assert got == pytest.approx(2 * math.log(1 / 4), rel=1e-12)


def test_logprob_additivity_over_concatenation():
    texts1 = [["a", "b"], ["b"]]
    texts2 = [["b", "a", "a"]]
    model = NgramLanguageModel(order=2).fit(texts1 + texts2)
    whole = model.sequence_logprob(texts1 + texts2)
    parts = model.sequence_logprob(texts1) + model.sequence_logprob(texts2)
    assert whole == pytest.approx(parts, rel=1e-12)


def test_logprob_permutation_invariance():
    texts = [["a", "b"], ["b", "c", "a"], ["c"]]
    model = NgramLanguageModel(order=3).fit(texts)
    shuffled = [texts[2], texts[0], texts[1]]
    assert model.sequence_logprob(shuffled) == model.sequence_logprob(texts)
    assert model.perplexity(shuffled) == model.perplexity(texts)


def test_uniform_model_perplexity_equals_vocab_size():
    vocab = build_vocabulary([["a", "b", "c", "d", "e"]])  # |V| = 8
    model = NgramLanguageModel.uniform(vocab, order=3)
    ppl = model.perplexity([["a", "c"], ["e"]])
    assert ppl == pytest.approx(len(vocab), rel=1e-12)


def test_perplexity_matches_naive_chain_rule():
    rng = random.Random(5)
    texts = random_texts(rng, "abc")
    test_texts = random_texts(rng, "abc", n_utts=3, max_len=5)
    for order, smoothing in [(2, "kn"), (3, "kn"), (2, "mle")]:
        model = NgramLanguageModel(order=order, smoothing=smoothing).fit(texts)
        expected = naive_perplexity(model.prob, order, test_texts)
        got = model.perplexity(test_texts)
        if math.isinf(expected):
            assert math.isinf(got)
        else:
            assert got == pytest.approx(expected, rel=1e-9)


def test_self_perplexity_beats_uniform():
    texts = [["the", "boy", "falls"]]
    model = NgramLanguageModel(order=2).fit(texts)
    assert model.perplexity(texts) <= len(model.vocabulary_)


def test_perplexity_zero_length_raises():
    model = NgramLanguageModel(order=2).fit([["a"]])
    with pytest.raises(ZeroLengthError):
        model.perplexity([])


def test_scoring_unknown_word_raises():
    model = NgramLanguageModel(order=2).fit([["a"]])
    with pytest.raises(UnknownWordError):
        model.sequence_logprob([["zzz"]])


def test_mle_unseen_event_gives_infinite_perplexity():
    model = NgramLanguageModel(order=2, smoothing="mle").fit([["a", "b"]])
    assert model.perplexity([["b", "a"]]) == math.inf


# --- determinism and serialization --------------------------------------------------


def test_training_is_deterministic():
    texts = [["a", "b", "a"], ["b", "b"]]
    m1 = NgramLanguageModel(order=2).fit(texts)
    m2 = NgramLanguageModel(order=2).fit(texts)
    assert m1.to_dict() == m2.to_dict()
    assert m1.prob("b", ("a",)) == m2.prob("b", ("a",))


def test_serialization_round_trip_bit_identical(tmp_path):
    rng = random.Random(13)
    texts = random_texts(rng, "abcd")
    test_texts = random_texts(rng, "abcd", n_utts=4)
    model = NgramLanguageModel(order=4, discount=0.1).fit(texts)
    path = tmp_path / "model.json"
    model.save(path)
    loaded = NgramLanguageModel.load(path)
    assert loaded.sequence_logprob(test_texts) == model.sequence_logprob(test_texts)
    assert loaded.perplexity(test_texts) == model.perplexity(test_texts)
    assert loaded.to_dict() == model.to_dict()


def test_from_dict_rejects_foreign_payload():
    with pytest.raises(ValueError):
        NgramLanguageModel.from_dict({"format": "something-else"})


def test_model_json_is_valid_json(tmp_path):
    model = NgramLanguageModel(order=2).fit([["a"]])
    path = tmp_path / "m.json"
    model.save(path)
    payload = json.loads(path.read_text())
    assert payload["order"] == 2


# --- estimator API -----------------------------------------------------------------


def test_get_params_round_trip():
    model = NgramLanguageModel(order=3, discount=0.2, smoothing="mle")
    params = model.get_params()
    assert params == {"order": 3, "discount": 0.2, "smoothing": "mle", "vocabulary": None}
    clone = NgramLanguageModel(**params)
    assert clone.get_params() == params


def test_set_params_validates_names():
    model = NgramLanguageModel()
    with pytest.raises(ValueError):
        model.set_params(not_a_param=1)


def test_sklearn_clone_compatibility():
    sklearn_base = pytest.importorskip("sklearn.base")
    model = NgramLanguageModel(order=4, discount=0.3)
    clone = sklearn_base.clone(model)
    assert clone.get_params() == model.get_params()


def test_functional_train_wrapper():
    vocab = build_vocabulary([["a", "b"]])
    model = train(2, [["a", "b"]], vocab)
    assert model.vocabulary_ is vocab
    assert model.smoothing == "kn"
