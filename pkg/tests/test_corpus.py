from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bisense.corpus import (
    build_partition,
    kshot_filter,
    load_corpus,
    load_frequencies,
    save_corpus,
    save_frequencies,
    sense_frequencies,
    training_mfs,
)
from bisense.errors import DataError
from bisense.evaluation import baseline_s1, score
from bisense.lexicon import LemmaKey
from bisense.synth import SynthConfig, generate_synthetic

from conftest import token, write_corpus


def label_counts(corpus):
    counts = Counter()
    for inst in corpus.instances:
        counts.update(inst.gold)
    return counts


def test_load_basic(corpus):
    assert len(corpus.instances) == 6
    assert corpus.instance("t.001").gold == ("plant%v:1",)


def test_unresolvable_gold_names_instance(tmp_path, inventory):
    path = write_corpus(
        tmp_path / "bad.jsonl",
        [[token("x", "plant", "noun", ["plant%n:9"], "bad.1")]],
    )
    with pytest.raises(DataError, match="bad.1"):
        load_corpus(path, inventory)


def test_gold_lemma_mismatch_rejected(tmp_path, inventory):
    path = write_corpus(
        tmp_path / "mismatch.jsonl",
        [[token("x", "bank", "noun", ["plant%n:1"], "m.1")]],
    )
    with pytest.raises(DataError, match="m.1"):
        load_corpus(path, inventory)


def test_duplicate_instance_id_rejected(tmp_path, inventory):
    sent = [token("plant", "plant", "noun", ["plant%n:1"], "dup.1")]
    path = write_corpus(tmp_path / "dup.jsonl", [sent, sent])
    with pytest.raises(DataError, match="dup.1"):
        load_corpus(path, inventory)


def test_labeled_token_requires_id(tmp_path, inventory):
    path = write_corpus(
        tmp_path / "noid.jsonl",
        [[token("plant", "plant", "noun", ["plant%n:1"])]],
    )
    with pytest.raises((DataError, Exception)):
        load_corpus(path, inventory)


def test_long_sentence_split_preserves_labels(tmp_path, inventory):
    sent = [token(f"w{i}") for i in range(70)]
    sent[65] = token("plant", "plant", "noun", ["plant%n:1"], "long.1")
    path = write_corpus(tmp_path / "long.jsonl", [sent])
    corpus = load_corpus(path, inventory, max_sentence_words=64)
    assert len(corpus.sentences) == 2
    assert len(corpus.sentences[0].tokens) == 64
    assert corpus.instance("long.1").sentence_index == 1
    assert corpus.instance("long.1").token_index == 1


def test_save_load_round_trip(corpus, inventory, tmp_path):
    out = tmp_path / "rt.jsonl"
    save_corpus(corpus, out)
    corpus2 = load_corpus(out, inventory)
    assert label_counts(corpus) == label_counts(corpus2)
    assert [s.words for s in corpus.sentences] == [s.words for s in corpus2.sentences]


def test_sense_frequencies_counts(corpus):
    freq = sense_frequencies(corpus)
    assert freq.count == {
        "plant%v:1": 1, "plant%n:1": 1, "plant%n:2": 1,
        "bank%n:1": 1, "bank%n:2": 1, "run%v:1": 1,
    }
    assert freq.per_lemma[LemmaKey("bank", "noun")] == {"bank%n:1": 1, "bank%n:2": 1}


def test_sense_frequencies_empty(inventory, tmp_path):
    path = write_corpus(tmp_path / "empty.jsonl", [[token("just"), token("words")]])
    corpus = load_corpus(path, inventory)
    freq = sense_frequencies(corpus)
    assert freq.count == {}


def test_sense_frequencies_multi_gold(tmp_path, inventory):
    path = write_corpus(
        tmp_path / "multi.jsonl",
        [[token("plant", "plant", "noun", ["plant%n:1", "plant%n:2"], "mg.1")]],
    )
    corpus = load_corpus(path, inventory)
    freq = sense_frequencies(corpus)
    # brute-force tally over instances: each gold id counts once
    expected = Counter()
    for inst in corpus.instances:
        for sid in inst.gold:
            expected[sid] += 1
    assert freq.count == dict(expected)
    assert freq.count["plant%n:1"] == 1 and freq.count["plant%n:2"] == 1


def test_frequencies_file_round_trip(corpus, tmp_path):
    freq = sense_frequencies(corpus)
    path = tmp_path / "freq.json"
    save_frequencies(freq, path)
    freq2 = load_frequencies(path)
    assert freq2.count == freq.count
    assert freq2.per_lemma == freq.per_lemma


def test_training_mfs_argmax(inventory):
    from bisense.corpus import SenseFrequencyTable

    key = LemmaKey("bank", "noun")
    t = SenseFrequencyTable(
        count={"bank%n:1": 5, "bank%n:2": 9},
        per_lemma={key: {"bank%n:1": 5, "bank%n:2": 9}},
    )
    assert training_mfs(t, key, inventory) == "bank%n:2"


def test_training_mfs_tie_breaks_by_rank(inventory):
    from bisense.corpus import SenseFrequencyTable

    key = LemmaKey("bank", "noun")
    t = SenseFrequencyTable(
        count={"bank%n:1": 3, "bank%n:2": 3},
        per_lemma={key: {"bank%n:1": 3, "bank%n:2": 3}},
    )
    assert training_mfs(t, key, inventory) == "bank%n:1"


def test_training_mfs_zero_counts_falls_back_to_first_sense(inventory):
    from bisense.corpus import SenseFrequencyTable

    assert training_mfs(SenseFrequencyTable(), LemmaKey("plant", "noun"), inventory) == "plant%n:1"
    with pytest.raises(DataError):
        training_mfs(SenseFrequencyTable(), LemmaKey("zebra", "noun"), inventory)


# --- k-shot filtering ----------------------------------------------------

def _kshot_corpus(tmp_path, inventory):
    sents = []
    for i in range(3):
        sents.append([token("x"), token("plant", "plant", "noun", ["plant%n:1"], f"a.{i}")])
    sents.append([token("plant", "plant", "noun", ["plant%n:2"], "b.0")])
    return load_corpus(write_corpus(tmp_path / "ks.jsonl", sents), inventory)


def test_kshot_counts(tmp_path, inventory):
    corpus = _kshot_corpus(tmp_path, inventory)
    out = kshot_filter(corpus, 1, seed=0)
    assert label_counts(out) == {"plant%n:1": 1, "plant%n:2": 1}
    # sentences and order preserved, only labels pruned
    assert [s.words for s in out.sentences] == [s.words for s in corpus.sentences]


def test_kshot_large_k_is_identity_on_labels(tmp_path, inventory):
    corpus = _kshot_corpus(tmp_path, inventory)
    out = kshot_filter(corpus, 99, seed=5)
    assert label_counts(out) == label_counts(corpus)
    assert [i.instance_id for i in out.instances] == [i.instance_id for i in corpus.instances]


def test_kshot_deterministic_and_idempotent(tmp_path, inventory):
    corpus = _kshot_corpus(tmp_path, inventory)
    a = kshot_filter(corpus, 2, seed=11)
    b = kshot_filter(corpus, 2, seed=11)
    assert [i.instance_id for i in a.instances] == [i.instance_id for i in b.instances]
    twice = kshot_filter(a, 2, seed=11)
    assert [i.instance_id for i in twice.instances] == [i.instance_id for i in a.instances]
    assert label_counts(twice) == label_counts(a)


@settings(deadline=None, max_examples=25)
@given(k=st.integers(min_value=1, max_value=12), seed=st.integers(min_value=0, max_value=2**31))
def test_kshot_property_min_k_counts(k, seed):
    cfg = SynthConfig(n_lemmas=6, senses_per_lemma=(1, 3), zipf_exponent=1.0,
                      vocab_size=200, train_instances=60, eval_instances=10,
                      zero_shot_fraction=0.0)
    train_c, _, _ = generate_synthetic(cfg, seed=123)
    before = label_counts(train_c)
    after = label_counts(kshot_filter(train_c, k, seed))
    for sid, n in before.items():
        assert after[sid] == min(k, n)
    assert set(after) == set(before)


# --- partitions -----------------------------------------------------------

def test_partition_rank1_membership(corpus, inventory):
    freq = sense_frequencies(corpus)
    part = build_partition(corpus, freq, corpus, inventory)
    assert "t.003" in part.mfs_ids  # plant%n:1 is rank 1
    assert "t.002" in part.lfs_ids  # plant%n:2 is rank 2
    assert part.mfs_ids | part.lfs_ids == {i.instance_id for i in corpus.instances}
    assert not part.mfs_ids & part.lfs_ids


def test_partition_zero_shot_sets(tmp_path, inventory):
    train = load_corpus(
        write_corpus(tmp_path / "tr.jsonl", [
            [token("plant", "plant", "noun", ["plant%n:1"], "tr.1")],
        ]),
        inventory,
    )
    eval_c = load_corpus(
        write_corpus(tmp_path / "ev.jsonl", [
            [token("plant", "plant", "noun", ["plant%n:2"], "ev.1")],
            [token("bank", "bank", "noun", ["bank%n:1"], "ev.2")],
            [token("plant", "plant", "noun", ["plant%n:1"], "ev.3")],
        ]),
        inventory,
    )
    freq = sense_frequencies(train)
    part = build_partition(eval_c, freq, train, inventory)
    assert part.zero_shot_word_ids == {"ev.2"}
    assert part.zero_shot_sense_ids == {"ev.1", "ev.2"}
    # derivable from the frequency table alone as well
    part2 = build_partition(eval_c, freq, None, inventory)
    assert part2 == part


def test_s1_scores_100_and_0_on_partition(tmp_path, inventory):
    eval_c = load_corpus(
        write_corpus(tmp_path / "ev2.jsonl", [
            [token("plant", "plant", "noun", ["plant%n:1"], "e.1")],
            [token("plant", "plant", "noun", ["plant%n:2"], "e.2")],
            [token("bank", "bank", "noun", ["bank%n:2"], "e.3")],
            [token("bank", "bank", "noun", ["bank%n:1"], "e.4")],
        ]),
        inventory,
    )
    freq = sense_frequencies(eval_c)
    part = build_partition(eval_c, freq, eval_c, inventory)
    preds = baseline_s1(eval_c, inventory)
    report = score(preds, eval_c, part)
    assert report.mfs.f1 == 100.0
    assert report.lfs.f1 == 0.0
