import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bisense.errors import DataError, FormatError
from bisense.tokenizer import (
    CLS,
    PAD,
    SEP,
    UNK,
    Vocab,
    build_vocab,
    encode,
    load_vocab,
    save_vocab,
)


def test_build_vocab_thresholding():
    v = build_vocab([["cat", "cat", "dog"]], min_freq=2)
    assert "cat" in v
    assert "dog" not in v
    for c in "catdog":
        assert c in v and ("##" + c) in v


def test_build_vocab_min_freq_one():
    v = build_vocab([["a"]], min_freq=1)
    assert "a" in v
    assert v.tokens[:4] == (PAD, UNK, CLS, SEP)


def test_build_vocab_deterministic_ids():
    texts = [["zebra", "apple", "apple", "bat"]]
    a = build_vocab(texts, min_freq=1)
    b = build_vocab(texts, min_freq=1)
    assert a.tokens == b.tokens
    # frequency desc then lexicographic within ties
    assert a.id_of["apple"] < a.id_of["bat"] < a.id_of["zebra"]


def test_build_vocab_empty_rejected():
    with pytest.raises(DataError):
        build_vocab([], min_freq=1)


def test_encode_empty_words():
    v = build_vocab([["x"]], min_freq=1)
    out = encode(v, [], max_len=8)
    assert out.ids == (Vocab.cls_id, Vocab.sep_id)
    assert out.word_spans == ()


def test_encode_whole_word_hit():
    v = build_vocab([["plant"]], min_freq=1)
    out = encode(v, ["plant"], max_len=8)
    assert out.ids == (Vocab.cls_id, v.id_of["plant"], Vocab.sep_id)
    assert out.word_spans == ((1, 2),)


def test_encode_greedy_longest_match():
    # vocab has "cat" and chars incl. ##s; "cats" falls back to cat + ##s
    v = build_vocab([["cat", "cat", "so"]], min_freq=2)
    assert "cats" not in v and "##s" in v
    out = encode(v, ["cats"], max_len=8)
    pieces = [v.tokens[i] for i in out.ids[1:-1]]
    assert pieces == ["cat", "##s"]
    assert out.word_spans == ((1, 3),)


def test_encode_unseen_character_becomes_unk():
    v = build_vocab([["ab"]], min_freq=1)
    out = encode(v, ["aqb"], max_len=8)
    pieces = [v.tokens[i] for i in out.ids[1:-1]]
    assert pieces == ["ab"] or pieces[0] == "a"
    # 'q' was never seen: its piece is [UNK]
    assert UNK in pieces


def test_encode_case_folds():
    v = build_vocab([["plant"]], min_freq=1)
    a = encode(v, ["Plant"], max_len=8)
    b = encode(v, ["plant"], max_len=8)
    assert a.ids == b.ids


def test_truncation_drops_whole_trailing_words():
    v = build_vocab([["aa", "bb", "cc"]], min_freq=1)
    out = encode(v, ["aa", "bb", "cc"], max_len=4)
    # room for [CLS] + 2 word pieces + [SEP]
    assert len(out.ids) == 4
    assert len(out.word_spans) == 2
    assert out.ids[-1] == Vocab.sep_id


def test_single_word_too_long_is_an_error():
    v = build_vocab([["abcdefgh"]], min_freq=2)  # word below threshold: chars only
    with pytest.raises(DataError):
        encode(v, ["abcdefgh"], max_len=4)


def test_encode_max_len_too_small():
    v = build_vocab([["a"]], min_freq=1)
    with pytest.raises(DataError):
        encode(v, ["a"], max_len=2)


def test_vocab_file_round_trip(tmp_path):
    v = build_vocab([["plant", "cats", "run"]], min_freq=1)
    path = tmp_path / "vocab.txt"
    save_vocab(v, path)
    v2 = load_vocab(path)
    assert v2.tokens == v.tokens


def test_vocab_file_reserved_lines_checked(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("foo\nbar\nbaz\nqux\n")
    with pytest.raises(FormatError):
        load_vocab(path)


words_strategy = st.lists(
    st.text(alphabet=st.characters(min_codepoint=97, max_codepoint=122), min_size=1, max_size=8),
    min_size=1,
    max_size=6,
)


@settings(deadline=None, max_examples=60)
@given(words=words_strategy)
def test_segmentation_reconstructs_word(words):
    v = build_vocab([words], min_freq=2)
    out = encode(v, words, max_len=64)
    assert len(out.word_spans) == len(words)
    for word, (j, k) in zip(words, out.word_spans):
        pieces = [v.tokens[i] for i in out.ids[j:k]]
        joined = "".join(p[2:] if p.startswith("##") else p for p in pieces)
        assert joined == word.casefold()
    # spans are ordered, non-overlapping, inside the specials
    flat = [i for span in out.word_spans for i in span]
    assert flat == sorted(flat)
    assert out.ids[0] == Vocab.cls_id and out.ids[-1] == Vocab.sep_id


@settings(deadline=None, max_examples=30)
@given(words=words_strategy)
def test_encode_is_pure(words):
    v = build_vocab([words], min_freq=1)
    assert encode(v, words, max_len=64) == encode(v, words, max_len=64)
