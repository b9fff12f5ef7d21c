import pytest
from hypothesis import given, settings, strategies as st

from varietymt.corpus import ParallelCorpus, SentencePair
from varietymt.errors import ConfigurationError
from varietymt.subword import (EOS, EOW, PAD, SubwordModel, desegment, segment, train_subword,
                               train_subword_from_counts)

TOY = {"low": 5, "lower": 2, "newest": 6, "widest": 3}


def _floor(counts, n_varieties=2):
    return 4 + n_varieties + len({c for w in counts for c in w}) + 1


def _replay(merges, word):
    # textbook application: walk the merge list once, in learned order
    syms = list(word) + [EOW]
    for a, b in merges:
        out, i = [], 0
        while i < len(syms):
            if i + 1 < len(syms) and syms[i] == a and syms[i + 1] == b:
                out.append(a + b)
                i += 2
            else:
                out.append(syms[i])
                i += 1
        syms = out
    return tuple(syms)


def test_first_merge_on_toy_corpus():
    m = train_subword_from_counts(TOY, _floor(TOY) + 1)
    assert m.merges == [("e", "s")]
    # e-s frequency by hand: newest 6 + widest 3
    assert sum(c * sum(1 for x, y in zip(w, w[1:]) if (x, y) == ("e", "s")) for w, c in TOY.items()) == 9


def test_only_repeated_pair_merges_first():
    m = train_subword_from_counts({"ab": 3, "c": 1, "d": 1}, _floor({"abcd": 1}) + 1)
    assert m.merges[0] == ("a", "b")


def test_lowest_by_hand():
    m = train_subword_from_counts(TOY, _floor(TOY) + 5)
    assert m.merges == [("e", "s"), ("es", "t"), ("est", EOW), ("l", "o"), ("lo", "w")]
    assert m.segment_token("lowest") == ("low", "est" + EOW)


def test_floor_budget_gives_character_model():
    m = train_subword_from_counts(TOY, _floor(TOY))
    assert m.merges == []
    assert m.segment_token("low") == ("l", "o", "w", EOW)


def test_too_small_budget_names_floor():
    with pytest.raises(ConfigurationError, match=str(_floor(TOY))):
        train_subword_from_counts(TOY, _floor(TOY) - 1)


def test_full_vocab_entry_is_one_unit():
    m = train_subword_from_counts(TOY, 200)
    assert m.segment_token("newest") == ("newest" + EOW,)


def test_unknown_chars_become_unk():
    m = train_subword_from_counts(TOY, 40)
    assert m.unk_id in m.encode(["zzz"])


def test_specials_are_dropped_on_desegment():
    assert desegment([PAD, "lo", "w" + EOW, EOS, "<2A>"]) == ["low"]
    assert desegment([]) == []


def test_variety_tokens_have_distinct_ids():
    m = train_subword_from_counts(TOY, 40)
    ids = m.variety_ids
    assert set(ids) == {"A", "B"} and ids["A"] != ids["B"]
    assert m.pad_id == 0


@settings(max_examples=30, deadline=None)
@given(words=st.dictionaries(st.text("abcdeé", min_size=1, max_size=8), st.integers(1, 9), min_size=1),
       extra=st.integers(0, 40))
def test_incremental_training_matches_replay(words, extra):
    m = train_subword_from_counts(words, _floor(words) + extra)
    for w in words:
        assert m.segment_token(w) == _replay(m.merges, w)
        assert desegment(list(m.segment_token(w))) == [w]
    assert len(m) <= _floor(words) + extra


@settings(max_examples=20, deadline=None)
@given(st.lists(st.lists(st.text("abcxyz'", min_size=1, max_size=6), max_size=8), max_size=10))
def test_segment_round_trip(sentences):
    corpus = ParallelCorpus([SentencePair(tuple(s), tuple(s)) for s in sentences if s])
    if not len(corpus):
        return
    m = train_subword([corpus], 60)
    for s in sentences:
        assert desegment(segment(m, s)) == s
        assert m.decode(m.encode(s)) == s


def test_save_load_bit_exact(tmp_path):
    m = train_subword_from_counts(TOY, 30)
    m.save(tmp_path / "m")
    again = SubwordModel.load(tmp_path / "m")
    assert again == m
    again.save(tmp_path / "m2")
    assert (tmp_path / "m").read_bytes() == (tmp_path / "m2").read_bytes()
