from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from varietymt.corpus import (ParallelCorpus, Scenario, SentencePair, VarietyTag, drop_empty,
                              filter_by_length, load_dataset, load_parallel, partition,
                              save_dataset, tokenize, transliterate_sr_cyrillic_to_latin,
                              validate_dataset)
from varietymt.errors import AlignmentError, ContaminationError, FormatError


def _write(path, lines):
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    return path


def _corpus(prefix, n, tag=VarietyTag.UNLABELED):
    return ParallelCorpus([SentencePair((f"{prefix}{i}",), (f"t{prefix}{i}",), tag) for i in range(n)])


# tokenization

def test_tokenize_examples():
    assert tokenize("I'm going, now.") == ["I'm", "going", ",", "now", "."]
    assert tokenize("") == []
    assert tokenize("abc") == ["abc"]
    assert tokenize("«Olá!»") == ["«", "Olá", "!", "»"]


@given(st.text(alphabet=st.sampled_from("ab ,.!'-é«"), max_size=40))
def test_tokenize_is_idempotent_on_its_output(text):
    toks = tokenize(text)
    assert tokenize(" ".join(toks)) == toks
    assert all(t and not any(c.isspace() for c in t) for t in toks)


# transliteration

@pytest.mark.parametrize("cyr, lat", [
    ("Београд", "Beograd"),
    ("Љиљана", "Ljiljana"),
    ("Џеп", "Džep"),
    ("ђак ћерка жена шума чаша", "đak ćerka žena šuma čaša"),
    ("Њујорк", "Njujork"),
])
def test_serbian_transliteration(cyr, lat):
    assert transliterate_sr_cyrillic_to_latin(cyr) == lat


@given(st.text(alphabet=st.sampled_from("abcdefghijklmnopqrstuvwxyzDžčćđšžABC ")))
def test_transliteration_leaves_latin_alone(text):
    assert transliterate_sr_cyrillic_to_latin(text) == text


def test_transliteration_latin_example():
    assert transliterate_sr_cyrillic_to_latin("Džungla") == "Džungla"


# loading

def test_load_parallel_keeps_order(tmp_path):
    s = _write(tmp_path / "s", ["a b", "c", "d e f"])
    t = _write(tmp_path / "t", ["x", "y y", "z"])
    c = load_parallel(s, t, VarietyTag.A)
    assert [p.source for p in c] == [("a", "b"), ("c",), ("d", "e", "f")]
    assert all(p.tag is VarietyTag.A for p in c)


def test_load_parallel_mismatch_names_counts(tmp_path):
    s = _write(tmp_path / "s", list("abcde"))
    t = _write(tmp_path / "t", list("abcd"))
    with pytest.raises(AlignmentError, match="5 vs 4"):
        load_parallel(s, t, VarietyTag.A)


def test_load_parallel_empty(tmp_path):
    (tmp_path / "s").write_bytes(b"")
    (tmp_path / "t").write_bytes(b"")
    assert len(load_parallel(tmp_path / "s", tmp_path / "t", VarietyTag.B)) == 0


def test_bad_utf8_reports_line(tmp_path):
    (tmp_path / "s").write_bytes(b"ok\nbad \xff\n")
    _write(tmp_path / "t", ["a", "b"])
    with pytest.raises(FormatError, match=":2:"):
        load_parallel(tmp_path / "s", tmp_path / "t", VarietyTag.A)


def test_transliterate_target_on_load(tmp_path):
    s = _write(tmp_path / "s", ["Belgrade"])
    t = _write(tmp_path / "t", ["Београд"])
    assert load_parallel(s, t, VarietyTag.B, transliterate_target=True).pairs[0].target == ("Beograd",)


# filtering

def test_length_filter_boundary():
    keep = SentencePair(("s",) * 10, ("t",) * 70)
    drop = SentencePair(("s",) * 71, ("t",) * 5)
    out = filter_by_length(ParallelCorpus([keep, drop]), 70)
    assert out.pairs == [keep]
    assert len(filter_by_length(ParallelCorpus([]), 70)) == 0


def test_drop_empty():
    c = ParallelCorpus([SentencePair((), ("a",)), SentencePair(("a",), ("b",))])
    assert len(drop_empty(c)) == 1


# partitioning

def test_two_thirds_of_table_2_row():
    data = partition(_corpus("a", 234_000), _corpus("b", 3), _corpus("da", 0), _corpus("db", 0),
                     _corpus("ta", 0), _corpus("tb", 0), Scenario.SEMI_SUPERVISED, Fraction(2, 3))
    assert len(data.labeled_a) == 156_000


def test_nine_plus_nine_split_is_stable():
    args = (_corpus("a", 9), _corpus("b", 9), _corpus("da", 1), _corpus("db", 1),
            _corpus("ta", 1), _corpus("tb", 1), Scenario.SEMI_SUPERVISED, "2/3", 5)
    d1, d2 = partition(*args), partition(*args)
    assert (len(d1.labeled_a), len(d1.labeled_b), len(d1.unlabeled)) == (6, 6, 6)
    assert d1 == d2
    validate_dataset(d1)


def test_supervised_has_no_unlabeled():
    d = partition(_corpus("a", 7), _corpus("b", 4), _corpus("da", 1), _corpus("db", 1),
                  _corpus("ta", 1), _corpus("tb", 1), Scenario.SUPERVISED, "1/3")
    assert len(d.unlabeled) == 0 and len(d.labeled_a) == 7


def test_unsupervised_pools_everything():
    d = partition(_corpus("a", 7), _corpus("b", 4), _corpus("da", 1), _corpus("db", 1),
                  _corpus("ta", 1), _corpus("tb", 1), Scenario.UNSUPERVISED, "2/3")
    assert len(d.unlabeled) == 11 and not len(d.labeled_a) and not len(d.labeled_b)
    assert d.unlabeled_truth == [VarietyTag.A] * 7 + [VarietyTag.B] * 4


def test_contamination_lists_pairs():
    leak = _corpus("a", 3)
    with pytest.raises(ContaminationError) as err:
        partition(leak, _corpus("b", 3), ParallelCorpus(leak.pairs[:1]), _corpus("db", 1),
                  _corpus("ta", 1), _corpus("tb", 1))
    assert err.value.pairs == [leak.pairs[0].key]


@settings(max_examples=40, deadline=None)
@given(na=st.integers(0, 40), nb=st.integers(0, 40), num=st.integers(0, 6), seed=st.integers(0, 99))
def test_partition_conserves_pairs(na, nb, num, seed):
    frac = Fraction(num, 6)
    a, b = _corpus("a", na), _corpus("b", nb)
    d = partition(a, b, _corpus("da", 1), _corpus("db", 1), _corpus("ta", 1), _corpus("tb", 1),
                  Scenario.SEMI_SUPERVISED, frac, seed)
    ra, rb = d.restored_corpora()
    assert sorted(p.key for p in ra) == sorted(p.key for p in a)
    assert sorted(p.key for p in rb) == sorted(p.key for p in b)
    assert len(d.labeled_a) == int(frac * na + Fraction(1, 2))
    assert all(p.tag is VarietyTag.UNLABELED for p in d.unlabeled)
    validate_dataset(d)


def test_dataset_round_trip(tmp_path):
    d = partition(_corpus("a", 9), _corpus("b", 5), _corpus("da", 2), _corpus("db", 2),
                  _corpus("ta", 2), _corpus("tb", 2), Scenario.SEMI_SUPERVISED, "2/3", 3)
    save_dataset(d, tmp_path / "ds")
    assert load_dataset(tmp_path / "ds") == d
