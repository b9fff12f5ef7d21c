import math

import pytest
from hypothesis import given, settings, strategies as st

from oracles import bleu_oracle
from varietymt.corpus import VarietyTag
from varietymt.errors import AlignmentError, ConfigurationError, EmptyDataError, UndefinedMetricError
from varietymt.evaluation import (TSV_HEADER, corpus_bleu, paired_bootstrap, resample_indices,
                                  variety_consistency, write_report, write_tsv)
from varietymt.synth import VariantTable
from varietymt.varietyid import oracle_ensemble

A, B = VarietyTag.A, VarietyTag.B
sentences = st.lists(st.sampled_from("a b c d e f".split()), min_size=0, max_size=9)


def test_hand_derived_example():
    r = corpus_bleu([["a", "b", "c", "d"]], [["a", "b", "c", "d", "e"]])
    assert r.precisions == (1.0, 1.0, 1.0, 1.0)
    assert abs(r.brevity_penalty - math.exp(-0.25)) < 1e-12
    assert abs(r.bleu - 100 * math.exp(-0.25)) < 1e-6
    assert round(r.bleu, 2) == 77.88


def test_zero_precision_gives_zero():
    assert corpus_bleu([["x"] * 4], [list("abcd")]).bleu == 0.0


def test_bleu_errors():
    with pytest.raises(AlignmentError):
        corpus_bleu([["a"]], [])
    with pytest.raises(EmptyDataError):
        corpus_bleu([], [])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(sentences, sentences), min_size=1, max_size=8))
def test_bleu_matches_oracle(pairs):
    hyps, refs = [h for h, _ in pairs], [r for _, r in pairs]
    assert corpus_bleu(hyps, refs).bleu == pytest.approx(bleu_oracle(hyps, refs), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.sampled_from("xyzw"), min_size=4, max_size=9), min_size=1, max_size=6))
def test_identity_is_100(corpus):
    assert corpus_bleu(corpus, corpus).bleu == pytest.approx(100.0)


def _systems(n=120):
    refs = [[f"w{i}", f"w{i + 1}", f"w{i + 2}", f"w{i + 3}", "end"] for i in range(n)]
    garbage = [["zz", "yy", "xx", "qq", "end"] for _ in refs]
    return refs, garbage


def test_identical_systems_never_significant():
    refs, _ = _systems()
    r = paired_bootstrap(refs, refs, refs, n_resamples=200, seed=4)
    assert (r.delta_bleu, r.wins, r.significant) == (0.0, 0, False)


def test_perfect_vs_garbage_is_significant():
    refs, garbage = _systems()
    r = paired_bootstrap(refs, garbage, refs, n_resamples=1000, seed=1)
    assert r.p_value < 0.05 and r.significant and r.better == "x"
    flipped = paired_bootstrap(garbage, refs, refs, n_resamples=1000, seed=1)
    assert flipped.better == "y" and flipped.significant


def test_bootstrap_is_deterministic_and_thread_invariant():
    refs, garbage = _systems()
    mixed = [r if i % 3 else g for i, (r, g) in enumerate(zip(refs, garbage))]
    r1 = paired_bootstrap(mixed, garbage, refs, n_resamples=300, seed=7)
    r2 = paired_bootstrap(mixed, garbage, refs, n_resamples=300, seed=7, threads=4)
    assert r1 == r2
    assert resample_indices(7, 3, 50).tolist() == resample_indices(7, 3, 50).tolist()


def test_bootstrap_rejects_bad_arguments():
    refs, garbage = _systems()
    with pytest.raises(AlignmentError):
        paired_bootstrap(refs, garbage[:-1], refs)
    with pytest.raises(ConfigurationError):
        paired_bootstrap(refs, garbage, refs, n_resamples=50)


TABLE = VariantTable({"s1": "t1", "s2": "t2"}, {"t1": ("ta", "tb"), "t2": ("ua", "ub")})


def test_consistency_table_mode():
    assert variety_consistency([["ta", "x", "ua"]], TABLE, A) == 1.0
    assert variety_consistency([["ta", "ub"], ["x"]], TABLE, A) == 0.5
    assert variety_consistency([["ta", "ub"], ["tb"]], TABLE, B) == pytest.approx(2 / 3)
    with pytest.raises(UndefinedMetricError):
        variety_consistency([["x", "y"]], TABLE, A)


def test_consistency_ensemble_mode():
    ens = oracle_ensemble({"p q": A, "r s": B})
    assert variety_consistency([["p", "q"], ["r", "s"]], ens, B) == 0.5


def test_report_files(tmp_path):
    write_tsv([("mul", "test_a", "bleu", 12.5), ("mul", "test_a", "n", 3)], tmp_path / "m.tsv")
    assert (tmp_path / "m.tsv").read_text() == TSV_HEADER + "mul\ttest_a\tbleu\t12.500000\nmul\ttest_a\tn\t3\n"
    write_report({"p": 0.25, "ok": True}, tmp_path / "r.txt")
    assert (tmp_path / "r.txt").read_text() == "p=0.250000\nok=True\n"
