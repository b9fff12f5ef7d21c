import pytest
from hypothesis import given, settings, strategies as st

from varietymt.corpus import Scenario, VarietyTag, load_dataset
from varietymt.errors import ConfigurationError
from varietymt.synth import SynthConfig, VariantTable, generate, truth_table, write_synthetic
from varietymt.varietyid import roc_auc

A, B = VarietyTag.A, VarietyTag.B


def _cfg(**kw):
    base = dict(vocab_size=40, n_pairs_a=60, n_pairs_b=60, n_dev=10, n_test=20, seed=2)
    base.update(kw)
    return SynthConfig(**base)


def test_zero_divergence_makes_varieties_identical():
    data, table = generate(_cfg(divergence_rate=0.0))
    assert not table.variants
    for p in data.test_a.pairs:
        assert table.translate(p.source, A) == table.translate(p.source, B) == p.target


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), rate=st.sampled_from([0.1, 0.3, 0.5]))
def test_translation_oracle_and_forms(seed, rate):
    data, table = generate(_cfg(seed=seed, divergence_rate=rate))
    ra, rb = data.restored_corpora()
    for pairs, tag in ((ra, A), (rb, B), (data.dev_a.pairs, A), (data.test_b.pairs, B)):
        for p in pairs:
            assert table.translate(p.source, tag) == p.target
            assert not set(p.target) & table.forms(B if tag is A else A)
    assert all(a != b for a, b in table.variants.values())
    assert len(table.variants) == round(rate * 40)


def test_side_channel_matches_generation():
    data, table = generate(_cfg(divergence_rate=0.5))
    for p, tag in zip(data.unlabeled.pairs, data.unlabeled_truth):
        assert table.translate(p.source, tag) == p.target


def test_splits_are_disjoint():
    data, _ = generate(_cfg())
    sources = [p.source for name in ("labeled_a", "labeled_b", "unlabeled", "dev_a", "dev_b",
                                     "test_a", "test_b") for p in getattr(data, name).pairs]
    assert len(sources) == len(set(sources))


def test_generation_is_deterministic():
    assert generate(_cfg(seed=5)) == generate(_cfg(seed=5))
    assert generate(_cfg(seed=5))[1] != generate(_cfg(seed=6))[1]


def test_table_lookup_classifier_is_perfect():
    data, table = generate(_cfg(n_pairs_a=0, n_pairs_b=0, n_test=300, vocab_size=100,
                                divergence_rate=0.15))
    held = [p for p in data.test_a.pairs + data.test_b.pairs if table.slot_counts(p.target, p.tag)[1]]
    assert roc_auc([table.score_b(p.target) for p in held], [p.tag for p in held]) == 1.0


def test_truth_table_covers_all_targets():
    data, _ = generate(_cfg())
    truth = truth_table(data)
    assert all(truth[" ".join(p.target)] is A for p in data.test_a.pairs)
    assert len(truth) >= len(data.unlabeled)


def test_write_and_reload(tmp_path):
    data, table = write_synthetic(_cfg(scenario=Scenario.SUPERVISED), tmp_path)
    assert load_dataset(tmp_path) == data
    assert VariantTable.load(tmp_path) == table


@pytest.mark.parametrize("kw", [dict(vocab_size=1), dict(divergence_rate=1.5),
                                dict(sentence_len_range=(5, 2))])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        _cfg(**kw)


def test_impossible_uniqueness_is_rejected():
    with pytest.raises(ConfigurationError):
        generate(_cfg(vocab_size=2, sentence_len_range=(1, 2)))
