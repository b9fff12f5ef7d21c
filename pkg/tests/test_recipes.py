from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from varietymt.corpus import ParallelCorpus, Scenario, VarietyTag
from varietymt.errors import ConfigurationError, DoubleTagError, EmptyDataError
from varietymt.recipes import (Recipe, RecipeKind, ada_plan, build_training_set, label_pool,
                               load_training_set, prepend_variety_token)
from varietymt.subword import train_subword
from varietymt.synth import SynthConfig, generate, truth_table
from varietymt.varietyid import oracle_ensemble

A, B, U = VarietyTag.A, VarietyTag.B, VarietyTag.UNLABELED


def _data(scenario=Scenario.SEMI_SUPERVISED, seed=0, n=30):
    return generate(SynthConfig(vocab_size=30, n_pairs_a=n, n_pairs_b=n, divergence_rate=0.3,
                                n_dev=5, n_test=5, seed=seed, scenario=scenario))


@pytest.fixture(scope="module")
def semi():
    data, table = _data()
    sw = train_subword([data.labeled_a, data.labeled_b, data.unlabeled], 200)
    return data, table, sw


class _Fixed:
    """Ensemble stand-in that returns one decision for every sentence."""

    def __init__(self, tag):
        self.tag = tag

    def soft_fuse(self, _):
        return A if self.tag is U else self.tag

    def majority_abstain(self, _):
        return self.tag


@pytest.mark.parametrize("text, kind, variety", [
    ("gen", RecipeKind.GEN, None), ("Spec-A", RecipeKind.SPEC, A), ("ada:b", RecipeKind.ADA, B),
    ("M-C2", RecipeKind.MC2, None), ("mc3", RecipeKind.MC3, None), ("M-U", RecipeKind.MU, None),
])
def test_recipe_parse(text, kind, variety):
    r = Recipe.parse(text)
    assert (r.kind, r.variety) == (kind, variety)
    assert Recipe.parse(r.name) == r


@pytest.mark.parametrize("bad", ["spec", "mul-a", "zzz"])
def test_recipe_parse_rejects(bad):
    with pytest.raises(ConfigurationError):
        Recipe.parse(bad)


def test_prepend_token(semi):
    _, _, sw = semi
    pair = (sw.encode(["i", "go"]), sw.encode(["x"]))
    src, tgt = prepend_variety_token(pair, A, sw)
    assert sw.id_to_token[src[0]] == "<2A>" and list(src[1:]) == pair[0] and list(tgt) == pair[1]
    with pytest.raises(DoubleTagError):
        prepend_variety_token((src, tgt), B, sw)
    other, _ = prepend_variety_token(pair, B, sw)
    assert sw.id_to_token[other[0]] == "<2B>" and other[0] != src[0]


def test_gen_is_union_without_tokens(semi):
    data, _, sw = semi
    ts = build_training_set(data, "gen", sw)
    assert len(ts) == len(data.labeled_a) + len(data.labeled_b) + len(data.unlabeled)
    vids = set(sw.variety_ids.values())
    assert not any(src[0] in vids for src, _ in ts.examples)


def test_spec_uses_one_partition(semi):
    data, _, sw = semi
    ts = build_training_set(data, "spec-b", sw)
    assert ts.text_multiset() == Counter(p.key for p in data.labeled_b.pairs)
    assert not any(p.tokened for p in ts.provenance)


def test_supervised_mul_tokens_everything():
    data, _ = _data(Scenario.SUPERVISED)
    sw = train_subword([data.labeled_a, data.labeled_b], 200)
    ts = build_training_set(data, "mul", sw)
    assert len(ts) == len(data.labeled_a) + len(data.labeled_b)
    ids = sw.variety_ids
    for (src, _), prov in zip(ts.examples, ts.provenance):
        assert src[0] == ids[prov.tag.value]


def test_mu_adds_untokened_pool(semi):
    data, _, sw = semi
    mul = build_training_set(data, "mul", sw)
    mu = build_training_set(data, "mu", sw)
    extra = mu.example_multiset() - mul.example_multiset()
    assert sum(extra.values()) == len(data.unlabeled)
    assert sum(not p.tokened for p in mu.provenance) == len(data.unlabeled)


def test_mc2_has_no_untokened_examples(semi):
    data, _, sw = semi
    ts = build_training_set(data, "mc2", sw, ensemble=_Fixed(U))
    assert all(p.tokened for p in ts.provenance)


def test_mc3_abstentions_stay_untokened(semi):
    data, _, sw = semi
    ts = build_training_set(data, "mc3", sw, ensemble=_Fixed(U))
    assert ts.abstention_rate == 1.0
    assert sum(not p.tokened for p in ts.provenance) == len(data.unlabeled)


def test_mc2_oracle_equals_mul_on_restored_data(semi):
    data, _, sw = semi
    ra, rb = data.restored_corpora()
    full = replace(data, labeled_a=ParallelCorpus(ra), labeled_b=ParallelCorpus(rb),
                   unlabeled=ParallelCorpus([]), unlabeled_truth=[], scenario=Scenario.SUPERVISED)
    mul = build_training_set(full, "mul", sw, seed=3)
    mc2 = build_training_set(data, "mc2", sw, ensemble=oracle_ensemble(truth_table(data)), seed=9)
    assert mc2.example_multiset() == mul.example_multiset()


def test_missing_ensemble_and_empty_partition(semi):
    data, _, sw = semi
    with pytest.raises(ConfigurationError):
        build_training_set(data, "mc3", sw)
    unsup, _ = _data(Scenario.UNSUPERVISED)
    with pytest.raises(EmptyDataError):
        build_training_set(unsup, "spec-a", sw)


def test_precomputed_labels_match_ensemble(semi):
    data, _, sw = semi
    ens = oracle_ensemble(truth_table(data))
    labels = label_pool(data.unlabeled.pairs, ens, "soft")
    assert labels == data.unlabeled_truth
    a = build_training_set(data, "mc2", sw, ensemble=ens, seed=1)
    b = build_training_set(data, "mc2", sw, labels=labels, seed=1)
    assert a.examples == b.examples


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000))
def test_shuffle_preserves_multiset(semi, seed):
    data, _, sw = semi
    base = build_training_set(data, "mu", sw, seed=0)
    other = build_training_set(data, "mu", sw, seed=seed)
    assert base.example_multiset() == other.example_multiset()


def test_ada_plan_halves_steps():
    data, _ = _data(Scenario.SUPERVISED)
    plan = ada_plan(data, A, 1000)
    assert (plan.stage1.kind, plan.stage2.kind, plan.stage2_steps) == (RecipeKind.GEN, RecipeKind.SPEC, 500)
    semi_data, _ = _data()
    with pytest.raises(ConfigurationError):
        ada_plan(semi_data, A)


def test_save_load(semi, tmp_path):
    data, _, sw = semi
    ts = build_training_set(data, "mc3", sw, ensemble=oracle_ensemble(truth_table(data), 0.9))
    ts.save(tmp_path / "t.ids")
    again = load_training_set(tmp_path / "t.ids")
    assert again.examples == ts.examples and again.provenance == ts.provenance
    assert again.recipe == ts.recipe
