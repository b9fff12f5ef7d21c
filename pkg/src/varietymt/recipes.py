"""Training-set construction for the seven system configurations.

Gen and Spec train without variety tokens; Mul prepends the gold token of
each labeled pair; MU adds the unlabeled pool untokened; MC2 and MC3 tag the
unlabeled pool with a variety ensemble run on the target sentence (MC3 leaves
abstentions untokened).
"""

from __future__ import annotations

import enum
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import PartitionedDataset, Scenario, SentencePair, VarietyTag
from .errors import ConfigurationError, DoubleTagError, EmptyDataError, FormatError
from .subword import SubwordModel


class RecipeKind(enum.Enum):
    GEN = "gen"
    SPEC = "spec"
    ADA = "ada"
    MUL = "mul"
    MU = "mu"
    MC2 = "mc2"
    MC3 = "mc3"


@dataclass(frozen=True)
class Recipe:
    kind: RecipeKind
    variety: VarietyTag | None = None

    def __post_init__(self):
        needs_variety = self.kind in (RecipeKind.SPEC, RecipeKind.ADA)
        if needs_variety != (self.variety in (VarietyTag.A, VarietyTag.B)):
            raise ConfigurationError(f"recipe {self.kind.value} "
                                     f"{'needs' if needs_variety else 'takes no'} variety selector")

    @classmethod
    def parse(cls, text: str) -> "Recipe":
        """'gen', 'mul', 'mu', 'mc2', 'mc3', 'spec-a', 'ada:B', 'M-C2', ..."""
        key = text.strip().lower().replace("_", "-")
        variety = None
        for sep in (":", "-"):
            head, _, tail = key.partition(sep)
            if head in ("spec", "ada") and tail:
                key, variety = head, VarietyTag.parse(tail)
                break
        key = key.replace("-", "")
        try:
            return cls(RecipeKind(key), variety)
        except ValueError:
            raise ConfigurationError(f"unknown recipe {text!r}") from None

    @property
    def name(self) -> str:
        if self.variety is None:
            return self.kind.value
        return f"{self.kind.value}-{self.variety.value.lower()}"

    @property
    def uses_tokens(self) -> bool:
        return self.kind in (RecipeKind.MUL, RecipeKind.MU, RecipeKind.MC2, RecipeKind.MC3)


@dataclass(frozen=True)
class Provenance:
    origin: str           # labeled_a | labeled_b | unlabeled
    tag: VarietyTag       # gold or assigned label; UNLABELED when none
    tokened: bool
    abstained: bool = False


@dataclass
class TrainingSet:
    recipe: Recipe
    examples: list[tuple[tuple[int, ...], tuple[int, ...]]]
    provenance: list[Provenance]
    pairs: list[SentencePair] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def abstention_rate(self) -> float:
        pool = [p for p in self.provenance if p.origin == "unlabeled"]
        return sum(p.abstained for p in pool) / len(pool) if pool else 0.0

    def text_multiset(self) -> Counter:
        return Counter(p.key for p in self.pairs)

    def example_multiset(self) -> Counter:
        return Counter(self.examples)

    def save(self, path) -> None:
        save_training_set(self, path)


def prepend_variety_token(pair: tuple[Sequence[int], Sequence[int]], tag: VarietyTag,
                          model: SubwordModel) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Put the variety token at source position 0; the target is untouched."""
    if tag not in (VarietyTag.A, VarietyTag.B):
        raise ConfigurationError("only A or B can be forced")
    ids = model.variety_ids
    if tag.value not in ids:
        raise ConfigurationError(f"subword model has no token for variety {tag.value}")
    src, tgt = pair
    if len(src) and src[0] in set(ids.values()):
        raise DoubleTagError("source already starts with a variety token")
    return (ids[tag.value],) + tuple(src), tuple(tgt)


def _label_unlabeled(pairs: Sequence[SentencePair], ensemble, mode: str, threads: int) -> list[VarietyTag]:
    fn = ensemble.soft_fuse if mode == "soft" else ensemble.majority_abstain
    texts = [" ".join(p.target) for p in pairs]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, texts))
    return [fn(t) for t in texts]


def label_pool(pairs: Sequence[SentencePair], ensemble, mode: str = "soft",
               threads: int = 1) -> list[VarietyTag]:
    """Classify target sentences: mode 'soft' (MC2) or 'majority' (MC3)."""
    if mode not in ("soft", "majority"):
        raise ConfigurationError(f"unknown labeling mode {mode!r}")
    return _label_unlabeled(pairs, ensemble, mode, threads)


def build_training_set(data: PartitionedDataset, recipe: Recipe | str, subword: SubwordModel,
                       ensemble=None, seed: int = 0, threads: int = 1,
                       labels: Sequence[VarietyTag] | None = None) -> TrainingSet:
    """Assemble and shuffle the examples of one recipe.

    ``labels`` may carry precomputed ensemble decisions for the unlabeled pool
    (as written by the labeling stage); otherwise ``ensemble`` is consulted.
    """
    if isinstance(recipe, str):
        recipe = Recipe.parse(recipe)
    kind = recipe.kind
    A, B, U = VarietyTag.A, VarietyTag.B, VarietyTag.UNLABELED
    items: list[tuple[SentencePair, Provenance]] = []

    def add(pairs, origin, tag, tokened, abstained=False):
        items.extend((p, Provenance(origin, tag, tokened, abstained)) for p in pairs)

    unlabeled = data.unlabeled.pairs
    if kind is RecipeKind.GEN:
        add(data.labeled_a.pairs, "labeled_a", A, False)
        add(data.labeled_b.pairs, "labeled_b", B, False)
        add(unlabeled, "unlabeled", U, False)
    elif kind in (RecipeKind.SPEC, RecipeKind.ADA):
        part = data.labeled_a if recipe.variety is A else data.labeled_b
        if not len(part):
            raise EmptyDataError(f"no labeled training data for variety {recipe.variety.value}")
        add(part.pairs, "labeled_a" if recipe.variety is A else "labeled_b", recipe.variety, False)
    else:
        if kind is RecipeKind.MUL and not (len(data.labeled_a) and len(data.labeled_b)):
            raise EmptyDataError("Mul needs labeled data for both varieties")
        add(data.labeled_a.pairs, "labeled_a", A, True)
        add(data.labeled_b.pairs, "labeled_b", B, True)
        if kind is not RecipeKind.MUL:
            if not unlabeled and data.labeled_fraction != 1:
                raise EmptyDataError(f"{recipe.name} needs a non-empty unlabeled pool")
            if kind is RecipeKind.MU:
                add(unlabeled, "unlabeled", U, False)
            else:
                if labels is None:
                    if ensemble is None:
                        raise ConfigurationError(f"{recipe.name} needs a variety ensemble")
                    mode = "soft" if kind is RecipeKind.MC2 else "majority"
                    labels = label_pool(unlabeled, ensemble, mode, threads)
                if len(labels) != len(unlabeled):
                    raise ConfigurationError("label count does not match the unlabeled pool")
                for pair, tag in zip(unlabeled, labels):
                    if kind is RecipeKind.MC2 and tag is U:
                        raise ConfigurationError("MC2 labels must be A or B")
                    items.append((pair, Provenance("unlabeled", tag, tag is not U, tag is U)))

    random.Random(seed).shuffle(items)
    examples, provenance, pairs = [], [], []
    for pair, prov in items:
        ex = (tuple(subword.encode(pair.source)), tuple(subword.encode(pair.target)))
        if prov.tokened:
            ex = prepend_variety_token(ex, prov.tag, subword)
        examples.append(ex)
        provenance.append(prov)
        pairs.append(pair)
    return TrainingSet(recipe, examples, provenance, pairs)


@dataclass(frozen=True)
class AdaPlan:
    variety: VarietyTag
    stage1: Recipe
    stage2: Recipe
    stage1_steps: int
    stage2_steps: int


def ada_plan(data: PartitionedDataset, variety: VarietyTag, stage1_steps: int = 1000) -> AdaPlan:
    """Generic model first, then continued training on one variety for half the steps."""
    if data.scenario is not Scenario.SUPERVISED:
        raise ConfigurationError("adaptation is defined for the supervised scenario")
    if variety not in (VarietyTag.A, VarietyTag.B):
        raise ConfigurationError("adaptation targets variety A or B")
    return AdaPlan(variety, Recipe(RecipeKind.GEN), Recipe(RecipeKind.SPEC, variety),
                   stage1_steps, max(1, stage1_steps // 2))


# -- persistence ---------------------------------------------------------------

def save_training_set(ts: TrainingSet, path) -> None:
    """``path`` gets the ids file; ``path.prov`` the provenance sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for src, tgt in ts.examples:
            fh.write(" ".join(map(str, src)) + "\t" + " ".join(map(str, tgt)) + "\n")
    with open(f"{path}.prov", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#recipe={ts.recipe.name}\n")
        for p in ts.provenance:
            fh.write(f"{p.origin}\t{p.tag.value}\t{int(p.tokened)}\t{int(p.abstained)}\n")


def load_training_set(path) -> TrainingSet:
    path = Path(path)
    examples = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        try:
            src, tgt = line.split("\t")
            examples.append((tuple(int(x) for x in src.split()), tuple(int(x) for x in tgt.split())))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: expected 'src ids<TAB>tgt ids'") from None
    lines = Path(f"{path}.prov").read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#recipe="):
        raise FormatError(f"{path}.prov: missing recipe header")
    recipe = Recipe.parse(lines[0].split("=", 1)[1])
    provenance = []
    for lineno, line in enumerate(lines[1:], start=2):
        cols = line.split("\t")
        if len(cols) != 4:
            raise FormatError(f"{path}.prov:{lineno}: expected 4 columns")
        provenance.append(Provenance(cols[0], VarietyTag.parse(cols[1]), cols[2] == "1", cols[3] == "1"))
    if len(provenance) != len(examples):
        raise FormatError(f"{path}: {len(examples)} examples but {len(provenance)} provenance lines")
    return TrainingSet(recipe, examples, provenance)
