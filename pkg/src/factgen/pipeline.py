"""Dataset-construction pipeline over entity-linked sentences.

Stages: date surfaces are mapped to bare years; distant supervision pairs
every two linked mentions and keeps the relations the KB knows for them; an
entailment scorer filters triples the sentence does not actually express
(max score over one or more templated hypotheses, strict ``> threshold``
comparison); negative examples are sampled evenly from the two categories
(at most one linked mention / several mentions but no surviving facts); and
the result is split 90/5/5 by default.

DS extraction and filtering are pure per-sentence functions; sampling and
splitting are seed-deterministic.
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence, TypeVar

from .kb import KbStore, Triple, is_year_literal
from .linearize import LinkedSentence, order_triples
from .scorers import NliScorer

logger = logging.getLogger(__name__)

DEFAULT_ENTAIL_THRESHOLD = 0.7
DEFAULT_SPLIT = (0.90, 0.05, 0.05)
MIN_SENTENCE_WORDS = 10

_MONTHS = (
    "January|February|March|April|May|June|July|August|September|October"
    "|November|December"
)
_DATE_PATTERNS = (
    # "October 10, 2018"
    re.compile(rf"^(?:{_MONTHS}) [0-9]{{1,2}}, ([0-9]{{1,4}})$", re.IGNORECASE),
    # "10 October 2018"
    re.compile(rf"^[0-9]{{1,2}} (?:{_MONTHS}) ([0-9]{{1,4}})$", re.IGNORECASE),
    # "2018-10-10"
    re.compile(r"^([0-9]{1,4})-[0-9]{2}-[0-9]{2}$"),
    # bare year
    re.compile(r"^([0-9]{1,4})$"),
)

T = TypeVar("T")


class PipelineError(Exception):
    pass


class TemplateError(PipelineError):
    pass


class SamplingError(PipelineError):
    pass


class SplitError(PipelineError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    entail_threshold: float = DEFAULT_ENTAIL_THRESHOLD
    negative_fraction: float = 0.5
    split: tuple[float, float, float] = DEFAULT_SPLIT
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.entail_threshold <= 1.0:
            raise ValueError("entail_threshold must lie in [0, 1]")
        if not 0.0 <= self.negative_fraction < 1.0:
            raise ValueError("negative_fraction must lie in [0, 1)")
        if not math.isclose(sum(self.split), 1.0, abs_tol=1e-9):
            raise ValueError(f"split ratios must sum to 1, got {self.split}")


def map_date_to_year(surface: str) -> str | None:
    """Extract the year from a recognized date surface form, else None.

    Recognized forms: "Month D, YYYY", "D Month YYYY", "YYYY-MM-DD" and a
    bare year of one to four digits.
    """
    surface = surface.strip()
    for pattern in _DATE_PATTERNS:
        match = pattern.match(surface)
        if match:
            return match.group(1)
    return None


def extract_ds_triples(sentence: LinkedSentence, kb: KbStore) -> list[Triple]:
    """Distant supervision: KB relations over every ordered mention pair.

    Heads must be entity links; tails may be entities or year literals.
    The result is deduplicated and ordered by appearance in the sentence.
    """
    spans = sentence.linked_spans()
    seen: set[Triple] = set()
    triples: list[Triple] = []
    for head_span in spans:
        if head_span.is_year:
            continue
        for tail_span in spans:
            if tail_span is head_span:
                continue
            for pid in sorted(kb.relations_between(head_span.link, tail_span.link)):
                triple = Triple(head_span.link, pid, tail_span.link)
                if triple not in seen:
                    seen.add(triple)
                    triples.append(triple)
    return order_triples(triples, sentence)


@dataclass
class HypothesisTemplates:
    """Per-relation hypothesis templates for entailment filtering.

    Templates contain ``{head}`` and ``{tail}`` placeholders. Relations
    without a custom template fall back to "<head label> <relation label>
    <tail label>." unless ``use_default`` is off, in which case a missing
    relation is an error.
    """

    by_pid: dict[str, list[str]]
    use_default: bool = True

    def __post_init__(self) -> None:
        for pid, templates in self.by_pid.items():
            if not templates:
                raise TemplateError(f"relation {pid} has an empty template list")
            for template in templates:
                if "{head}" not in template or "{tail}" not in template:
                    raise TemplateError(
                        f"template for {pid} must contain {{head}} and {{tail}}: "
                        f"{template!r}"
                    )

    @classmethod
    def load(cls, path: str, use_default: bool = True) -> "HypothesisTemplates":
        """Read a JSONL file of ``{"pid": ..., "templates": [...]}`` rows."""
        by_pid: dict[str, list[str]] = {}
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    by_pid[row["pid"]] = list(row["templates"])
                except (KeyError, ValueError) as exc:
                    raise TemplateError(f"{path}:{lineno}: {exc}") from None
        return cls(by_pid, use_default=use_default)

    def _label(self, kb: KbStore, value: str) -> str:
        label = kb.entity_label(value)
        if label is not None:
            return label
        if is_year_literal(value):
            return value
        raise TemplateError(f"cannot resolve {value!r} for hypothesis rendering")

    def hypotheses_for(self, triple: Triple, kb: KbStore) -> list[str]:
        head = self._label(kb, triple.head)
        tail = self._label(kb, triple.tail)
        custom = self.by_pid.get(triple.relation)
        if custom:
            try:
                return [t.format(head=head, tail=tail) for t in custom]
            except (KeyError, IndexError) as exc:
                raise TemplateError(
                    f"bad placeholder in template for {triple.relation}: {exc}"
                ) from None
        if not self.use_default:
            raise TemplateError(f"no template for relation {triple.relation}")
        relation = kb.relation_label(triple.relation)
        if relation is None:
            raise TemplateError(f"unknown relation {triple.relation!r}")
        return [f"{head} {relation} {tail}."]


@dataclass(frozen=True)
class ScoredTriple:
    triple: Triple
    score: float


def entailment_filter(
    sentence: LinkedSentence,
    triples: Sequence[Triple],
    templates: HypothesisTemplates,
    scorer: NliScorer,
    threshold: float,
    kb: KbStore,
) -> list[ScoredTriple]:
    """Keep triples whose best hypothesis the sentence entails.

    Each triple's score is the maximum entailment probability over its
    rendered hypotheses (sentence text as premise); triples survive only
    with score strictly above the threshold. Input order is preserved.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    kept = []
    for triple in triples:
        hypotheses = templates.hypotheses_for(triple, kb)
        score = max(scorer.entail(sentence.text, h) for h in hypotheses)
        if score > threshold:
            kept.append(ScoredTriple(triple, score))
    return kept


def negative_category(
    sentence: LinkedSentence,
    kb: KbStore,
    triple_counts: Mapping[str, int] | None = None,
) -> int | None:
    """1 for at-most-one-mention negatives, 2 for no-facts negatives.

    Returns None for sentences that still bear triples. When post-filter
    triple counts (keyed by sentence id) are available they decide category
    2; otherwise raw DS extraction does.
    """
    linked = sentence.linked_spans()
    if len(linked) <= 1:
        return 1
    if triple_counts is not None and sentence.id is not None:
        has_triples = triple_counts.get(sentence.id, 0) > 0
    else:
        has_triples = bool(extract_ds_triples(sentence, kb))
    return None if has_triples else 2


def sample_negatives(
    corpus: Sequence[LinkedSentence],
    kb: KbStore,
    count: int,
    seed: int,
    triple_counts: Mapping[str, int] | None = None,
) -> list[LinkedSentence]:
    """Sample negatives evenly from the two categories, without replacement.

    Asks for ``ceil(count / 2)`` category-1 and ``floor(count / 2)``
    category-2 sentences; a short category is backfilled from the other
    (logged). Too few candidates overall is an error stating the shortfall.
    Returned sentences are marked negative.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return []
    category_one = []
    category_two = []
    for sentence in corpus:
        category = negative_category(sentence, kb, triple_counts)
        if category == 1:
            category_one.append(sentence)
        elif category == 2:
            category_two.append(sentence)
    total = len(category_one) + len(category_two)
    if total < count:
        raise SamplingError(
            f"requested {count} negatives but only {total} candidates exist "
            f"(category 1: {len(category_one)}, category 2: {len(category_two)})"
        )
    want_one = (count + 1) // 2
    want_two = count // 2
    if len(category_one) < want_one:
        shortfall = want_one - len(category_one)
        logger.warning(
            "category 1 is short by %d negatives; backfilling from category 2",
            shortfall,
        )
        want_one -= shortfall
        want_two += shortfall
    elif len(category_two) < want_two:
        shortfall = want_two - len(category_two)
        logger.warning(
            "category 2 is short by %d negatives; backfilling from category 1",
            shortfall,
        )
        want_two -= shortfall
        want_one += shortfall
    rng = random.Random(seed)
    picked = rng.sample(category_one, want_one) + rng.sample(category_two, want_two)
    return [replace(sentence, is_negative=True) for sentence in picked]


def split_dataset(
    instances: Sequence[T],
    ratios: tuple[float, float, float] = DEFAULT_SPLIT,
    seed: int = 0,
) -> tuple[list[T], list[T], list[T]]:
    """Random disjoint train/validation/test partition, seed-deterministic.

    Validation and test sizes are floored; every remainder instance goes to
    train.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise SplitError(f"need three nonnegative ratios, got {ratios}")
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise SplitError(f"ratios must sum to 1, got {ratios}")
    n = len(instances)
    n_val = math.floor(n * ratios[1])
    n_test = math.floor(n * ratios[2])
    n_train = n - n_val - n_test
    order = list(range(n))
    random.Random(seed).shuffle(order)
    train = [instances[i] for i in order[:n_train]]
    val = [instances[i] for i in order[n_train : n_train + n_val]]
    test = [instances[i] for i in order[n_train + n_val :]]
    return train, val, test


def ingest_sentences(
    sentences: Iterable[LinkedSentence], min_words: int = MIN_SENTENCE_WORDS
) -> list[LinkedSentence]:
    """Drop sentences shorter than the word floor (whitespace tokens)."""
    return [s for s in sentences if len(s.text.split()) >= min_words]
