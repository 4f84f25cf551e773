"""In-memory knowledge-base store: entity/relation resolution and pair lookup.

The store indexes triples by directed (head, tail) pair so that distant
supervision can ask "which relations hold between these two entities?" in
O(1). Tail values may be entity ids or bare year literals; year literals are
kept as raw strings because dates carry no entity id of their own.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator

YEAR_RE = re.compile(r"^[0-9]{1,4}$")


def is_year_literal(value: str) -> bool:
    """True if the string is a bare 1-4 digit year."""
    return bool(YEAR_RE.match(value))


class KbError(Exception):
    pass


class KbLoadError(KbError):
    """Malformed input line; message carries file path and line number."""


class KbIntegrityError(KbError):
    """Duplicate identifier or dangling reference in the loaded data."""


@dataclass(frozen=True)
class Entity:
    qid: str
    title: str


@dataclass(frozen=True)
class Relation:
    pid: str
    label: str
    description: str = ""


@dataclass(frozen=True, order=True)
class Triple:
    """A resolved triple: head entity id, relation id, tail id or year."""

    head: str
    relation: str
    tail: str


class KbStore:
    """Immutable-after-load store with bijective qid/title lookup.

    Construction is single-threaded (via :func:`load_kb` or
    :meth:`from_records`); afterwards the store is safe for concurrent
    readers.
    """

    def __init__(self) -> None:
        self._by_qid: dict[str, Entity] = {}
        self._by_title: dict[str, Entity] = {}
        self._rel_by_pid: dict[str, Relation] = {}
        self._rel_by_label: dict[str, Relation] = {}
        self._pairs: dict[tuple[str, str], set[str]] = {}
        self._triple_count = 0

    # -- construction ------------------------------------------------------

    def _add_entity(self, qid: str, title: str) -> None:
        if not qid or not title:
            raise KbIntegrityError(f"entity with empty qid or title: {(qid, title)!r}")
        if qid in self._by_qid:
            raise KbIntegrityError(f"duplicate entity qid {qid!r}")
        if title in self._by_title:
            raise KbIntegrityError(f"duplicate entity title {title!r}")
        entity = Entity(qid, title)
        self._by_qid[qid] = entity
        self._by_title[title] = entity

    def _add_relation(self, pid: str, label: str, description: str = "") -> None:
        if not pid or not label:
            raise KbIntegrityError(f"relation with empty pid or label: {(pid, label)!r}")
        if pid in self._rel_by_pid:
            raise KbIntegrityError(f"duplicate relation pid {pid!r}")
        if label in self._rel_by_label:
            raise KbIntegrityError(f"duplicate relation label {label!r}")
        relation = Relation(pid, label, description)
        self._rel_by_pid[pid] = relation
        self._rel_by_label[label] = relation

    def _add_triple(self, head: str, pid: str, tail: str) -> None:
        if head not in self._by_qid:
            raise KbIntegrityError(f"triple head {head!r} is not a known entity")
        if pid not in self._rel_by_pid:
            raise KbIntegrityError(f"triple relation {pid!r} is not a known relation")
        if tail not in self._by_qid and not is_year_literal(tail):
            raise KbIntegrityError(
                f"triple tail {tail!r} is neither a known entity nor a year literal"
            )
        pids = self._pairs.setdefault((head, tail), set())
        if pid not in pids:
            pids.add(pid)
            self._triple_count += 1

    @classmethod
    def from_records(
        cls,
        entities: Iterable[tuple[str, str]],
        relations: Iterable[tuple[str, str, str]],
        triples: Iterable[tuple[str, str, str]],
    ) -> "KbStore":
        """Build a store from already-parsed tuples (mainly for tests)."""
        store = cls()
        for qid, title in entities:
            store._add_entity(qid, title)
        for pid, label, description in relations:
            store._add_relation(pid, label, description)
        for head, pid, tail in triples:
            store._add_triple(head, pid, tail)
        return store

    # -- lookups -----------------------------------------------------------

    def resolve_title(self, title: str) -> str | None:
        """Entity title -> qid, or None when the title is unknown."""
        entity = self._by_title.get(title)
        return entity.qid if entity else None

    def entity_label(self, qid: str) -> str | None:
        """Entity qid -> title, or None when the qid is unknown."""
        entity = self._by_qid.get(qid)
        return entity.title if entity else None

    def relation_label(self, pid: str) -> str | None:
        relation = self._rel_by_pid.get(pid)
        return relation.label if relation else None

    def resolve_relation_label(self, label: str) -> str | None:
        relation = self._rel_by_label.get(label)
        return relation.pid if relation else None

    def relation(self, pid: str) -> Relation | None:
        return self._rel_by_pid.get(pid)

    def relations_between(self, head: str, tail: str) -> set[str]:
        """Pids of stored triples with exactly this directed (head, tail).

        Total: unknown ids simply yield the empty set.
        """
        return set(self._pairs.get((head, tail), ()))

    def entity_titles(self) -> Iterator[str]:
        return iter(self._by_title)

    def relation_labels(self) -> Iterator[str]:
        return iter(self._rel_by_label)

    @property
    def num_entities(self) -> int:
        return len(self._by_qid)

    @property
    def num_relations(self) -> int:
        return len(self._rel_by_pid)

    @property
    def num_pairs(self) -> int:
        return len(self._pairs)

    @property
    def num_triples(self) -> int:
        return self._triple_count


def _read_tsv(path: str, n_fields: int) -> Iterator[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise KbLoadError(
                    f"{path}:{lineno}: expected {n_fields} tab-separated fields, "
                    f"got {len(fields)}"
                )
            yield lineno, fields


def load_kb(entities_path: str, relations_path: str, triples_path: str) -> KbStore:
    """Load a store from the three TSV files.

    entities: ``qid<TAB>title``; relations: ``pid<TAB>label<TAB>description``;
    triples: ``head_qid<TAB>pid<TAB>tail_value``. Duplicate triples are
    deduplicated silently; duplicate qids/titles/pids and dangling triple
    references raise :class:`KbIntegrityError` with the offending location.
    """
    store = KbStore()
    for lineno, (qid, title) in _read_tsv(entities_path, 2):
        try:
            store._add_entity(qid, title)
        except KbIntegrityError as exc:
            raise KbIntegrityError(f"{entities_path}:{lineno}: {exc}") from None
    for lineno, (pid, label, description) in _read_tsv(relations_path, 3):
        try:
            store._add_relation(pid, label, description)
        except KbIntegrityError as exc:
            raise KbIntegrityError(f"{relations_path}:{lineno}: {exc}") from None
    for lineno, (head, pid, tail) in _read_tsv(triples_path, 3):
        try:
            store._add_triple(head, pid, tail)
        except KbIntegrityError as exc:
            raise KbIntegrityError(f"{triples_path}:{lineno}: {exc}") from None
    return store
