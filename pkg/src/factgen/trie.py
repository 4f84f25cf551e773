"""Token-level prefix tries over label vocabularies.

A trie accepts exactly the tokenizer encodings of its label set and answers
the constrained decoder's one question: given the tokens generated so far
inside a label, which tokens may come next, and is the current prefix
itself a complete label? Tries are immutable after construction and safe
for concurrent readers.

A binary cache format is provided so large vocabularies can be built once:
magic ``TRI1``, then the node count, then the nodes in preorder as
(token-id varint, child-count varint, terminal byte).
"""

from __future__ import annotations

from typing import Iterable, NamedTuple, Sequence

from .tokenizers import Tokenizer

TRIE_MAGIC = b"TRI1"


class TrieError(Exception):
    pass


class TrieBuildError(TrieError):
    pass


class TrieCacheError(TrieError):
    """Corrupt or truncated binary cache."""


class Continuations(NamedTuple):
    """Allowed next tokens for a prefix, plus whether it is a full label."""

    tokens: tuple[int, ...]
    complete: bool


class _Node:
    __slots__ = ("children", "terminal")

    def __init__(self) -> None:
        self.children: dict[int, _Node] = {}
        self.terminal = False


class ConstraintTrie:
    def __init__(self) -> None:
        self._root = _Node()
        self._node_count = 1
        self._label_count = 0

    def _insert(self, ids: Sequence[int]) -> None:
        node = self._root
        for token_id in ids:
            child = node.children.get(token_id)
            if child is None:
                child = _Node()
                node.children[token_id] = child
                self._node_count += 1
            node = child
        if not node.terminal:
            node.terminal = True
            self._label_count += 1

    def _sort_children(self) -> None:
        stack = [self._root]
        while stack:
            node = stack.pop()
            if node.children:
                node.children = dict(sorted(node.children.items()))
                stack.extend(node.children.values())

    def allowed_continuations(self, prefix: Sequence[int]) -> Continuations:
        """Exact next-token set for the prefix; empty and False off-trie."""
        node = self._root
        for token_id in prefix:
            node = node.children.get(token_id)
            if node is None:
                return Continuations((), False)
        return Continuations(tuple(node.children), node.terminal)

    def accepts(self, ids: Sequence[int]) -> bool:
        node = self._root
        for token_id in ids:
            node = node.children.get(token_id)
            if node is None:
                return False
        return node.terminal

    @property
    def node_count(self) -> int:
        return self._node_count

    @property
    def label_count(self) -> int:
        return self._label_count

    # -- binary cache --------------------------------------------------

    def to_bytes(self) -> bytes:
        out = bytearray(TRIE_MAGIC)
        _write_varint(out, self._node_count)
        stack: list[tuple[int, _Node]] = [(0, self._root)]
        while stack:
            token_id, node = stack.pop()
            _write_varint(out, token_id)
            _write_varint(out, len(node.children))
            out.append(1 if node.terminal else 0)
            # Reversed so preorder visits children in ascending token order.
            for child_id in sorted(node.children, reverse=True):
                stack.append((child_id, node.children[child_id]))
        return bytes(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ConstraintTrie":
        if blob[: len(TRIE_MAGIC)] != TRIE_MAGIC:
            raise TrieCacheError("bad magic bytes")
        pos = len(TRIE_MAGIC)
        declared, pos = _read_varint(blob, pos)
        trie = cls()
        trie._node_count = 0
        trie._label_count = 0

        def read_node(node: _Node) -> None:
            nonlocal pos
            children, pos_local = _read_varint(blob, pos)
            pos = pos_local
            if pos >= len(blob):
                raise TrieCacheError("truncated node")
            terminal = blob[pos]
            pos += 1
            node.terminal = terminal == 1
            if node.terminal:
                trie._label_count += 1
            trie._node_count += 1
            for _ in range(children):
                token_id, pos = _read_varint(blob, pos)
                child = _Node()
                node.children[token_id] = child
                read_node(child)

        _, pos = _read_varint(blob, pos)  # root's dummy token id
        read_node(trie._root)
        if trie._node_count != declared:
            raise TrieCacheError(
                f"node count mismatch: header says {declared}, read {trie._node_count}"
            )
        if pos != len(blob):
            raise TrieCacheError(f"{len(blob) - pos} trailing bytes")
        return trie

    def save(self, path: str) -> None:
        with open(path, "wb") as handle:
            handle.write(self.to_bytes())

    @classmethod
    def load(cls, path: str) -> "ConstraintTrie":
        with open(path, "rb") as handle:
            return cls.from_bytes(handle.read())


def build_trie(labels: Iterable[str], tokenizer: Tokenizer) -> ConstraintTrie:
    """Build a trie accepting exactly the encodings of the label set.

    Duplicate labels are harmless; an empty label is an error because the
    empty sequence must never be a completion.
    """
    trie = ConstraintTrie()
    for label in labels:
        if not label:
            raise TrieBuildError("empty label")
        ids = tokenizer.encode(label)
        if not ids:
            raise TrieBuildError(f"label {label!r} encodes to no tokens")
        trie._insert(ids)
    trie._sort_children()
    return trie


def year_labels(first: int = 1, last: int = 2100) -> list[str]:
    """Year literals admitted in the tail position alongside entity labels."""
    return [str(year) for year in range(first, last + 1)]


def _write_varint(out: bytearray, value: int) -> None:
    while value >= 0x80:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    out.append(value)


def _read_varint(blob: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(blob):
            raise TrieCacheError("truncated varint")
        byte = blob[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
