"""Constrained-decoding state machine and beam search.

Generation walks a small state machine keyed by the delimiter symbols: from
a fresh state the decoder may either stop immediately (the empty output is
the correct answer for a sentence with no facts) or open a triple with
``<sub>``. Inside subject/relation/object segments the next-token set comes
from the corresponding prefix trie, with the phase-transition symbol added
whenever the tokens so far form a complete label. After ``<et>`` the
decoder may stop or start another triple.

Three modes are supported: ``unconstrained`` (plain beam search over the
full vocabulary), ``constrained`` (the machine filters candidates at every
step), and ``partial`` (free-form generation until the ``[TRIPLE]`` marker,
then the machine activates from its start state; used with entity-prompt
targets whose mention-span segment is arbitrary sentence text).

Hypotheses are ranked by cumulative log-probability; no length
normalization is applied and ties break toward the lexicographically
smaller token sequence.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

from .linearize import (
    END_TRIPLE_TOKEN,
    OBJ_TOKEN,
    REL_TOKEN,
    SUB_TOKEN,
    TRIPLE_MARKER,
)
from .tokenizers import Tokenizer
from .trie import ConstraintTrie


class DecodeError(Exception):
    pass


class ConstraintViolation(DecodeError):
    """A token outside the allowed set was fed to the state machine."""


class DecodeFailure(DecodeError):
    """No hypothesis could be completed; unreachable with dead-end-free tries."""


class Phase(enum.Enum):
    START = "start"
    IN_SUBJECT = "in_subject"
    AWAIT_REL = "await_rel"
    IN_RELATION = "in_relation"
    AWAIT_OBJ = "await_obj"
    IN_OBJECT = "in_object"
    AFTER_TRIPLE = "after_triple"
    UNCONSTRAINED_PREFIX = "unconstrained_prefix"
    DONE = "done"


_TRIE_PHASES = (Phase.IN_SUBJECT, Phase.IN_RELATION, Phase.IN_OBJECT)


@dataclass(frozen=True)
class GenState:
    phase: Phase = Phase.START
    trie_prefix: tuple[int, ...] = ()
    triples_emitted: int = 0

    def __post_init__(self) -> None:
        if self.trie_prefix and self.phase not in _TRIE_PHASES:
            raise ValueError(f"phase {self.phase} cannot carry a trie prefix")


@dataclass(frozen=True)
class DecodingTries:
    """Tries per segment; the tail trie defaults to the entity trie.

    Pass a tail trie built over entity labels plus year literals when date
    tails must stay generable.
    """

    entity: ConstraintTrie
    relation: ConstraintTrie
    tail: ConstraintTrie | None = None

    def for_phase(self, phase: Phase) -> ConstraintTrie:
        if phase is Phase.IN_SUBJECT:
            return self.entity
        if phase is Phase.IN_RELATION:
            return self.relation
        if phase is Phase.IN_OBJECT:
            return self.tail if self.tail is not None else self.entity
        raise ValueError(f"phase {phase} has no trie")


class TokenScorer(Protocol):
    """Pluggable stand-in for a trained decoder.

    ``score`` must be deterministic for a fixed prefix, return one finite
    nonpositive log-probability per candidate, and must not let values
    depend on which other candidates are in the batch.
    """

    def score(self, prefix: Sequence[int], candidates: Sequence[int]) -> Sequence[float]:
        ...


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    score: float
    state: GenState


class GenStateMachine:
    """Allowed-token sets and transitions for one trie/tokenizer pairing."""

    def __init__(self, tries: DecodingTries, tokenizer: Tokenizer) -> None:
        self.tries = tries
        self.tokenizer = tokenizer
        self._eos = tokenizer.eos_id
        self._sub = tokenizer.special_id(SUB_TOKEN)
        self._rel = tokenizer.special_id(REL_TOKEN)
        self._obj = tokenizer.special_id(OBJ_TOKEN)
        self._et = tokenizer.special_id(END_TRIPLE_TOKEN)
        self._triple_marker = tokenizer.special_id(TRIPLE_MARKER)

    def _transition_token(self, phase: Phase) -> int:
        if phase is Phase.IN_SUBJECT:
            return self._rel
        if phase is Phase.IN_RELATION:
            return self._obj
        return self._et

    def allowed_tokens(self, state: GenState) -> frozenset[int]:
        phase = state.phase
        if phase is Phase.DONE:
            return frozenset()
        if phase in (Phase.START, Phase.AFTER_TRIPLE):
            return frozenset((self._eos, self._sub))
        if phase is Phase.AWAIT_REL:
            return frozenset((self._rel,))
        if phase is Phase.AWAIT_OBJ:
            return frozenset((self._obj,))
        if phase is Phase.UNCONSTRAINED_PREFIX:
            return frozenset(range(self.tokenizer.vocab_size))
        trie = self.tries.for_phase(phase)
        tokens, complete = trie.allowed_continuations(state.trie_prefix)
        allowed = set(tokens)
        if complete:
            allowed.add(self._transition_token(phase))
        return frozenset(allowed)

    def advance(self, state: GenState, token: int) -> GenState:
        """Deterministic transition; a disallowed token is an error."""
        if token not in self.allowed_tokens(state):
            raise ConstraintViolation(
                f"token {token} not allowed in phase {state.phase.value}"
            )
        phase = state.phase
        if phase in (Phase.START, Phase.AFTER_TRIPLE):
            if token == self._eos:
                return replace(state, phase=Phase.DONE, trie_prefix=())
            return replace(state, phase=Phase.IN_SUBJECT, trie_prefix=())
        if phase is Phase.AWAIT_REL:
            return replace(state, phase=Phase.IN_RELATION, trie_prefix=())
        if phase is Phase.AWAIT_OBJ:
            return replace(state, phase=Phase.IN_OBJECT, trie_prefix=())
        if phase is Phase.UNCONSTRAINED_PREFIX:
            if token == self._eos:
                return replace(state, phase=Phase.DONE)
            if token == self._triple_marker:
                return replace(state, phase=Phase.START)
            return state
        # Inside a label segment.
        if token == self._transition_token(phase):
            if phase is Phase.IN_SUBJECT:
                return replace(state, phase=Phase.IN_RELATION, trie_prefix=())
            if phase is Phase.IN_RELATION:
                return replace(state, phase=Phase.IN_OBJECT, trie_prefix=())
            return replace(
                state,
                phase=Phase.AFTER_TRIPLE,
                trie_prefix=(),
                triples_emitted=state.triples_emitted + 1,
            )
        prefix = state.trie_prefix + (token,)
        trie = self.tries.for_phase(phase)
        tokens, complete = trie.allowed_continuations(prefix)
        if not tokens:
            # The label just completed with no longer alternative; the only
            # legal move is the phase transition, so take the await state.
            if phase is Phase.IN_SUBJECT:
                return replace(state, phase=Phase.AWAIT_REL, trie_prefix=())
            if phase is Phase.IN_RELATION:
                return replace(state, phase=Phase.AWAIT_OBJ, trie_prefix=())
            # No await state exists before <et>; stay put, the continuation
            # set is empty so only <et> will be offered.
            return replace(state, trie_prefix=prefix)
        return replace(state, trie_prefix=prefix)


_MODES = ("unconstrained", "constrained", "partial")


def beam_search(
    scorer: TokenScorer,
    tokenizer: Tokenizer,
    *,
    mode: str = "constrained",
    tries: DecodingTries | None = None,
    beam_size: int = 4,
    max_len: int = 256,
) -> list[Hypothesis]:
    """Length-capped beam search over a pluggable token scorer.

    Returns up to ``beam_size`` hypotheses ranked by cumulative
    log-probability. Hypotheses end with EOS (which contributes its own
    log-probability) or are cut at ``max_len`` tokens.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    machine: GenStateMachine | None = None
    if mode in ("constrained", "partial"):
        if tries is None:
            raise ValueError(f"{mode} mode requires tries")
        machine = GenStateMachine(tries, tokenizer)
        initial_phase = Phase.START if mode == "constrained" else Phase.UNCONSTRAINED_PREFIX
    else:
        initial_phase = Phase.UNCONSTRAINED_PREFIX
    eos = tokenizer.eos_id
    all_ids = range(tokenizer.vocab_size)

    live = [Hypothesis((), 0.0, GenState(phase=initial_phase))]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        candidates: list[Hypothesis] = []
        for hyp in live:
            if machine is not None:
                allowed = sorted(machine.allowed_tokens(hyp.state))
            else:
                allowed = all_ids
            if not allowed:
                continue
            logprobs = scorer.score(hyp.tokens, allowed)
            for token, logprob in zip(allowed, logprobs):
                if machine is not None:
                    state = machine.advance(hyp.state, token)
                elif token == eos:
                    state = GenState(phase=Phase.DONE)
                else:
                    state = hyp.state
                candidates.append(
                    Hypothesis(hyp.tokens + (token,), hyp.score + logprob, state)
                )
        if not candidates:
            # Every live hypothesis is stuck mid-label; cannot happen with
            # dead-end-free tries, so surface it rather than return junk.
            live = []
            break
        candidates.sort(key=lambda h: (-h.score, h.tokens))
        live = []
        for hyp in candidates:
            if hyp.state.phase is Phase.DONE:
                finished.append(hyp)
            elif len(live) < beam_size:
                live.append(hyp)
        if not live:
            break
    pool = finished + live
    if not pool:
        raise DecodeFailure("constraints left no completable hypothesis")
    pool.sort(key=lambda h: (-h.score, h.tokens))
    return pool[:beam_size]
