"""Deterministic synthetic corpora with planted lexical cues.

Gold labels are fully determined by cue words inside candidate chunks: a
candidate is positive for a subtask iff it contains that subtask's cue. This
makes end-to-end learning checkable (a working trainer must reach high
micro-F1) without any external data.

Two chunk styles:

- plain: chunks are cue/filler words only; used for learning-dynamics checks.
- typed: chunks carry a phrase matching the subtask's expected entity type
  (person phrases for person slots, locations for where-slots, and so on),
  plus the cue on positives. With ``trap_rate`` > 0, some person-slot
  candidates pair the cue with a location phrase and a negative gold label:
  a cue-keyed model fires on them, creating exactly the false positives a
  type-aware filter can remove.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import AnnotatedTweet, SubtaskRegistry
from .preprocess import Vocab

_FILLERS = (
    "update breaking surreal honestly finally tonight waiting numbers chart "
    "thread reading source official report claims story context latest posted "
    "sharing everyone please stay strong thoughts situation current local "
    "confirmed pending results statement notes details summary opinion talk"
).split()

_CONTEXT = (
    "just heard that so sad to share the news about this from earlier "
    "cannot believe it happened again today more below"
).split()

_PERSON_PHRASES = (
    "my mother", "my father", "my brother", "my sister", "my uncle",
    "my aunt", "my cousin", "my neighbor", "my coworker", "my friend",
    "her husband", "his wife", "their son", "their daughter", "my grandma",
)

_LOCATION_PHRASES = (
    "new york", "seattle", "chicago", "london", "toronto", "miami",
    "the hospital", "nursing home", "wuhan", "california", "texas", "boston",
)

_ORG_PHRASES = (
    "amazon", "walmart", "boeing", "the cdc", "starbucks", "fedex",
    "general motors", "red cross",
)

_DATE_PHRASES = ("yesterday", "today", "last week", "monday", "friday", "march 15")

_DURATION_PHRASES = ("three days", "two weeks", "14 days", "a month", "five hours")

_AGE_PHRASES = ("34 years old", "aged 67", "89 years old", "in his 80s", "52 years old")

# Subtask name -> phrase pool for typed chunks; unmapped names use fillers.
_TYPED_POOLS = {
    "name": _PERSON_PHRASES,
    "relation": _PERSON_PHRASES,
    "close_contact": _PERSON_PHRASES,
    "who_cure": _PERSON_PHRASES,
    "where": _LOCATION_PHRASES,
    "recent_travel": _LOCATION_PHRASES,
    "employer": _ORG_PHRASES,
    "when": _DATE_PHRASES,
    "how_long": _DURATION_PHRASES,
    "age": _AGE_PHRASES,
}

_PERSON_SLOTS = ("name", "relation", "close_contact", "who_cure")


@dataclass(frozen=True)
class CueCorpusSpec:
    n_tweets: int = 500
    seed: int = 7
    candidates_min: int = 2
    candidates_max: int = 3
    positive_rate: float = 0.5
    shared_cues: bool = False  # one cue per subtask name, shared across events
    max_positives_per_subtask: int | None = None
    typed_chunks: bool = False
    trap_rate: float = 0.0  # person-slot cue + location phrase + negative label

    def __post_init__(self):
        if self.n_tweets < 1:
            raise ValueError("n_tweets must be positive")
        if not 1 <= self.candidates_min <= self.candidates_max:
            raise ValueError("candidate count range is invalid")
        if self.trap_rate and not self.typed_chunks:
            raise ValueError("trap_rate requires typed_chunks")


def _distinct_cues(names, vocab: Vocab, rng) -> dict:
    """One cue word per key, with pairwise-distinct hashed token ids.

    Collisions with filler/context vocabulary are also avoided so the cue
    signal is never aliased away by the hashed embedding table.
    """
    taken = {vocab.token_to_id(w) for w in _FILLERS + _CONTEXT}
    letters = "abcdefghijklmnopqrstuvwxyz"
    cues = {}
    for key in names:
        base = "".join(part for part in (key if isinstance(key, tuple) else (key,)))
        word = "zz" + base.replace("_", "")
        while vocab.token_to_id(word) in taken:
            word += letters[int(rng.integers(0, 26))]
        taken.add(vocab.token_to_id(word))
        cues[key] = word
    return cues


def _cue_key(spec: CueCorpusSpec, event, name: str):
    return name if spec.shared_cues else (event.value, name)


def make_cue_corpus(
    spec: CueCorpusSpec,
    registry: SubtaskRegistry | None = None,
    vocab: Vocab | None = None,
) -> tuple[list[AnnotatedTweet], dict]:
    """Generate tweets whose gold labels follow planted cue words.

    Returns (tweets, cues) where cues maps cue key (subtask name, or
    (event, name) pair when cues are per-event) to the planted word.
    """
    registry = registry or SubtaskRegistry.default()
    vocab = vocab or Vocab()
    rng = np.random.default_rng([spec.seed, 3])
    events = list(registry.events)
    keys = []
    for event in events:
        for name in registry.names_for(event):
            key = _cue_key(spec, event, name)
            if key not in keys:
                keys.append(key)
    cues = _distinct_cues(keys, vocab, rng)
    positives_used: dict[tuple, int] = {}

    tweets = []
    for i in range(spec.n_tweets):
        event = events[i % len(events)]
        names = registry.names_for(event)
        n_cands = int(rng.integers(spec.candidates_min, spec.candidates_max + 1))
        parts = [_CONTEXT[int(rng.integers(0, len(_CONTEXT)))] for _ in range(2)]
        text = " ".join(parts)
        candidates = []
        gold: dict[str, set[int]] = {}
        for ci in range(n_cands):
            name = names[int(rng.integers(0, len(names)))]
            subtask_key = (event.value, name)
            capped = (
                spec.max_positives_per_subtask is not None
                and positives_used.get(subtask_key, 0) >= spec.max_positives_per_subtask
            )
            want_positive = (not capped) and rng.random() < spec.positive_rate
            chunk, positive = _make_chunk(spec, rng, event, name, cues, want_positive)
            if positive:
                positives_used[subtask_key] = positives_used.get(subtask_key, 0) + 1
                gold.setdefault(name, set()).add(ci)
            glue = _CONTEXT[int(rng.integers(0, len(_CONTEXT)))]
            start = len(text) + 1
            text = f"{text} {chunk} {glue}"
            candidates.append((start, start + len(chunk)))
        tweets.append(
            AnnotatedTweet(
                id=f"syn-{spec.seed}-{i:05d}",
                text=text,
                event=event,
                candidates=tuple(candidates),
                gold={name: frozenset(idxs) for name, idxs in gold.items()},
            )
        )
    return tweets, cues


def _make_chunk(spec, rng, event, name, cues, want_positive) -> tuple[str, bool]:
    """Chunk text plus its actual gold polarity (traps stay negative)."""
    cue = cues[_cue_key(spec, event, name)]
    if not spec.typed_chunks:
        filler = _FILLERS[int(rng.integers(0, len(_FILLERS)))]
        if want_positive:
            return f"{filler} {cue}", True
        other = _FILLERS[int(rng.integers(0, len(_FILLERS)))]
        return f"{filler} {other}", False
    pool = _TYPED_POOLS.get(name, _FILLERS)
    phrase = pool[int(rng.integers(0, len(pool)))]
    if want_positive:
        return f"{phrase} {cue}", True
    if name in _PERSON_SLOTS and spec.trap_rate and rng.random() < spec.trap_rate:
        wrong = _LOCATION_PHRASES[int(rng.integers(0, len(_LOCATION_PHRASES)))]
        return f"{wrong} {cue}", False
    return phrase, False
