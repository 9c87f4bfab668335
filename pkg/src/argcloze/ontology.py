"""Event ontology, annotated corpus ingestion, and episode sampling.

The ontology file is JSON:

    {"event_types": [{"name": str, "roles": [str], "verbalizer": {role: token}}]}

The corpus is JSONL, one event mention per line:

    {"tokens": [...], "trigger": [start, end], "event_type": str,
     "arguments": [{"span": [start, end], "role": str | null}]}

Spans are half-open token-index intervals.  A null role marks a negative
(non-argument) candidate.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import (
    ConfigError,
    DuplicateVerbalizer,
    EmptyCorpus,
    MultiTokenVerbalizer,
    SpanOutOfBounds,
    UnknownEventType,
    UnknownRole,
    UnknownToken,
)
from .vocab import Vocabulary

logger = logging.getLogger(__name__)

Span = Tuple[int, int]


@dataclass(frozen=True)
class EventTypeDef:
    name: str
    roles: Tuple[str, ...]
    verbalizer: Dict[str, str]

    def __post_init__(self):
        if not self.roles:
            raise ConfigError(f"event type {self.name!r} has no roles")
        if len(set(self.roles)) != len(self.roles):
            raise ConfigError(f"event type {self.name!r} repeats a role name")
        missing = [r for r in self.roles if r not in self.verbalizer]
        if missing:
            raise ConfigError(f"event type {self.name!r} lacks verbalizers for {missing}")
        # The role -> token map must be invertible.
        seen: Dict[str, str] = {}
        for role in self.roles:
            tok = self.verbalizer[role]
            if tok in seen:
                raise DuplicateVerbalizer(
                    f"event type {self.name!r}: roles {seen[tok]!r} and {role!r} "
                    f"both verbalize to {tok!r}"
                )
            seen[tok] = role
        for role in self.roles:
            tok = self.verbalizer[role]
            if len(tok.split()) != 1:
                raise MultiTokenVerbalizer(
                    f"event type {self.name!r}: verbalizer {tok!r} for role "
                    f"{role!r} is not a single token"
                )


@dataclass(frozen=True)
class EventOntology:
    event_types: Tuple[EventTypeDef, ...]
    _by_name: Dict[str, EventTypeDef] = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_by_name", {t.name: t for t in self.event_types})
        if len(self._by_name) != len(self.event_types):
            raise ConfigError("duplicate event type name in ontology")

    def get(self, event_type: str) -> EventTypeDef:
        try:
            return self._by_name[event_type]
        except KeyError:
            raise UnknownEventType(f"unknown event type: {event_type!r}") from None

    def roles(self, event_type: str) -> Tuple[str, ...]:
        return self.get(event_type).roles

    def verbalizer_token(self, event_type: str, role: str) -> str:
        etype = self.get(event_type)
        if role not in etype.verbalizer:
            raise UnknownRole(f"role {role!r} not in event type {event_type!r}")
        return etype.verbalizer[role]

    def verbalizer_tokens(self) -> List[str]:
        """All verbalizer tokens across event types, in ontology order."""
        out = []
        for etype in self.event_types:
            out.extend(etype.verbalizer[r] for r in etype.roles)
        return out

    def check_vocabulary(self, vocab: Vocabulary) -> None:
        """Every verbalizer token must map to exactly one non-special id."""
        for etype in self.event_types:
            for role in etype.roles:
                tok = etype.verbalizer[role]
                if tok not in vocab:
                    raise UnknownToken(
                        f"verbalizer {tok!r} (event type {etype.name!r}, role "
                        f"{role!r}) is not in the vocabulary"
                    )


@dataclass(frozen=True)
class Argument:
    span: Span
    role: Optional[str]  # None marks a negative candidate


@dataclass(frozen=True)
class EventMention:
    sentence_tokens: Tuple[str, ...]
    trigger_span: Span
    event_type: str
    arguments: Tuple[Argument, ...]

    def span_tokens(self, span: Span) -> Tuple[str, ...]:
        return self.sentence_tokens[span[0]:span[1]]


@dataclass(frozen=True)
class ClozeInstance:
    """One argument candidate to classify, rendered later into a cloze input."""

    mention: EventMention
    candidate_span: Span
    gold_role: Optional[str]
    instance_id: str

    @property
    def candidate_tokens(self) -> Tuple[str, ...]:
        return self.mention.span_tokens(self.candidate_span)


@dataclass(frozen=True)
class FewShotEpisode:
    k: int
    seed: int
    train_ids: Tuple[str, ...]
    dev_ids: Tuple[str, ...]
    test_ids: Tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "train_ids": list(self.train_ids),
            "dev_ids": list(self.dev_ids),
            "test_ids": list(self.test_ids),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FewShotEpisode":
        return cls(
            k=obj["k"],
            seed=obj["seed"],
            train_ids=tuple(obj["train_ids"]),
            dev_ids=tuple(obj["dev_ids"]),
            test_ids=tuple(obj["test_ids"]),
        )


def load_ontology(path, vocab: Optional[Vocabulary] = None) -> EventOntology:
    """Load and validate an ontology file.

    Injectivity and the single-token property are always checked; membership in
    the model vocabulary is checked when ``vocab`` is given (it is re-checked
    anyway when sequences are assembled).
    """
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, dict) or "event_types" not in raw:
        raise ConfigError(f"{path}: expected an object with an 'event_types' list")
    types = []
    for entry in raw["event_types"]:
        try:
            types.append(
                EventTypeDef(
                    name=entry["name"],
                    roles=tuple(entry["roles"]),
                    verbalizer=dict(entry["verbalizer"]),
                )
            )
        except KeyError as e:
            raise ConfigError(f"{path}: event type entry missing key {e}") from None
    ontology = EventOntology(tuple(types))
    if vocab is not None:
        ontology.check_vocabulary(vocab)
    return ontology


def _check_span(span: Sequence[int], n_tokens: int, what: str, where: str) -> Span:
    if len(span) != 2:
        raise ConfigError(f"{where}: {what} span must be [start, end]")
    start, end = int(span[0]), int(span[1])
    if not (0 <= start < end <= n_tokens):
        raise SpanOutOfBounds(
            f"{where}: {what} span [{start}, {end}) outside sentence of "
            f"{n_tokens} tokens"
        )
    return (start, end)


def load_corpus(path, ontology: EventOntology) -> List[EventMention]:
    """Load a JSONL corpus, validating every mention against the ontology.

    Error messages name the offending line (1-based).
    """
    mentions = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{where}: invalid JSON ({e})") from None
            tokens = tuple(obj["tokens"])
            trigger = _check_span(obj["trigger"], len(tokens), "trigger", where)
            event_type = obj["event_type"]
            try:
                etype = ontology.get(event_type)
            except UnknownEventType:
                raise UnknownEventType(
                    f"{where}: unknown event type {event_type!r}"
                ) from None
            args = []
            for arg in obj.get("arguments", []):
                span = _check_span(arg["span"], len(tokens), "argument", where)
                role = arg.get("role")
                if role is not None and role not in etype.roles:
                    raise UnknownRole(
                        f"{where}: role {role!r} not in event type {event_type!r}"
                    )
                args.append(Argument(span=span, role=role))
            mentions.append(
                EventMention(
                    sentence_tokens=tokens,
                    trigger_span=trigger,
                    event_type=event_type,
                    arguments=tuple(args),
                )
            )
    return mentions


def build_instances(mentions: Sequence[EventMention]) -> List[ClozeInstance]:
    """One instance per annotated argument, ids "{mention index}:{arg index}"."""
    instances = []
    for m_idx, mention in enumerate(mentions):
        for a_idx, arg in enumerate(mention.arguments):
            instances.append(
                ClozeInstance(
                    mention=mention,
                    candidate_span=arg.span,
                    gold_role=arg.role,
                    instance_id=f"{m_idx}:{a_idx}",
                )
            )
    return instances


def class_key(instance: ClozeInstance) -> Tuple[str, str]:
    """Few-shot sampling class of an instance: (event type, gold role)."""
    role = instance.gold_role if instance.gold_role is not None else ""
    return (instance.mention.event_type, role)


def sample_few_shot(
    instances: Sequence[ClozeInstance], k: int, seed: int
) -> FewShotEpisode:
    """Sample up to k train and k dev instances per (event type, role) class.

    Everything not drawn into train or dev becomes test.  Classes smaller than
    k contribute what they have (train first), with a warning.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if not instances:
        raise EmptyCorpus("cannot sample an episode from an empty instance list")

    by_class: Dict[Tuple[str, str], List[str]] = {}
    for inst in instances:
        by_class.setdefault(class_key(inst), []).append(inst.instance_id)

    rng = random.Random(seed)
    train, dev = [], []
    taken = set()
    for key in sorted(by_class):
        ids = list(by_class[key])
        rng.shuffle(ids)
        if len(ids) < 2 * k:
            logger.warning(
                "class %s has %d instances, fewer than 2k=%d; taking what is available",
                key, len(ids), 2 * k,
            )
        train.extend(ids[:k])
        dev.extend(ids[k:2 * k])
        taken.update(ids[:2 * k])
    test = [inst.instance_id for inst in instances if inst.instance_id not in taken]
    return FewShotEpisode(
        k=k, seed=seed, train_ids=tuple(train), dev_ids=tuple(dev), test_ids=tuple(test)
    )
