"""Deterministic synthetic corpus for the cloze argument task.

Design goals, in order: (1) the gold role of a candidate must be recoverable
from its tokens alone, so per-role name pools are disjoint; (2) plain
masked-LM pretraining on the raw sentences must already build usable
name/role associations, so every argument is written as "<name> <role word>"
(role word immediately after the name, mirroring the candidate-then-[MASK]
layout of the cloze question) with the role word doubling as the role's
verbalizer token; (3) role sets overlap across event types, so the
restricted role softmax is doing real work.

The same (n_event_types, roles_per_type, n_sentences, seed) always produces
byte-identical files.
"""

from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import ConfigError
from .ontology import (
    Argument,
    ClozeInstance,
    EventMention,
    EventOntology,
    EventTypeDef,
    build_instances,
)
from .templates import QuestionTemplate, event_type_tokens
from .vocab import Vocabulary

ROLE_WORDS = [
    "giver", "recipient", "bearer", "witness", "scout", "keeper",
    "guide", "healer", "trader", "rival", "patron", "envoy",
]

EVENT_BANK: List[Tuple[str, List[str]]] = [
    ("exchange.trade", ["traded", "bartered", "traded wares"]),
    ("conflict.clash", ["clashed", "quarreled", "clashed openly"]),
    ("travel.voyage", ["sailed", "journeyed"]),
    ("ceremony.award", ["honored", "celebrated"]),
    ("harvest.gather", ["gathered", "reaped"]),
    ("council.debate", ["debated", "conferred"]),
    ("market.auction", ["auctioned", "haggled"]),
    ("voyage.landing", ["landed", "arrived"]),
    ("festival.parade", ["paraded", "marched"]),
    ("siege.defense", ["defended", "resisted"]),
    ("patrol.watch", ["patrolled", "watched"]),
    ("ritual.blessing", ["blessed", "chanted"]),
]

FILLERS = [
    "today", "yesterday", "reportedly", "quietly",
    "meanwhile", "apparently", "suddenly", "calmly",
]
CONNECTORS = ["with", "near", "beside", "and"]

_SYLLABLES = [
    "ba", "ce", "de", "fi", "go", "hu", "ja", "ku", "la", "mi",
    "no", "pe", "qo", "ra", "su", "te", "vo", "wi", "ya", "zu",
]
_NAME_BANK = [a + b for a in _SYLLABLES for b in _SYLLABLES]
NAMES_PER_ROLE = 32


def role_pool(n_event_types: int, roles_per_type: int) -> List[str]:
    """Sliding-window role sharing needs n_event_types + roles_per_type - 1 roles."""
    needed = n_event_types + roles_per_type - 1
    if needed > len(ROLE_WORDS):
        raise ConfigError(
            f"{n_event_types} event types x {roles_per_type} roles needs "
            f"{needed} role words; only {len(ROLE_WORDS)} available"
        )
    return ROLE_WORDS[:needed]


def role_names(role_index: int) -> List[Tuple[str, ...]]:
    """The disjoint name pool of one role: mostly single, two two-token names.

    Two-token names carry a shared leading modifier; the role-identifying
    word stays last so it sits next to the [MASK] in the cloze question.
    """
    lo = role_index * NAMES_PER_ROLE
    block = _NAME_BANK[lo : lo + NAMES_PER_ROLE]
    names: List[Tuple[str, ...]] = [(w,) for w in block[:-2]]
    names.append(("elder", block[-2]))
    names.append(("young", block[-1]))
    return names


def build_ontology(n_event_types: int, roles_per_type: int) -> EventOntology:
    """Event type i carries roles i .. i+roles_per_type-1 of the shared pool.

    Adjacent event types overlap in all but one role; each role verbalizes
    to its own role word.
    """
    if not 1 <= n_event_types <= len(EVENT_BANK):
        raise ConfigError(
            f"n_event_types must be in 1..{len(EVENT_BANK)}, got {n_event_types}"
        )
    if roles_per_type < 1:
        raise ConfigError(f"roles_per_type must be >= 1, got {roles_per_type}")
    pool = role_pool(n_event_types, roles_per_type)
    types = []
    for i in range(n_event_types):
        roles = tuple(pool[i : i + roles_per_type])
        types.append(
            EventTypeDef(
                name=EVENT_BANK[i][0],
                roles=roles,
                verbalizer={r: r for r in roles},
            )
        )
    return EventOntology(tuple(types))


def generate_synthetic_corpus(
    n_event_types: int = 6,
    roles_per_type: int = 3,
    n_sentences: int = 900,
    seed: int = 42,
) -> Tuple[EventOntology, List[EventMention], Dict[str, List[int]]]:
    """Build the ontology, mentions, and an 8/1/1 mention-level split."""
    if n_sentences < 10:
        raise ConfigError(f"n_sentences must be >= 10, got {n_sentences}")
    ontology = build_ontology(n_event_types, roles_per_type)
    pool = role_pool(n_event_types, roles_per_type)
    pools = {role: role_names(i) for i, role in enumerate(pool)}
    rng = random.Random(seed)

    mentions: List[EventMention] = []
    for m in range(n_sentences):
        t = m % n_event_types  # balanced over event types
        etype = ontology.event_types[t]
        order = list(etype.roles)
        rng.shuffle(order)
        trigger_words = rng.choice(EVENT_BANK[t][1]).split()

        tokens: List[str] = []
        for _ in range(rng.randrange(3)):
            tokens.append(rng.choice(FILLERS))
        spans: List[Tuple[Tuple[int, int], str]] = []
        for j, role in enumerate(order):
            if j > 0:
                tokens.append(rng.choice(CONNECTORS))
            name = rng.choice(pools[role])
            start = len(tokens)
            tokens.extend(name)
            spans.append(((start, len(tokens)), role))
            tokens.append(role)
            if j == 0:
                trig_start = len(tokens)
                tokens.extend(trigger_words)
                trigger_span = (trig_start, len(tokens))
        for _ in range(rng.randrange(3)):
            tokens.append(rng.choice(FILLERS))

        mentions.append(
            EventMention(
                sentence_tokens=tuple(tokens),
                trigger_span=trigger_span,
                event_type=etype.name,
                arguments=tuple(Argument(span=s, role=r) for s, r in spans),
            )
        )

    indices = list(range(n_sentences))
    rng.shuffle(indices)
    n_hold = max(1, n_sentences // 10)
    splits = {
        "train": sorted(indices[: n_sentences - 2 * n_hold]),
        "dev": sorted(indices[n_sentences - 2 * n_hold : n_sentences - n_hold]),
        "test": sorted(indices[n_sentences - n_hold :]),
    }
    return ontology, mentions, splits


def write_corpus(
    out_dir,
    ontology: EventOntology,
    mentions: Sequence[EventMention],
    splits: Dict[str, List[int]],
) -> Dict[str, Path]:
    """Write ontology.json, corpus.jsonl, and splits.json; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "ontology": out / "ontology.json",
        "corpus": out / "corpus.jsonl",
        "splits": out / "splits.json",
    }
    onto_obj = {
        "event_types": [
            {
                "name": t.name,
                "roles": list(t.roles),
                "verbalizer": {r: t.verbalizer[r] for r in t.roles},
            }
            for t in ontology.event_types
        ]
    }
    paths["ontology"].write_text(
        json.dumps(onto_obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with open(paths["corpus"], "w", encoding="utf-8") as f:
        for m in mentions:
            f.write(
                json.dumps(
                    {
                        "tokens": list(m.sentence_tokens),
                        "trigger": list(m.trigger_span),
                        "event_type": m.event_type,
                        "arguments": [
                            {"span": list(a.span), "role": a.role}
                            for a in m.arguments
                        ],
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    paths["splits"].write_text(
        json.dumps(splits, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return paths


def assemble_vocabulary(
    mentions: Sequence[EventMention],
    ontology: EventOntology,
    template: Optional[QuestionTemplate] = None,
    extra_tokens: Iterable[str] = (),
) -> Vocabulary:
    """Closed vocabulary covering the corpus, ontology, and template words."""
    words = set()
    for m in mentions:
        words.update(m.sentence_tokens)
    words.update(ontology.verbalizer_tokens())
    for t in ontology.event_types:
        words.update(event_type_tokens(t.name))
    if template is not None and template.kind == "manual":
        for w in template.pattern.split():
            if not (w.startswith("{") and w.endswith("}")):
                words.add(w)
    words.update(extra_tokens)
    return Vocabulary.build(words)


def load_splits(path) -> Dict[str, List[int]]:
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    for key in ("train", "dev", "test"):
        if key not in raw:
            raise ConfigError(f"{path}: splits file missing {key!r}")
    return {k: [int(i) for i in raw[k]] for k in ("train", "dev", "test")}


def split_instances(
    mentions: Sequence[EventMention], splits: Dict[str, List[int]]
) -> Dict[str, List[ClozeInstance]]:
    """Partition instances (built over the full corpus, so ids are stable)."""
    n = len(mentions)
    for key, idxs in splits.items():
        for i in idxs:
            if not 0 <= i < n:
                raise ConfigError(f"split {key!r} references mention {i} of {n}")
    instances = build_instances(mentions)
    members = {key: set(idxs) for key, idxs in splits.items()}
    out: Dict[str, List[ClozeInstance]] = {key: [] for key in splits}
    for inst in instances:
        m_idx = int(inst.instance_id.split(":")[0])
        for key, idx_set in members.items():
            if m_idx in idx_set:
                out[key].append(inst)
    return out
