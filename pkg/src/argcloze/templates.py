"""Question templates and assembly of the cloze input sequence.

A question is rendered from either a manual pattern or a pseudo template and
then packed with the sentence as

    [CLS] question [SEP] sentence [SEP]

The single [MASK] inside the question is where the argument role is predicted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

from .errors import ConfigError, MissingPlaceholder, QuestionTooLong
from .ontology import ClozeInstance
from .vocab import MASK_TOKEN, MAX_PSEUDO_TOKENS, Vocabulary, pseudo_token

MANUAL = "manual"
PSEUDO = "pseudo"

ARG_PLACEHOLDER = "{arg}"
EVENT_TYPE_PLACEHOLDER = "{event_type}"
MASK_PLACEHOLDER = "{MASK}"


def event_type_tokens(name: str) -> List[str]:
    """Split an event type name on '.' and '-' into word tokens."""
    out = [name]
    for sep in (".", "-"):
        out = [part for chunk in out for part in chunk.split(sep)]
    return [p for p in out if p]


@dataclass(frozen=True)
class QuestionTemplate:
    kind: str
    pattern: Optional[str] = None
    pseudo_length: int = 8

    def __post_init__(self):
        if self.kind == MANUAL:
            if not self.pattern:
                raise ConfigError("manual template requires a pattern")
            words = self.pattern.split()
            if words.count(MASK_PLACEHOLDER) != 1:
                raise MissingPlaceholder(
                    f"manual pattern must contain exactly one {MASK_PLACEHOLDER}"
                )
            if ARG_PLACEHOLDER not in words and EVENT_TYPE_PLACEHOLDER not in words:
                raise MissingPlaceholder(
                    f"manual pattern needs {ARG_PLACEHOLDER} or {EVENT_TYPE_PLACEHOLDER}"
                )
        elif self.kind == PSEUDO:
            if not 1 <= self.pseudo_length <= MAX_PSEUDO_TOKENS:
                raise ConfigError(
                    f"pseudo_length must be in 1..{MAX_PSEUDO_TOKENS}, "
                    f"got {self.pseudo_length}"
                )
        else:
            raise ConfigError(f"template kind must be '{MANUAL}' or '{PSEUDO}'")

    def to_json(self) -> dict:
        if self.kind == MANUAL:
            return {"kind": MANUAL, "pattern": self.pattern}
        return {"kind": PSEUDO, "pseudo_length": self.pseudo_length}

    @classmethod
    def from_json(cls, obj: dict) -> "QuestionTemplate":
        kind = obj.get("kind")
        if kind == MANUAL:
            return cls(kind=MANUAL, pattern=obj.get("pattern"))
        if kind == PSEUDO:
            return cls(kind=PSEUDO, pseudo_length=int(obj.get("pseudo_length", 8)))
        raise ConfigError(f"template kind must be '{MANUAL}' or '{PSEUDO}', got {kind!r}")


def load_template(path) -> QuestionTemplate:
    with open(path, encoding="utf-8") as f:
        return QuestionTemplate.from_json(json.load(f))


def render_manual_question(
    instance: ClozeInstance, template: QuestionTemplate
) -> List[str]:
    """Substitute {arg}, {event_type} and {MASK} into the manual pattern."""
    if template.kind != MANUAL:
        raise ConfigError("render_manual_question requires a manual template")
    out: List[str] = []
    for word in template.pattern.split():
        if word == ARG_PLACEHOLDER:
            out.extend(instance.candidate_tokens)
        elif word == EVENT_TYPE_PLACEHOLDER:
            out.extend(event_type_tokens(instance.mention.event_type))
        elif word == MASK_PLACEHOLDER:
            out.append(MASK_TOKEN)
        else:
            out.append(word)
    return out


def render_pseudo_question(
    instance: ClozeInstance, template: QuestionTemplate
) -> List[str]:
    """[u1] .. [uP] followed by the candidate span tokens and one [MASK].

    The pseudo prefix is identical for every instance, so the trained prompt
    vectors are shared across the whole task.
    """
    if template.kind != PSEUDO:
        raise ConfigError("render_pseudo_question requires a pseudo template")
    prefix = [pseudo_token(i) for i in range(1, template.pseudo_length + 1)]
    return prefix + list(instance.candidate_tokens) + [MASK_TOKEN]


def render_question(instance: ClozeInstance, template: QuestionTemplate) -> List[str]:
    if template.kind == MANUAL:
        return render_manual_question(instance, template)
    return render_pseudo_question(instance, template)


@dataclass(frozen=True)
class InputSequence:
    """Tokenized [CLS] question [SEP] sentence [SEP] with mask bookkeeping."""

    token_ids: Tuple[int, ...]
    role_mask_index: int
    question_span: Tuple[int, int]  # half-open, over token_ids
    sentence_span: Tuple[int, int]
    pseudo_slots: Tuple[int, ...]
    instance_id: str

    def __len__(self) -> int:
        return len(self.token_ids)

    def with_token_ids(self, token_ids: Tuple[int, ...]) -> "InputSequence":
        if len(token_ids) != len(self.token_ids):
            raise ConfigError("token id replacement must preserve length")
        return replace(self, token_ids=tuple(token_ids))


def assemble_sequence(
    question: List[str],
    sentence: List[str],
    vocab: Vocabulary,
    max_len: int,
    instance_id: str = "",
) -> InputSequence:
    """Pack question and sentence into one id sequence.

    The sentence is truncated from the right if the total exceeds ``max_len``;
    the question is never truncated.
    """
    n_mask = question.count(MASK_TOKEN)
    if n_mask != 1:
        raise MissingPlaceholder(
            f"question must contain exactly one {MASK_TOKEN}, found {n_mask}"
        )
    budget = max_len - len(question) - 3
    if budget < 0:
        raise QuestionTooLong(
            f"question of {len(question)} tokens plus specials exceeds "
            f"max_len={max_len}"
        )
    sentence = sentence[:budget]

    ids = [vocab.cls_id]
    ids.extend(vocab.encode(question))
    ids.append(vocab.sep_id)
    q_span = (1, 1 + len(question))
    s_start = len(ids)
    ids.extend(vocab.encode(sentence))
    ids.append(vocab.sep_id)
    s_span = (s_start, s_start + len(sentence))

    mask_index = 1 + question.index(MASK_TOKEN)
    pseudo_ids = set(vocab.pseudo_ids(MAX_PSEUDO_TOKENS))
    slots = tuple(
        i for i in range(q_span[0], q_span[1]) if ids[i] in pseudo_ids
    )
    return InputSequence(
        token_ids=tuple(ids),
        role_mask_index=mask_index,
        question_span=q_span,
        sentence_span=s_span,
        pseudo_slots=slots,
        instance_id=instance_id,
    )


def build_sequence(
    instance: ClozeInstance,
    template: QuestionTemplate,
    vocab: Vocabulary,
    max_len: int,
) -> InputSequence:
    """Render the instance's question and assemble its input sequence."""
    question = render_question(instance, template)
    return assemble_sequence(
        question,
        list(instance.mention.sentence_tokens),
        vocab,
        max_len,
        instance_id=instance.instance_id,
    )
