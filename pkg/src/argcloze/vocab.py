"""Closed whitespace-token vocabulary for the toy masked language model.

The vocabulary is built once from everything the model will ever see (corpus
words, verbalizer tokens, event type name parts, template words) plus a fixed
block of special tokens.  Using whitespace tokens with a closed vocabulary
means every word maps to exactly one id, which keeps the single-token
verbalizer requirement trivial to enforce.
"""

from __future__ import annotations

from typing import Iterable, List, Sequence

from .errors import UnknownToken

PAD_TOKEN = "[PAD]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
MASK_TOKEN = "[MASK]"

# Reserved continuous-prompt slots; templates may use a prefix of them.
MAX_PSEUDO_TOKENS = 32


def pseudo_token(i: int) -> str:
    """Surface form of the i-th (1-based) pseudo question token."""
    if not 1 <= i <= MAX_PSEUDO_TOKENS:
        raise ValueError(f"pseudo token index {i} outside 1..{MAX_PSEUDO_TOKENS}")
    return f"[u{i}]"


SPECIAL_TOKENS: List[str] = [PAD_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN] + [
    pseudo_token(i) for i in range(1, MAX_PSEUDO_TOKENS + 1)
]


class Vocabulary:
    """Bijection between tokens and ids 0..len-1, specials first."""

    def __init__(self, tokens: Sequence[str]):
        self._tokens = list(tokens)
        self._ids = {}
        for i, tok in enumerate(self._tokens):
            if tok in self._ids:
                raise ValueError(f"duplicate token in vocabulary: {tok!r}")
            self._ids[tok] = i
        # Specials occupy the leading id block; is_special_id relies on this.
        if self._tokens[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special token block")

    @classmethod
    def build(cls, words: Iterable[str]) -> "Vocabulary":
        """Specials first, then the given words sorted and de-duplicated."""
        special = set(SPECIAL_TOKENS)
        extra = sorted({w for w in words if w not in special})
        return cls(SPECIAL_TOKENS + extra)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    @property
    def tokens(self) -> List[str]:
        return list(self._tokens)

    def id(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise UnknownToken(f"token not in vocabulary: {token!r}") from None

    def token(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._tokens):
            raise UnknownToken(f"id {token_id} outside vocabulary of size {len(self)}")
        return self._tokens[token_id]

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.token(i) for i in ids]

    @property
    def pad_id(self) -> int:
        return self._ids[PAD_TOKEN]

    @property
    def cls_id(self) -> int:
        return self._ids[CLS_TOKEN]

    @property
    def sep_id(self) -> int:
        return self._ids[SEP_TOKEN]

    @property
    def mask_id(self) -> int:
        return self._ids[MASK_TOKEN]

    def pseudo_ids(self, count: int) -> List[int]:
        """Ids of [u1]..[u<count>]."""
        return [self._ids[pseudo_token(i)] for i in range(1, count + 1)]

    @property
    def special_ids(self) -> List[int]:
        return [self._ids[t] for t in SPECIAL_TOKENS]

    def is_special_id(self, token_id: int) -> bool:
        return token_id < len(SPECIAL_TOKENS)

    @property
    def first_regular_id(self) -> int:
        """Lowest id of a non-special token; len(vocab) if there is none."""
        return len(SPECIAL_TOKENS)
