"""Toy masked-language-model encoder and the cloze prediction heads.

The encoder is a standard bidirectional transformer, small enough that full
training runs and finite-difference gradient checks finish in seconds.  The
output projection is tied to the input embedding matrix, so the score of a
verbalizer token at the [MASK] position is the dot product of that token's
embedding row with the mask's hidden vector.  All parameters are float64 for
exact, reproducible numerics.

Continuous prompt vectors (one per pseudo slot) are injected by *replacing*
the input embedding at each pseudo slot before the first transformer block.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import torch
from torch import nn

from .errors import ConfigError, IndexOutOfBounds, ShapeMismatch
from .ontology import EventOntology
from .templates import InputSequence
from .vocab import Vocabulary

EMBED_INIT_STD = 0.2
ATTN_MASK_FILL = -1e9  # finite so fully-masked rows stay NaN-free


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 16
    layers: int = 2
    heads: int = 2
    max_len: int = 64
    dropout: float = 0.0

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim={self.dim} not divisible by heads={self.heads}")
        if self.dropout < 0 or self.dropout >= 1:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "layers": self.layers,
            "heads": self.heads,
            "max_len": self.max_len,
            "dropout": self.dropout,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EncoderConfig":
        return cls(**obj)


class SelfAttention(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.heads = cfg.heads
        self.head_dim = cfg.dim // cfg.heads
        self.qkv = nn.Linear(cfg.dim, 3 * cfg.dim)
        self.proj = nn.Linear(cfg.dim, cfg.dim)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, key_mask=None):
        b, t, d = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q = q.view(b, t, self.heads, self.head_dim).transpose(1, 2)
        k = k.view(b, t, self.heads, self.head_dim).transpose(1, 2)
        v = v.view(b, t, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask[:, None, None, :], ATTN_MASK_FILL)
        att = torch.softmax(scores, dim=-1)
        att = self.drop(att)
        out = (att @ v).transpose(1, 2).reshape(b, t, d)
        return self.proj(out)


class Block(nn.Module):
    """Pre-norm transformer block: attention then feed-forward."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.dim)
        self.attn = SelfAttention(cfg)
        self.ln2 = nn.LayerNorm(cfg.dim)
        self.mlp = nn.Sequential(
            nn.Linear(cfg.dim, 4 * cfg.dim),
            nn.GELU(),
            nn.Linear(4 * cfg.dim, cfg.dim),
            nn.Dropout(cfg.dropout),
        )

    def forward(self, x, key_mask=None):
        x = x + self.attn(self.ln1(x), key_mask)
        x = x + self.mlp(self.ln2(x))
        return x


class ClozeEncoder(nn.Module):
    """Bidirectional transformer over a closed vocabulary, output tied to input."""

    def __init__(self, vocab: Vocabulary, cfg: EncoderConfig):
        super().__init__()
        self.vocab = vocab
        self.cfg = cfg
        self.tok_emb = nn.Embedding(len(vocab), cfg.dim)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.dim)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.layers))
        self.ln_f = nn.LayerNorm(cfg.dim)
        nn.init.normal_(self.tok_emb.weight, std=EMBED_INIT_STD)
        nn.init.normal_(self.pos_emb.weight, std=EMBED_INIT_STD)
        self.double()

    @property
    def embeddings(self) -> torch.Tensor:
        """Input embedding matrix; also the tied output projection."""
        return self.tok_emb.weight

    def forward(self, ids, key_mask=None, prompts=None, slot_index=None):
        """Final hidden states for a batch of id sequences.

        ids: [B, T] long.  key_mask: [B, T] bool, True where attendable.
        prompts: [P, dim] replacing the input embedding at slot_index: [B, P].
        """
        b, t = ids.shape
        if t > self.cfg.max_len:
            raise ShapeMismatch(f"sequence length {t} exceeds max_len={self.cfg.max_len}")
        x = self.tok_emb(ids)
        if prompts is not None and slot_index is not None and slot_index.numel():
            if prompts.shape[0] != slot_index.shape[1]:
                raise ShapeMismatch(
                    f"{prompts.shape[0]} prompt vectors for "
                    f"{slot_index.shape[1]} pseudo slots"
                )
            x = x.clone()
            batch_idx = torch.arange(b).unsqueeze(1)
            x[batch_idx, slot_index] = prompts.unsqueeze(0).expand(b, -1, -1)
        x = x + self.pos_emb.weight[:t]
        for block in self.blocks:
            x = block(x, key_mask)
        return self.ln_f(x)

    def logits(self, hidden) -> torch.Tensor:
        """Tied full-vocabulary logits: hidden @ embeddings.T."""
        return hidden @ self.tok_emb.weight.t()


def seeded_encoder(vocab: Vocabulary, cfg: EncoderConfig, seed: int) -> ClozeEncoder:
    """Construct an encoder with reproducible random initialization."""
    torch.manual_seed(seed)
    return ClozeEncoder(vocab, cfg)


def new_prompt_embeddings(
    model: ClozeEncoder, length: int, seed: int
) -> nn.Parameter:
    """Trainable prompt matrix [length, dim], one row per pseudo slot.

    Each row starts as a copy of the input embedding of a random non-special
    vocabulary token, so the initial prompts already live in embedding space
    and project back to themselves.
    """
    vocab = model.vocab
    if vocab.first_regular_id >= len(vocab):
        raise ConfigError("vocabulary has no non-special tokens to seed prompts from")
    rng = random.Random(seed)
    rows = [
        rng.randrange(vocab.first_regular_id, len(vocab)) for _ in range(length)
    ]
    with torch.no_grad():
        init = model.tok_emb.weight[rows].clone()
    return nn.Parameter(init)


# --- batching ---

@dataclass
class Batch:
    ids: torch.Tensor        # [B, T] long
    key_mask: torch.Tensor   # [B, T] bool
    mask_index: torch.Tensor  # [B] long, role [MASK] position per sequence
    slot_index: Optional[torch.Tensor]  # [B, P] long, or None without prompts
    seqs: List[InputSequence] = field(default_factory=list)


def collate(seqs: Sequence[InputSequence], vocab: Vocabulary) -> Batch:
    """Right-pad sequences with [PAD] and stack bookkeeping tensors."""
    if not seqs:
        raise ConfigError("cannot collate an empty sequence list")
    n_slots = len(seqs[0].pseudo_slots)
    if any(len(s.pseudo_slots) != n_slots for s in seqs):
        raise ShapeMismatch("sequences in one batch must share the pseudo slot count")
    t = max(len(s) for s in seqs)
    ids = torch.full((len(seqs), t), vocab.pad_id, dtype=torch.long)
    key_mask = torch.zeros((len(seqs), t), dtype=torch.bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = torch.tensor(s.token_ids, dtype=torch.long)
        key_mask[i, : len(s)] = True
    mask_index = torch.tensor([s.role_mask_index for s in seqs], dtype=torch.long)
    slot_index = None
    if n_slots:
        slot_index = torch.tensor(
            [list(s.pseudo_slots) for s in seqs], dtype=torch.long
        )
    return Batch(ids=ids, key_mask=key_mask, mask_index=mask_index,
                 slot_index=slot_index, seqs=list(seqs))


def encode_batch(
    model: ClozeEncoder,
    seqs: Sequence[InputSequence],
    prompts: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Hidden states [B, T, dim] for a list of sequences."""
    batch = collate(seqs, model.vocab)
    return model(batch.ids, batch.key_mask, prompts, batch.slot_index)


def encode(
    model: ClozeEncoder,
    seq: InputSequence,
    prompts: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Hidden states [T, dim] for one sequence."""
    if prompts is not None and prompts.shape[0] != len(seq.pseudo_slots):
        raise ShapeMismatch(
            f"{prompts.shape[0]} prompt vectors for {len(seq.pseudo_slots)} slots"
        )
    return encode_batch(model, [seq], prompts)[0]


# --- cloze heads ---

def role_distribution(
    h: torch.Tensor,
    seq: InputSequence,
    ontology: EventOntology,
    event_type: str,
    model: ClozeEncoder,
) -> Dict[str, float]:
    """Softmax over the event type's roles of verbalizer-row dot products.

    The normalization runs over exactly the role set, not the full vocabulary.
    """
    etype = ontology.get(event_type)
    if not 0 <= seq.role_mask_index < h.shape[0]:
        raise IndexOutOfBounds(
            f"role mask index {seq.role_mask_index} outside sequence of {h.shape[0]}"
        )
    mask_h = h[seq.role_mask_index]
    verb_ids = [model.vocab.id(etype.verbalizer[r]) for r in etype.roles]
    logits = model.tok_emb.weight[verb_ids] @ mask_h
    probs = torch.softmax(logits, dim=0)
    return {role: probs[i].item() for i, role in enumerate(etype.roles)}


def vocab_distribution(
    h: torch.Tensor, position: int, model: ClozeEncoder
) -> torch.Tensor:
    """Full-vocabulary softmax of the tied projection at one position."""
    if not 0 <= position < h.shape[0]:
        raise IndexOutOfBounds(f"position {position} outside sequence of {h.shape[0]}")
    return torch.softmax(model.logits(h[position]), dim=0)
