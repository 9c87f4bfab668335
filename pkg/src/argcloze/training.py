"""Joint training objective, random masking, and prompt optimization.

The total loss is the sum of the role-prediction cross entropy (over the
event type's verbalizer logits at the question [MASK]) and an auxiliary
masked-language-model loss over randomly masked sentence tokens.  In pseudo
mode every encoder weight is frozen and only the continuous prompt vectors
receive gradient updates; in base mode the whole encoder is fine-tuned.

Also here: masked-LM pretraining of the encoder on raw sentences (the
desk-scale stand-in for starting from a pretrained language model), nearest
neighbor projection of trained prompt vectors back to vocabulary tokens, and
the bit-exactness check used to verify the freeze contract.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch

from .errors import (
    ConfigError,
    EmptyCorpus,
    GoldRoleMissing,
    NonFiniteLoss,
    ShapeMismatch,
)
from .model import ClozeEncoder, collate, vocab_distribution
from .ontology import ClozeInstance, EventOntology
from .templates import InputSequence, QuestionTemplate, build_sequence
from .vocab import Vocabulary

logger = logging.getLogger(__name__)

BASE = "base"
PSEUDO = "pseudo"

ACTION_MASK = "mask"
ACTION_RANDOM = "random"
ACTION_KEEP = "keep"

NEG_FILL = -1e30  # exp() underflows to exactly 0.0 in float64


@dataclass(frozen=True)
class MaskingPlan:
    positions: Tuple[int, ...]
    original_ids: Tuple[int, ...]
    actions: Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class LossBreakdown:
    l_eae: float
    l_mlm: float
    l_total: float

    def __post_init__(self):
        if self.l_total != self.l_eae + self.l_mlm:
            raise ConfigError("l_total must equal l_eae + l_mlm exactly")


def total_loss(l_eae: float, l_mlm: float) -> LossBreakdown:
    if not (math.isfinite(l_eae) and math.isfinite(l_mlm)):
        raise NonFiniteLoss(f"non-finite loss components: eae={l_eae}, mlm={l_mlm}")
    return LossBreakdown(l_eae=l_eae, l_mlm=l_mlm, l_total=l_eae + l_mlm)


@dataclass(frozen=True)
class TrainConfig:
    mode: str = PSEUDO
    learning_rate: float = 0.5
    steps: int = 500
    batch_size: int = 32
    mask_rate: float = 0.15
    seed: int = 0
    mlm_loss_form: str = "bce"  # "bce" (one-vs-rest, as the objective is stated) or "ce"
    optimizer: str = "sgd"     # "sgd" (plain gradient descent) or "adam"
    freeze_encoder: Optional[bool] = None  # None: frozen iff mode == "pseudo"

    def __post_init__(self):
        if self.mode not in (BASE, PSEUDO):
            raise ConfigError(f"mode must be '{BASE}' or '{PSEUDO}', got {self.mode!r}")
        if not 0 <= self.mask_rate < 1:
            raise ConfigError(f"mask_rate must be in [0, 1), got {self.mask_rate}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.mlm_loss_form not in ("bce", "ce"):
            raise ConfigError(f"mlm_loss_form must be 'bce' or 'ce'")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam'")

    @property
    def encoder_frozen(self) -> bool:
        if self.freeze_encoder is None:
            return self.mode == PSEUDO
        return self.freeze_encoder


def _mix_seed(*parts: int) -> int:
    """Stable integer mixing for derived RNG seeds (no Python hash salting)."""
    acc = 0
    for p in parts:
        acc = (acc * 1_000_003 + p) % (2 ** 63)
    return acc


def _draw_masking(
    ids: List[int],
    eligible: Iterable[int],
    mask_rate: float,
    rng: random.Random,
    vocab: Vocabulary,
) -> Tuple[List[int], List[int], List[int], List[str]]:
    """BERT-recipe masking over the eligible positions of an id list.

    Each eligible position is independently selected with probability
    ``mask_rate``; selected positions get [MASK] 80% of the time, a random
    non-special token 10%, and keep their token 10%.
    """
    new_ids = list(ids)
    positions, originals, actions = [], [], []
    lo, hi = vocab.first_regular_id, len(vocab)
    for pos in eligible:
        if rng.random() >= mask_rate:
            continue
        roll = rng.random()
        if roll < 0.8:
            action = ACTION_MASK
            new_ids[pos] = vocab.mask_id
        elif roll < 0.9:
            action = ACTION_RANDOM
            new_ids[pos] = rng.randrange(lo, hi)
        else:
            action = ACTION_KEEP
        positions.append(pos)
        originals.append(ids[pos])
        actions.append(action)
    return new_ids, positions, originals, actions


def apply_random_masking(
    seq: InputSequence, mask_rate: float, seed: int, vocab: Vocabulary
) -> Tuple[InputSequence, MaskingPlan]:
    """Randomly mask sentence tokens; the question segment is never touched."""
    if not 0 <= mask_rate < 1:
        raise ConfigError(f"mask_rate must be in [0, 1), got {mask_rate}")
    rng = random.Random(seed)
    eligible = [
        pos
        for pos in range(*seq.sentence_span)
        if not vocab.is_special_id(seq.token_ids[pos])
    ]
    new_ids, positions, originals, actions = _draw_masking(
        list(seq.token_ids), eligible, mask_rate, rng, vocab
    )
    plan = MaskingPlan(
        positions=tuple(positions),
        original_ids=tuple(originals),
        actions=tuple(actions),
    )
    return seq.with_token_ids(tuple(new_ids)), plan


# --- loss contracts (scalar reference forms) ---

def eae_loss(dist: Mapping[str, float], gold_role: str) -> float:
    """Cross entropy of the role distribution: -log p(gold role)."""
    if gold_role not in dist:
        raise GoldRoleMissing(f"gold role {gold_role!r} absent from distribution")
    p = dist[gold_role]
    if p <= 0:
        return math.inf
    return -math.log(p)


def mlm_loss(
    masked_seq: InputSequence,
    plan: MaskingPlan,
    h: torch.Tensor,
    model: ClozeEncoder,
    form: str = "bce",
) -> float:
    """Masked-token reconstruction loss, summed over the plan's positions.

    "ce" scores -log q(original token); "bce" scores the one-vs-rest binary
    cross entropy of the full distribution against the one-hot original,
    summed over the vocabulary.
    """
    if form not in ("bce", "ce"):
        raise ConfigError(f"form must be 'bce' or 'ce', got {form!r}")
    total = 0.0
    for pos, orig in zip(plan.positions, plan.original_ids):
        q = vocab_distribution(h, pos, model)
        if form == "ce":
            total += (-torch.log(q[orig])).item()
        else:
            log_off = torch.log1p(-q)
            total += (-torch.log(q[orig]) - (log_off.sum() - log_off[orig])).item()
    return total


# --- batched differentiable losses ---

def _role_support(
    instances: Sequence[ClozeInstance], ontology: EventOntology, vocab: Vocabulary
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Per-instance verbalizer id matrix, validity mask, and gold positions."""
    max_roles = max(len(ontology.roles(i.mention.event_type)) for i in instances)
    verb_ids = torch.zeros((len(instances), max_roles), dtype=torch.long)
    valid = torch.zeros((len(instances), max_roles), dtype=torch.bool)
    gold_pos = torch.zeros(len(instances), dtype=torch.long)
    for i, inst in enumerate(instances):
        etype = ontology.get(inst.mention.event_type)
        if inst.gold_role is None:
            raise GoldRoleMissing(
                f"instance {inst.instance_id} has no gold role; "
                "negative candidates cannot be trained on"
            )
        if inst.gold_role not in etype.roles:
            raise GoldRoleMissing(
                f"instance {inst.instance_id}: role {inst.gold_role!r} "
                f"not in event type {etype.name!r}"
            )
        for j, role in enumerate(etype.roles):
            verb_ids[i, j] = vocab.id(etype.verbalizer[role])
            valid[i, j] = True
        gold_pos[i] = etype.roles.index(inst.gold_role)
    return verb_ids, valid, gold_pos


def joint_loss(
    model: ClozeEncoder,
    prompts: Optional[torch.Tensor],
    masked_seqs: Sequence[InputSequence],
    plans: Sequence[MaskingPlan],
    verb_ids: torch.Tensor,
    valid: torch.Tensor,
    gold_pos: torch.Tensor,
    mlm_form: str,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Differentiable (l_eae, l_mlm), each averaged over the batch."""
    batch = collate(masked_seqs, model.vocab)
    h = model(batch.ids, batch.key_mask, prompts, batch.slot_index)
    b = len(masked_seqs)
    emb = model.embeddings

    mask_h = h[torch.arange(b), batch.mask_index]          # [B, d]
    role_logits = (emb[verb_ids] * mask_h.unsqueeze(1)).sum(-1)
    role_logits = role_logits.masked_fill(~valid, NEG_FILL)
    role_logp = torch.log_softmax(role_logits, dim=-1)
    l_eae = -role_logp[torch.arange(b), gold_pos].mean()

    triples = [
        (i, pos, orig)
        for i, plan in enumerate(plans)
        for pos, orig in zip(plan.positions, plan.original_ids)
    ]
    if not triples:
        l_mlm = torch.zeros((), dtype=h.dtype)
    else:
        b_idx = torch.tensor([t[0] for t in triples], dtype=torch.long)
        p_idx = torch.tensor([t[1] for t in triples], dtype=torch.long)
        o_idx = torch.tensor([t[2] for t in triples], dtype=torch.long)
        logits = h[b_idx, p_idx] @ emb.t()                 # [N, V]
        logp = torch.log_softmax(logits, dim=-1)
        n_idx = torch.arange(len(triples))
        ce = -logp[n_idx, o_idx]
        if mlm_form == "ce":
            per_pos = ce
        else:
            log_off = torch.log1p(-logp.exp())
            per_pos = ce - (log_off.sum(-1) - log_off[n_idx, o_idx])
        per_instance = torch.zeros(b, dtype=h.dtype).index_add(0, b_idx, per_pos)
        l_mlm = per_instance.mean()
    return l_eae, l_mlm


# --- trainer ---

class Trainer:
    """Runs the joint objective over a fixed instance list.

    Sequences are rendered once at construction; only the random masking
    varies between steps.  All randomness derives from the config seed.
    """

    def __init__(
        self,
        model: ClozeEncoder,
        prompts: Optional[torch.nn.Parameter],
        instances: Sequence[ClozeInstance],
        template: QuestionTemplate,
        ontology: EventOntology,
        cfg: TrainConfig,
    ):
        if not instances:
            raise EmptyCorpus("no training instances")
        if cfg.mode == PSEUDO and template.kind != PSEUDO:
            raise ConfigError("pseudo mode requires a pseudo template")
        if cfg.mode == BASE and template.kind != "manual":
            raise ConfigError("base mode requires a manual template")
        if cfg.mode == PSEUDO and prompts is None:
            raise ConfigError("pseudo mode requires prompt embeddings")
        if cfg.mode == BASE and prompts is not None:
            raise ConfigError("base mode does not use prompt embeddings")

        self.model = model
        self.prompts = prompts
        self.cfg = cfg
        self.ontology = ontology
        self.template = template
        self.instances = [i for i in instances if i.gold_role is not None]
        dropped = len(instances) - len(self.instances)
        if dropped:
            logger.warning("dropped %d negative candidates from training", dropped)
        if not self.instances:
            raise EmptyCorpus("no positive training instances")

        vocab = model.vocab
        self.seqs = [
            build_sequence(inst, template, vocab, model.cfg.max_len)
            for inst in self.instances
        ]
        self.verb_ids, self.valid, self.gold_pos = _role_support(
            self.instances, ontology, vocab
        )

        for p in self.model.parameters():
            p.requires_grad_(not cfg.encoder_frozen)
        trainable = [p for p in self.model.parameters() if p.requires_grad]
        if self.prompts is not None:
            self.prompts.requires_grad_(True)
            trainable.append(self.prompts)
        self._trainable = trainable
        if not trainable:
            self.optimizer = None
            logger.warning("nothing is trainable; steps will only report losses")
        elif cfg.optimizer == "adam":
            self.optimizer = torch.optim.Adam(trainable, lr=cfg.learning_rate)
        else:
            self.optimizer = torch.optim.SGD(trainable, lr=cfg.learning_rate)

        self._rng = random.Random(_mix_seed(cfg.seed, 0xBA7C4))
        self._order: List[int] = []
        self._step = 0

    def _next_batch(self) -> List[int]:
        n = len(self.instances)
        take = min(self.cfg.batch_size, n)
        if len(self._order) < take:
            fresh = list(range(n))
            self._rng.shuffle(fresh)
            self._order.extend(fresh)
        batch, self._order = self._order[:take], self._order[take:]
        return batch

    def loss_for(
        self, indices: Sequence[int], mask_seed: int
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Differentiable loss components for the given instance indices."""
        masked, plans = [], []
        for j, idx in enumerate(indices):
            mseq, plan = apply_random_masking(
                self.seqs[idx], self.cfg.mask_rate, _mix_seed(mask_seed, j),
                self.model.vocab,
            )
            masked.append(mseq)
            plans.append(plan)
        idx_t = torch.tensor(list(indices), dtype=torch.long)
        return joint_loss(
            self.model,
            self.prompts,
            masked,
            plans,
            self.verb_ids[idx_t],
            self.valid[idx_t],
            self.gold_pos[idx_t],
            self.cfg.mlm_loss_form,
        )

    def step(self) -> LossBreakdown:
        """One optimization step; raises NonFiniteLoss with parameters intact."""
        indices = self._next_batch()
        l_eae_t, l_mlm_t = self.loss_for(
            indices, _mix_seed(self.cfg.seed, 1 + self._step)
        )
        breakdown = total_loss(l_eae_t.item(), l_mlm_t.item())
        if self.optimizer is not None:
            self.optimizer.zero_grad(set_to_none=True)
            (l_eae_t + l_mlm_t).backward()
            self.optimizer.step()
        self._step += 1
        return breakdown

    def run(self, steps: int, on_step=None) -> List[LossBreakdown]:
        history = []
        for _ in range(steps):
            breakdown = self.step()
            history.append(breakdown)
            if on_step is not None:
                on_step(self._step - 1, breakdown)
        return history


def train_step(
    batch: Sequence[ClozeInstance],
    model: ClozeEncoder,
    prompts: Optional[torch.nn.Parameter],
    cfg: TrainConfig,
    template: QuestionTemplate,
    ontology: EventOntology,
) -> LossBreakdown:
    """Single-shot convenience wrapper: one gradient step on one batch."""
    trainer = Trainer(model, prompts, batch, template, ontology, cfg)
    return trainer.step()


# --- masked-LM pretraining (stand-in for a pretrained language model) ---

def pretrain_encoder(
    model: ClozeEncoder,
    sentences: Sequence[Sequence[str]],
    steps: int,
    learning_rate: float,
    batch_size: int = 32,
    mask_rate: float = 0.15,
    seed: int = 0,
    optimizer: str = "sgd",
    on_step=None,
) -> List[float]:
    """Train all encoder weights with plain masked-LM on raw sentences.

    Sentences are packed as [CLS] tokens [SEP]; half the samples are prefixed
    with the tail of another corpus sentence so every position sees real
    content.  No role annotations are used anywhere.
    """
    if not sentences:
        raise EmptyCorpus("no sentences to pretrain on")
    vocab = model.vocab
    rng = random.Random(_mix_seed(seed, 0x93E7))
    for p in model.parameters():
        p.requires_grad_(True)
    if optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=learning_rate)
    else:
        opt = torch.optim.SGD(model.parameters(), lr=learning_rate)

    budget = model.cfg.max_len - 2
    losses: List[float] = []
    for step_i in range(steps):
        rows, triples = [], []
        for b in range(batch_size):
            tokens = list(rng.choice(sentences))
            if rng.random() < 0.5 and len(sentences) > 1:
                other = rng.choice(sentences)
                cut = rng.randrange(len(other))
                tokens = list(other[cut:]) + tokens
            tokens = tokens[:budget]
            ids = [vocab.cls_id] + vocab.encode(tokens) + [vocab.sep_id]
            eligible = range(1, 1 + len(tokens))
            new_ids, positions, originals, _ = _draw_masking(
                ids, eligible, mask_rate, rng, vocab
            )
            rows.append(new_ids)
            triples.extend((b, pos, orig) for pos, orig in zip(positions, originals))
        t = max(len(r) for r in rows)
        ids_t = torch.full((batch_size, t), vocab.pad_id, dtype=torch.long)
        key_mask = torch.zeros((batch_size, t), dtype=torch.bool)
        for b, r in enumerate(rows):
            ids_t[b, : len(r)] = torch.tensor(r, dtype=torch.long)
            key_mask[b, : len(r)] = True
        h = model(ids_t, key_mask)
        if triples:
            b_idx = torch.tensor([x[0] for x in triples], dtype=torch.long)
            p_idx = torch.tensor([x[1] for x in triples], dtype=torch.long)
            o_idx = torch.tensor([x[2] for x in triples], dtype=torch.long)
            logits = h[b_idx, p_idx] @ model.embeddings.t()
            logp = torch.log_softmax(logits, dim=-1)
            loss = -logp[torch.arange(len(triples)), o_idx].mean()
        else:
            loss = torch.zeros((), dtype=h.dtype)
        loss_value = loss.item()
        if not math.isfinite(loss_value):
            raise NonFiniteLoss(f"pretraining loss became {loss_value} at step {step_i}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        losses.append(loss_value)
        if on_step is not None:
            on_step(step_i, loss_value)
    return losses


# --- projection and freeze verification ---

def project_pseudo_tokens(
    prompts: torch.Tensor,
    model: ClozeEncoder,
    metric: str = "cosine",
) -> List[Tuple[str, float]]:
    """Nearest non-special vocabulary token for each prompt vector.

    Cosine similarity by default ("l2" reports negated euclidean distance).
    Ties resolve to the lowest token id; an all-zero prompt vector has no
    direction, so it reports the tie-break token with similarity 0.
    """
    if metric not in ("cosine", "l2"):
        raise ConfigError(f"metric must be 'cosine' or 'l2', got {metric!r}")
    vocab = model.vocab
    lo = vocab.first_regular_id
    emb = model.embeddings.detach().cpu().numpy()[lo:]
    if emb.shape[0] == 0:
        raise ConfigError("vocabulary has no non-special tokens to project onto")
    vectors = prompts.detach().cpu().numpy()
    if vectors.ndim != 2 or vectors.shape[1] != emb.shape[1]:
        raise ShapeMismatch(
            f"prompt matrix {vectors.shape} incompatible with embeddings {emb.shape}"
        )
    out: List[Tuple[str, float]] = []
    if metric == "cosine":
        norms = np.linalg.norm(emb, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        for vec in vectors:
            v_norm = np.linalg.norm(vec)
            if v_norm == 0:
                logger.warning("all-zero prompt vector; cosine undefined")
                out.append((vocab.token(lo), 0.0))
                continue
            sims = np.where(norms > 0, emb @ vec / (safe * v_norm), 0.0)
            best = int(np.flatnonzero(sims == sims.max())[0])
            out.append((vocab.token(lo + best), float(sims[best])))
    else:
        for vec in vectors:
            dists = np.linalg.norm(emb - vec[None, :], axis=1)
            best = int(np.flatnonzero(dists == dists.min())[0])
            out.append((vocab.token(lo + best), float(-dists[best])))
    return out


def state_snapshot(model: torch.nn.Module) -> Dict[str, np.ndarray]:
    """Detached copies of every parameter/buffer array, keyed by name."""
    return {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}


def freeze_check(
    before: Mapping[str, np.ndarray], after: Mapping[str, np.ndarray]
) -> bool:
    """True iff both snapshots hold bit-identical arrays under the same keys."""
    if set(before) != set(after):
        raise ShapeMismatch(
            f"snapshots cover different arrays: "
            f"{sorted(set(before) ^ set(after))}"
        )
    for key in before:
        a, b = np.asarray(before[key]), np.asarray(after[key])
        if a.shape != b.shape or a.dtype != b.dtype:
            raise ShapeMismatch(f"array {key!r}: {a.dtype}{a.shape} vs {b.dtype}{b.shape}")
        if a.tobytes() != b.tobytes():
            return False
    return True
