"""Role prediction and micro precision/recall/F1 scoring.

Candidates are scored by running their rendered cloze sequence through the
encoder and taking the argmax over the event type's role distribution at the
question [MASK].  Every candidate receives a role prediction (the restricted
softmax has no abstain option), so negative candidates in the gold always
count against precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import torch

from .errors import KeyMismatch
from .model import ClozeEncoder, collate
from .ontology import ClozeInstance, EventOntology
from .templates import QuestionTemplate, build_sequence


@dataclass(frozen=True)
class RoleCounts:
    correct: int = 0
    predicted: int = 0
    gold: int = 0


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    per_role: Dict[str, RoleCounts]

    @property
    def counts(self) -> RoleCounts:
        return RoleCounts(
            correct=sum(c.correct for c in self.per_role.values()),
            predicted=sum(c.predicted for c in self.per_role.values()),
            gold=sum(c.gold for c in self.per_role.values()),
        )

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_role": {
                role: {"correct": c.correct, "predicted": c.predicted, "gold": c.gold}
                for role, c in sorted(self.per_role.items())
            },
        }


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def evaluate_prf(
    predictions: Mapping[str, Optional[str]],
    gold: Mapping[str, Optional[str]],
) -> EvalReport:
    """Micro-averaged P/R/F1 over candidate ids.

    A prediction is correct when it names the gold role of the same
    candidate.  None marks a negative candidate (no role): it never counts
    as predicted or gold.  The two mappings must cover the same ids.
    """
    if set(predictions) != set(gold):
        diff = sorted(set(predictions) ^ set(gold))
        raise KeyMismatch(f"prediction/gold id sets differ: {diff[:10]}")
    tallies: Dict[str, Dict[str, int]] = {}

    def bucket(role: str) -> Dict[str, int]:
        return tallies.setdefault(role, {"correct": 0, "predicted": 0, "gold": 0})

    for cid in gold:
        g, p = gold[cid], predictions[cid]
        if g is not None:
            bucket(g)["gold"] += 1
        if p is not None:
            bucket(p)["predicted"] += 1
        if g is not None and p == g:
            bucket(g)["correct"] += 1

    correct = sum(t["correct"] for t in tallies.values())
    predicted = sum(t["predicted"] for t in tallies.values())
    n_gold = sum(t["gold"] for t in tallies.values())
    precision = _safe_div(correct, predicted)
    recall = _safe_div(correct, n_gold)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1,
        per_role={
            role: RoleCounts(t["correct"], t["predicted"], t["gold"])
            for role, t in tallies.items()
        },
    )


def predict_roles(
    model: ClozeEncoder,
    prompts: Optional[torch.Tensor],
    instances: Sequence[ClozeInstance],
    template: QuestionTemplate,
    ontology: EventOntology,
    batch_size: int = 64,
) -> Dict[str, str]:
    """Argmax role for every candidate, keyed by instance id.

    Ties resolve to the role listed first in the event type definition.
    """
    vocab = model.vocab
    out: Dict[str, str] = {}
    with torch.no_grad():
        for start in range(0, len(instances), batch_size):
            chunk = instances[start : start + batch_size]
            seqs = [
                build_sequence(inst, template, vocab, model.cfg.max_len)
                for inst in chunk
            ]
            batch = collate(seqs, vocab)
            h = model(batch.ids, batch.key_mask, prompts, batch.slot_index)
            mask_h = h[torch.arange(len(chunk)), batch.mask_index]
            token_logits = mask_h @ model.embeddings.t()
            for i, inst in enumerate(chunk):
                etype = ontology.get(inst.mention.event_type)
                scores = [
                    float(token_logits[i, vocab.id(etype.verbalizer[r])])
                    for r in etype.roles
                ]
                best = max(range(len(scores)), key=lambda j: (scores[j], -j))
                out[inst.instance_id] = etype.roles[best]
    return out


def score_instances(
    model: ClozeEncoder,
    prompts: Optional[torch.Tensor],
    instances: Sequence[ClozeInstance],
    template: QuestionTemplate,
    ontology: EventOntology,
    batch_size: int = 64,
) -> Tuple[EvalReport, Dict[str, str]]:
    """Predict every candidate and score against the instances' gold roles."""
    predictions = predict_roles(
        model, prompts, instances, template, ontology, batch_size
    )
    gold = {inst.instance_id: inst.gold_role for inst in instances}
    return evaluate_prf(predictions, gold), predictions
