"""Command line entry points: generate, train, eval, project, sweep.

Exit codes: 0 on success, 1 for configuration problems (bad arguments,
malformed data or templates), 2 for runtime failures (missing files,
non-finite losses).  The output directory defaults to $ARGCLOZE_OUTPUT_DIR
when set, else ./runs/<command>.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ArgClozeError, ConfigError, RuntimeFailure
from .evaluate import score_instances
from .model import EncoderConfig, new_prompt_embeddings, seeded_encoder
from .ontology import (
    EventMention,
    EventOntology,
    build_instances,
    load_corpus,
    load_ontology,
    sample_few_shot,
)
from .synth import (
    assemble_vocabulary,
    generate_synthetic_corpus,
    load_splits,
    split_instances,
    write_corpus,
)
from .templates import MANUAL, PSEUDO, QuestionTemplate, load_template
from .training import (
    BASE,
    TrainConfig,
    Trainer,
    _mix_seed,
    freeze_check,
    pretrain_encoder,
    project_pseudo_tokens,
    state_snapshot,
)

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "ARGCLOZE_OUTPUT_DIR"

DEFAULT_PATTERN = "in the {event_type} event {arg} fills the role of {MASK}"
WEAK_PATTERN = "the {event_type} event involves a {MASK}"

DEFAULT_LR = {BASE: 0.1, PSEUDO: 0.5}
CHECKPOINT_NAME = "checkpoint.npz"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are config errors, not exit 2
        raise ConfigError(message)


def _resolve_out(explicit: Optional[str], command: str) -> Path:
    if explicit:
        return Path(explicit)
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return Path(env)
    return Path("runs") / command


def _load_data(data_dir) -> Tuple[EventOntology, List[EventMention], Optional[dict]]:
    data = Path(data_dir)
    ontology = load_ontology(data / "ontology.json")
    mentions = load_corpus(data / "corpus.jsonl", ontology)
    splits_path = data / "splits.json"
    splits = load_splits(splits_path) if splits_path.exists() else None
    return ontology, mentions, splits


def _resolve_template(args, mode: str) -> QuestionTemplate:
    if getattr(args, "template", None):
        return load_template(args.template)
    if mode == PSEUDO:
        return QuestionTemplate(kind=PSEUDO, pseudo_length=args.pseudo_length)
    return QuestionTemplate(kind=MANUAL, pattern=args.pattern)


def _write_jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


# --- generate ---

def run_generate(args) -> int:
    out = _resolve_out(args.out, "generate")
    ontology, mentions, splits = generate_synthetic_corpus(
        n_event_types=args.event_types,
        roles_per_type=args.roles_per_type,
        n_sentences=args.sentences,
        seed=args.seed,
    )
    paths = write_corpus(out, ontology, mentions, splits)
    n_instances = len(build_instances(mentions))
    print(
        f"wrote {len(mentions)} mentions ({n_instances} candidates, "
        f"{len(ontology.event_types)} event types) to {out}"
    )
    for name in ("ontology", "corpus", "splits"):
        logger.info("%s: %s", name, paths[name])
    return 0


# --- train ---

def _train_once(
    ontology: EventOntology,
    mentions: List[EventMention],
    splits: Optional[dict],
    template: QuestionTemplate,
    cfg: TrainConfig,
    enc_cfg: EncoderConfig,
    pretrain_steps: int,
    pretrain_lr: float,
    pretrain_optimizer: str,
    out: Optional[Path],
    train_instances=None,
    pretrain_sentences=None,
):
    """Shared engine for the train command and sweep runs.

    Returns (model, prompts, trainer, last_breakdown).  When ``out`` is given,
    log.jsonl and pretrain_log.jsonl are written there.
    """
    vocab = assemble_vocabulary(mentions, ontology, template)
    ontology.check_vocabulary(vocab)
    model = seeded_encoder(vocab, enc_cfg, cfg.seed)

    if train_instances is None:
        if splits is not None:
            train_instances = split_instances(mentions, splits)["train"]
        else:
            logger.warning("no splits.json; training on the whole corpus")
            train_instances = build_instances(mentions)
    if pretrain_sentences is None:
        if splits is not None:
            pretrain_sentences = [
                mentions[i].sentence_tokens for i in splits["train"]
            ]
        else:
            pretrain_sentences = [m.sentence_tokens for m in mentions]

    pretrain_rows = []
    if pretrain_steps > 0:
        pretrain_encoder(
            model,
            pretrain_sentences,
            steps=pretrain_steps,
            learning_rate=pretrain_lr,
            batch_size=cfg.batch_size,
            mask_rate=cfg.mask_rate,
            seed=_mix_seed(cfg.seed, 2),
            optimizer=pretrain_optimizer,
            on_step=lambda i, loss: pretrain_rows.append({"step": i, "loss": loss}),
        )

    prompts = None
    if cfg.mode == PSEUDO:
        prompts = new_prompt_embeddings(
            model, template.pseudo_length, _mix_seed(cfg.seed, 3)
        )

    frozen_before = state_snapshot(model) if cfg.encoder_frozen else None
    trainer = Trainer(model, prompts, train_instances, template, ontology, cfg)
    log_rows = []

    def on_step(step_i, breakdown):
        log_rows.append(
            {
                "step": step_i,
                "l_eae": breakdown.l_eae,
                "l_mlm": breakdown.l_mlm,
                "l_total": breakdown.l_total,
                "mode": cfg.mode,
                "seed": cfg.seed,
            }
        )

    history = trainer.run(cfg.steps, on_step=on_step)

    if frozen_before is not None:
        if not freeze_check(frozen_before, state_snapshot(model)):
            raise RuntimeFailure("frozen encoder parameters changed during training")

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_jsonl(out / "log.jsonl", log_rows)
        if pretrain_rows:
            _write_jsonl(out / "pretrain_log.jsonl", pretrain_rows)
    return model, prompts, trainer, (history[-1] if history else None)


def run_train(args) -> int:
    out = _resolve_out(args.out, "train")
    out.mkdir(parents=True, exist_ok=True)
    ontology, mentions, splits = _load_data(args.data)
    mode = args.mode
    template = _resolve_template(args, mode)
    lr = args.learning_rate if args.learning_rate is not None else DEFAULT_LR[mode]
    freeze = {"auto": None, "on": True, "off": False}[args.freeze_encoder]
    cfg = TrainConfig(
        mode=mode,
        learning_rate=lr,
        steps=args.steps,
        batch_size=args.batch_size,
        mask_rate=args.mask_rate,
        seed=args.seed,
        mlm_loss_form=args.mlm_loss,
        optimizer=args.optimizer,
        freeze_encoder=freeze,
    )
    enc_cfg = EncoderConfig(
        dim=args.dim, layers=args.layers, heads=args.heads, max_len=args.max_len
    )
    model, prompts, trainer, last = _train_once(
        ontology, mentions, splits, template, cfg,
        enc_cfg, args.pretrain_steps, args.pretrain_lr, args.pretrain_optimizer,
        out,
    )

    run_config = {
        "template": template.to_json(),
        "mode": cfg.mode,
        "seed": cfg.seed,
        "steps": cfg.steps,
        "learning_rate": cfg.learning_rate,
        "mlm_loss_form": cfg.mlm_loss_form,
        "optimizer": cfg.optimizer,
        "frozen": cfg.encoder_frozen,
        "pretrain_steps": args.pretrain_steps,
        "data": str(args.data),
    }
    save_checkpoint(out / CHECKPOINT_NAME, model, run_config, prompts)

    if prompts is not None:
        projection = project_pseudo_tokens(prompts, model, metric=args.metric)
        (out / "projection.json").write_text(
            json.dumps(
                {
                    "metric": args.metric,
                    "slots": [
                        {"slot": i + 1, "token": tok, "similarity": sim}
                        for i, (tok, sim) in enumerate(projection)
                    ],
                },
                indent=2,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )

    dev_report = None
    if splits is not None:
        dev = split_instances(mentions, splits)["dev"]
        if dev:
            dev_report, _ = score_instances(
                model, prompts, dev, template, ontology
            )
    summary = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "steps": cfg.steps,
        "frozen": cfg.encoder_frozen,
        "final_l_total": None if last is None else last.l_total,
        "dev": None if dev_report is None else dev_report.to_json(),
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if dev_report is not None:
        print(
            f"{cfg.mode} training done: {cfg.steps} steps, "
            f"dev F1 {dev_report.f1:.4f} ({out})"
        )
    else:
        print(f"{cfg.mode} training done: {cfg.steps} steps ({out})")
    return 0


# --- eval ---

def run_eval(args) -> int:
    out = _resolve_out(args.out, "eval")
    out.mkdir(parents=True, exist_ok=True)
    ckpt = load_checkpoint(args.checkpoint)
    ontology, mentions, splits = _load_data(args.data)
    template = QuestionTemplate.from_json(ckpt.run_config["template"])
    if args.split == "all" or splits is None:
        if args.split != "all" and splits is None:
            raise ConfigError(
                f"--split {args.split} requires a splits.json in {args.data}"
            )
        instances = build_instances(mentions)
    else:
        instances = split_instances(mentions, splits)[args.split]
    if not instances:
        raise ConfigError(f"split {args.split!r} holds no candidates")
    report, predictions = score_instances(
        ckpt.model, ckpt.prompts, instances, template, ontology
    )
    payload = report.to_json()
    payload["split"] = args.split
    payload["n_candidates"] = len(instances)
    (out / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if args.predictions:
        (out / "predictions.json").write_text(
            json.dumps(predictions, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    print(
        f"{args.split}: P {report.precision:.4f} R {report.recall:.4f} "
        f"F1 {report.f1:.4f} over {len(instances)} candidates"
    )
    return 0


# --- project ---

def run_project(args) -> int:
    out = _resolve_out(args.out, "project")
    out.mkdir(parents=True, exist_ok=True)
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.prompts is None:
        raise ConfigError("checkpoint holds no prompt embeddings to project")
    pairs = project_pseudo_tokens(ckpt.prompts, ckpt.model, metric=args.metric)
    (out / "projection.json").write_text(
        json.dumps(
            {
                "metric": args.metric,
                "slots": [
                    {"slot": i + 1, "token": tok, "similarity": sim}
                    for i, (tok, sim) in enumerate(pairs)
                ],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    for i, (tok, sim) in enumerate(pairs):
        print(f"[u{i + 1}] -> {tok} ({args.metric} {sim:.4f})")
    return 0


# --- sweep ---

def run_sweep(args) -> int:
    out = _resolve_out(args.out, "sweep")
    out.mkdir(parents=True, exist_ok=True)
    ontology, mentions, _ = _load_data(args.data)
    instances = build_instances(mentions)
    mode = args.mode
    template_args = argparse.Namespace(
        template=getattr(args, "template", None),
        pseudo_length=args.pseudo_length,
        pattern=args.pattern,
    )
    template = _resolve_template(template_args, mode)
    lr = args.learning_rate if args.learning_rate is not None else DEFAULT_LR[mode]
    enc_cfg = EncoderConfig(
        dim=args.dim, layers=args.layers, heads=args.heads, max_len=args.max_len
    )
    k_values = sorted({int(k) for k in args.k.split(",") if k.strip()})
    if not k_values:
        raise ConfigError("--k must name at least one shot count")
    seeds = list(range(args.seeds))
    if not seeds:
        raise ConfigError("--seeds must be >= 1")

    rows: List[dict] = []
    episodes: List[dict] = []
    for k in k_values:
        for seed in seeds:
            episode = sample_few_shot(instances, k, seed)
            episodes.append(episode.to_json())
            by_id = {inst.instance_id: inst for inst in instances}
            train_insts = [by_id[i] for i in episode.train_ids]
            test_insts = [by_id[i] for i in episode.test_ids]
            train_mention_idx = sorted(
                {int(i.split(":")[0]) for i in episode.train_ids}
            )
            sentences = [mentions[i].sentence_tokens for i in train_mention_idx]
            cfg = TrainConfig(
                mode=mode,
                learning_rate=lr,
                steps=args.steps,
                batch_size=args.batch_size,
                mask_rate=args.mask_rate,
                seed=seed,
                mlm_loss_form=args.mlm_loss,
                optimizer=args.optimizer,
            )
            model, prompts, _, _ = _train_once(
                ontology, mentions, None, template, cfg, enc_cfg,
                args.pretrain_steps, args.pretrain_lr, args.pretrain_optimizer,
                None,
                train_instances=train_insts, pretrain_sentences=sentences,
            )
            report, _ = score_instances(
                model, prompts, test_insts, template, ontology
            )
            rows.append(
                {
                    "k": k,
                    "seed": seed,
                    "precision": report.precision,
                    "recall": report.recall,
                    "f1": report.f1,
                    "n_test": len(test_insts),
                }
            )
            logger.info("k=%d seed=%d test F1 %.4f", k, seed, report.f1)

    summary: Dict[str, dict] = {}
    for k in k_values:
        f1s = [r["f1"] for r in rows if r["k"] == k]
        summary[str(k)] = {
            "median": statistics.median(f1s),
            "min": min(f1s),
            "max": max(f1s),
        }
    (out / "sweep.json").write_text(
        json.dumps(
            {
                "mode": mode,
                "steps": args.steps,
                "seeds": seeds,
                "rows": rows,
                "summary": summary,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    (out / "episodes.json").write_text(
        json.dumps(episodes, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"{'k':>4}  {'median':>8}  {'min':>8}  {'max':>8}")
    for k in k_values:
        s = summary[str(k)]
        print(f"{k:>4}  {s['median']:>8.4f}  {s['min']:>8.4f}  {s['max']:>8.4f}")
    return 0


# --- argument plumbing ---

def _add_encoder_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, default=16, help="hidden size")
    p.add_argument("--layers", type=int, default=2, help="transformer blocks")
    p.add_argument("--heads", type=int, default=2, help="attention heads")
    p.add_argument("--max-len", type=int, default=64, help="maximum sequence length")


def _add_train_args(p: argparse.ArgumentParser, steps: int, pretrain: int) -> None:
    p.add_argument("--data", required=True, help="directory with ontology.json, corpus.jsonl")
    p.add_argument("--mode", choices=[BASE, PSEUDO], default=PSEUDO)
    p.add_argument("--template", help="template JSON file")
    p.add_argument("--pattern", default=DEFAULT_PATTERN, help="manual question pattern")
    p.add_argument("--pseudo-length", type=int, default=8, help="pseudo token count")
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument(
        "--learning-rate", type=float, default=None,
        help=f"default {DEFAULT_LR[PSEUDO]} (pseudo) / {DEFAULT_LR[BASE]} (base)",
    )
    p.add_argument("--mask-rate", type=float, default=0.15)
    p.add_argument("--mlm-loss", choices=["bce", "ce"], default="bce")
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="sgd")
    p.add_argument("--pretrain-steps", type=int, default=pretrain,
                   help="masked-LM warmup steps before the cloze objective (0 disables)")
    p.add_argument("--pretrain-lr", type=float, default=0.01)
    p.add_argument("--pretrain-optimizer", choices=["adam", "sgd"], default="adam",
                   help="the warmup stands in for a pretrained model, so it may "
                        "use an adaptive optimizer regardless of --optimizer")
    p.add_argument("--seed", type=int, default=0)
    _add_encoder_args(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="argcloze", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic corpus")
    p.add_argument("--event-types", type=int, default=6)
    p.add_argument("--roles-per-type", type=int, default=3)
    p.add_argument("--sentences", type=int, default=900)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    p.set_defaults(func=run_generate)

    p = sub.add_parser("train", help="train on a corpus and save a checkpoint")
    _add_train_args(p, steps=500, pretrain=3000)
    p.add_argument("--freeze-encoder", choices=["auto", "on", "off"], default="auto",
                   help="auto: frozen exactly in pseudo mode")
    p.add_argument("--metric", choices=["cosine", "l2"], default="cosine",
                   help="projection metric for the saved prompt report")
    p.add_argument("--out")
    p.set_defaults(func=run_train)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "dev", "test", "all"], default="test")
    p.add_argument("--predictions", action="store_true",
                   help="also write per-candidate predictions")
    p.add_argument("--out")
    p.set_defaults(func=run_eval)

    p = sub.add_parser("project", help="nearest vocabulary tokens for trained prompts")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--metric", choices=["cosine", "l2"], default="cosine")
    p.add_argument("--out")
    p.set_defaults(func=run_project)

    p = sub.add_parser("sweep", help="few-shot episodes over k values and seeds")
    _add_train_args(p, steps=300, pretrain=3000)
    p.add_argument("--k", default="4,8,16,32", help="comma-separated shot counts")
    p.add_argument("--seeds", type=int, default=5, help="runs per k (seeds 0..n-1)")
    p.add_argument("--out")
    p.set_defaults(func=run_sweep)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        rc = args.func(args)
        return 0 if rc is None else rc
    except RuntimeFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ArgClozeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
