"""Argument extraction as a question-based cloze task over a small masked LM.

Candidate spans are classified into event roles by asking a templated
question whose single [MASK] is decoded against the event type's verbalizer
tokens.  Questions are either hand written or a learned sequence of
continuous prompt vectors trained against a frozen encoder.
"""

from .errors import (
    ArgClozeError,
    CheckpointMissing,
    ConfigError,
    DuplicateVerbalizer,
    EmptyCorpus,
    GoldRoleMissing,
    IndexOutOfBounds,
    KeyMismatch,
    MissingPlaceholder,
    MultiTokenVerbalizer,
    NonFiniteLoss,
    QuestionTooLong,
    RuntimeFailure,
    ShapeMismatch,
    SpanOutOfBounds,
    UnknownEventType,
    UnknownRole,
    UnknownToken,
)
from .vocab import (
    CLS_TOKEN,
    MASK_TOKEN,
    MAX_PSEUDO_TOKENS,
    PAD_TOKEN,
    SEP_TOKEN,
    SPECIAL_TOKENS,
    Vocabulary,
    pseudo_token,
)
from .ontology import (
    Argument,
    ClozeInstance,
    EventMention,
    EventOntology,
    EventTypeDef,
    FewShotEpisode,
    build_instances,
    class_key,
    load_corpus,
    load_ontology,
    sample_few_shot,
)
from .templates import (
    MANUAL,
    PSEUDO,
    InputSequence,
    QuestionTemplate,
    assemble_sequence,
    build_sequence,
    event_type_tokens,
    load_template,
    render_manual_question,
    render_pseudo_question,
    render_question,
)
from .model import (
    Batch,
    ClozeEncoder,
    EncoderConfig,
    collate,
    encode,
    encode_batch,
    new_prompt_embeddings,
    role_distribution,
    seeded_encoder,
    vocab_distribution,
)
from .training import (
    ACTION_KEEP,
    ACTION_MASK,
    ACTION_RANDOM,
    NEG_FILL,
    LossBreakdown,
    MaskingPlan,
    TrainConfig,
    Trainer,
    apply_random_masking,
    eae_loss,
    freeze_check,
    joint_loss,
    mlm_loss,
    pretrain_encoder,
    project_pseudo_tokens,
    state_snapshot,
    total_loss,
    train_step,
)
from .evaluate import EvalReport, RoleCounts, evaluate_prf, predict_roles, score_instances
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .synth import (
    assemble_vocabulary,
    build_ontology,
    generate_synthetic_corpus,
    load_splits,
    role_names,
    role_pool,
    split_instances,
    write_corpus,
)

__version__ = "0.1.0"
