"""Exception types shared across the package.

Data/config problems raise subclasses of :class:`ConfigError`; failures that
can only happen at run time (numerical blow-ups, missing checkpoints) raise
subclasses of :class:`RuntimeFailure`.  The CLI maps the former to exit code 1
and the latter to exit code 2.
"""


class ArgClozeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ArgClozeError):
    """Bad inputs: malformed files, invalid parameters, contract violations."""


class RuntimeFailure(ArgClozeError):
    """Failures during training or evaluation."""


# --- ontology / corpus ---

class DuplicateVerbalizer(ConfigError):
    """Two roles of one event type map to the same verbalizer token."""


class MultiTokenVerbalizer(ConfigError):
    """A verbalizer word does not tokenize to a single vocabulary token."""


class UnknownToken(ConfigError):
    """A token is not present in the vocabulary."""


class SpanOutOfBounds(ConfigError):
    """A trigger or argument span falls outside its sentence."""


class UnknownEventType(ConfigError):
    """An event type is not defined in the ontology."""


class UnknownRole(ConfigError):
    """A role is not in its event type's role set."""


class EmptyCorpus(ConfigError):
    """An operation that needs instances received none."""


# --- templating ---

class MissingPlaceholder(ConfigError):
    """A manual pattern lacks a required placeholder."""


class QuestionTooLong(ConfigError):
    """The question plus special tokens alone exceed the length budget."""


# --- model / training ---

class ShapeMismatch(ArgClozeError):
    """Array shapes disagree with the declared configuration."""


class IndexOutOfBounds(ArgClozeError):
    """A position index falls outside the sequence."""


class GoldRoleMissing(ArgClozeError):
    """The gold role is absent from a predicted distribution."""


class NonFiniteLoss(RuntimeFailure):
    """A loss value became NaN or infinite; the step is aborted."""


# --- evaluation / IO ---

class KeyMismatch(ArgClozeError):
    """Prediction and gold maps cover different instance ids."""


class CheckpointMissing(RuntimeFailure):
    """The requested checkpoint file does not exist."""
