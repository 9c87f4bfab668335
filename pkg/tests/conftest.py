import pytest

from argcloze import (
    Argument,
    EncoderConfig,
    EventMention,
    EventOntology,
    EventTypeDef,
    QuestionTemplate,
    assemble_vocabulary,
    build_instances,
    seeded_encoder,
)


@pytest.fixture(scope="session")
def tiny_ontology():
    return EventOntology(
        (
            EventTypeDef(
                name="exchange.trade",
                roles=("giver", "recipient", "keeper"),
                verbalizer={"giver": "giver", "recipient": "recipient", "keeper": "keeper"},
            ),
            EventTypeDef(
                name="patrol.watch",
                roles=("keeper", "scout"),
                verbalizer={"keeper": "keeper", "scout": "scout"},
            ),
        )
    )


@pytest.fixture(scope="session")
def tiny_mentions():
    trade = "exchange.trade"
    watch = "patrol.watch"
    return [
        EventMention(
            sentence_tokens=("bano", "giver", "traded", "with", "rilu", "recipient"),
            trigger_span=(2, 3),
            event_type=trade,
            arguments=(
                Argument(span=(0, 1), role="giver"),
                Argument(span=(4, 5), role="recipient"),
            ),
        ),
        EventMention(
            sentence_tokens=("elder", "miso", "keeper", "watched", "near", "tavu", "scout"),
            trigger_span=(3, 4),
            event_type=watch,
            arguments=(
                Argument(span=(0, 2), role="keeper"),
                Argument(span=(5, 6), role="scout"),
                Argument(span=(4, 5), role=None),
            ),
        ),
        EventMention(
            sentence_tokens=("today", "felo", "keeper", "traded", "and", "bano", "giver"),
            trigger_span=(3, 4),
            event_type=trade,
            arguments=(
                Argument(span=(1, 2), role="keeper"),
                Argument(span=(5, 6), role="giver"),
            ),
        ),
        EventMention(
            sentence_tokens=("quietly", "tavu", "scout", "watched", "elder", "miso", "keeper"),
            trigger_span=(3, 4),
            event_type=watch,
            arguments=(
                Argument(span=(1, 2), role="scout"),
                Argument(span=(4, 6), role="keeper"),
            ),
        ),
    ]


@pytest.fixture(scope="session")
def tiny_instances(tiny_mentions):
    return build_instances(tiny_mentions)


@pytest.fixture(scope="session")
def pseudo_template():
    return QuestionTemplate(kind="pseudo", pseudo_length=4)


@pytest.fixture(scope="session")
def manual_template():
    return QuestionTemplate(
        kind="manual",
        pattern="in the {event_type} event {arg} fills the role of {MASK}",
    )


@pytest.fixture(scope="session")
def tiny_vocab(tiny_mentions, tiny_ontology, manual_template):
    return assemble_vocabulary(tiny_mentions, tiny_ontology, manual_template)


@pytest.fixture
def tiny_model(tiny_vocab):
    return seeded_encoder(tiny_vocab, EncoderConfig(), 0)
