from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from Code.Common.errors import EmptyField

ROLE_TEMPLATE = "{entity_type} acting as {role_phrase}, described as {hypernym}"
CONTEXT_TEMPLATE = "Relation between {head_hypernym} and {tail_hypernym}"
COMBINED_TEMPLATE = "Head entity: {head_description} Tail entity: {tail_description}"

_ROLE_PHRASES = {"head": "a subject", "tail": "an object"}


class Role(str, Enum):
    head = "head"
    tail = "tail"


def _require(**values: str) -> None:
    for name, value in values.items():
        if not value or not value.strip():
            raise EmptyField(f"{name} is empty.")


def render_role_prompt(entity_type: str, hypernym: str, role: Role | str,
                       verbatim: bool = False) -> str:
    """
    Casts an entity as the subject (head) or object (tail) of a relation.
    :param verbatim: Render the tail as "a subject" too, exactly like the
    published template, instead of "an object".
    """
    _require(entity_type=entity_type, hypernym=hypernym)
    role = Role(role)
    role_phrase = "a subject" if verbatim else _ROLE_PHRASES[role.value]
    return ROLE_TEMPLATE.format(entity_type=entity_type,
                                role_phrase=role_phrase, hypernym=hypernym)


def render_context_prompt(head_hypernym: str, tail_hypernym: str) -> str:
    _require(head_hypernym=head_hypernym, tail_hypernym=tail_hypernym)
    return CONTEXT_TEMPLATE.format(head_hypernym=head_hypernym,
                                   tail_hypernym=tail_hypernym)


def combine_descriptions(head_description: str,
                         tail_description: str) -> str:
    """Merges both descriptions into one text; the head always comes first."""
    _require(head_description=head_description,
             tail_description=tail_description)
    return COMBINED_TEMPLATE.format(head_description=head_description,
                                    tail_description=tail_description)


@dataclass(frozen=True)
class PromptBundle:
    head_role_text: str
    tail_role_text: str
    context_text: str
    combined_description_text: str


def build_prompt_bundle(head, tail, verbatim: bool = False) -> PromptBundle:
    """
    Renders every pair-level text from the side information of the head and
    tail entities (anything with entity_type, hypernym and description).
    """
    return PromptBundle(
        head_role_text=render_role_prompt(head.entity_type, head.hypernym,
                                          Role.head, verbatim),
        tail_role_text=render_role_prompt(tail.entity_type, tail.hypernym,
                                          Role.tail, verbatim),
        context_text=render_context_prompt(head.hypernym, tail.hypernym),
        combined_description_text=combine_descriptions(head.description,
                                                       tail.description)
    )
