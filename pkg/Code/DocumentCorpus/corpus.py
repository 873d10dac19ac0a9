from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from itertools import permutations
from typing import Any

from Code.Common.errors import SchemaError, UnknownDocument


@dataclass(frozen=True)
class Mention:
    """
    One occurrence of an entity: its surface text, the sentence it occurs in
    and its half-open token span within that sentence.
    """
    surface: str
    sent_index: int
    token_span: tuple[int, int]


@dataclass(frozen=True)
class Entity:
    """
    An entity cluster. All mentions refer to the same real world thing; the
    first mention's surface is used as the canonical surface.
    """
    entity_index: int
    mentions: tuple[Mention, ...]
    entity_type: str

    @property
    def surface(self) -> str:
        return self.mentions[0].surface


@dataclass(frozen=True)
class RelationInstance:
    head_index: int
    tail_index: int
    relation_label: str


@dataclass(frozen=True)
class Document:
    """
    A document with its sentences (as token lists), entity clusters and gold
    relations. Construction fails with SchemaError if any structural
    invariant is violated, so every Document in memory is valid.
    """
    doc_id: str
    title: str
    sentences: tuple[tuple[str, ...], ...]
    entities: tuple[Entity, ...]
    gold_relations: tuple[RelationInstance, ...] = ()
    # Keys of the source record that have no place in the model.
    metadata: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        num_sentences = len(self.sentences)
        for position, entity in enumerate(self.entities):
            where = f"entities[{position}]"
            if entity.entity_index != position:
                raise SchemaError(
                    self.doc_id, where,
                    f"entity_index {entity.entity_index} does not match its "
                    f"position {position}."
                )
            if not entity.mentions:
                raise SchemaError(self.doc_id, where, "entity has no mentions.")
            if not entity.entity_type:
                raise SchemaError(self.doc_id, where, "entity_type is empty.")
            for mention in entity.mentions:
                if not 0 <= mention.sent_index < num_sentences:
                    raise SchemaError(
                        self.doc_id, f"{where}.sent_id",
                        f"sentence index {mention.sent_index} outside "
                        f"[0, {num_sentences})."
                    )
                start, end = mention.token_span
                sentence_length = len(self.sentences[mention.sent_index])
                if not 0 <= start < end <= sentence_length:
                    raise SchemaError(
                        self.doc_id, f"{where}.pos",
                        f"token span ({start}, {end}) invalid for a sentence "
                        f"of {sentence_length} tokens."
                    )
        num_entities = len(self.entities)
        for position, relation in enumerate(self.gold_relations):
            where = f"labels[{position}]"
            for role, index in (("h", relation.head_index),
                                ("t", relation.tail_index)):
                if not 0 <= index < num_entities:
                    raise SchemaError(
                        self.doc_id, f"{where}.{role}",
                        f"entity index {index} outside [0, {num_entities})."
                    )
            if relation.head_index == relation.tail_index:
                raise SchemaError(self.doc_id, where,
                                  "head and tail are the same entity.")
            if not relation.relation_label:
                raise SchemaError(self.doc_id, f"{where}.r",
                                  "relation label is empty.")

    def entity(self, index: int) -> Entity:
        if not 0 <= index < len(self.entities):
            raise IndexError(
                f"Entity index {index} out of range for document "
                f"{self.doc_id!r} with {len(self.entities)} entities."
            )
        return self.entities[index]


@dataclass(frozen=True)
class Dataset:
    name: str
    documents: tuple[Document, ...]
    label_inventory: frozenset[str]

    def __post_init__(self):
        seen = set()
        for document in self.documents:
            if document.doc_id in seen:
                raise SchemaError(document.doc_id, "doc_id",
                                  "doc_id is not unique within the dataset.")
            seen.add(document.doc_id)
        gold_labels = {
            relation.relation_label
            for document in self.documents
            for relation in document.gold_relations
        }
        if gold_labels and gold_labels != set(self.label_inventory):
            raise SchemaError(
                "*", "label_inventory",
                "label inventory differs from the labels in the gold data."
            )

    @property
    def labels(self) -> list[str]:
        """The label inventory in its canonical (sorted) order."""
        return sorted(self.label_inventory)

    def document(self, doc_id: str) -> Document:
        for document in self.documents:
            if document.doc_id == doc_id:
                return document
        raise UnknownDocument(doc_id)


class PairMode(str, Enum):
    gold_pairs = "gold_pairs"
    all_ordered_pairs = "all_ordered_pairs"


def enumerate_entity_pairs(
        doc: Document,
        mode: PairMode | str = PairMode.gold_pairs
) -> list[tuple[int, int]]:
    """
    Lists ordered (head, tail) entity index pairs of a document.
    :param mode: gold_pairs gives the distinct pairs of the gold relations in
    order of first occurrence; all_ordered_pairs gives every i != j pair in
    lexicographic order.
    """
    mode = PairMode(mode)
    if mode is PairMode.all_ordered_pairs:
        return list(permutations(range(len(doc.entities)), 2))
    # dict keeps first-occurrence order
    pairs = {
        (relation.head_index, relation.tail_index): None
        for relation in doc.gold_relations
    }
    return list(pairs)


def sentence_gap(doc: Document, head_index: int, tail_index: int) -> int:
    """
    Minimum sentence distance over all (head mention, tail mention) pairs.
    0 means the two entities share a sentence.
    """
    head = doc.entity(head_index)
    tail = doc.entity(tail_index)
    return min(
        abs(head_mention.sent_index - tail_mention.sent_index)
        for head_mention in head.mentions
        for tail_mention in tail.mentions
    )
