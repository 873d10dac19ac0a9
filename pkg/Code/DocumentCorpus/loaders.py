from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from Code.Common.errors import ParseError, SchemaError
from Code.Common.jsonl import read_text
from Code.Common.logging_setup import get_logger
from Code.DocumentCorpus.corpus import (
    Dataset,
    Document,
    Entity,
    Mention,
    RelationInstance,
)

logger = get_logger(__name__)


class DatasetFormat(str, Enum):
    docred_json = "docred_json"
    men_json = "men_json"


# Source keys per format, in lookup order. MEN releases follow the DocRED
# layout but some dumps use the longer names on the right.
_KEYS = {
    DatasetFormat.docred_json: {
        "doc_id": ("doc_id", "title"),
        "sents": ("sents",),
        "vertexSet": ("vertexSet",),
        "labels": ("labels",),
        "h": ("h",),
        "t": ("t",),
        "r": ("r",),
    },
    DatasetFormat.men_json: {
        "doc_id": ("doc_id", "id", "title"),
        "sents": ("sents", "sentences"),
        "vertexSet": ("vertexSet", "entities"),
        "labels": ("labels", "relations"),
        "h": ("h", "head"),
        "t": ("t", "tail"),
        "r": ("r", "relation"),
    },
}


@dataclass
class ValidationProblem:
    doc_id: str
    field: str
    reason: str


@dataclass
class ValidationReport:
    """
    Summary of a dataset file: counts of what loaded and a list of every
    document that violated an invariant.
    """
    path: str
    format: str
    documents: int = 0
    entities: int = 0
    relations: int = 0
    labels: int = 0
    problems: list[ValidationProblem] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.problems

    def to_dict(self) -> dict[str, Any]:
        report = asdict(self)
        report["valid"] = self.valid
        return report


def load_dataset(
        path: str | Path,
        format: DatasetFormat | str = DatasetFormat.docred_json,
        relation_names: str | Path | None = None,
        lenient: bool = False,
        check_surfaces: bool = True,
        name: str | None = None
) -> Dataset:
    """
    Reads a DocRED-style JSON array of documents into a Dataset.
    :param path: JSON file holding an array of document records.
    :param format: docred_json or men_json (see _KEYS for the field mapping).
    :param relation_names: Optional JSON object mapping raw relation ids
    (e.g. "P69") to readable names (e.g. "educated at"), as shipped with
    DocRED in rel_info.json.
    :param lenient: Skip and log documents that fail validation instead of
    aborting the whole load.
    :param check_surfaces: Compare every mention's surface with the tokens of
    its span (whitespace ignored).
    :param name: Dataset name; defaults to the file stem.
    :return: A Dataset whose documents all satisfy the corpus invariants.
    """
    dataset, report = _load(path, format, relation_names, lenient,
                            check_surfaces, name)
    if report.problems:
        logger.warning(
            "Skipped %d invalid documents while loading %s",
            len(report.problems), path
        )
    return dataset


def validate_dataset_file(
        path: str | Path,
        format: DatasetFormat | str = DatasetFormat.docred_json,
        relation_names: str | Path | None = None,
        check_surfaces: bool = True
) -> ValidationReport:
    """Loads leniently and returns the full report instead of the dataset."""
    _, report = _load(path, format, relation_names, True, check_surfaces,
                      None)
    return report


def _load(path, format, relation_names, lenient, check_surfaces, name):
    format = DatasetFormat(format)
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset file {path} not found.")
    records = _read_json_array(path)
    names = _read_relation_names(relation_names)

    report = ValidationReport(path=str(path), format=format.value)
    documents = []
    seen_ids = set()
    for position, record in enumerate(records):
        try:
            document = _parse_record(record, position, format, names,
                                     check_surfaces)
            if document.doc_id in seen_ids:
                raise SchemaError(document.doc_id, "doc_id",
                                  "doc_id is not unique within the dataset.")
        except SchemaError as error:
            if not lenient:
                raise
            report.problems.append(
                ValidationProblem(error.doc_id, error.field, error.reason)
            )
            continue
        seen_ids.add(document.doc_id)
        documents.append(document)

    label_inventory = frozenset(
        relation.relation_label
        for document in documents
        for relation in document.gold_relations
    )
    report.documents = len(documents)
    report.entities = sum(len(document.entities) for document in documents)
    report.relations = sum(
        len(document.gold_relations) for document in documents
    )
    report.labels = len(label_inventory)
    dataset = Dataset(
        name=name or path.stem,
        documents=tuple(documents),
        label_inventory=label_inventory
    )
    return dataset, report


def _read_json_array(path: Path) -> list:
    text = read_text(path)
    try:
        records = json.loads(text)
    except json.JSONDecodeError as error:
        raise ParseError(str(path), error.lineno, error.colno,
                         error.msg) from error
    if not isinstance(records, list):
        raise ParseError(str(path), 1, 1,
                         "top level value is not a JSON array of documents")
    return records


def _read_relation_names(path) -> dict[str, str]:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise FileNotFoundError(f"Relation name file {path} not found.")
    try:
        names = json.loads(read_text(path))
    except json.JSONDecodeError as error:
        raise ParseError(str(path), error.lineno, error.colno,
                         error.msg) from error
    if not isinstance(names, dict):
        raise ParseError(str(path), 1, 1,
                         "relation name file should hold a JSON object")
    return {str(key): str(value) for key, value in names.items()}


def _get(record: dict, keys: tuple[str, ...], default=KeyError):
    for key in keys:
        if key in record:
            return key, record[key]
    if default is KeyError:
        raise KeyError(keys[0])
    return None, default


def _parse_record(
        record: Any,
        position: int,
        format: DatasetFormat,
        relation_names: dict[str, str],
        check_surfaces: bool
) -> Document:
    keys = _KEYS[format]
    fallback_id = f"#{position}"
    if not isinstance(record, dict):
        raise SchemaError(fallback_id, "<record>",
                          "document record is not a JSON object.")
    _, doc_id = _get(record, keys["doc_id"], default=fallback_id)
    doc_id = str(doc_id)
    used_keys = set()

    try:
        sents_key, raw_sents = _get(record, keys["sents"])
    except KeyError:
        raise SchemaError(doc_id, keys["sents"][0], "missing sentences.")
    used_keys.add(sents_key)
    if not isinstance(raw_sents, list) or not all(
            isinstance(sentence, list)
            and all(isinstance(token, str) for token in sentence)
            for sentence in raw_sents):
        raise SchemaError(doc_id, sents_key,
                          "sentences should be a list of token lists.")
    sentences = tuple(tuple(sentence) for sentence in raw_sents)

    try:
        vertex_key, raw_vertices = _get(record, keys["vertexSet"])
    except KeyError:
        raise SchemaError(doc_id, keys["vertexSet"][0], "missing entities.")
    used_keys.add(vertex_key)
    if not isinstance(raw_vertices, list):
        raise SchemaError(doc_id, vertex_key,
                          "entities should be a list of mention lists.")
    entities = tuple(
        _parse_entity(doc_id, index, vertex, sentences, check_surfaces)
        for index, vertex in enumerate(raw_vertices)
    )

    labels_key, raw_labels = _get(record, keys["labels"], default=[])
    used_keys.add(labels_key)
    if not isinstance(raw_labels, list):
        raise SchemaError(doc_id, keys["labels"][0],
                          "labels should be a list.")
    relations = []
    for index, label in enumerate(raw_labels):
        where = f"{keys['labels'][0]}[{index}]"
        if not isinstance(label, dict):
            raise SchemaError(doc_id, where, "label is not an object.")
        try:
            _, head = _get(label, keys["h"])
            _, tail = _get(label, keys["t"])
            _, raw_label = _get(label, keys["r"])
        except KeyError as error:
            raise SchemaError(doc_id, f"{where}.{error.args[0]}",
                              "missing field.")
        if not isinstance(head, int) or not isinstance(tail, int):
            raise SchemaError(doc_id, where,
                              "head and tail should be integers.")
        relation_label = relation_names.get(str(raw_label), str(raw_label))
        relations.append(RelationInstance(head, tail, relation_label))

    metadata = {
        key: value for key, value in record.items()
        if key not in used_keys and key not in keys["doc_id"]
    }
    _, title = _get(record, ("title",), default=doc_id)
    return Document(
        doc_id=doc_id,
        title=str(title),
        sentences=sentences,
        entities=entities,
        gold_relations=tuple(relations),
        metadata=metadata
    )


def _parse_entity(
        doc_id: str,
        index: int,
        vertex: Any,
        sentences: tuple[tuple[str, ...], ...],
        check_surfaces: bool
) -> Entity:
    where = f"vertexSet[{index}]"
    if isinstance(vertex, dict):
        # {"type": ..., "mentions": [...]} as used by some MEN dumps
        raw_mentions = vertex.get("mentions")
        entity_type = vertex.get("type")
    else:
        raw_mentions = vertex
        entity_type = None
    if not isinstance(raw_mentions, list) or not raw_mentions:
        raise SchemaError(doc_id, where, "entity has no mentions.")

    mentions = []
    for mention_index, raw in enumerate(raw_mentions):
        mention_where = f"{where}[{mention_index}]"
        if not isinstance(raw, dict):
            raise SchemaError(doc_id, mention_where,
                              "mention is not an object.")
        name = raw.get("name")
        sent_id = raw.get("sent_id")
        pos = raw.get("pos")
        if not isinstance(name, str) or not name.strip():
            raise SchemaError(doc_id, f"{mention_where}.name",
                              "mention name is missing or empty.")
        if not isinstance(sent_id, int):
            raise SchemaError(doc_id, f"{mention_where}.sent_id",
                              "sent_id should be an integer.")
        if (not isinstance(pos, list) or len(pos) != 2
                or not all(isinstance(value, int) for value in pos)):
            raise SchemaError(doc_id, f"{mention_where}.pos",
                              "pos should be a [start, end] pair.")
        if entity_type is None:
            entity_type = raw.get("type")
        mention = Mention(name, sent_id, (pos[0], pos[1]))
        if (check_surfaces and 0 <= sent_id < len(sentences)
                and 0 <= pos[0] < pos[1] <= len(sentences[sent_id])):
            span_text = "".join(sentences[sent_id][pos[0]:pos[1]])
            if "".join(name.split()) != span_text:
                raise SchemaError(
                    doc_id, f"{mention_where}.name",
                    f"surface {name!r} does not match its token span "
                    f"{sentences[sent_id][pos[0]:pos[1]]!r}."
                )
        mentions.append(mention)

    if not isinstance(entity_type, str) or not entity_type:
        raise SchemaError(doc_id, f"{where}.type", "entity type is missing.")
    return Entity(
        entity_index=index,
        mentions=tuple(mentions),
        entity_type=entity_type
    )
