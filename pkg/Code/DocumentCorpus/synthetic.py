"""
A small deterministic DocRED-format corpus for smoke tests and offline
pipeline runs.

Hypernyms of both entities carry the words of the relation label for every
gold relation, while only every other head description names the relation;
the rest describe the entity without it. Description-only scoring is left
guessing on half of the pairs and the full weighted score is not, so the
corpus separates the two.
Entity side information is stored in each record's "synthetic_side_info"
field and served by SyntheticChatClient in place of a real LLM.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import regex

# label, head type, tail type, phrase used in descriptions
_LABELS = [
    ("educated_at", "PER", "ORG", "educated at"),
    ("employer", "PER", "ORG", "employer"),
    ("place_of_birth", "PER", "LOC", "place of birth"),
    ("spouse", "PER", "PER", "spouse"),
    ("founded_by", "ORG", "PER", "founded by"),
    ("headquarters_location", "ORG", "LOC", "headquarters location"),
    ("plays_for", "PER", "ORG", "plays for"),
    ("author", "PER", "MISC", "author"),
    ("capital", "LOC", "LOC", "capital"),
    ("parent_organization", "ORG", "ORG", "parent organization"),
]
_KIND = {"PER": "person", "ORG": "company", "LOC": "locality",
         "MISC": "work"}
_SYLLABLES = [
    "zor", "van", "tel", "kem", "lar", "qui", "mos", "dra", "fen", "ulo",
    "rix", "bao", "nel", "sut", "gry", "pha", "wen", "tok", "ima", "jes",
]
_FILLER = ("Nothing", "else", "happened", ".")

SIDE_INFO_KEY = "synthetic_side_info"


def build_synthetic_records(
        num_documents: int = 10,
        relations_per_document: int = 4,
        seed: int = 13
) -> list[dict[str, Any]]:
    """
    Builds the corpus as DocRED-style records. Labels are assigned round
    robin, so with the defaults every label occurs four times.
    """
    rng = np.random.default_rng(seed)
    used_names = set()
    records = []
    label_cursor = 0
    for doc_number in range(num_documents):
        sentences = []
        vertex_set = []
        side_info = []
        labels = []
        for slot in range(relations_per_document):
            label, head_type, tail_type, phrase = _LABELS[
                label_cursor % len(_LABELS)]
            label_cursor += 1
            head_name = _fresh_name(rng, used_names)
            tail_name = _fresh_name(rng, used_names)
            head_tokens = head_name.split()
            tail_tokens = tail_name.split()
            gap = (doc_number + slot) % 5

            if gap == 0:
                head_sent = len(sentences)
                tail_sent = head_sent
                sentence = head_tokens + ["and"] + tail_tokens + \
                    ["appear", "together", "."]
                sentences.append(sentence)
                head_pos = [0, len(head_tokens)]
                tail_pos = [len(head_tokens) + 1,
                            len(head_tokens) + 1 + len(tail_tokens)]
            else:
                head_sent = len(sentences)
                sentences.append(head_tokens + ["appears", "here", "."])
                for _ in range(gap - 1):
                    sentences.append(list(_FILLER))
                tail_sent = len(sentences)
                sentences.append(tail_tokens + ["appears", "too", "."])
                head_pos = [0, len(head_tokens)]
                tail_pos = [0, len(tail_tokens)]

            head_index = len(vertex_set)
            vertex_set.append([{"name": head_name, "type": head_type,
                                "sent_id": head_sent, "pos": head_pos}])
            vertex_set.append([{"name": tail_name, "type": tail_type,
                                "sent_id": tail_sent, "pos": tail_pos}])
            if (doc_number + slot) % 2 == 0:
                head_description = f"{head_name} {phrase} {tail_name}."
            else:
                head_description = (f"{head_name} is a {_KIND[head_type]} "
                                    f"named in the report.")
            side_info.append({
                "description": head_description,
                "hypernym": f"{phrase} figure",
            })
            side_info.append({
                "description": f"{tail_name} is a {_KIND[tail_type]} "
                               f"named in the report.",
                "hypernym": f"{phrase} venue",
            })
            labels.append({"h": head_index, "t": head_index + 1, "r": label,
                           "evidence": sorted({head_sent, tail_sent})})
        records.append({
            "title": f"synthetic-{doc_number:02d}",
            "sents": sentences,
            "vertexSet": vertex_set,
            "labels": labels,
            SIDE_INFO_KEY: side_info,
        })
    return records


def write_synthetic_dataset(path: str | Path, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(build_synthetic_records(**kwargs), file, indent=1,
                  ensure_ascii=False)
    return path


def _fresh_name(rng: np.random.Generator, used: set[str]) -> str:
    while True:
        first = "".join(rng.choice(_SYLLABLES, size=2)).capitalize()
        last = "".join(rng.choice(_SYLLABLES, size=2)).capitalize()
        name = f"{first} {last}"
        if name not in used:
            used.add(name)
            return name


class SyntheticChatClient:
    """
    Stub chat-completion client for corpora carrying synthetic side info.
    Answers description and hypernym prompts by looking up the "Entity:"
    line of the prompt. Never touches the network; counts its calls.
    """

    _ENTITY_LINE = regex.compile(r"^Entity: (.+)$", regex.MULTILINE)
    _DESCRIPTION_LINE = regex.compile(r"^Description: ", regex.MULTILINE)

    def __init__(self, lookup: dict[str, dict[str, str]]):
        self.lookup = lookup
        self.calls = 0

    @classmethod
    def from_dataset(cls, dataset) -> SyntheticChatClient:
        lookup = {}
        for document in dataset.documents:
            for entity, info in zip(document.entities,
                                    document.metadata.get(SIDE_INFO_KEY, [])):
                lookup[entity.surface] = info
        return cls(lookup)

    def complete(self, messages: list[dict[str, str]], model: str,
                 temperature: float, max_tokens: int) -> str:
        self.calls += 1
        prompt = "\n".join(message["content"] for message in messages)
        match = self._ENTITY_LINE.search(prompt)
        if match is None or match.group(1).strip() not in self.lookup:
            return ""
        info = self.lookup[match.group(1).strip()]
        if self._DESCRIPTION_LINE.search(prompt):
            return info["hypernym"]
        return info["description"]
