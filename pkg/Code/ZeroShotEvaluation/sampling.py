from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np

from Code.Common.errors import SizeError
from Code.DocumentCorpus.corpus import Dataset


def derive_run_seed(master_seed: int, size: int, run: int) -> int:
    """
    Seed of run `run` (0-based) at unseen set size `size`:
    master_seed + the first 8 hex digits of sha256("{size}:{run}") read as an
    integer. Stable across platforms and Python versions.
    """
    digest = hashlib.sha256(f"{size}:{run}".encode("utf-8")).hexdigest()
    return master_seed + int(digest[:8], 16)


def sample_unseen_labels(inventory: Sequence[str], n: int,
                         seed: int) -> list[str]:
    """
    Draws n labels uniformly without replacement.
    :return: The sampled labels in inventory order.
    """
    if n > len(inventory):
        raise SizeError(
            f"Cannot sample {n} unseen labels from an inventory of "
            f"{len(inventory)}."
        )
    if n < 1:
        raise SizeError(f"Unseen set size should be >= 1, got {n}.")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(inventory), size=n, replace=False)
    return [inventory[index] for index in sorted(chosen)]


def sample_documents(dataset: Dataset, fraction: float,
                     master_seed: int) -> Dataset:
    """
    Keeps a seeded share of the documents, e.g. fraction=0.2 for a fifth of
    the corpus. At least one document is kept. The label inventory shrinks
    to the labels of the kept documents.
    :return: The dataset itself when fraction is 1.
    """
    if not 0 < fraction <= 1:
        raise SizeError(f"Document fraction should be in (0, 1], got "
                        f"{fraction}.")
    if fraction == 1 or not dataset.documents:
        return dataset
    count = max(1, round(fraction * len(dataset.documents)))
    digest = hashlib.sha256(b"documents").hexdigest()
    rng = np.random.default_rng(master_seed + int(digest[:8], 16))
    chosen = sorted(rng.choice(len(dataset.documents), size=count,
                               replace=False))
    documents = tuple(dataset.documents[index] for index in chosen)
    return Dataset(
        name=dataset.name,
        documents=documents,
        label_inventory=frozenset(
            relation.relation_label
            for document in documents
            for relation in document.gold_relations
        )
    )
