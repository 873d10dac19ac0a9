from __future__ import annotations

from dataclasses import astuple, dataclass
from typing import Iterable, Sequence

import numpy as np
from tqdm import tqdm

from Code.Common.errors import EmptyField, OfflineError
from Code.Common.logging_setup import get_logger
from Code.DocumentCorpus.corpus import Dataset, PairMode, enumerate_entity_pairs
from Code.DynamicWeightedScoring.predict import PairEmbeddings
from Code.EntitySideInformation.records import SideInfoStore
from Code.SideInfoEmbedding.cache import EmbeddingCache
from Code.SideInfoEmbedding.providers import (
    EncoderConfig,
    TextEncoder,
    as_embedding_vector,
    make_encoder,
)
from Code.SideInfoEmbedding.templates import build_prompt_bundle

logger = get_logger(__name__)


def normalize_label(label: str, raw: bool = False) -> str:
    """
    The text embedded for a relation label: underscores become spaces and
    the result is lowercased ("educated_at" -> "educated at").
    :param raw: Embed the label exactly as given.
    """
    if not label or not label.strip():
        raise EmptyField("relation label is empty.")
    if raw:
        return label
    return " ".join(label.replace("_", " ").split()).lower()


class EmbeddingService:
    """
    Encoder plus cache. Texts already in the cache never reach the encoder;
    misses are deduplicated and sent in batches of config.batch_size.
    """

    def __init__(self, encoder: TextEncoder, config: EncoderConfig,
                 cache: EmbeddingCache | None = None, offline: bool = False):
        self.encoder = encoder
        self.config = config
        self.cache = cache if cache is not None else EmbeddingCache(
            config.cache_identity(), config.dim)
        self.offline = offline

    def missing(self, texts: Iterable[str]) -> list[str]:
        # dict keeps first-occurrence order
        return list({text: None for text in texts if text not in self.cache})

    def embed_texts(self, texts: Sequence[str],
                    progress: bool = False) -> list[np.ndarray]:
        for position, text in enumerate(texts):
            if not text or not text.strip():
                raise EmptyField(f"text {position} is empty.")
        misses = self.missing(texts)
        if misses:
            logger.debug("embed.cache.miss %d of %d texts", len(misses),
                         len(texts))
            if self.offline:
                raise OfflineError(
                    f"{len(misses)} texts are not in the embedding cache and "
                    f"offline mode forbids encoding them."
                )
            batch_size = self.config.batch_size
            starts = range(0, len(misses), batch_size)
            for start in tqdm(starts, desc="embedding", disable=not progress):
                batch = misses[start:start + batch_size]
                vectors = [as_embedding_vector(vector, self.config.dim)
                           for vector in self.encoder.encode(batch)]
                self.cache.put_many(batch, vectors)
        return [self.cache.get(text) for text in texts]

    def embed_relation_label(self, label: str,
                             raw: bool = False) -> np.ndarray:
        return self.embed_texts([normalize_label(label, raw)])[0]

    def embed_relation_labels(self, labels: Sequence[str],
                              raw: bool = False) -> dict[str, np.ndarray]:
        vectors = self.embed_texts([normalize_label(label, raw)
                                    for label in labels])
        return dict(zip(labels, vectors))


def make_embedding_service(cfg: EncoderConfig, offline: bool = False,
                           read_only: bool = False) -> EmbeddingService:
    """
    Builds the configured encoder behind its cache file.
    :param read_only: Never write the cache file.
    """
    cache = EmbeddingCache(cfg.cache_identity(), cfg.dim, cfg.cache_path,
                           read_only)
    logger.info("Loaded %d cached embeddings from %s", len(cache),
                cfg.cache_path)
    return EmbeddingService(make_encoder(cfg), cfg, cache, offline)


@dataclass(frozen=True)
class PairTexts:
    """Every text embedded for one (head, tail) pair."""
    combined_description: str
    head_hypernym: str
    tail_hypernym: str
    head_type: str
    tail_type: str
    head_role: str
    tail_role: str
    context: str

    def as_list(self) -> list[str]:
        return list(astuple(self))


def pair_texts(store: SideInfoStore, doc_id: str, head_index: int,
               tail_index: int, verbatim: bool = False) -> PairTexts:
    head = store.get(doc_id, head_index)
    tail = store.get(doc_id, tail_index)
    bundle = build_prompt_bundle(head, tail, verbatim)
    return PairTexts(
        combined_description=bundle.combined_description_text,
        head_hypernym=head.hypernym,
        tail_hypernym=tail.hypernym,
        head_type=head.entity_type,
        tail_type=tail.entity_type,
        head_role=bundle.head_role_text,
        tail_role=bundle.tail_role_text,
        context=bundle.context_text
    )


def embed_pair(service: EmbeddingService, texts: PairTexts) -> PairEmbeddings:
    return PairEmbeddings(*service.embed_texts(texts.as_list()))


def warm_cache(
        service: EmbeddingService,
        dataset: Dataset,
        store: SideInfoStore,
        labels: Sequence[str],
        pair_mode: PairMode | str = PairMode.gold_pairs,
        verbatim: bool = False,
        raw_labels: bool = False
) -> int:
    """
    Embeds every label text and every pair text the scoring stage will ask
    for, so later stages run from the cache alone.
    :return: Number of texts that were not cached before.
    """
    texts = [normalize_label(label, raw_labels) for label in labels]
    for document in dataset.documents:
        for head_index, tail_index in enumerate_entity_pairs(document,
                                                             pair_mode):
            texts.extend(pair_texts(store, document.doc_id, head_index,
                                    tail_index, verbatim).as_list())
    new = len(service.missing(texts))
    logger.info("Warming embedding cache: %d texts, %d not cached yet",
                len(texts), new)
    service.embed_texts(texts, progress=True)
    return new
