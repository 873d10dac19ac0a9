from __future__ import annotations

import pandas as pd
import regex
from joblib import Parallel, delayed
from tqdm import tqdm

from Code.Common.errors import (
    EmptyCompletion,
    EmptyField,
    FormatError,
    OfflineError,
)
from Code.Common.logging_setup import get_logger
from Code.DocumentCorpus.corpus import Dataset, Document
from Code.EntitySideInformation.llm_client import ChatClient
from Code.EntitySideInformation.prompts import render_template
from Code.EntitySideInformation.records import (
    MAX_HYPERNYM_WORDS,
    GenerationConfig,
    SideInfoRecord,
    SideInfoStore,
)

logger = get_logger(__name__)

_LEADING_ARTICLE = regex.compile(r"^(?:a|an|the)\s+", regex.IGNORECASE)
_TRAILING_PUNCTUATION = regex.compile(r"[\s\p{P}]+$")
_WRAPPING = regex.compile(r"""^[\s"'`*]+|[\s"'`*]+$""")
_COPULA = regex.compile(r"^.*?\b(?:is|was|are)\s+(?:an?|the)\s+(.+)$",
                        regex.IGNORECASE)
_SENTENCE_END = regex.compile(r"[.!?](?=\s|$)")


def document_context(doc: Document, entity_index: int,
                     cfg: GenerationConfig) -> str:
    """
    The document text handed to the description prompt: the sentences within
    cfg.context_window_sentences of any mention of the entity (all sentences
    if the window is None), cut after cfg.max_context_tokens tokens.
    """
    entity = doc.entity(entity_index)
    if cfg.context_window_sentences is None:
        selected = range(len(doc.sentences))
    else:
        window = cfg.context_window_sentences
        wanted = set()
        for mention in entity.mentions:
            wanted.update(range(mention.sent_index - window,
                                mention.sent_index + window + 1))
        selected = [index for index in range(len(doc.sentences))
                    if index in wanted]

    budget = cfg.max_context_tokens
    lines = []
    for index in selected:
        if budget == 0:
            break
        tokens = doc.sentences[index][:budget]
        if not tokens:
            continue
        lines.append(" ".join(tokens))
        budget -= len(tokens)
    return "\n".join(lines)


def generate_description(doc: Document, entity_index: int,
                         client: ChatClient, cfg: GenerationConfig) -> str:
    """
    Asks the chat model for a short, document-grounded description of one
    entity, named by its first mention.
    :return: The description, shortened to cfg.max_description_chars.
    """
    entity = doc.entity(entity_index)
    prompt = render_template(
        cfg.description_prompt,
        mention=entity.surface,
        entity_type=entity.entity_type,
        document=document_context(doc, entity_index, cfg)
    )
    completion = client.complete(
        [{"role": "user", "content": prompt}],
        model=cfg.model_id,
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens
    )
    description = " ".join((completion or "").split())
    if not description:
        raise EmptyCompletion(
            f"Empty description for entity {entity_index} "
            f"({entity.surface!r}) of document {doc.doc_id!r}."
        )
    return _fit_description(description, cfg.max_description_chars)


def generate_hypernym(mention_surface: str, entity_type: str,
                      description: str, client: ChatClient,
                      cfg: GenerationConfig) -> str:
    """
    Asks the chat model for a broader category of the entity and normalizes
    the answer (lowercase, no article, no trailing punctuation).
    """
    for name, value in (("mention_surface", mention_surface),
                        ("entity_type", entity_type),
                        ("description", description)):
        if not value or not value.strip():
            raise EmptyField(f"{name} is empty.")
    prompt = render_template(
        cfg.hypernym_prompt,
        mention=mention_surface,
        entity_type=entity_type,
        description=description
    )
    completion = client.complete(
        [{"role": "user", "content": prompt}],
        model=cfg.model_id,
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens
    )
    return normalize_hypernym(completion or "", mention_surface)


def normalize_hypernym(completion: str, mention_surface: str = "") -> str:
    """
    Reduces a completion to a bare noun phrase. Answers phrased as a
    sentence ("Maybank is a banking institution.") are trimmed to the part
    after the copula before the word cap is checked.
    """
    lines = [line for line in completion.splitlines() if line.strip()]
    if not lines:
        raise EmptyCompletion("Empty hypernym completion.")
    text = _WRAPPING.sub("", lines[0])
    text = _TRAILING_PUNCTUATION.sub("", text)

    if mention_surface and text.lower().startswith(mention_surface.lower()):
        text = text[len(mention_surface):].strip()
    copula = _COPULA.match(text)
    if copula is not None:
        text = copula.group(1)

    text = " ".join(text.split()).lower()
    text = _LEADING_ARTICLE.sub("", text)
    text = _TRAILING_PUNCTUATION.sub("", text)
    if not text:
        raise EmptyCompletion(
            f"Hypernym completion {completion!r} is empty after trimming.")
    if len(text.split()) > MAX_HYPERNYM_WORDS:
        raise FormatError(
            f"Hypernym {text!r} has more than {MAX_HYPERNYM_WORDS} words."
        )
    return text


def _fit_description(description: str, limit: int) -> str:
    if len(description) <= limit:
        return description
    head = description[:limit]
    ends = [match.end() for match in _SENTENCE_END.finditer(head)]
    if ends:
        return head[:ends[-1]].strip()
    cut = head.rsplit(" ", 1)[0] if " " in head else head
    return cut.strip()


def _generate_record(doc: Document, entity_index: int, client: ChatClient,
                     cfg: GenerationConfig) -> SideInfoRecord:
    entity = doc.entity(entity_index)
    description = generate_description(doc, entity_index, client, cfg)
    hypernym = generate_hypernym(entity.surface, entity.entity_type,
                                 description, client, cfg)
    return SideInfoRecord(
        doc_id=doc.doc_id,
        entity_index=entity_index,
        mention_surface=entity.surface,
        entity_type=entity.entity_type,
        description=description,
        hypernym=hypernym,
        generator_model=cfg.model_id,
        created_at=pd.Timestamp.now(tz="UTC"),
        prompt_versions={"description": cfg.description_prompt,
                         "hypernym": cfg.hypernym_prompt}
    )


def build_side_info(
        dataset: Dataset,
        client: ChatClient,
        cfg: GenerationConfig,
        store: SideInfoStore,
        offline: bool = False
) -> SideInfoStore:
    """
    Makes sure every entity of every document has a side information record.
    Entities already in the store are skipped, and each new record is
    appended to the store as soon as it is generated, so a rerun after a
    failure only generates what is still missing.
    :param offline: Fail with OfflineError instead of calling the client if
    anything is missing.
    :return: The same store, now complete.
    """
    pending = [
        (document, entity.entity_index)
        for document in dataset.documents
        for entity in document.entities
        if (document.doc_id, entity.entity_index) not in store
    ]
    total = sum(len(document.entities) for document in dataset.documents)
    logger.info("sideinfo.cache.hit %d of %d entities already stored",
                total - len(pending), total)
    if not pending:
        return store
    if offline:
        raise OfflineError(
            f"{len(pending)} entities have no stored side information and "
            f"offline mode forbids generating them."
        )

    if cfg.parallelism == 1:
        results = (_generate_record(document, index, client, cfg)
                   for document, index in pending)
    else:
        results = Parallel(
            n_jobs=cfg.parallelism,
            backend="threading",
            return_as="generator"
        )(delayed(_generate_record)(document, index, client, cfg)
          for document, index in pending)

    completed = 0
    try:
        for record in tqdm(results, total=len(pending), desc="side info"):
            store.add(record)
            completed += 1
    except Exception as error:
        error.completed_records = completed
        logger.error(
            "Side information build stopped after %d new records: %s",
            completed, error
        )
        raise
    return store
