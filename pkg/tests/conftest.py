import json

import pytest

from Code.DocumentCorpus.loaders import load_dataset
from Code.DocumentCorpus.synthetic import (
    SyntheticChatClient,
    write_synthetic_dataset,
)
from Code.EntitySideInformation.generate import build_side_info
from Code.EntitySideInformation.records import (
    ChatProvider,
    GenerationConfig,
    SideInfoStore,
)
from Code.SideInfoEmbedding.embed import EmbeddingService
from Code.SideInfoEmbedding.providers import (
    DeterministicMockEncoder,
    EncoderConfig,
    EncoderProvider,
)

TINY_DOCUMENT = {
    "title": "Maybank report",
    "sents": [
        ["Tan", "Sri", "Megat", "leads", "Maybank", "."],
        ["He", "studied", "at", "Universiti", "Malaya", "."],
        ["Maybank", "is", "based", "in", "Kuala", "Lumpur", "."],
    ],
    "vertexSet": [
        [{"name": "Tan Sri Megat", "sent_id": 0, "pos": [0, 3],
          "type": "PER"}],
        [{"name": "Maybank", "sent_id": 0, "pos": [4, 5], "type": "ORG"},
         {"name": "Maybank", "sent_id": 2, "pos": [0, 1], "type": "ORG"}],
        [{"name": "Universiti Malaya", "sent_id": 1, "pos": [3, 5],
          "type": "ORG"}],
        [{"name": "Kuala Lumpur", "sent_id": 2, "pos": [4, 6],
          "type": "LOC"}],
    ],
    "labels": [
        {"h": 0, "t": 1, "r": "P108", "evidence": [0]},
        {"h": 0, "t": 2, "r": "P69", "evidence": [1]},
        {"h": 1, "t": 3, "r": "P159", "evidence": [2]},
    ],
    "split": "dev",
}

RELATION_NAMES = {
    "P108": "employer",
    "P69": "educated at",
    "P159": "headquarters location",
}


class CountingChatClient:
    """Answers every prompt with a fixed text and counts the calls."""

    def __init__(self, description="Maybank is a Malaysian bank.",
                 hypernym="banking institution"):
        self.description = description
        self.hypernym = hypernym
        self.calls = 0

    def complete(self, messages, model, temperature, max_tokens):
        self.calls += 1
        prompt = messages[-1]["content"]
        if "\nDescription: " in prompt:
            return self.hypernym
        return self.description


@pytest.fixture
def tiny_dataset_path(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps([TINY_DOCUMENT]), encoding="utf-8")
    return path


@pytest.fixture
def relation_names_path(tmp_path):
    path = tmp_path / "rel_info.json"
    path.write_text(json.dumps(RELATION_NAMES), encoding="utf-8")
    return path


@pytest.fixture
def counting_client():
    return CountingChatClient()


@pytest.fixture
def synthetic_path(tmp_path):
    return write_synthetic_dataset(tmp_path / "synthetic.json")


@pytest.fixture
def synthetic_dataset(synthetic_path):
    return load_dataset(synthetic_path)


@pytest.fixture
def synthetic_store(synthetic_dataset):
    store = SideInfoStore()
    cfg = GenerationConfig(provider=ChatProvider.synthetic_stub,
                           parallelism=1)
    build_side_info(synthetic_dataset,
                    SyntheticChatClient.from_dataset(synthetic_dataset), cfg,
                    store)
    return store


@pytest.fixture
def mock_encoder_config():
    return EncoderConfig(provider=EncoderProvider.deterministic_mock, dim=128,
                         batch_size=64)


@pytest.fixture
def mock_service(mock_encoder_config):
    encoder = DeterministicMockEncoder(mock_encoder_config.dim,
                                       mock_encoder_config.mock_seed,
                                       mock_encoder_config.mock_token_weight)
    return EmbeddingService(encoder, mock_encoder_config)
