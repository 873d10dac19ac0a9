from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Iterator

import pandas as pd

from Code.Common.jsonl import file_sha256, write_json
from Code.Common.logging_setup import get_logger
from Code.EntitySideInformation.prompts import template_digest

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"
PACKAGE_NAME = "zsre-sideinfo"


def tool_version() -> str:
    try:
        return metadata.version(PACKAGE_NAME)
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class RunManifest:
    """
    What a command did and from which inputs: enough to rerun it and to
    tell whether any input changed since.
    """
    command: str
    config: dict[str, Any]
    tool_version: str = field(default_factory=tool_version)
    prompt_versions: dict[str, str] = field(default_factory=dict)
    input_hashes: dict[str, str | None] = field(default_factory=dict)
    output_hashes: dict[str, str | None] = field(default_factory=dict)
    stage_seconds: dict[str, float] = field(default_factory=dict)
    started_at: str = field(
        default_factory=lambda: pd.Timestamp.now(tz="UTC").isoformat())
    finished_at: str | None = None
    status: str = "running"
    failed_stage: str | None = None
    error: str | None = None

    def record_prompts(self, *names: str) -> None:
        for name in names:
            self.prompt_versions[name] = template_digest(name)

    def record_inputs(self, *paths: str | Path | None) -> None:
        for path in paths:
            if path is not None:
                self.input_hashes[str(path)] = file_sha256(path)

    def record_outputs(self, *paths: str | Path | None) -> None:
        for path in paths:
            if path is not None:
                self.output_hashes[str(path)] = file_sha256(path)

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Times a stage and marks the manifest failed if it raises."""
        logger.info("Started: %s %s", name, pd.Timestamp.now())
        start = time.perf_counter()
        try:
            yield
        except BaseException as error:
            self.status = "failed"
            self.failed_stage = name
            self.error = str(error)
            raise
        finally:
            self.stage_seconds[name] = time.perf_counter() - start
        logger.info("Completed: %s %s", name, pd.Timestamp.now())

    def finish(self) -> None:
        if self.status == "running":
            self.status = "ok"
        self.finished_at = pd.Timestamp.now(tz="UTC").isoformat()

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def write(self, output_dir: str | Path) -> Path:
        path = Path(output_dir) / MANIFEST_NAME
        # stage_seconds lists the stages in the order they ran
        write_json(path, self.to_dict(), sort_keys=False)
        return path
