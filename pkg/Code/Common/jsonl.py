from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Iterable, Iterator

from Code.Common.errors import ParseError


def decode_utf8(data: bytes, path: str | Path, first_line: int = 1) -> str:
    """
    Decodes file content as UTF-8. Invalid bytes raise ParseError with the
    line and column of the first bad byte and its offset in data.
    """
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as error:
        line = first_line + data.count(b"\n", 0, error.start)
        column = error.start - data.rfind(b"\n", 0, error.start)
        raise ParseError(
            str(path), line, column,
            f"invalid UTF-8 at byte offset {error.start}: {error.reason}"
        ) from error


def read_text(path: str | Path) -> str:
    with open(path, "rb") as file:
        return decode_utf8(file.read(), path)


def iter_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    """
    Yields one parsed object per non-blank line of a UTF-8 JSONL file.
    A line that fails to decode or parse raises ParseError with its line
    number.
    """
    with open(path, "rb") as file:
        for line_number, raw in enumerate(file, start=1):
            line = decode_utf8(raw, path, line_number)
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as error:
                raise ParseError(str(path), line_number, error.colno,
                                 error.msg) from error


def dumps_line(obj: dict[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n"


def write_jsonl(path: str | Path, objs: Iterable[dict[str, Any]]) -> int:
    """Writes objs through a temporary file; returns the number of lines."""
    count = 0
    with atomic_writer(path) as file:
        for obj in objs:
            file.write(dumps_line(obj))
            count += 1
    return count


def write_json(path: str | Path, obj: Any, sort_keys: bool = True) -> None:
    """
    Writes obj as indented JSON through a temporary file.
    :param sort_keys: Sort object keys; pass False where insertion order
    carries meaning.
    """
    with atomic_writer(path) as file:
        json.dump(obj, file, indent=4, sort_keys=sort_keys,
                  ensure_ascii=False)
        file.write("\n")


def write_text(path: str | Path, text: str) -> None:
    with atomic_writer(path) as file:
        file.write(text)


class atomic_writer:
    """
    Context manager writing to <path>.partial and renaming it over path on a
    clean exit. If the block raises, the .partial file is left behind so an
    interrupted output is never mistaken for a finished one.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.partial = self.path.with_name(self.path.name + ".partial")
        self._file = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.partial, "w", encoding="utf-8")
        return self._file

    def __exit__(self, exc_type, exc, tb):
        self._file.close()
        if exc_type is None:
            os.replace(self.partial, self.path)
        return False


def file_sha256(path: str | Path | None) -> str | None:
    if path is None or not Path(path).exists():
        return None
    digest = hashlib.sha256()
    with open(path, "rb") as file:
        for block in iter(lambda: file.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()
