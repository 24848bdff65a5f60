"""JSON-lines storage of replica records with crash-resume."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterator

from remfield.errors import ParseError
from remfield.models import ReplicaRecord

log = logging.getLogger(__name__)


class RecordStore:
    """Append-only records.jsonl, one ReplicaRecord per line."""

    def __init__(self, path: Path | str):
        self.path = Path(path)

    def _lines(self) -> Iterator[tuple[int, str]]:
        with open(self.path) as f:
            for number, line in enumerate(f, start=1):
                if line.strip():
                    yield number, line

    def load(self) -> list[ReplicaRecord]:
        """All records sorted by replica index; ParseError names the bad line."""
        if not self.path.exists():
            raise ParseError(str(self.path), 0, "file does not exist")
        records = []
        for number, line in self._lines():
            try:
                records.append(ReplicaRecord.from_dict(json.loads(line)))
            except json.JSONDecodeError as e:
                raise ParseError(str(self.path), number, f"invalid JSON ({e.msg})") from e
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(str(self.path), number, f"not a replica record ({e!r})") from e
        records.sort(key=lambda r: r.replica)
        return records

    def recover(self) -> set[int]:
        """Replica indices already stored.

        A trailing line cut short by an interruption is removed so the file
        stays valid JSON-lines before new records are appended.
        """
        if not self.path.exists():
            return set()
        text = self.path.read_text()
        done: set[int] = set()
        keep = 0
        offset = 0
        for line in text.splitlines(keepends=True):
            offset += len(line)
            if not line.strip():
                keep = offset
                continue
            try:
                data = json.loads(line)
                done.add(int(data["replica"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                if offset == len(text) and not line.endswith("\n"):
                    log.warning("dropping incomplete last line of %s", self.path)
                    break
                raise ParseError(str(self.path), text.count("\n", 0, offset - len(line)) + 1, "invalid record")
            if not line.endswith("\n"):
                # complete record without a newline: finish the line
                with open(self.path, "a") as f:
                    f.write("\n")
            keep = offset
        if keep < len(text):
            with open(self.path, "r+") as f:
                f.truncate(keep)
        return done

    def append(self, record: ReplicaRecord) -> None:
        """Write one record and flush it to disk."""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a") as f:
            f.write(json.dumps(record.to_dict()) + "\n")
            f.flush()
