"""File-backed design persistence: one JSON file per design id.

Writes go to a temp file in the same directory and land with an atomic
rename, so a crash mid-write leaves the previous revision readable.
Writers to the same id serialize on a per-id lock; reads never block.
Documents are canonicalized (parsed and re-serialized) before storage,
so a stored document always parses as valid IR.
"""

from __future__ import annotations

import json
import os
import re
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone

from . import ir

_ID_RE = re.compile(r"[A-Za-z0-9_-]{1,64}\Z")


class StoreError(Exception):
    pass


class NotFound(StoreError):
    def __init__(self, design_id: str):
        self.design_id = design_id
        super().__init__(f"no design {design_id!r}")


class BadDesignId(StoreError):
    def __init__(self, design_id: str):
        self.design_id = design_id
        super().__init__(f"design id {design_id!r} must match [A-Za-z0-9_-]{{1,64}}")


class StorageFailure(StoreError):
    pass


@dataclass(frozen=True)
class DesignRecord:
    id: str
    document: dict
    created: str
    updated: str
    revision: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "document": self.document,
            "created": self.created,
            "updated": self.updated,
            "revision": self.revision,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class DesignStore:
    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self._registry_lock = threading.Lock()
        self._locks: dict[str, threading.Lock] = {}

    def _lock_for(self, design_id: str) -> threading.Lock:
        with self._registry_lock:
            if design_id not in self._locks:
                self._locks[design_id] = threading.Lock()
            return self._locks[design_id]

    def _path(self, design_id: str) -> str:
        if not _ID_RE.match(design_id):
            raise BadDesignId(design_id)
        return os.path.join(self.directory, f"{design_id}.json")

    def save(self, document: dict, design_id: str | None = None) -> DesignRecord:
        """Create or update a design; raises ir.ParseError on invalid documents."""
        model = ir.document_to_model(document)
        canonical = ir.model_to_document(model)
        if design_id is None:
            design_id = uuid.uuid4().hex
        path = self._path(design_id)

        with self._lock_for(design_id):
            previous = self._read(design_id) if os.path.exists(path) else None
            now = _now()
            record = DesignRecord(
                id=design_id,
                document=canonical,
                created=previous.created if previous else now,
                updated=now,
                revision=(previous.revision if previous else 0) + 1,
            )
            tmp = f"{path}.tmp-{uuid.uuid4().hex}"
            try:
                with open(tmp, "w", encoding="utf-8") as fh:
                    json.dump(record.to_dict(), fh, sort_keys=True, indent=2)
                    fh.write("\n")
                os.replace(tmp, path)
            except OSError as exc:
                try:
                    os.unlink(tmp)
                except OSError:
                    pass
                raise StorageFailure(str(exc)) from exc
        return record

    def _read(self, design_id: str) -> DesignRecord:
        path = self._path(design_id)
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise NotFound(design_id) from None
        except (OSError, json.JSONDecodeError) as exc:
            raise StorageFailure(f"design {design_id!r} unreadable: {exc}") from exc
        return DesignRecord(
            id=raw["id"],
            document=raw["document"],
            created=raw["created"],
            updated=raw["updated"],
            revision=raw["revision"],
        )

    def load(self, design_id: str) -> DesignRecord:
        return self._read(design_id)

    def delete(self, design_id: str):
        path = self._path(design_id)
        with self._lock_for(design_id):
            try:
                os.unlink(path)
            except FileNotFoundError:
                raise NotFound(design_id) from None

    def list_ids(self) -> list[str]:
        out = []
        for entry in os.listdir(self.directory):
            if entry.endswith(".json") and ".tmp-" not in entry:
                out.append(entry[:-5])
        return sorted(out)
