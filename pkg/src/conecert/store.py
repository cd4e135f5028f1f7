"""Content-addressed JSON store for certificates and reports.

Artifacts are serialized canonically (sorted keys, tight separators) and
keyed by the SHA-256 of those bytes, so identical payloads land on
identical paths and replayed runs reproduce byte-identical files.  Reads
recompute the hash -- a flipped byte is detected before any payload is
trusted -- and callers supply a re-verification hook so certificates are
never served without passing their own checker again.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Callable, Optional


class StoreError(RuntimeError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_key(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


class CertificateStore:
    """Directory of JSON artifacts grouped by kind, with an index file.

    Layout: root/<kind>/<key>.json plus root/index.json mapping keys to
    their kind.  Writes go through a temp file and an atomic rename."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.json"

    # -- index ---------------------------------------------------------

    def _read_index(self) -> dict:
        if not self.index_path.exists():
            return {}
        with open(self.index_path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    def _write_index(self, index: dict) -> None:
        self._atomic_write(self.index_path, canonical_json(index))

    def _atomic_write(self, path: Path, text: str) -> None:
        fd, tmp = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    # -- artifacts -----------------------------------------------------

    def path(self, kind: str, key: str) -> Path:
        return self.root / kind / f"{key}.json"

    def put(self, kind: str, obj) -> str:
        """Store the object, returning its content key.  Re-storing the
        same payload is a no-op that returns the same key."""
        text = canonical_json(obj)
        key = hashlib.sha256(text.encode("utf-8")).hexdigest()
        path = self.path(kind, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        if not path.exists():
            self._atomic_write(path, text)
        index = self._read_index()
        if index.get(key) != kind:
            index[key] = kind
            self._write_index(index)
        return key

    def get(self, kind: str, key: str, verifier: Optional[Callable] = None):
        """Load an artifact, re-hashing the canonical payload against its
        key and, when a verifier is given, re-running the certificate's
        own check.  Either failure raises instead of returning data."""
        path = self.path(kind, key)
        if not path.exists():
            raise StoreError(f"no artifact {kind}/{key}")
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        if content_key(obj) != key:
            raise StoreError(f"artifact {kind}/{key} is corrupt (hash mismatch)")
        if verifier is not None and not verifier(obj):
            raise StoreError(f"artifact {kind}/{key} failed re-verification")
        return obj

    def keys(self, kind: Optional[str] = None):
        index = self._read_index()
        if kind is None:
            return sorted(index)
        return sorted(k for k, v in index.items() if v == kind)
