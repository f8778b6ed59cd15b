import hashlib
import json
import logging
import os
import tempfile
import threading
from pathlib import Path
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)


class ContentCache:
    """
    Content-addressed store for retrieved repository files.

    Blobs live under ``<root>/objects/<h[:2]>/<sha256>``; ``<root>/index.json``
    maps ``artifact_id`` → ``{path: sha256}``. Identical content from
    concurrent writers lands on the same blob, so the last write wins.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.objects = self.root / "objects"
        self.index_path = self.root / "index.json"
        self.lock = threading.Lock()
        self.objects.mkdir(parents=True, exist_ok=True)
        self.index: Dict[str, Dict[str, str]] = {}
        if self.index_path.exists():
            with open(self.index_path, "r", encoding="utf-8") as f:
                self.index = json.load(f)

    def _blob_path(self, digest: str) -> Path:
        return self.objects / digest[:2] / digest

    def put(self, artifact_id: str, path: str, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        blob = self._blob_path(digest)
        if not blob.exists():
            blob.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=blob.parent)
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, blob)
        with self.lock:
            self.index.setdefault(artifact_id, {})[path] = digest
        return digest

    def get(self, artifact_id: str, path: str) -> Optional[bytes]:
        with self.lock:
            digest = self.index.get(artifact_id, {}).get(path)
        return self.read_blob(digest) if digest else None

    def read_blob(self, digest: str) -> Optional[bytes]:
        blob = self._blob_path(digest)
        if not blob.exists():
            return None
        return blob.read_bytes()

    def mark_artifact(self, artifact_id: str):
        """Record an artifact as visited even when nothing was stored for it."""
        with self.lock:
            self.index.setdefault(artifact_id, {})

    def flush(self):
        with self.lock:
            snapshot = {k: dict(sorted(v.items())) for k, v in sorted(self.index.items())}
        fd, tmp = tempfile.mkstemp(dir=self.root)
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(snapshot, f, indent=1, sort_keys=True)
        os.replace(tmp, self.index_path)


class ResolverCache:
    """Persistent key → value map of already-resolved lookups (dataset refs, live records)."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.lock = threading.Lock()
        self.entries: Dict[str, Any] = {}
        if self.path is not None and self.path.exists():
            try:
                with open(self.path, "r", encoding="utf-8") as f:
                    self.entries = json.load(f)
            except json.JSONDecodeError as e:
                logger.warning(f"Ignoring unreadable resolver cache {self.path}: {e}")

    def __contains__(self, key: str):
        with self.lock:
            return key in self.entries

    def get(self, key: str, default=None):
        with self.lock:
            return self.entries.get(key, default)

    def set(self, key: str, value: Any):
        with self.lock:
            self.entries[key] = value

    def items_with_prefix(self, prefix: str) -> Dict[str, Any]:
        with self.lock:
            return {k[len(prefix):]: v for k, v in self.entries.items() if k.startswith(prefix)}

    def flush(self):
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.lock:
            data = json.dumps(self.entries, indent=1, sort_keys=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent)
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(data)
        os.replace(tmp, self.path)
