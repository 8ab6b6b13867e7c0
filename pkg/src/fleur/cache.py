"""Content-addressed on-disk cache of backend generations.

Raw generation results (not scores) are cached, keyed by everything that can
change a generation: model, template version, rendered turns, image digest,
decode parameters, request seed, and sample index.  Entries are self-describing
JSON files sharded per model; floats survive the JSON round trip exactly.
Writes go through an atomic rename, so concurrent puts of the same key are
idempotent and readers never observe partial entries.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

from .backends import GenerationRequest, GenerationResult, result_from_dict, result_to_dict

logger = logging.getLogger(__name__)

ENTRY_FORMAT = 1


@dataclass(frozen=True)
class CacheKey:
    model_id: str
    digest: str


def key_of(request: GenerationRequest, sample_index: int = 0, template_version: str = "") -> CacheKey:
    """Derive the cache key for a request; any field change changes the key."""
    material = {
        "model_id": request.model_id,
        "template_version": template_version,
        "turns": [[role, text] for role, text in request.turns],
        "image_sha256": request.image.digest,
        "media_type": request.image.media_type,
        "decode": asdict(request.decode),
        "seed": request.seed,
        "sample_index": sample_index,
    }
    canonical = json.dumps(material, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return CacheKey(model_id=request.model_id, digest=hashlib.sha256(canonical.encode("utf-8")).hexdigest())


def _sanitize(model_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", model_id) or "_"


class CacheStore:
    """Filesystem cache; corrupt or truncated entries read as misses."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: CacheKey) -> Path:
        return self.root / _sanitize(key.model_id) / key.digest[:2] / f"{key.digest}.json"

    def get(self, key: CacheKey) -> GenerationResult | None:
        path = self._path(key)
        try:
            raw = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None
        except OSError as exc:
            logger.warning("cache read failed for %s: %s", path, exc)
            return None
        try:
            entry = json.loads(raw)
            if entry.get("format") != ENTRY_FORMAT:
                raise ValueError(f"unknown entry format {entry.get('format')!r}")
            payload = json.dumps(entry["result"], sort_keys=True, ensure_ascii=False)
            checksum = hashlib.sha256(payload.encode("utf-8")).hexdigest()
            if checksum != entry["checksum"]:
                raise ValueError("checksum mismatch")
            return result_from_dict(entry["result"])
        except (ValueError, KeyError, TypeError) as exc:
            logger.warning("corrupt cache entry %s treated as miss: %s", path, exc)
            return None

    def put(self, key: CacheKey, result: GenerationResult) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        encoded = result_to_dict(result)
        payload = json.dumps(encoded, sort_keys=True, ensure_ascii=False)
        entry = {
            "format": ENTRY_FORMAT,
            "digest": key.digest,
            "checksum": hashlib.sha256(payload.encode("utf-8")).hexdigest(),
            "result": encoded,
        }
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(entry, handle, ensure_ascii=False)
            os.replace(tmp_name, path)
        except BaseException:
            try:
                os.unlink(tmp_name)
            except FileNotFoundError:
                pass
            raise

    def get_or_generate(self, key: CacheKey, backend, request: GenerationRequest) -> GenerationResult:
        """Serve from cache when possible; otherwise generate and persist."""
        cached = self.get(key)
        if cached is not None:
            return cached
        result = backend.generate(request)
        self.put(key, result)
        return result
