"""Content-addressed on-disk response cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Optional, Union

from longform_mqm.errors import CacheCorruptionError
from longform_mqm.models import BackendResponse, DecodingParams

logger = logging.getLogger(__name__)


def cache_key(model_id: str, prompt: str, decoding: DecodingParams) -> str:
    """Stable hash of (model_id, full prompt text, decoding params)."""
    payload = json.dumps(
        {"model_id": model_id, "prompt": prompt, "decoding": decoding.model_dump(mode="json")},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """
    One JSON file per response under ``<root>/<key[:2]>/<key>.json`` plus ``index.jsonl``.

    Writes go through a temporary file and ``os.replace`` so an interrupted
    run never leaves a truncated entry behind.
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.hits = 0
        self.misses = 0

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[BackendResponse]:
        path = self.path_for(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            with open(path, encoding="utf-8") as f:
                stored = json.load(f)
            if stored.get("key") != key:
                raise CacheCorruptionError(f"cache entry {path} stores key {stored.get('key')!r}")
            response = BackendResponse.model_validate(stored["response"])
        except CacheCorruptionError:
            raise
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise CacheCorruptionError(f"cache entry {path} is unreadable: {e}") from e
        self.hits += 1
        return response.model_copy(update={"from_cache": True})

    def put(self, key: str, response: BackendResponse) -> None:
        path = self.path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        stored = {"key": key, "response": response.model_dump(mode="json", exclude={"from_cache"})}
        # Write then rename so a killed run never leaves a torn entry
        tmp = path.with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(stored, f, sort_keys=True, ensure_ascii=False)
        os.replace(tmp, path)
        with open(self.root / "index.jsonl", "a", encoding="utf-8") as f:
            f.write(json.dumps({"key": key, "model_id": response.model_id}, sort_keys=True) + "\n")
