from __future__ import annotations

import hashlib
import json
import logging
import re
from pathlib import Path
from typing import Any, Type, TypeVar

from pydantic import BaseModel, ValidationError

from .base import BackendError, InputError

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)


def write_json(data: Any, path: str | Path) -> Path:
    """
    Write JSON with sorted keys and a trailing newline. Output bytes depend only
    on `data`, so deterministic runs produce identical files.
    """
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.debug("Wrote %s", out)
    return out


def read_json(path: str | Path) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise InputError(f"File '{path}' not found.")
    except json.JSONDecodeError as e:
        raise InputError(f"Error decoding JSON from '{path}': {e}")


def validate_model(model: Type[M], data: Any, source: str) -> M:
    """Validate `data` against a pydantic model, turning field errors into InputError."""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        fields = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise InputError(f"Invalid {source}: {fields}")


def sub_seed(*parts: Any) -> int:
    """Stable 64-bit seed from arbitrary labels (independent of PYTHONHASHSEED)."""
    key = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


_FENCE_RE = re.compile(r"```(?:json)?", flags=re.IGNORECASE)


def extract_json_field(text: str, key: str) -> Any:
    """
    Find the first JSON object in `text` holding `key` and return its value.
    Code fences and surrounding prose are tolerated. Raises BackendError when
    no such object exists.
    """
    cleaned = _FENCE_RE.sub("", text or "")
    decoder = json.JSONDecoder()
    for m in re.finditer(r"\{", cleaned):
        try:
            obj, _ = decoder.raw_decode(cleaned, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and key in obj:
            return obj[key]
    raise BackendError(f"No JSON object with '{key}' in model reply", raw=text or "")
