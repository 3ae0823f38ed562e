import hashlib
import json
from typing import Any

from pydantic import BaseModel


def hash_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def canonical_json(payload: BaseModel | dict[str, Any], exclude: set[str] | None = None) -> str:
    data = payload.model_dump(mode="json", exclude=exclude) if isinstance(payload, BaseModel) else payload
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(payload: BaseModel | dict[str, Any], exclude: set[str] | None = None) -> str:
    """sha256 of the canonical JSON form; key order and whitespace never change the hash."""
    return hash_text(canonical_json(payload, exclude=exclude))


def format_float(value: float, spec: str = ".17g") -> str:
    return format(float(value), spec)
