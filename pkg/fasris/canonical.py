"""
Canonical JSON for experiment configs and JSON-lines result rows.

Uses the canonicaljson library (RFC 8785 style: sorted keys, compact,
UTF-8) so that identical content always serializes to identical bytes.
The run id of an experiment is the SHA-256 of its canonical config.
"""
import hashlib
import math
from typing import Any, Callable, Dict

import canonicaljson


def _map_non_finite(value: Any, replace: Callable[[float, str], Any], path: str = "") -> Any:
    """Copy of value with every NaN or infinite float passed through replace(value, path)."""
    if isinstance(value, float) and not math.isfinite(value):
        return replace(value, path or "<root>")
    if isinstance(value, dict):
        return {
            key: _map_non_finite(val, replace, f"{path}.{key}" if path else str(key))
            for key, val in value.items()
        }
    if isinstance(value, (list, tuple)):
        return [_map_non_finite(val, replace, f"{path}[{idx}]") for idx, val in enumerate(value)]
    return value


def _reject(value: float, path: str) -> Any:
    kind = "NaN" if math.isnan(value) else "Infinity"
    raise ValueError(f"{kind} has no canonical JSON form (at {path})")


def nan_to_null(value: Any) -> Any:
    """Result rows write missing probabilities as null."""
    return _map_non_finite(value, lambda _value, _path: None)


def canonicalize(obj: Any) -> str:
    """
    Sorted-key compact JSON text of obj.

    Raises:
        ValueError: If obj contains NaN or Infinity; the message names the dotted path
    """
    return canonicaljson.encode_canonical_json(_map_non_finite(obj, _reject)).decode("utf-8")


def config_run_id(config: Dict[str, Any]) -> str:
    """run_id = SHA-256( UTF-8( canonical_json( resolved config ) ) ), lowercase hex."""
    return hashlib.sha256(canonicalize(config).encode("utf-8")).hexdigest()
