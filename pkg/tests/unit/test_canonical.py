"""
Unit tests for canonical JSON and content-addressed run ids.
"""
import hashlib
import json
import math
from typing import Any, Dict

import pytest

from fasris.canonical import canonicalize, config_run_id, nan_to_null


class TestCanonicalVectors:
    """Canonical strings and hashes must match the recorded vectors."""

    def test_canonical_strings(self, canonical_vectors: Dict[str, Any]):
        for vector in canonical_vectors["vectors"]:
            assert canonicalize(vector["input"]) == vector["canonical"], vector["name"]

    def test_hashes(self, canonical_vectors: Dict[str, Any]):
        for vector in canonical_vectors["vectors"]:
            assert config_run_id(vector["input"]) == vector["sha256"], vector["name"]


class TestCanonicalRules:

    def test_nested_keys_sorted(self):
        parsed = json.loads(canonicalize({"z": {"y": 1, "x": 2}, "a": {"c": 3, "b": 4}}))
        assert list(parsed) == ["a", "z"]
        assert list(parsed["a"]) == ["b", "c"]
        assert list(parsed["z"]) == ["x", "y"]

    def test_compact(self):
        assert " " not in canonicalize({"key": "value", "list": [1, 2, 3]})

    def test_nan_rejected(self):
        with pytest.raises(ValueError, match="NaN"):
            canonicalize({"probability": math.nan})

    def test_infinity_rejected_in_list(self):
        with pytest.raises(ValueError, match="Infinity"):
            canonicalize({"values": [1.0, math.inf]})

    def test_rejection_names_the_path(self):
        with pytest.raises(ValueError, match=r"at defaults\.sizes\[1\]"):
            canonicalize({"defaults": {"sizes": [1.0, -math.inf]}})

    def test_tuples_serialize_as_lists(self):
        assert canonicalize({"b": (1, 2)}) == '{"b":[1,2]}'

    def test_nan_to_null(self):
        converted = nan_to_null({"p": math.nan, "rows": [1.0, math.inf], "ok": 0.5})
        assert converted == {"p": None, "rows": [1.0, None], "ok": 0.5}
        assert json.loads(canonicalize(converted)) == {"ok": 0.5, "p": None, "rows": [1.0, None]}


class TestRunId:

    def test_hash_format(self):
        digest = config_run_id({"seed": 1})
        assert len(digest) == 64
        assert digest == digest.lower()
        assert all(c in "0123456789abcdef" for c in digest)

    def test_key_order_irrelevant(self):
        assert config_run_id({"z": 1, "a": 2}) == config_run_id({"a": 2, "z": 1})

    def test_matches_sha256_of_canonical_form(self):
        config = {"simulation": {"seed": 3, "trials": 10}}
        expected = hashlib.sha256(canonicalize(config).encode("utf-8")).hexdigest()
        assert config_run_id(config) == expected

    def test_different_configs_differ(self):
        assert config_run_id({"seed": 1}) != config_run_id({"seed": 2})
