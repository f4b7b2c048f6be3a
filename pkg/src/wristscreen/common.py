"""Shared plumbing: seed derivation, canonical JSON, content hashing, label order."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

# Canonical class order used for pair enumeration and tie-breaking.
# Unknown labels sort after these, lexicographically.
_CANONICAL_LABELS = {"PD": 0, "PD+DD": 1, "DD": 2, "HC": 3}


def label_sort_key(label: str) -> tuple[int, str]:
    return (_CANONICAL_LABELS.get(label, len(_CANONICAL_LABELS)), label)


def ordered_classes(labels) -> list[str]:
    """Distinct labels in canonical class order."""
    return sorted(set(labels), key=label_sort_key)


def derive_seed(master_seed: int, *parts) -> int:
    """Derive a stable 64-bit sub-seed from a master seed plus context tags.

    blake2b over the decimal/string forms of the inputs, so serial and
    parallel runs (and reruns on other machines) agree bit for bit.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed)).encode())
    for part in parts:
        h.update(b"|")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "big")


def canonical_json(obj) -> str:
    """Serialize for reports and hashing: sorted keys, no NaN, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(canonical_json(obj), encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
