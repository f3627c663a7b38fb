"""Shared plumbing: tokenization, stable hashing, seeded RNG substreams, file IO."""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np

_TOKEN_RE = re.compile(r"[\w']+")


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace/punctuation tokenization shared by all bag-of-token models.

    Falls back to the trimmed raw text as a single token when the regex finds
    nothing (e.g. pure punctuation), so any non-empty text is embeddable.
    """
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        stripped = text.strip()
        if stripped:
            tokens = [stripped]
    return tokens


def stable_hash(*parts: Any, bins: int | None = None) -> int:
    """Deterministic 64-bit hash of the given parts, stable across processes.

    Python's builtin hash() is salted per process, so persisted models must
    not depend on it.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    value = int.from_bytes(h.digest(), "big")
    if bins is not None:
        value %= bins
    return value


def substream(master_seed: int, *names: Any) -> np.random.Generator:
    """Derive a named RNG stream from one master seed.

    Streams with different names are statistically independent; the same
    (seed, names) pair always yields the same stream.
    """
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
    entropy.extend(stable_hash(name) for name in names)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: str | Path, obj: Any) -> None:
    """Write JSON deterministically (sorted keys, trailing newline)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
            f.write("\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (1-based line number, record) pairs; raises with the line number on bad JSON."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
