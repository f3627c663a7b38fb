"""Dataset ingestion and preprocessing for intent classification corpora.

Covers the loading formats (JSONL, CSV, dialogue-JSON), first-turn selection
for multi-turn dialogue data, per-intent capping, intent-name normalization,
and stem-and-sort matching of intent names across datasets.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .stem import porter_stem
from .util import read_jsonl

_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")
_MULTI_SPACE = re.compile(r"\s+")


@dataclass(frozen=True)
class Utterance:
    """One user utterance, optionally with a gold intent and dialogue position."""

    text: str
    gold_intent: str | None = None
    dataset_id: str = ""
    dialogue_id: str | None = None
    turn_index: int | None = None

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValueError("utterance text must be non-empty")
        if self.turn_index is not None and self.turn_index < 0:
            raise ValueError(f"turn_index must be >= 0, got {self.turn_index}")

    def to_record(self) -> dict:
        record: dict = {"text": self.text}
        if self.gold_intent is not None:
            record["intent"] = self.gold_intent
        if self.dataset_id:
            record["dataset_id"] = self.dataset_id
        if self.dialogue_id is not None:
            record["dialogue_id"] = self.dialogue_id
        if self.turn_index is not None:
            record["turn"] = self.turn_index
        return record

    @classmethod
    def from_record(cls, record: dict, dataset_id: str = "") -> "Utterance":
        return cls(
            text=record["text"],
            gold_intent=record.get("intent"),
            dataset_id=record.get("dataset_id", dataset_id),
            dialogue_id=record.get("dialogue_id"),
            turn_index=record.get("turn"),
        )


@dataclass(frozen=True)
class IntentName:
    """An intent label: the raw dataset string plus its normalized display form."""

    raw: str
    display: str

    def __post_init__(self) -> None:
        if not self.display:
            raise ValueError("display form must be non-empty")
        if self.display != self.display.lower():
            raise ValueError(f"display form must be lowercase: {self.display!r}")
        if "_" in self.display or "-" in self.display:
            raise ValueError(f"display form may not contain '_' or '-': {self.display!r}")
        if "  " in self.display or self.display != self.display.strip():
            raise ValueError(f"display form must use single spaces: {self.display!r}")


def normalize_intent_name(raw: str) -> IntentName:
    """Turn a raw dataset label into a lowercase space-separated display form.

    Underscores, hyphens and camelCase boundaries become single spaces, e.g.
    "play_music" and "PlayMusic" both display as "play music".
    """
    if not raw or not raw.strip():
        raise ValueError("intent name must be non-empty")
    display = _CAMEL_BOUNDARY.sub(" ", raw.strip())
    display = display.replace("_", " ").replace("-", " ").lower()
    display = _MULTI_SPACE.sub(" ", display).strip()
    if not display:
        raise ValueError(f"intent name {raw!r} normalized to an empty string")
    return IntentName(raw=raw, display=display)


@dataclass(frozen=True)
class ClassSplit:
    """One train/valid/test partition of a dataset's intent set.

    Intent names are kept in their raw dataset form; display forms are derived
    with normalize_intent_name where needed.
    """

    split_id: int
    train_intents: frozenset[str]
    valid_intents: frozenset[str]
    test_intents: frozenset[str]

    def __post_init__(self) -> None:
        overlap = (
            (self.train_intents & self.valid_intents)
            | (self.train_intents & self.test_intents)
            | (self.valid_intents & self.test_intents)
        )
        if overlap:
            raise ValueError(
                f"split {self.split_id}: intent sets overlap: {sorted(overlap)[:5]}"
            )

    @property
    def all_intents(self) -> frozenset[str]:
        return self.train_intents | self.valid_intents | self.test_intents

    def check_covers(self, universe: Iterable[str]) -> None:
        """Raise unless train/valid/test together equal the given intent universe."""
        universe = frozenset(universe)
        missing = universe - self.all_intents
        extra = self.all_intents - universe
        if missing or extra:
            raise ValueError(
                f"split {self.split_id} does not cover the dataset intents "
                f"(missing {sorted(missing)[:5]}, extra {sorted(extra)[:5]})"
            )


def load_class_splits(path: str | Path) -> list[ClassSplit]:
    """Load class splits from a JSON file (one split object or an array of them)."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if isinstance(data, dict):
        data = [data]
    splits = []
    for i, entry in enumerate(data):
        try:
            splits.append(
                ClassSplit(
                    split_id=int(entry["split_id"]),
                    train_intents=frozenset(entry["train"]),
                    valid_intents=frozenset(entry["valid"]),
                    test_intents=frozenset(entry["test"]),
                )
            )
        except KeyError as exc:
            raise ValueError(f"{path}: split record {i} is missing key {exc}") from exc
    return splits


CORPUS_FORMATS = ("jsonl", "csv", "dialogue-json")


def load_corpus(path: str | Path, format: str, dataset_id: str | None = None) -> list[Utterance]:
    """Load utterances from a file in one of the supported formats.

    jsonl:         {"text": ..., "intent": ..., "dialogue_id": ..., "turn": ...}
    csv:           header row with text,intent columns
    dialogue-json: array of dialogues, each an array of turn objects with a
                   "text" key; dialogue_id and turn_index come from positions
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if dataset_id is None:
        dataset_id = path.stem
    if format == "jsonl":
        return _load_jsonl(path, dataset_id)
    if format == "csv":
        return _load_csv(path, dataset_id)
    if format == "dialogue-json":
        return _load_dialogue_json(path, dataset_id)
    raise ValueError(f"unknown corpus format {format!r}; expected one of {CORPUS_FORMATS}")


def _load_jsonl(path: Path, dataset_id: str) -> list[Utterance]:
    utterances = []
    for lineno, record in read_jsonl(path):
        if "text" not in record:
            raise ValueError(f"{path}: line {lineno}: record has no 'text' field")
        try:
            utterances.append(Utterance.from_record(record, dataset_id))
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return utterances


def _load_csv(path: Path, dataset_id: str) -> list[Utterance]:
    utterances = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "text" not in reader.fieldnames:
            raise ValueError(f"{path}: CSV header must contain a 'text' column")
        for rowno, row in enumerate(reader, start=2):
            try:
                utterances.append(
                    Utterance(
                        text=row["text"],
                        gold_intent=row.get("intent") or None,
                        dataset_id=dataset_id,
                    )
                )
            except ValueError as exc:
                raise ValueError(f"{path}: row {rowno}: {exc}") from exc
    return utterances


def _load_dialogue_json(path: Path, dataset_id: str) -> list[Utterance]:
    with open(path, encoding="utf-8") as f:
        try:
            dialogues = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(dialogues, list):
        raise ValueError(f"{path}: dialogue-json must be an array of dialogues")
    utterances = []
    for d_idx, dialogue in enumerate(dialogues):
        if not isinstance(dialogue, list):
            raise ValueError(f"{path}: dialogue {d_idx} is not an array of turns")
        for t_idx, turn in enumerate(dialogue):
            if not isinstance(turn, dict) or "text" not in turn:
                raise ValueError(f"{path}: dialogue {d_idx} turn {t_idx} has no 'text' field")
            try:
                utterances.append(
                    Utterance(
                        text=turn["text"],
                        gold_intent=turn.get("intent"),
                        dataset_id=dataset_id,
                        dialogue_id=str(d_idx),
                        turn_index=t_idx,
                    )
                )
            except ValueError as exc:
                raise ValueError(f"{path}: dialogue {d_idx} turn {t_idx}: {exc}") from exc
    return utterances


def select_first_turns(utterances: Sequence[Utterance]) -> list[Utterance]:
    """Keep only the minimum-turn utterance of each dialogue.

    The rule is purely positional: a vague first turn is kept as-is. The
    relative order of dialogues (first appearance) is preserved.
    """
    best: dict[tuple[str, str], Utterance] = {}
    order: list[tuple[str, str]] = []
    for utt in utterances:
        if utt.dialogue_id is None or utt.turn_index is None:
            raise ValueError(
                f"utterance {utt.text!r} is missing dialogue_id/turn_index metadata"
            )
        key = (utt.dataset_id, utt.dialogue_id)
        if key not in best:
            best[key] = utt
            order.append(key)
        elif utt.turn_index < best[key].turn_index:  # type: ignore[operator]
            best[key] = utt
    return [best[key] for key in order]


def cap_per_intent(
    utterances: Sequence[Utterance], max_per_intent: int, rng_seed: int
) -> list[Utterance]:
    """Downsample over-represented intents to at most max_per_intent utterances.

    Intents above the cap keep a uniform random sample (deterministic for a
    given seed); intents at or below the cap pass through unchanged. Input
    order is preserved among survivors.
    """
    if max_per_intent < 1:
        raise ValueError(f"max_per_intent must be >= 1, got {max_per_intent}")
    by_intent: dict[str, list[int]] = {}
    for i, utt in enumerate(utterances):
        if utt.gold_intent is None:
            raise ValueError(f"utterance {utt.text!r} has no gold intent; cannot cap")
        by_intent.setdefault(utt.gold_intent, []).append(i)
    rng = np.random.default_rng(rng_seed)
    keep: set[int] = set()
    for intent in by_intent:
        indices = by_intent[intent]
        if len(indices) <= max_per_intent:
            keep.update(indices)
        else:
            chosen = rng.choice(len(indices), size=max_per_intent, replace=False)
            keep.update(indices[j] for j in chosen)
    return [utt for i, utt in enumerate(utterances) if i in keep]


def intent_match_key(name: IntentName | str) -> str:
    """Canonical form used for cross-dataset intent matching.

    Tokens of the display form are Porter-stemmed and sorted alphabetically,
    so e.g. "restaurant reservation" and "reserve restaurant" share the key
    "reserv restaur".
    """
    if isinstance(name, str):
        name = normalize_intent_name(name)
    return " ".join(sorted(porter_stem(tok) for tok in name.display.split()))


def match_intents(
    set_a: Iterable[IntentName | str], set_b: Iterable[IntentName | str]
) -> list[tuple[IntentName, IntentName]]:
    """All pairs (a, b) whose stemmed-and-sorted token multisets coincide.

    Raw strings are normalized on the way in. Each matched pair is listed
    once, sorted by display forms for reproducible output.
    """
    def as_names(items: Iterable[IntentName | str]) -> list[IntentName]:
        names = []
        seen = set()
        for item in items:
            name = item if isinstance(item, IntentName) else normalize_intent_name(item)
            if name not in seen:
                seen.add(name)
                names.append(name)
        return names

    names_a = as_names(set_a)
    names_b = as_names(set_b)
    by_key: dict[str, list[IntentName]] = {}
    for b in names_b:
        by_key.setdefault(intent_match_key(b), []).append(b)
    pairs = []
    for a in names_a:
        for b in by_key.get(intent_match_key(a), []):
            pairs.append((a, b))
    pairs.sort(key=lambda p: (p[0].display, p[1].display))
    return pairs
