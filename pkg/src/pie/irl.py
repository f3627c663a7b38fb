"""Intent role labeling: six role labels tagged over tokens with a BIO scheme.

The tagger assigns each token one of 13 tags (O plus B-/I- for each role)
with a hashed window-feature model trained by cross entropy. Scoring is
exact span match (label, start and end all equal), reported per label and
micro-averaged.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .optim import Adam
from .util import read_json, read_jsonl, stable_hash, substream, write_json, write_jsonl

ROLE_LABELS = ("Action", "Argument", "Request", "Query", "Slot", "Problem")

TAGS = ("O",) + tuple(f"{p}-{label}" for label in ROLE_LABELS for p in ("B", "I"))
TAG_TO_ID = {tag: i for i, tag in enumerate(TAGS)}
NUM_TAGS = len(TAGS)  # 13


@dataclass(frozen=True, order=True)
class IRLSpan:
    """A labeled token span; start inclusive, end exclusive."""

    start: int
    end: int
    label: str

    def __post_init__(self) -> None:
        if self.label not in ROLE_LABELS:
            raise ValueError(f"unknown role label {self.label!r}")
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span bounds [{self.start}, {self.end})")


def _check_spans(token_count: int, spans: list[IRLSpan]) -> list[IRLSpan]:
    ordered = sorted(spans)
    prev_end = 0
    for span in ordered:
        if span.end > token_count:
            raise ValueError(f"span {span} exceeds token count {token_count}")
        if span.start < prev_end:
            raise ValueError(f"span {span} overlaps a previous span")
        prev_end = span.end
    return ordered


def spans_to_bio(token_count: int, spans: list[IRLSpan]) -> list[str]:
    """Encode non-overlapping spans as a BIO tag sequence of length token_count."""
    tags = ["O"] * token_count
    for span in _check_spans(token_count, spans):
        tags[span.start] = f"B-{span.label}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.label}"
    return tags


def bio_to_spans(tags: list[str]) -> list[IRLSpan]:
    """Decode a BIO tag sequence into spans, repairing malformed sequences.

    A stray I-X (not preceded by B-X or I-X) is treated as B-X, so decoding
    is total over the 13-tag alphabet and always yields valid spans.
    """
    spans: list[IRLSpan] = []
    current_label: str | None = None
    current_start = 0
    for i, tag in enumerate(tags):
        if tag not in TAG_TO_ID:
            raise ValueError(f"unknown tag {tag!r} at position {i}")
        if tag == "O":
            prefix, label = "O", None
        else:
            prefix, label = tag.split("-", 1)
        if current_label is not None and (prefix in ("B", "O") or label != current_label):
            spans.append(IRLSpan(start=current_start, end=i, label=current_label))
            current_label = None
        if prefix in ("B", "I") and current_label is None:
            current_label = label
            current_start = i
    if current_label is not None:
        spans.append(IRLSpan(start=current_start, end=len(tags), label=current_label))
    return spans


# ---------------------------------------------------------------------------
# Tagger model
# ---------------------------------------------------------------------------

_PAD = "<pad>"


@dataclass
class TaggerConfig:
    epochs: int = 30
    learning_rate: float = 0.05
    batch_size: int = 8
    feature_bins: int = 1 << 16
    window: int = 2
    seed: int = 0


class WindowTagger:
    """Per-token classifier over hashed (offset, word) window features.

    Zero-initialized weights make the untrained model predict O everywhere
    (tag index 0 wins ties), which keeps the zero-epoch case well defined.
    """

    backend = "window"

    def __init__(self, feature_bins: int = 1 << 16, window: int = 2):
        if feature_bins < NUM_TAGS:
            raise ValueError("feature_bins is too small")
        self.feature_bins = feature_bins
        self.window = window
        self.weights = np.zeros((feature_bins, NUM_TAGS), dtype=np.float64)
        self.history: list[dict] = []

    def features(self, tokens: list[str], i: int) -> np.ndarray:
        feats = []
        for offset in range(-self.window, self.window + 1):
            j = i + offset
            word = tokens[j].lower() if 0 <= j < len(tokens) else _PAD
            feats.append(stable_hash("w", offset, word, bins=self.feature_bins))
        feats.append(stable_hash("bias", bins=self.feature_bins))
        return np.array(feats, dtype=np.int64)

    def scores(self, tokens: list[str]) -> np.ndarray:
        """Unnormalized tag scores, shape (len(tokens), NUM_TAGS)."""
        out = np.empty((len(tokens), NUM_TAGS), dtype=np.float64)
        for i in range(len(tokens)):
            out[i] = self.weights[self.features(tokens, i)].sum(axis=0)
        return out

    def tag_probabilities(self, tokens: list[str]) -> np.ndarray:
        s = self.scores(tokens)
        s -= s.max(axis=1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=1, keepdims=True)

    def predict_tags(self, tokens: list[str]) -> list[str]:
        if not tokens:
            raise ValueError("cannot tag an empty token list")
        return [TAGS[i] for i in self.scores(tokens).argmax(axis=1)]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_json(
            directory / "manifest.json",
            {
                "backend": self.backend,
                "feature_bins": self.feature_bins,
                "window": self.window,
                "num_tags": NUM_TAGS,
                "format_version": 1,
            },
        )
        np.save(directory / "weights.npy", self.weights)

    @classmethod
    def load(cls, directory: str | Path) -> "WindowTagger":
        directory = Path(directory)
        manifest = read_json(directory / "manifest.json")
        model = cls(feature_bins=manifest["feature_bins"], window=manifest["window"])
        model.weights = np.load(directory / "weights.npy")
        return model


def load_tagger(directory: str | Path) -> WindowTagger:
    manifest = read_json(Path(directory) / "manifest.json")
    if manifest.get("backend") != "window":
        raise ValueError(f"unknown tagger backend {manifest.get('backend')!r}")
    return WindowTagger.load(directory)


Annotation = tuple[list[str], list[str]]  # (tokens, BIO tags)


def _check_annotations(annotations: list[Annotation]) -> None:
    for idx, (tokens, tags) in enumerate(annotations):
        if len(tokens) != len(tags):
            raise ValueError(
                f"annotation {idx}: {len(tokens)} tokens but {len(tags)} tags"
            )
        for tag in tags:
            if tag not in TAG_TO_ID:
                raise ValueError(f"annotation {idx}: unknown tag {tag!r}")


def train_tagger(
    annotations: list[Annotation],
    config: TaggerConfig | None = None,
    validation: list[Annotation] | None = None,
) -> WindowTagger:
    """Train the window tagger with per-token cross entropy.

    When a validation set is given the best epoch by span-level micro F1 is
    retained; otherwise the final weights are kept. Per-epoch loss and F1
    land in model.history.
    """
    if not annotations:
        raise ValueError("training set is empty")
    _check_annotations(annotations)
    if validation:
        _check_annotations(validation)
    config = config or TaggerConfig()

    model = WindowTagger(feature_bins=config.feature_bins, window=config.window)
    optimizer = Adam(model.weights.shape, learning_rate=config.learning_rate)
    rng = substream(config.seed, "tagger-train")

    # precompute feature ids and tag ids once
    feats = [
        np.stack([model.features(tokens, i) for i in range(len(tokens))])
        for tokens, _ in annotations
    ]
    tag_ids = [np.array([TAG_TO_ID[t] for t in tags]) for _, tags in annotations]

    best_f1 = -1.0
    best_weights = model.weights.copy()
    for epoch in range(config.epochs):
        order = rng.permutation(len(annotations))
        epoch_loss = 0.0
        token_count = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad = np.zeros_like(model.weights)
            batch_tokens = sum(len(tag_ids[j]) for j in batch)
            for j in batch:
                f, y = feats[j], tag_ids[j]
                logits = model.weights[f].sum(axis=1)
                logits -= logits.max(axis=1, keepdims=True)
                exp = np.exp(logits)
                probs = exp / exp.sum(axis=1, keepdims=True)
                epoch_loss += -np.log(probs[np.arange(len(y)), y]).sum()
                token_count += len(y)
                d_logits = probs
                d_logits[np.arange(len(y)), y] -= 1.0
                d_logits /= batch_tokens
                np.add.at(grad, f.ravel(), np.repeat(d_logits, f.shape[1], axis=0))
            model.weights += optimizer.step(grad)

        eval_set = validation if validation else annotations
        f1 = _span_micro_f1(model, eval_set)
        model.history.append(
            {"epoch": epoch, "train_loss": epoch_loss / max(token_count, 1), "span_f1": f1}
        )
        if validation and f1 > best_f1:
            best_f1 = f1
            best_weights = model.weights.copy()

    if validation and config.epochs > 0:
        model.weights = best_weights
    return model


def _span_micro_f1(model: WindowTagger, annotations: list[Annotation]) -> float:
    gold = [bio_to_spans(tags) for _, tags in annotations]
    pred = [tag(model, tokens) for tokens, _ in annotations]
    return evaluate_tagger(gold, pred)["micro"].f1


def tag(model: WindowTagger, tokens: list[str]) -> list[IRLSpan]:
    """Predict role spans for one tokenized utterance (argmax tags + repair)."""
    if not tokens:
        raise ValueError("cannot tag an empty token list")
    return bio_to_spans(model.predict_tags(tokens))


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


@dataclass
class LabelScore:
    precision: float
    recall: float
    f1: float
    gold_count: int
    pred_count: int
    correct: int


def evaluate_tagger(
    gold: list[list[IRLSpan]], pred: list[list[IRLSpan]]
) -> dict[str, LabelScore]:
    """Exact-span-match precision/recall/F1 per label, plus a 'micro' entry.

    Labels with neither gold nor predicted spans are omitted. Scores are
    fractions in [0, 1].
    """
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} utterances but pred has {len(pred)}")
    counts = {label: [0, 0, 0] for label in ROLE_LABELS}  # gold, pred, correct
    for g_spans, p_spans in zip(gold, pred):
        g_set, p_set = set(g_spans), set(p_spans)
        for s in g_spans:
            counts[s.label][0] += 1
        for s in p_spans:
            counts[s.label][1] += 1
        for s in g_set & p_set:
            counts[s.label][2] += 1

    def score(n_gold: int, n_pred: int, n_correct: int) -> LabelScore:
        p = n_correct / n_pred if n_pred else 0.0
        r = n_correct / n_gold if n_gold else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return LabelScore(p, r, f1, n_gold, n_pred, n_correct)

    result = {
        label: score(*counts[label])
        for label in ROLE_LABELS
        if counts[label][0] or counts[label][1]
    }
    totals = [sum(c[i] for c in counts.values()) for i in range(3)]
    result["micro"] = score(*totals)
    return result


def format_tagger_report(scores: dict[str, LabelScore]) -> str:
    """Render scores as an aligned percent table, one row per label."""
    lines = [f"{'Label':<10} {'P (%)':>7} {'R (%)':>7} {'F1 (%)':>7} {'Gold':>6} {'Pred':>6}"]
    order = [l for l in ROLE_LABELS if l in scores] + ["micro"]
    for label in order:
        s = scores[label]
        lines.append(
            f"{label:<10} {100 * s.precision:>7.1f} {100 * s.recall:>7.1f} "
            f"{100 * s.f1:>7.1f} {s.gold_count:>6} {s.pred_count:>6}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def read_annotations(path: str | Path, format: str = "auto") -> list[Annotation]:
    """Read annotations from JSONL ({"tokens": [...], "tags": [...]}) or
    CoNLL-style TSV (token<TAB>tag lines, blank line between utterances)."""
    path = Path(path)
    if format == "auto":
        with open(path, encoding="utf-8") as f:
            first = ""
            for line in f:
                if line.strip():
                    first = line.strip()
                    break
        format = "jsonl" if first.startswith("{") else "tsv"
    if format == "jsonl":
        annotations = []
        for lineno, record in read_jsonl(path):
            if "tokens" not in record or "tags" not in record:
                raise ValueError(f"{path}: line {lineno}: needs 'tokens' and 'tags'")
            annotations.append((list(record["tokens"]), list(record["tags"])))
    elif format == "tsv":
        annotations = []
        tokens: list[str] = []
        tags: list[str] = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    if tokens:
                        annotations.append((tokens, tags))
                        tokens, tags = [], []
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}: line {lineno}: expected 'token<TAB>tag'")
                tokens.append(parts[0])
                tags.append(parts[1])
        if tokens:
            annotations.append((tokens, tags))
    else:
        raise ValueError(f"unknown annotation format {format!r}")
    _check_annotations(annotations)
    return annotations


def write_span_file(path: str | Path, items: list[tuple[list[str], list[IRLSpan]]]) -> None:
    write_jsonl(
        path,
        (
            {
                "tokens": tokens,
                "spans": [
                    {"label": s.label, "start": s.start, "end": s.end} for s in spans
                ],
            }
            for tokens, spans in items
        ),
    )


def read_span_file(path: str | Path) -> list[tuple[list[str], list[IRLSpan]]]:
    """Read per-utterance spans; accepts records carrying 'spans' or BIO 'tags'."""
    items = []
    for lineno, record in read_jsonl(path):
        tokens = list(record.get("tokens", []))
        if "spans" in record:
            spans = [
                IRLSpan(start=s["start"], end=s["end"], label=s["label"])
                for s in record["spans"]
            ]
        elif "tags" in record:
            spans = bio_to_spans(list(record["tags"]))
        else:
            raise ValueError(f"{path}: line {lineno}: needs 'spans' or 'tags'")
        items.append((tokens, spans))
    return items
