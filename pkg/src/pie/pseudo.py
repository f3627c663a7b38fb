"""Pseudo intent names from role spans, and the contrastive training triples.

An utterance's pseudo intent is the concatenation of all its predicted role
spans in utterance order. Utterances with no Action, Argument or Query span
are dropped: they rarely carry enough signal to name an intent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .corpus import Utterance, normalize_intent_name
from .irl import IRLSpan, WindowTagger, _check_spans, tag
from .util import read_jsonl, tokenize, write_jsonl

logger = logging.getLogger(__name__)

FILTER_KEEP_LABELS = frozenset({"Action", "Argument", "Query"})


def passes_filter(spans: list[IRLSpan]) -> bool:
    """True iff at least one span is an Action, Argument or Query."""
    return any(span.label in FILTER_KEEP_LABELS for span in spans)


def generate_pseudo_intent(tokens: list[str], spans: list[IRLSpan]) -> str | None:
    """Join span texts (all six labels) in start order, or None if filtered out.

    The result is always an order-preserving subsequence of the tokens.
    """
    ordered = _check_spans(len(tokens), spans)
    if not passes_filter(spans):
        return None
    return " ".join(" ".join(tokens[s.start : s.end]) for s in ordered)


@dataclass(frozen=True)
class TrainingTriple:
    """One contrastive pre-training example.

    gold_intent is the normalized display form; gold_utterance shares the
    anchor's gold intent and differs from the anchor whenever the intent has
    at least two surviving utterances.
    """

    utterance: Utterance
    gold_intent: str
    gold_utterance: Utterance
    pseudo_intent: str

    def __post_init__(self) -> None:
        if not self.pseudo_intent:
            raise ValueError("pseudo intent must be non-empty")
        if self.gold_utterance.gold_intent != self.utterance.gold_intent:
            raise ValueError(
                "gold utterance intent "
                f"{self.gold_utterance.gold_intent!r} does not match anchor intent "
                f"{self.utterance.gold_intent!r}"
            )


def build_triples(
    utterances: list[Utterance],
    tagger: WindowTagger,
    rng_seed: int,
) -> list[TrainingTriple]:
    """Tag, filter and pair utterances into contrastive training triples.

    Each surviving utterance gets a gold partner sampled uniformly from the
    other survivors of its intent; an intent with a single survivor pairs
    with itself (logged). Deterministic for a given seed.
    """
    from .util import substream

    for utt in utterances:
        if utt.gold_intent is None:
            raise ValueError(f"utterance {utt.text!r} has no gold intent")

    survivors: list[tuple[Utterance, str]] = []
    for utt in utterances:
        tokens = tokenize(utt.text)
        spans = tag(tagger, tokens)
        pseudo = generate_pseudo_intent(tokens, spans)
        if pseudo is not None:
            survivors.append((utt, pseudo))
    logger.info(
        "pseudo-intent filter kept %d of %d utterances", len(survivors), len(utterances)
    )

    by_intent: dict[str, list[int]] = {}
    for i, (utt, _) in enumerate(survivors):
        by_intent.setdefault(utt.gold_intent, []).append(i)  # type: ignore[arg-type]

    rng = substream(rng_seed, "gold-utterance-pairing")
    triples = []
    for i, (utt, pseudo) in enumerate(survivors):
        candidates = [j for j in by_intent[utt.gold_intent] if j != i]  # type: ignore[index]
        if candidates:
            partner = survivors[int(rng.choice(len(candidates)))][0]
            partner = survivors[candidates[int(rng.integers(len(candidates)))]][0]
        else:
            logger.warning(
                "intent %r has a single surviving utterance; pairing it with itself",
                utt.gold_intent,
            )
            partner = utt
        triples.append(
            TrainingTriple(
                utterance=utt,
                gold_intent=normalize_intent_name(utt.gold_intent).display,  # type: ignore[arg-type]
                gold_utterance=partner,
                pseudo_intent=pseudo,
            )
        )
    return triples


def triple_summary(triples: list[TrainingTriple]) -> dict:
    """Corpus statistics: utterance, distinct gold intent and pseudo intent counts."""
    return {
        "utterances": len(triples),
        "gold_intents": len({t.gold_intent for t in triples}),
        "pseudo_intents": len({t.pseudo_intent for t in triples}),
    }


def write_triples(path, triples: list[TrainingTriple]) -> int:
    return write_jsonl(
        path,
        (
            {
                "utterance": t.utterance.text,
                "gold_intent": t.gold_intent,
                "gold_utterance": t.gold_utterance.text,
                "pseudo_intent": t.pseudo_intent,
            }
            for t in triples
        ),
    )


def read_triples(path) -> list[TrainingTriple]:
    triples = []
    for lineno, record in read_jsonl(path):
        try:
            triples.append(
                TrainingTriple(
                    utterance=Utterance(
                        text=record["utterance"], gold_intent=record["gold_intent"]
                    ),
                    gold_intent=record["gold_intent"],
                    gold_utterance=Utterance(
                        text=record["gold_utterance"], gold_intent=record["gold_intent"]
                    ),
                    pseudo_intent=record["pseudo_intent"],
                )
            )
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return triples
