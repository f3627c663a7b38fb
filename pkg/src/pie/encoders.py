"""Sentence encoders producing fixed-dimension embeddings with mean pooling.

Two backends share the same embed() contract:

* ToyEncoder: a deterministic, trainable hashed bag-of-tokens encoder small
  enough for CPU-only tests of the whole training and evaluation stack.
* SentenceTransformerEncoder: a wrapper around a pretrained transformer
  sentence encoder (optional dependency), used for full-scale runs.

Checkpoints are directories holding a manifest.json plus parameter data and
round-trip bit-exactly for the toy backend.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .util import read_json, stable_hash, substream, tokenize, write_json

logger = logging.getLogger(__name__)

CHECKPOINT_MANIFEST = "manifest.json"


class SentenceEncoder(ABC):
    """Maps texts to mean-pooled embedding vectors of a fixed dimension."""

    backend: str
    dim: int
    pooling: str = "mean"

    @abstractmethod
    def embed(self, texts: list[str]) -> np.ndarray:
        """Return one row per text, shape (len(texts), dim)."""

    @abstractmethod
    def save(self, directory: str | Path) -> None:
        """Persist the model as a checkpoint directory."""

    def _check_texts(self, texts: list[str]) -> None:
        for i, text in enumerate(texts):
            if not isinstance(text, str) or not text.strip():
                raise ValueError(f"text {i} is empty; all inputs must be non-empty strings")


@dataclass
class EmbedCache:
    """Intermediate activations kept for the toy backward pass."""

    bin_ids: list[np.ndarray]
    pooled: np.ndarray  # (n, dim) mean-pooled bin embeddings


class ToyEncoder(SentenceEncoder):
    """Hashed bag-of-tokens encoder: bin embeddings, mean pooling, linear map.

    Every token hashes into one of `hash_bins` rows of a trainable embedding
    table; the mean of those rows is projected by a trainable linear layer to
    the output dimension. Token order never matters, which is a deliberate
    simplification. All parameters live in one flat float64 vector so that
    optimizers and finite-difference checks can treat the model generically.
    """

    backend = "toy"

    def __init__(self, dim: int, hash_bins: int, seed: int, max_tokens: int = 128):
        if dim < 2:
            raise ValueError(f"dim must be >= 2, got {dim}")
        if hash_bins < dim:
            raise ValueError(f"hash_bins must be >= dim ({dim}), got {hash_bins}")
        if max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
        self.dim = dim
        self.hash_bins = hash_bins
        self.seed = seed
        self.max_tokens = max_tokens
        rng = substream(seed, "toy-encoder-init")
        theta = np.empty(self.num_params, dtype=np.float64)
        self._theta = theta
        self._table = theta[: hash_bins * dim].reshape(hash_bins, dim)
        self._proj = theta[hash_bins * dim : hash_bins * dim + dim * dim].reshape(dim, dim)
        self._bias = theta[hash_bins * dim + dim * dim :]
        self._table[:] = rng.normal(0.0, 1.0, size=(hash_bins, dim))
        self._proj[:] = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(dim, dim))
        self._bias[:] = 0.0

    @property
    def num_params(self) -> int:
        return self.hash_bins * self.dim + self.dim * self.dim + self.dim

    def get_params(self) -> np.ndarray:
        return self._theta.copy()

    def set_params(self, theta: np.ndarray) -> None:
        if theta.shape != self._theta.shape:
            raise ValueError(f"expected {self._theta.shape} parameters, got {theta.shape}")
        self._theta[:] = theta

    def token_bins(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if len(tokens) > self.max_tokens:
            logger.warning(
                "truncating text with %d tokens to max_tokens=%d: %.40r",
                len(tokens), self.max_tokens, text,
            )
            tokens = tokens[: self.max_tokens]
        return np.array(
            [stable_hash("tok", t, bins=self.hash_bins) for t in tokens], dtype=np.int64
        )

    def embed(self, texts: list[str]) -> np.ndarray:
        emb, _ = self.embed_with_cache(texts)
        return emb

    def embed_with_cache(self, texts: list[str]) -> tuple[np.ndarray, EmbedCache]:
        """Embed texts and keep the pooled activations needed by backward()."""
        self._check_texts(texts)
        pooled = np.empty((len(texts), self.dim), dtype=np.float64)
        bin_ids = []
        for i, text in enumerate(texts):
            bins = self.token_bins(text)
            bin_ids.append(bins)
            pooled[i] = self._table[bins].mean(axis=0)
        emb = pooled @ self._proj + self._bias
        if not np.all(np.isfinite(emb)):
            raise FloatingPointError("toy encoder produced non-finite embeddings")
        return emb, EmbedCache(bin_ids=bin_ids, pooled=pooled)

    def backward(self, cache: EmbedCache, grad_out: np.ndarray) -> np.ndarray:
        """Accumulate d(loss)/d(theta) given d(loss)/d(embeddings).

        grad_out has one row per cached text. Returns a flat gradient in the
        same layout as get_params().
        """
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if grad_out.shape != cache.pooled.shape:
            raise ValueError(
                f"grad_out shape {grad_out.shape} does not match cache {cache.pooled.shape}"
            )
        grad = np.zeros_like(self._theta)
        g_table = grad[: self.hash_bins * self.dim].reshape(self.hash_bins, self.dim)
        g_proj = grad[
            self.hash_bins * self.dim : self.hash_bins * self.dim + self.dim * self.dim
        ].reshape(self.dim, self.dim)
        g_bias = grad[self.hash_bins * self.dim + self.dim * self.dim :]

        g_proj += cache.pooled.T @ grad_out
        g_bias += grad_out.sum(axis=0)
        g_pooled = grad_out @ self._proj.T
        for i, bins in enumerate(cache.bin_ids):
            np.add.at(g_table, bins, g_pooled[i] / len(bins))
        return grad

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_json(
            directory / CHECKPOINT_MANIFEST,
            {
                "backend": self.backend,
                "dim": self.dim,
                "pooling": self.pooling,
                "hash_bins": self.hash_bins,
                "max_tokens": self.max_tokens,
                "seed": self.seed,
                "format_version": 1,
            },
        )
        np.save(directory / "params.npy", self._theta)

    @classmethod
    def load(cls, directory: str | Path) -> "ToyEncoder":
        directory = Path(directory)
        manifest = read_json(directory / CHECKPOINT_MANIFEST)
        model = cls(
            dim=manifest["dim"],
            hash_bins=manifest["hash_bins"],
            seed=manifest["seed"],
            max_tokens=manifest["max_tokens"],
        )
        theta = np.load(directory / "params.npy")
        model.set_params(theta)
        return model


def toy_encoder_new(dim: int, vocab_hash_bins: int, seed: int) -> ToyEncoder:
    """Construct a freshly initialized toy encoder (seeded, reproducible)."""
    return ToyEncoder(dim=dim, hash_bins=vocab_hash_bins, seed=seed)


class SentenceTransformerEncoder(SentenceEncoder):
    """Pretrained transformer sentence encoder (mean pooling) behind embed().

    Requires the optional sentence-transformers dependency. Overlong inputs
    are truncated to the underlying model's max sequence length.
    """

    backend = "transformer"

    def __init__(self, model_or_path):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:  # pragma: no cover - environment dependent
            raise ImportError(
                "the transformer backend needs the 'transformer' extra "
                "(pip install 'pie[transformer]')"
            ) from exc
        if isinstance(model_or_path, (str, Path)):
            self._model = SentenceTransformer(str(model_or_path))
        else:
            self._model = model_or_path
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def embed(self, texts: list[str]) -> np.ndarray:
        self._check_texts(texts)
        emb = self._model.encode(
            list(texts), convert_to_numpy=True, show_progress_bar=False,
            normalize_embeddings=False,
        )
        emb = np.asarray(emb, dtype=np.float64)
        if not np.all(np.isfinite(emb)):
            raise FloatingPointError("transformer encoder produced non-finite embeddings")
        return emb

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self._model.save(str(directory / "model"))
        write_json(
            directory / CHECKPOINT_MANIFEST,
            {
                "backend": self.backend,
                "dim": self.dim,
                "pooling": self.pooling,
                "format_version": 1,
            },
        )

    @classmethod
    def load(cls, directory: str | Path) -> "SentenceTransformerEncoder":
        return cls(Path(directory) / "model")


def load_encoder(directory: str | Path) -> SentenceEncoder:
    """Load a checkpoint directory, dispatching on the manifest's backend."""
    manifest = read_json(Path(directory) / CHECKPOINT_MANIFEST)
    backend = manifest.get("backend")
    if backend == "toy":
        return ToyEncoder.load(directory)
    if backend == "transformer":
        return SentenceTransformerEncoder.load(directory)
    raise ValueError(f"unknown encoder backend {backend!r} in {directory}")
