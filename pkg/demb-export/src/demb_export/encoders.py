"""Dual encoders mapping text and images into one joint embedding space.

The default encoder is a deterministic feature-hashing model that needs no
downloads: token/bigram features for text, color and intensity statistics
for images, with a shared "color anchor" subspace so that captions naming
what an image shows land near that image. It exists so the export pipeline
and the downstream engine can be exercised hermetically; the DualEncoder
protocol is the seam where a pretrained checkpoint (e.g. a CLIP-style model
via sentence-transformers) plugs in when a model hub is reachable.
"""

from __future__ import annotations

import hashlib
import logging
import re
from typing import Protocol, Sequence

import numpy as np

log = logging.getLogger(__name__)


class EncodeError(RuntimeError):
    pass


class DualEncoder(Protocol):
    name: str
    dim: int
    max_tokens: int

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray: ...

    def encode_images(self, paths: Sequence[str]) -> np.ndarray: ...


# named colors anchoring the joint text/image subspace
_COLORS = {
    "red": (220, 40, 40), "green": (40, 180, 60), "blue": (40, 70, 220),
    "yellow": (230, 220, 50), "orange": (240, 150, 40),
    "purple": (140, 60, 180), "pink": (240, 130, 180),
    "brown": (140, 90, 50), "black": (20, 20, 20), "white": (240, 240, 240),
    "gray": (128, 128, 128), "cyan": (60, 200, 210),
}

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _hash_index(feature: str, buckets: int) -> tuple[int, float]:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    val = int.from_bytes(digest, "little")
    return val % buckets, 1.0 if (val >> 63) & 1 else -1.0


class HashingDualEncoder:
    """Deterministic dual encoder over hashed features.

    Layout: the first `anchor_dim` components are the color-anchor subspace
    shared by both modalities; the rest hold modality-specific hashed
    features. All outputs are L2-normalized except raw image vectors, whose
    normalization the consumer owns.
    """

    def __init__(self, dim: int = 128, anchor_dim: int = 16,
                 max_tokens: int = 256, name: str = "hashing-v1"):
        if dim <= anchor_dim:
            raise ValueError("dim must exceed anchor_dim")
        self.name = name
        self.dim = dim
        self.anchor_dim = anchor_dim
        self.max_tokens = max_tokens
        rng = np.random.default_rng(
            int.from_bytes(hashlib.blake2b(name.encode(), digest_size=4).digest(),
                           "little"))
        # fixed linear map from RGB (plus bias) into the anchor subspace
        self._rgb_proj = rng.normal(size=(anchor_dim, 4))
        self._anchor = {c: self._rgb_anchor(rgb) for c, rgb in _COLORS.items()}

    def _rgb_anchor(self, rgb) -> np.ndarray:
        x = np.array([rgb[0] / 255, rgb[1] / 255, rgb[2] / 255, 1.0])
        v = self._rgb_proj @ x
        return v / np.linalg.norm(v)

    def _tokenize(self, text: str) -> list[str]:
        return _TOKEN_RE.findall(text.lower())

    def encode_text(self, text: str) -> np.ndarray:
        tokens = self._tokenize(text)
        if len(tokens) > self.max_tokens:
            log.warning("text truncated from %d to %d tokens",
                        len(tokens), self.max_tokens)
            tokens = tokens[:self.max_tokens]
        if not tokens:
            raise EncodeError("empty text")
        vec = np.zeros(self.dim)
        buckets = self.dim - self.anchor_dim
        feats = tokens + [f"{a}_{b}" for a, b in zip(tokens, tokens[1:])]
        for feat in feats:
            i, sign = _hash_index(feat, buckets)
            vec[self.anchor_dim + i] += sign
        for tok in tokens:
            anchor = self._anchor.get(tok)
            if anchor is not None:
                # color words dominate so captions land near their images
                vec[:self.anchor_dim] += anchor * np.sqrt(len(feats))
        return vec / np.linalg.norm(vec)

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.encode_text(t) for t in texts])

    def encode_image(self, path: str) -> np.ndarray:
        from PIL import Image

        try:
            with Image.open(path) as im:
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
        except Exception as e:
            raise EncodeError(f"unreadable image {path!r}: {e}") from e
        mean = rgb.reshape(-1, 3).mean(axis=0)
        vec = np.zeros(self.dim)
        x = np.array([mean[0] / 255, mean[1] / 255, mean[2] / 255, 1.0])
        anchor = self._rgb_proj @ x
        vec[:self.anchor_dim] = anchor / np.linalg.norm(anchor)
        # coarse luminance histogram as image-only texture features
        lum = rgb.mean(axis=2).ravel()
        hist, _ = np.histogram(lum, bins=8, range=(0, 255))
        hist = hist / max(lum.size, 1)
        buckets = self.dim - self.anchor_dim
        for b, weight in enumerate(hist):
            i, sign = _hash_index(f"lum{b}", buckets)
            vec[self.anchor_dim + i] += 0.2 * sign * weight
        return vec  # raw: consumer controls pooling and normalization

    def encode_images(self, paths: Sequence[str]) -> np.ndarray:
        return np.stack([self.encode_image(p) for p in paths])


class SentenceTransformerDualEncoder:
    """Adapter for a CLIP-style checkpoint from sentence-transformers.

    Requires network access to a model hub (or a local cache) the first
    time a checkpoint is loaded.
    """

    def __init__(self, checkpoint: str, device: str = "cpu",
                 max_tokens: int = 512):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as e:
            raise EncodeError("sentence-transformers is not installed") from e
        try:
            self._model = SentenceTransformer(checkpoint, device=device)
        except Exception as e:
            raise EncodeError(f"cannot load checkpoint {checkpoint!r}: {e}") from e
        self.name = checkpoint
        self.dim = int(self._model.get_sentence_embedding_dimension())
        self.max_tokens = max_tokens

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        return np.asarray(self._model.encode(list(texts),
                                             normalize_embeddings=True))

    def encode_images(self, paths: Sequence[str]) -> np.ndarray:
        from PIL import Image

        images = [Image.open(p).convert("RGB") for p in paths]
        return np.asarray(self._model.encode(images))


def load_encoder(spec: str = "hashing", dim: int = 128,
                 max_tokens: int = 256, device: str = "cpu") -> DualEncoder:
    """"hashing" for the hermetic default, anything else is treated as a
    sentence-transformers checkpoint name."""
    if spec in ("hashing", "hashing-v1"):
        return HashingDualEncoder(dim=dim, max_tokens=max_tokens)
    return SentenceTransformerDualEncoder(spec, device=device,
                                          max_tokens=max_tokens)
