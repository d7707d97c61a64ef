"""Image-text similarity backends.

Backends embed an image and a text into one shared feature space and score
with cosine similarity; the service maps that to [0, 1] via (s + 1) / 2.
Models are looked up by a pinned identifier so results only change when the
pin changes.

The built-in "lite-vl/1" backend needs no model weights: images embed as a
fixed projection of an 8x8 RGB thumbnail, texts as signed character
trigram hashes, with every constant derived from a pinned seed. It is fully
deterministic across platforms, which is what the record/replay contract
needs; it is not a real vision-language model and makes no semantic claims.
"""

from __future__ import annotations

import math
from io import BytesIO

from PIL import Image, UnidentifiedImageError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

LITE_MODEL_NAME = "lite-vl/1"
_LITE_SEED = 0x1C0FFEE5  # pinned; changing it invalidates frozen fixtures
_THUMB = 8          # thumbnail side; image features = THUMB*THUMB*3
_DIM = 64           # shared embedding width


class ImageDecodeError(ValueError):
    """Image bytes exist but cannot be decoded."""


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _stream(seed: int):
    state = seed & _MASK64
    while True:
        state = (state + _GOLDEN) & _MASK64
        yield _mix64(state)


def _fnv1a(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def _normalize(vector: list[float]) -> list[float]:
    norm = math.sqrt(sum(v * v for v in vector))
    if norm == 0.0:
        return list(vector)
    return [v / norm for v in vector]


def cosine(a: list[float], b: list[float]) -> float:
    return sum(x * y for x, y in zip(a, b))  # inputs are unit vectors


class LiteVisionLanguageModel:
    """Deterministic weightless image-text embedder (see module docstring)."""

    name = LITE_MODEL_NAME

    def __init__(self):
        features = _THUMB * _THUMB * 3
        draws = _stream(_LITE_SEED)
        # Fixed dense projection from pixel space into the shared space.
        self._projection = [
            [((next(draws) >> 11) / 2.0 ** 53) * 2.0 - 1.0 for _ in range(_DIM)]
            for _ in range(features)
        ]

    def embed_image(self, data: bytes) -> list[float]:
        try:
            with Image.open(BytesIO(data)) as img:
                thumb = img.convert("RGB").resize((_THUMB, _THUMB))
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            raise ImageDecodeError(f"cannot decode image bytes: {exc}") from exc
        pixels = [byte / 255.0 - 0.5 for byte in thumb.tobytes()]
        out = [0.0] * _DIM
        for value, row in zip(pixels, self._projection):
            if value != 0.0:
                for j in range(_DIM):
                    out[j] += value * row[j]
        return _normalize(out)

    def embed_text(self, text: str) -> list[float]:
        padded = f"  {text.lower()} "
        out = [0.0] * _DIM
        for i in range(len(padded) - 2):
            h = _fnv1a(padded[i : i + 3])
            sign = 1.0 if (h >> 63) else -1.0
            out[h % _DIM] += sign
        return _normalize(out)

    def score(self, image_bytes: bytes, texts: list[str]) -> list[float]:
        """One score in [0, 1] per text: cosine mapped through (s + 1) / 2."""
        image_vec = self.embed_image(image_bytes)
        scores = []
        for text in texts:
            s = cosine(image_vec, self.embed_text(text))
            scores.append(min(1.0, max(0.0, (s + 1.0) / 2.0)))
        return scores


_REGISTRY = {LITE_MODEL_NAME: LiteVisionLanguageModel}


def load_model(name: str):
    """Instantiate the backend pinned by `name`; unknown pins are errors."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; registered: {sorted(_REGISTRY)}"
        ) from None
    return factory()
