"""Extractor ports and their deterministic stub implementations.

Every backbone (image encoder, text encoder, object detector, captioner,
symbol classifier) sits behind a small interface so pretrained adapters
can be plugged in later. The stubs shipped here are hash-seeded pure
functions of (sample content, config), so the whole pipeline and every
test run with zero model downloads and byte-identical results across
processes and platforms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .config import ExtractorConfig


def seeded_vector(key: str, dim: int) -> np.ndarray:
    """Unit-scale standard-normal vector fully determined by ``key``."""
    seed = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.standard_normal(dim)


def seeded_rng(key: str) -> np.random.Generator:
    seed = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class Detection:
    """One detected region: confidence plus its encoded crop."""

    confidence: float
    embedding: np.ndarray


@runtime_checkable
class ImageEncoderPort(Protocol):
    version: str
    thread_safe: bool

    def encode_image(self, sample, cfg: ExtractorConfig) -> np.ndarray:
        """Pooled whole-image embedding, shape [backbone_dim]."""
        ...


@runtime_checkable
class TextEncoderPort(Protocol):
    version: str
    thread_safe: bool

    def encode_tokens(self, tokens: list[str], cfg: ExtractorConfig) -> np.ndarray:
        """Per-token embeddings, shape [len(tokens), backbone_dim]."""
        ...


@runtime_checkable
class ObjectDetectorPort(Protocol):
    version: str
    thread_safe: bool

    def detect(self, sample, cfg: ExtractorConfig) -> list[Detection]:
        ...


@runtime_checkable
class CaptionerPort(Protocol):
    version: str
    thread_safe: bool

    def captions(self, sample, cfg: ExtractorConfig) -> list[np.ndarray]:
        """Caption embeddings, each of shape [backbone_dim]."""
        ...


@runtime_checkable
class SymbolClassifierPort(Protocol):
    version: str
    thread_safe: bool
    num_classes: int

    def distribution(self, sample, cfg: ExtractorConfig) -> np.ndarray:
        """Probability distribution over symbol classes, sums to 1."""
        ...


def _sample_id(sample) -> str:
    return sample if isinstance(sample, str) else sample.sample_id


class StubImageEncoder:
    version = "stub-image/1"
    thread_safe = True

    def encode_image(self, sample, cfg):
        return seeded_vector(f"image|{_sample_id(sample)}", cfg.backbone_dim)


class StubTextEncoder:
    """Embeds each token as a pure function of the token string, so any
    two occurrences of a word get the same row."""

    version = "stub-text/1"
    thread_safe = True

    def encode_tokens(self, tokens, cfg):
        if not tokens:
            return np.zeros((0, cfg.backbone_dim))
        return np.stack([seeded_vector(f"token|{t}", cfg.backbone_dim) for t in tokens])


class StubObjectDetector:
    """Emits a sample-determined number of detections in [0, max_detections]
    with hash-seeded confidences, to exercise truncation and padding."""

    version = "stub-detector/1"
    thread_safe = True

    def __init__(self, max_detections: int | None = None):
        self.max_detections = max_detections

    def detect(self, sample, cfg):
        sid = _sample_id(sample)
        cap = self.max_detections if self.max_detections is not None else cfg.n_roi + 5
        rng = seeded_rng(f"detect|{sid}|{cap}")
        count = int(rng.integers(0, cap + 1)) if cap > 0 else 0
        detections = []
        for i in range(count):
            detections.append(
                Detection(
                    confidence=float(rng.random()),
                    embedding=seeded_vector(f"roi|{sid}|{i}", cfg.backbone_dim),
                )
            )
        return detections


class StubCaptioner:
    version = "stub-captioner/1"
    thread_safe = True

    def __init__(self, n_captions: int | None = None):
        self.n_captions = n_captions

    def captions(self, sample, cfg):
        sid = _sample_id(sample)
        count = self.n_captions if self.n_captions is not None else cfg.n_cap
        return [seeded_vector(f"caption|{sid}|{i}", cfg.backbone_dim) for i in range(count)]


class StubSymbolClassifier:
    version = "stub-symbols/1"
    thread_safe = True

    def __init__(self, num_classes: int | None = None):
        self.num_classes = num_classes

    def distribution(self, sample, cfg):
        n = self.num_classes if self.num_classes is not None else cfg.symbol_classes
        rng = seeded_rng(f"symbols|{_sample_id(sample)}")
        return rng.dirichlet(np.ones(n))


@dataclass
class ExtractorSuite:
    """The five ports the pipeline draws from, plus a combined version
    string that keys the feature cache."""

    image: ImageEncoderPort
    text: TextEncoderPort
    detector: ObjectDetectorPort
    captioner: CaptionerPort
    symbols: SymbolClassifierPort

    @property
    def version(self) -> str:
        return "+".join(
            p.version
            for p in (self.image, self.text, self.detector, self.captioner, self.symbols)
        )

    @property
    def thread_safe(self) -> bool:
        return all(
            p.thread_safe
            for p in (self.image, self.text, self.detector, self.captioner, self.symbols)
        )


def stub_suite(**overrides) -> ExtractorSuite:
    """Suite of deterministic stub ports; keyword overrides replace
    individual ports (e.g. ``detector=StubObjectDetector(0)``)."""
    ports = {
        "image": StubImageEncoder(),
        "text": StubTextEncoder(),
        "detector": StubObjectDetector(),
        "captioner": StubCaptioner(),
        "symbols": StubSymbolClassifier(),
    }
    ports.update(overrides)
    return ExtractorSuite(**ports)
