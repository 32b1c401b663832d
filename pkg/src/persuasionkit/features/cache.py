"""Per-sample raw-feature cache.

Entries are keyed by (sample_id, extractor-version hash, config hash),
so changing the config or swapping an adapter invalidates the cache
without touching old entries.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

from .config import ExtractorConfig
from .pipeline import RawFeatures, extract_raw_features
from .ports import ExtractorSuite


class FeatureCache:
    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def _path(self, sample_id: str, cfg: ExtractorConfig, suite: ExtractorSuite) -> Path:
        key = hashlib.sha256(
            f"{sample_id}|{cfg.content_hash()}|{suite.version}".encode()
        ).hexdigest()[:40]
        return self.directory / f"{key}.npz"

    def get_or_extract(self, sample, cfg: ExtractorConfig, suite: ExtractorSuite) -> RawFeatures:
        sid = sample if isinstance(sample, str) else sample.sample_id
        path = self._path(sid, cfg, suite)
        if path.exists():
            self.hits += 1
            return self._load(sid, path)
        self.misses += 1
        raw = extract_raw_features(sample, cfg, suite)
        self._store(raw, path)
        return raw

    def _store(self, raw: RawFeatures, path: Path):
        tmp = path.with_suffix(".tmp.npz")
        np.savez(
            tmp,
            image=raw.image,
            rois=raw.rois,
            ocr=raw.ocr,
            captions=raw.captions,
            symbols=raw.symbols,
            counts=np.array([raw.n_rois, raw.n_ocr_tokens, raw.n_captions]),
        )
        os.replace(tmp, path)

    def _load(self, sample_id: str, path: Path) -> RawFeatures:
        with np.load(path) as z:
            counts = z["counts"]
            return RawFeatures(
                sample_id=sample_id,
                image=z["image"],
                rois=z["rois"],
                ocr=z["ocr"],
                captions=z["captions"],
                symbols=z["symbols"],
                n_rois=int(counts[0]),
                n_ocr_tokens=int(counts[1]),
                n_captions=int(counts[2]),
            )
