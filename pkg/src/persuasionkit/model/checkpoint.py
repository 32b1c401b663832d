"""Versioned checkpoint container.

A checkpoint holds every parameter tensor plus the taxonomy hash, the
extractor geometry, the training config, the vocabulary, and the
training history. Loading verifies the taxonomy hash so a model can
never silently run against a different class vocabulary.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import torch

from ..errors import ValidationError
from ..taxonomy import Taxonomy
from .fusion import FusionConfig, FusionModel
from .training import TrainConfig, TrainedModel
from .vocab import Vocabulary

FORMAT_VERSION = 1


def save_checkpoint(trained: TrainedModel, path: str | Path) -> str:
    """Write the snapshot and return the file's sha256 (the checkpoint
    hash used for provenance and idempotence checks)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FORMAT_VERSION,
        "taxonomy_hash": trained.taxonomy.content_hash(),
        "taxonomy": trained.taxonomy.to_dict(),
        "fusion_config": trained.fusion_config.to_dict(),
        "train_config": trained.train_config.to_dict(),
        "vocab_tokens": list(trained.vocab.tokens),
        "state_dict": trained.model.state_dict(),
        "history": trained.history,
    }
    torch.save(payload, path)
    return checkpoint_hash(path)


def checkpoint_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_checkpoint(path: str | Path, taxonomy: Taxonomy) -> TrainedModel:
    """Restore a snapshot, rejecting taxonomy mismatches.

    Raises
    ------
    ValidationError
        Unknown format version or taxonomy hash mismatch.
    """
    path = Path(path)
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValidationError(
            f"unsupported checkpoint format: {payload.get('format_version')!r}"
        )
    stored = payload["taxonomy_hash"]
    if stored != taxonomy.content_hash():
        raise ValidationError(
            "checkpoint was trained against a different taxonomy "
            f"(stored {stored[:12]}, active {taxonomy.content_hash()[:12]})"
        )
    config = FusionConfig.from_dict(payload["fusion_config"])
    model = FusionModel(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return TrainedModel(
        model=model,
        taxonomy=taxonomy,
        vocab=Vocabulary(tokens=tuple(payload["vocab_tokens"])),
        train_config=TrainConfig.from_dict(payload["train_config"]),
        history=list(payload.get("history", [])),
    )
