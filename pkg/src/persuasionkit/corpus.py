"""Ad samples and the line-delimited corpus manifest.

Manifest format: one JSON object per line with fields ``sample_id``,
``image_ref``, ``ocr_text`` and the optional ``topic_tags``,
``gold_labels`` (list of strategy ids), ``gold_action_reason``, ``split``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateIdError, ParseError
from .taxonomy import StrategySet


@dataclass(frozen=True)
class AdSample:
    sample_id: str
    image_ref: str
    ocr_text: str = ""
    topic_tags: tuple[str, ...] = ()
    gold_action_reason: str | None = None
    gold_labels: StrategySet | None = None
    split: str | None = None

    def to_dict(self) -> dict:
        d = {
            "sample_id": self.sample_id,
            "image_ref": self.image_ref,
            "ocr_text": self.ocr_text,
        }
        if self.topic_tags:
            d["topic_tags"] = list(self.topic_tags)
        if self.gold_action_reason is not None:
            d["gold_action_reason"] = self.gold_action_reason
        if self.gold_labels is not None:
            d["gold_labels"] = list(self.gold_labels.ids)
        if self.split is not None:
            d["split"] = self.split
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AdSample":
        if "sample_id" not in d or "image_ref" not in d:
            raise ParseError(f"manifest record missing sample_id/image_ref: {d!r}")
        gold = d.get("gold_labels")
        return cls(
            sample_id=str(d["sample_id"]),
            image_ref=str(d["image_ref"]),
            ocr_text=str(d.get("ocr_text", "")),
            topic_tags=tuple(d.get("topic_tags", ())),
            gold_action_reason=d.get("gold_action_reason"),
            gold_labels=StrategySet(gold) if gold is not None else None,
            split=d.get("split"),
        )


def load_manifest(path: str | Path) -> list[AdSample]:
    """Parse a JSONL manifest; blank lines are skipped.

    Raises
    ------
    ParseError
        Missing file or malformed JSON (with the line number).
    DuplicateIdError
        Repeated sample ids, listing the collisions.
    """
    p = Path(path)
    if not p.exists():
        raise ParseError(f"manifest not found: {p}")
    samples: list[AdSample] = []
    seen: set[str] = set()
    duplicates: set[str] = set()
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"{p}:{lineno}: invalid JSON: {e}") from e
        sample = AdSample.from_dict(record)
        if sample.sample_id in seen:
            duplicates.add(sample.sample_id)
        seen.add(sample.sample_id)
        samples.append(sample)
    if duplicates:
        raise DuplicateIdError(
            f"duplicate sample ids in {p}: {sorted(duplicates)}", duplicates=sorted(duplicates)
        )
    return samples


def write_manifest(samples, path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w") as f:
        for s in samples:
            f.write(json.dumps(s.to_dict()) + "\n")


def corpus_hash(samples) -> str:
    """Order-insensitive digest of sample ids + gold labels, embedded in
    evaluation reports for provenance."""
    items = sorted(
        (s.sample_id, sorted(s.gold_labels.ids) if s.gold_labels else []) for s in samples
    )
    return hashlib.sha256(json.dumps(items).encode()).hexdigest()
