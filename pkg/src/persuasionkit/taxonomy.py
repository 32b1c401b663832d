"""Persuasion-strategy vocabulary: loading, validation, label encoding.

The taxonomy is data, not code. It ships as an editable YAML document
(see ``data/default_taxonomy.yaml``); the class count ``|P|`` is always
derived from the loaded file. The default file holds 20 strategies in
9 thematic groups plus an ``unclear`` marker class, which participates
as an ordinary class unless excluded at load time.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ParseError, ValidationError

MAX_LABELS_PER_AD = 3


def default_taxonomy_path() -> Path:
    """Path of the bundled default taxonomy document."""
    return Path(str(resources.files("persuasionkit").joinpath("data/default_taxonomy.yaml")))


@dataclass(frozen=True)
class Strategy:
    """One labelable persuasion strategy."""

    id: str
    name: str
    group: str
    definition: str = ""
    marker: bool = False


@dataclass(frozen=True)
class StrategySet:
    """An annotator's label set for one ad: 1-3 strategy ids.

    Order records annotator-judged prominence (largest pixel area first),
    but equality and hashing are set-based because evaluation treats
    labels as unordered sets.
    """

    ids: tuple[str, ...]

    def __init__(self, ids):
        object.__setattr__(self, "ids", tuple(ids))

    def as_set(self) -> frozenset[str]:
        return frozenset(self.ids)

    def __eq__(self, other):
        if isinstance(other, StrategySet):
            return self.as_set() == other.as_set()
        return NotImplemented

    def __hash__(self):
        return hash(self.as_set())

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


@dataclass(frozen=True)
class Taxonomy:
    """Immutable, validated strategy vocabulary with a stable class index.

    ``index`` maps strategy id to a contiguous position ``0..|P|-1`` in
    file order, so two loads of the same document always agree.
    """

    strategies: tuple[Strategy, ...]
    groups: tuple[str, ...]
    version: int = 1
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(
            self, "index", {s.id: i for i, s in enumerate(self.strategies)}
        )

    def __len__(self) -> int:
        return len(self.strategies)

    def __contains__(self, strategy_id: str) -> bool:
        return strategy_id in self.index

    @property
    def num_classes(self) -> int:
        return len(self.strategies)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.strategies)

    def get(self, strategy_id: str) -> Strategy:
        return self.strategies[self.index[strategy_id]]

    def by_group(self) -> dict[str, list[Strategy]]:
        """Strategies keyed by group, group order as declared; marker
        classes appear under their own group name after the declared ones."""
        out: dict[str, list[Strategy]] = {g: [] for g in self.groups}
        for s in self.strategies:
            out.setdefault(s.group, []).append(s)
        return out

    def content_hash(self) -> str:
        """Stable digest of the class list; checkpoints embed this so a
        model can refuse to load against a different vocabulary."""
        doc = [(s.id, s.name, s.group, s.marker) for s in self.strategies]
        return hashlib.sha256(json.dumps(doc).encode()).hexdigest()

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "groups": list(self.groups),
            "strategies": [
                {
                    "id": s.id,
                    "name": s.name,
                    "group": s.group,
                    "definition": s.definition,
                    "marker": s.marker,
                }
                for s in self.strategies
            ],
        }


def _build_taxonomy(doc: dict, include_markers: bool) -> Taxonomy:
    if not isinstance(doc, dict) or "strategies" not in doc:
        raise ParseError("taxonomy document must be a mapping with a 'strategies' list")
    raw = doc["strategies"]
    if not isinstance(raw, list):
        raise ParseError("'strategies' must be a list")
    groups = tuple(doc.get("groups") or ())
    if len(set(groups)) != len(groups):
        raise ValidationError("duplicate group names declared")

    strategies: list[Strategy] = []
    seen: set[str] = set()
    for entry in raw:
        if not isinstance(entry, dict) or "id" not in entry:
            raise ParseError(f"strategy entry missing 'id': {entry!r}")
        sid = str(entry["id"])
        if not sid:
            raise ValidationError("empty strategy id")
        if sid in seen:
            raise ValidationError(f"duplicate strategy id: {sid!r}")
        seen.add(sid)
        marker = bool(entry.get("marker", False))
        group = str(entry.get("group", "")).strip()
        if not group:
            raise ValidationError(f"strategy {sid!r} has no group")
        if not marker and groups and group not in groups:
            raise ValidationError(f"strategy {sid!r} references unknown group {group!r}")
        if marker and not include_markers:
            continue
        strategies.append(
            Strategy(
                id=sid,
                name=str(entry.get("name", sid)),
                group=group,
                definition=str(entry.get("definition", "")).strip(),
                marker=marker,
            )
        )
    if not strategies:
        raise ValidationError("taxonomy contains no strategies")
    return Taxonomy(
        strategies=tuple(strategies),
        groups=groups,
        version=int(doc.get("version", 1)),
    )


def load_taxonomy(path: str | Path | None = None, include_markers: bool = True) -> Taxonomy:
    """Load and validate a taxonomy document.

    Parameters
    ----------
    path:
        YAML taxonomy file; ``None`` loads the bundled default.
    include_markers:
        When False, marker classes (e.g. ``unclear``) are dropped from
        the class index, shrinking ``|P|`` accordingly.

    Raises
    ------
    ParseError
        The file is missing or not a well-formed taxonomy document.
    ValidationError
        Duplicate ids, unknown groups, or an empty strategy list.
    """
    p = Path(path) if path is not None else default_taxonomy_path()
    if not p.exists():
        raise ParseError(f"taxonomy file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ParseError(f"invalid YAML in {p}: {e}") from e
    return _build_taxonomy(doc, include_markers=include_markers)


def validate_label_set(labels: StrategySet, taxonomy: Taxonomy) -> str | None:
    """Check a label set against the taxonomy.

    Returns ``None`` when valid, otherwise a human-readable violation
    description (never raises for invalid label sets).
    """
    n = len(labels.ids)
    if n == 0:
        return "empty label set (at least 1 strategy required)"
    if n > MAX_LABELS_PER_AD:
        return f"more than {MAX_LABELS_PER_AD} strategies ({n} given)"
    if len(set(labels.ids)) != n:
        dupes = sorted({i for i in labels.ids if labels.ids.count(i) > 1})
        return f"duplicate strategy ids: {', '.join(dupes)}"
    unknown = [i for i in labels.ids if i not in taxonomy]
    if unknown:
        return f"unknown strategy ids: {', '.join(unknown)}"
    return None


def encode_labels(labels: StrategySet, taxonomy: Taxonomy) -> np.ndarray:
    """Encode a valid label set as a binary vector of length ``|P|``.

    Position ``taxonomy.index[id]`` is 1 for each labeled strategy.
    """
    violation = validate_label_set(labels, taxonomy)
    if violation is not None:
        raise ValidationError(violation)
    y = np.zeros(taxonomy.num_classes, dtype=np.float64)
    for sid in labels.ids:
        y[taxonomy.index[sid]] = 1.0
    return y


def decode_labels(y: np.ndarray, taxonomy: Taxonomy) -> StrategySet:
    """Inverse of :func:`encode_labels` up to label order."""
    y = np.asarray(y)
    if y.shape != (taxonomy.num_classes,):
        raise ValidationError(
            f"label vector has shape {y.shape}, expected ({taxonomy.num_classes},)"
        )
    ids = [taxonomy.strategies[i].id for i in np.flatnonzero(y > 0.5)]
    return StrategySet(ids)
