"""Evaluation and corpus-analysis metrics.

Pure functions over immutable inputs: top-1/top-k accuracy, micro recall,
Dice set overlap, strategy co-occurrence, topic correlation, Cohen's kappa
with its marginal-constrained maximum, and dataset label statistics.

Prediction arguments accept either :class:`~persuasionkit.model.PredictionResult`
objects (compared in strategy-id space via their ranked ``topk``) or raw
probability vectors (compared in index space with the documented
deterministic tie-break: descending probability, ascending class index).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, LengthMismatchError, MissingTagsError
from .taxonomy import StrategySet, Taxonomy


@dataclass(frozen=True)
class EvalReport:
    """Headline evaluation numbers for one prediction run."""

    top1: float
    top3: float
    recall: float
    n_samples: int
    checkpoint_hash: str | None = None
    corpus_hash: str | None = None

    def to_dict(self) -> dict:
        return {
            "top1": self.top1,
            "top3": self.top3,
            "recall": self.recall,
            "n_samples": self.n_samples,
            "checkpoint_hash": self.checkpoint_hash,
            "corpus_hash": self.corpus_hash,
        }


@dataclass(frozen=True)
class CooccurrenceMatrix:
    """Symmetric Dice co-occurrence between label classes."""

    labels: tuple[str, ...]
    matrix: np.ndarray

    def pair(self, a: str, b: str) -> float:
        i, j = self.labels.index(a), self.labels.index(b)
        return float(self.matrix[i, j])

    def top_pairs(self, n: int = 5) -> list[tuple[str, str, float]]:
        """Off-diagonal pairs ranked by coefficient, strongest first."""
        pairs = []
        k = len(self.labels)
        for i in range(k):
            for j in range(i + 1, k):
                pairs.append((self.labels[i], self.labels[j], float(self.matrix[i, j])))
        pairs.sort(key=lambda t: (-t[2], t[0], t[1]))
        return pairs[:n]


def rank_classes(probs: np.ndarray) -> np.ndarray:
    """Indices of ``probs`` sorted by descending value, ties broken by
    ascending index (the package-wide deterministic ranking)."""
    probs = np.asarray(probs, dtype=np.float64)
    return np.lexsort((np.arange(probs.shape[0]), -probs))


def _ranked_labels(prediction) -> list:
    topk = getattr(prediction, "topk", None)
    if topk is not None:
        return list(topk)
    return list(rank_classes(np.asarray(prediction)))


def _truth_set(truth) -> set:
    if isinstance(truth, StrategySet):
        return set(truth.as_set())
    return set(truth)


def _check_lengths(predictions, truths):
    if len(predictions) != len(truths):
        raise LengthMismatchError(
            f"{len(predictions)} predictions vs {len(truths)} truths"
        )


def top1_accuracy(predictions, truths) -> float:
    """Fraction of samples whose top-ranked class is in the truth set."""
    return topk_accuracy(predictions, truths, k=1)


def topk_accuracy(predictions, truths, k: int = 3) -> float:
    """Fraction of samples where any of the k top-ranked classes hits the
    truth set."""
    _check_lengths(predictions, truths)
    if not predictions:
        return 0.0
    hits = 0
    for pred, truth in zip(predictions, truths):
        ranked = _ranked_labels(pred)[: max(k, 0)]
        if set(ranked) & _truth_set(truth):
            hits += 1
    return hits / len(predictions)


def recall_at_k(predictions, truths, k: int = 3) -> float:
    """Micro-averaged recall: gold labels recovered within the top-k
    predictions, divided by the total number of gold labels."""
    _check_lengths(predictions, truths)
    recovered = 0
    total = 0
    for pred, truth in zip(predictions, truths):
        tset = _truth_set(truth)
        top = set(_ranked_labels(pred)[: max(k, 0)])
        recovered += len(tset & top)
        total += len(tset)
    if total == 0:
        return 0.0
    return recovered / total


def dice(x, y) -> float:
    """Dice overlap 2|X∩Y| / (|X|+|Y|) between two sets.

    Raises
    ------
    DegenerateError
        Both sets empty (the coefficient is undefined).
    """
    xs, ys = set(x), set(y)
    if not xs and not ys:
        raise DegenerateError("dice undefined for two empty sets")
    return 2.0 * len(xs & ys) / (len(xs) + len(ys))


def strategy_cooccurrence(corpus_labels, taxonomy: Taxonomy) -> CooccurrenceMatrix:
    """Dice co-occurrence between strategies over a labeled corpus.

    Entry (i, j) is the Dice overlap between the set of ads labeled with
    strategy i and the set labeled with strategy j. The diagonal is 1 for
    every strategy that occurs at least once, 0 otherwise.
    """
    occurrences: dict[str, set[int]] = {sid: set() for sid in taxonomy.ids}
    for ad_idx, labels in enumerate(corpus_labels):
        for sid in _truth_set(labels):
            occurrences[sid].add(ad_idx)
    ids = taxonomy.ids
    k = len(ids)
    m = np.zeros((k, k), dtype=np.float64)
    for i in range(k):
        for j in range(i, k):
            xi, xj = occurrences[ids[i]], occurrences[ids[j]]
            if not xi and not xj:
                value = 0.0
            else:
                value = dice(xi, xj)
            m[i, j] = m[j, i] = value
    return CooccurrenceMatrix(labels=ids, matrix=m)


def topic_strategy_correlation(
    topics_per_ad, labels_per_ad, taxonomy: Taxonomy
) -> CooccurrenceMatrix:
    """Dice overlap between topic-tagged ad sets and strategy-labeled ad
    sets; rows are topics (sorted), columns follow the taxonomy index.

    Raises
    ------
    MissingTagsError
        No sample carries a topic tag.
    """
    _check_lengths(topics_per_ad, labels_per_ad)
    topic_ads: dict[str, set[int]] = {}
    strategy_ads: dict[str, set[int]] = {sid: set() for sid in taxonomy.ids}
    for ad_idx, (tags, labels) in enumerate(zip(topics_per_ad, labels_per_ad)):
        for tag in tags or ():
            topic_ads.setdefault(tag, set()).add(ad_idx)
        for sid in _truth_set(labels):
            strategy_ads[sid].add(ad_idx)
    if not topic_ads:
        raise MissingTagsError("no sample carries a topic tag")
    topics = tuple(sorted(topic_ads))
    m = np.zeros((len(topics), taxonomy.num_classes), dtype=np.float64)
    for r, topic in enumerate(topics):
        for c, sid in enumerate(taxonomy.ids):
            if not topic_ads[topic] and not strategy_ads[sid]:
                continue
            m[r, c] = dice(topic_ads[topic], strategy_ads[sid])
    return CooccurrenceMatrix(labels=topics + taxonomy.ids, matrix=m)


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    kappa_max: float
    adjusted: float
    per_strategy: dict[str, tuple[float, float]] = field(default_factory=dict)


def binary_kappa(a: int, b: int, c: int, d: int) -> tuple[float, float]:
    """Cohen's kappa and its marginal-constrained maximum for one 2x2
    presence table: a = both marked, b = first only, c = second only,
    d = neither.

    Raises
    ------
    DegenerateError
        Chance agreement is 1 (both annotators constant), leaving kappa
        undefined.
    """
    n = a + b + c + d
    if n == 0:
        raise DegenerateError("empty contingency table")
    p_o = (a + d) / n
    p1 = (a + b) / n
    p2 = (a + c) / n
    p_e = p1 * p2 + (1.0 - p1) * (1.0 - p2)
    if p_e >= 1.0 - 1e-12:
        raise DegenerateError("constant labels: chance agreement is 1")
    kappa = (p_o - p_e) / (1.0 - p_e)
    p_o_max = min(p1, p2) + min(1.0 - p1, 1.0 - p2)
    kappa_max = (p_o_max - p_e) / (1.0 - p_e)
    return kappa, kappa_max


def adjusted_kappa(kappa: float, kappa_max: float) -> float:
    """Skew-corrected agreement: kappa divided by its attainable maximum."""
    if kappa_max == 0:
        raise DegenerateError("kappa_max is zero")
    return kappa / kappa_max


def cohens_kappa(annotations_a, annotations_b) -> KappaResult:
    """Inter-annotator agreement between two annotators' label sets.

    ``annotations_a`` and ``annotations_b`` are mappings item id -> label
    set (or parallel sequences over the same items). The task is treated
    as per-strategy binary presence: one 2x2 kappa per strategy that at
    least one annotator ever used, macro-averaged. Strategies with
    chance agreement 1 are skipped. ``adjusted`` is the ratio of the two
    macro averages.

    Raises
    ------
    LengthMismatchError
        Item ids (or sequence lengths) differ between annotators.
    DegenerateError
        Every strategy is degenerate (constant labels throughout).
    """
    if isinstance(annotations_a, dict) or isinstance(annotations_b, dict):
        if set(annotations_a) != set(annotations_b):
            raise LengthMismatchError("annotators cover different item ids")
        items = sorted(annotations_a)
        sets_a = [_truth_set(annotations_a[i]) for i in items]
        sets_b = [_truth_set(annotations_b[i]) for i in items]
    else:
        _check_lengths(annotations_a, annotations_b)
        sets_a = [_truth_set(s) for s in annotations_a]
        sets_b = [_truth_set(s) for s in annotations_b]

    used = sorted(set().union(*sets_a, *sets_b)) if sets_a else []
    per_strategy: dict[str, tuple[float, float]] = {}
    for sid in used:
        a = sum(1 for sa, sb in zip(sets_a, sets_b) if sid in sa and sid in sb)
        b = sum(1 for sa, sb in zip(sets_a, sets_b) if sid in sa and sid not in sb)
        c = sum(1 for sa, sb in zip(sets_a, sets_b) if sid not in sa and sid in sb)
        d = len(sets_a) - a - b - c
        try:
            per_strategy[sid] = binary_kappa(a, b, c, d)
        except DegenerateError:
            continue
    if not per_strategy:
        raise DegenerateError("no strategy with non-degenerate agreement")
    mean_kappa = float(np.mean([k for k, _ in per_strategy.values()]))
    mean_kappa_max = float(np.mean([m for _, m in per_strategy.values()]))
    return KappaResult(
        kappa=mean_kappa,
        kappa_max=mean_kappa_max,
        adjusted=adjusted_kappa(mean_kappa, mean_kappa_max),
        per_strategy=per_strategy,
    )


@dataclass(frozen=True)
class DatasetStats:
    """Label-distribution descriptors for a corpus (or one split)."""

    n_ads: int
    strategy_counts: dict[str, int]
    ads_by_label_count: dict[int, int]
    mean_labels: float
    std_labels: float

    def to_dict(self) -> dict:
        return {
            "n_ads": self.n_ads,
            "strategy_counts": dict(self.strategy_counts),
            "ads_by_label_count": {str(k): v for k, v in self.ads_by_label_count.items()},
            "mean_labels": self.mean_labels,
            "std_labels": self.std_labels,
        }


def dataset_stats(corpus_labels, splits=None) -> dict[str, DatasetStats]:
    """Per-strategy counts and strategies-per-ad distribution.

    ``splits``, when given, is a parallel sequence of split names; the
    result then contains one entry per split plus ``"total"``. The std
    is the population standard deviation (corpus descriptor, not a
    sample estimate).
    """
    labels = [list(_truth_set(s)) for s in corpus_labels]
    if splits is not None:
        _check_lengths(labels, splits)
    groups: dict[str, list[list]] = {"total": labels}
    if splits is not None:
        for name, lab in zip(splits, labels):
            groups.setdefault(str(name), []).append(lab)

    out: dict[str, DatasetStats] = {}
    for name, group in groups.items():
        counts: dict[str, int] = {}
        by_size: dict[int, int] = {}
        sizes = []
        for lab in group:
            sizes.append(len(lab))
            by_size[len(lab)] = by_size.get(len(lab), 0) + 1
            for sid in lab:
                counts[sid] = counts.get(sid, 0) + 1
        sizes_arr = np.asarray(sizes, dtype=np.float64)
        out[name] = DatasetStats(
            n_ads=len(group),
            strategy_counts=counts,
            ads_by_label_count=by_size,
            mean_labels=float(sizes_arr.mean()) if len(group) else 0.0,
            std_labels=float(sizes_arr.std()) if len(group) else 0.0,
        )
    return out
