"""Entropy-based uncertainty sampling and the annotate-retrain loop.

The acquisition score for a pool sample is the entropy of the model's
normalized probability vector: the sigmoid outputs are rescaled to sum
to 1 and scored with g = -sum(p_n * ln p_n). High entropy means the
model is spread thin across strategies, so those samples are sent for
annotation first. Natural log throughout; the log base only rescales
the ranking.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import AdSample
from .errors import (
    DegenerateError,
    EmptyPoolError,
    OracleError,
    ShapeError,
    ValidationError,
)
from .features.cache import FeatureCache
from .features.ports import ExtractorSuite
from .model.fusion import FusionConfig
from .model.training import TrainConfig, TrainedModel, train
from .taxonomy import StrategySet, Taxonomy, validate_label_set

DEGENERATE_SUM = 1e-12


@dataclass(frozen=True)
class ScoredSample:
    sample_id: str
    entropy: float
    probs: np.ndarray


@dataclass
class ALState:
    """Round state: disjoint labeled/pool id sets plus per-round history."""

    round_t: int = 0
    labeled_ids: set[str] = field(default_factory=set)
    pool_ids: set[str] = field(default_factory=set)
    k: int = 250
    history: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("batch size k must be >= 1")
        overlap = self.labeled_ids & self.pool_ids
        if overlap:
            raise ValidationError(f"labeled and pool overlap: {sorted(overlap)[:5]}")

    def to_dict(self) -> dict:
        return {
            "round_t": self.round_t,
            "labeled_ids": sorted(self.labeled_ids),
            "pool_ids": sorted(self.pool_ids),
            "k": self.k,
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ALState":
        return cls(
            round_t=d["round_t"],
            labeled_ids=set(d["labeled_ids"]),
            pool_ids=set(d["pool_ids"]),
            k=d["k"],
            history=list(d.get("history", [])),
        )


def normalize_probs(p: np.ndarray) -> np.ndarray:
    """Rescale non-negative sigmoid outputs to a distribution.

    Raises
    ------
    DegenerateError
        The vector sums to (near) zero; by convention such a sample is
        treated as maximally uncertain by :func:`sample_entropy`.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ShapeError(f"expected 1-d probabilities, got shape {p.shape}")
    if (p < 0).any():
        raise ValidationError("probabilities must be non-negative")
    total = float(p.sum())
    if total <= DEGENERATE_SUM:
        raise DegenerateError("all-zero prediction cannot be normalized")
    return p / total


def entropy_score(p_n: np.ndarray) -> float:
    """Entropy -sum(p * ln p) of a normalized vector, with 0*ln(0) = 0."""
    p_n = np.asarray(p_n, dtype=np.float64)
    if p_n.ndim != 1:
        raise ShapeError(f"expected 1-d distribution, got shape {p_n.shape}")
    if abs(float(p_n.sum()) - 1.0) > 1e-6:
        raise ValidationError(f"distribution sums to {p_n.sum():.8f}, expected 1")
    nonzero = p_n[p_n > 0]
    return float(-(nonzero * np.log(nonzero)).sum())


def sample_entropy(probs: np.ndarray) -> float:
    """Normalized-probability entropy of raw sigmoid outputs; an all-zero
    vector gets the maximum ln(num_classes) (most uncertain)."""
    probs = np.asarray(probs, dtype=np.float64)
    try:
        return entropy_score(normalize_probs(probs))
    except DegenerateError:
        return float(np.log(probs.shape[0]))


def rank_pool(
    trained: TrainedModel,
    samples: list[AdSample],
    suite: ExtractorSuite,
    cache: FeatureCache | None = None,
) -> list[ScoredSample]:
    """Score every pool sample and sort by decreasing entropy; ties break
    on ascending sample id. Inference runs in eval mode, so the ranking
    is deterministic for a fixed snapshot.

    Raises
    ------
    EmptyPoolError
        No samples given.
    """
    if not samples:
        raise EmptyPoolError("cannot rank an empty pool")
    preds = trained.predict(samples, suite, cache)
    scored = [
        ScoredSample(sample_id=s.sample_id, entropy=sample_entropy(p.probs), probs=p.probs)
        for s, p in zip(samples, preds)
    ]
    scored.sort(key=lambda r: (-r.entropy, r.sample_id))
    return scored


def select_batch(ranked: list[ScoredSample] | list[str], k: int) -> list[str]:
    """First min(k, len) ids of an already-ranked pool, order preserved."""
    ids = [r.sample_id if isinstance(r, ScoredSample) else r for r in ranked]
    return ids[: max(k, 0)]


@dataclass
class StoppingRule:
    """Round-loop termination: any satisfied criterion stops the loop."""

    max_rounds: int | None = None
    label_budget: int | None = None
    plateau_points: float = 0.5
    plateau_rounds: int = 2

    def plateaued(self, history: list[dict]) -> bool:
        scores = [h["top1"] for h in history if "top1" in h]
        if len(scores) < self.plateau_rounds + 1:
            return False
        best_before = max(scores[: -self.plateau_rounds])
        recent = scores[-self.plateau_rounds :]
        return all(s - best_before <= self.plateau_points / 100.0 for s in recent)


class ActiveLearningLoop:
    """Serialized annotate-retrain state machine over a fixed corpus.

    ``selector`` is either ``"entropy"`` (uncertainty sampling),
    ``"random"`` (seeded uniform baseline), or a callable
    ``(trained, samples, rng) -> ranked sample-id list``.
    """

    def __init__(
        self,
        samples: list[AdSample],
        taxonomy: Taxonomy,
        suite: ExtractorSuite,
        arch: FusionConfig,
        train_cfg: TrainConfig,
        k: int = 250,
        selector="entropy",
        retrain: str = "scratch",
        cache: FeatureCache | None = None,
        eval_samples: list[AdSample] | None = None,
    ):
        if retrain not in ("scratch", "warm"):
            raise ValidationError(f"unknown retrain mode {retrain!r}")
        self.samples_by_id = {s.sample_id: s for s in samples}
        if len(self.samples_by_id) != len(samples):
            raise ValidationError("duplicate sample ids in corpus")
        self.taxonomy = taxonomy
        self.suite = suite
        self.arch = arch
        self.train_cfg = train_cfg
        self.k = k
        self.selector = selector
        self.retrain = retrain
        self.cache = cache
        self.eval_samples = eval_samples
        self.labels: dict[str, StrategySet] = {}

    def initial_state(self) -> ALState:
        return ALState(round_t=0, labeled_ids=set(), pool_ids=set(self.samples_by_id), k=self.k)

    def seed_selection(self, state: ALState, size: int | None = None) -> list[str]:
        """Uniform random choice of the first batch (the cold-start round
        has no model to score with)."""
        rng = np.random.default_rng(self.train_cfg.seed)
        pool = sorted(state.pool_ids)
        size = min(size or self.k, len(pool))
        return list(rng.choice(pool, size=size, replace=False))

    def _rank(self, trained: TrainedModel | None, state: ALState) -> list[str]:
        pool = [self.samples_by_id[i] for i in sorted(state.pool_ids)]
        if not pool:
            raise EmptyPoolError("pool is exhausted")
        if callable(self.selector):
            rng = np.random.default_rng((self.train_cfg.seed, state.round_t))
            return list(self.selector(trained, pool, rng))
        if self.selector == "random" or trained is None:
            rng = np.random.default_rng((self.train_cfg.seed, state.round_t))
            ids = [s.sample_id for s in pool]
            rng.shuffle(ids)
            return ids
        if self.selector == "entropy":
            return [r.sample_id for r in rank_pool(trained, pool, self.suite, self.cache)]
        raise ValidationError(f"unknown selector {self.selector!r}")

    def _apply_oracle(self, oracle, selected: list[str]) -> dict[str, StrategySet]:
        """Query the oracle for every selected id; any gap or invalid
        label set aborts before state mutation (retry-safe)."""
        results: dict[str, StrategySet] = {}
        for sid in selected:
            try:
                labels = oracle(sid)
            except Exception as e:  # noqa: BLE001 - oracle is user code
                raise OracleError(f"oracle failed on {sid!r}: {e}") from e
            if labels is None:
                raise OracleError(f"oracle returned no labels for {sid!r}")
            if not isinstance(labels, StrategySet):
                labels = StrategySet(labels)
            violation = validate_label_set(labels, self.taxonomy)
            if violation:
                raise OracleError(f"oracle labels for {sid!r} invalid: {violation}")
            results[sid] = labels
        return results

    def _train_on(self, state: ALState, trained: TrainedModel | None) -> TrainedModel:
        corpus = [
            replace(self.samples_by_id[i], gold_labels=self.labels[i])
            for i in sorted(state.labeled_ids)
        ]
        warm = trained if (self.retrain == "warm" and trained is not None) else None
        return train(
            corpus,
            self.taxonomy,
            self.suite,
            arch=self.arch,
            cfg=self.train_cfg,
            cache=self.cache,
            warm_start=warm,
        )

    def run_round(
        self, state: ALState, trained: TrainedModel | None, oracle
    ) -> tuple[ALState, TrainedModel]:
        """One acquisition round: rank, select, annotate, retrain.

        Returns the successor state and model; the input state is left
        untouched on oracle failure.
        """
        if not state.pool_ids:
            raise EmptyPoolError("pool is exhausted")
        if trained is None and self.selector == "entropy":
            ranked = self.seed_selection(state, self.k)
        else:
            ranked = self._rank(trained, state)
        selected = select_batch(ranked, min(self.k, len(ranked)))
        new_labels = self._apply_oracle(oracle, selected)

        next_state = ALState(
            round_t=state.round_t + 1,
            labeled_ids=state.labeled_ids | set(selected),
            pool_ids=state.pool_ids - set(selected),
            k=state.k,
            history=list(state.history),
        )
        self.labels.update(new_labels)
        new_trained = self._train_on(next_state, trained)

        record = {
            "round_t": next_state.round_t,
            "selected": sorted(selected),
            "n_labeled": len(next_state.labeled_ids),
            "n_pool": len(next_state.pool_ids),
        }
        if self.eval_samples:
            report = new_trained.evaluate(self.eval_samples, self.suite, self.cache)
            record["top1"] = report.top1
            record["top3"] = report.top3
        next_state.history.append(record)
        return next_state, new_trained

    def run(
        self, oracle, stop: StoppingRule | None = None
    ) -> tuple[ALState, TrainedModel | None, str]:
        """Repeat rounds until a stopping criterion fires.

        Returns (final state, final model, stop reason).
        """
        stop = stop or StoppingRule()
        state = self.initial_state()
        trained: TrainedModel | None = None
        while True:
            if not state.pool_ids:
                return state, trained, "pool exhausted"
            if stop.max_rounds is not None and state.round_t >= stop.max_rounds:
                return state, trained, "max rounds"
            if stop.label_budget is not None and len(state.labeled_ids) >= stop.label_budget:
                return state, trained, "label budget reached"
            if stop.plateaued(state.history):
                return state, trained, "plateau"
            state, trained = self.run_round(state, trained, oracle)


def planted_oracle(samples_by_id: dict[str, AdSample]):
    """Oracle that reads gold labels straight off the corpus (used by the
    simulated experiments)."""

    def oracle(sample_id: str) -> StrategySet:
        sample = samples_by_id.get(sample_id)
        if sample is None or sample.gold_labels is None:
            raise KeyError(f"no gold labels for {sample_id!r}")
        return sample.gold_labels

    return oracle
