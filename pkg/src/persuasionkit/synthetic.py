"""Synthetic corpora with labels planted as a function of stub features.

Used by the desk-scale experiments (overfit check, entropy-vs-random
active learning) and the demo scripts: every label is a deterministic
linear function of the sample's stub image embedding, so a model that
reads its input can learn the rule, and two processes always agree on
the ground truth.
"""

from __future__ import annotations

import numpy as np

from .corpus import AdSample
from .features.config import ExtractorConfig
from .features.ports import ExtractorSuite, seeded_rng
from .taxonomy import StrategySet, Taxonomy


def planted_label(
    sample_id: str,
    taxonomy: Taxonomy,
    cfg: ExtractorConfig,
    suite: ExtractorSuite,
    rule_seed: int = 0,
    active_classes: tuple[str, ...] | None = None,
    class_bias: np.ndarray | None = None,
    n_labels: int = 1,
) -> StrategySet:
    """Deterministic gold labels for one sample.

    The label is the arg-top-``n_labels`` of ``W @ image_embedding + b``
    over ``active_classes`` (default: the whole taxonomy), where ``W``
    is a fixed matrix drawn from ``rule_seed``. ``class_bias`` shifts
    the scores to skew the label distribution.
    """
    classes = active_classes or taxonomy.ids
    rng = seeded_rng(f"planted-rule|{rule_seed}|{len(classes)}")
    w = rng.standard_normal((len(classes), cfg.backbone_dim))
    img = suite.image.encode_image(sample_id, cfg)
    scores = w @ img / np.sqrt(cfg.backbone_dim)
    if class_bias is not None:
        scores = scores + class_bias
    order = np.argsort(-scores, kind="stable")
    return StrategySet([classes[i] for i in order[:n_labels]])


def make_synthetic_corpus(
    n: int,
    taxonomy: Taxonomy,
    cfg: ExtractorConfig,
    suite: ExtractorSuite,
    prefix: str = "syn",
    rule_seed: int = 0,
    active_classes: tuple[str, ...] | None = None,
    class_bias: np.ndarray | None = None,
    n_labels: int = 1,
    with_sentences: bool = False,
    id_offset: int = 0,
) -> list[AdSample]:
    """``n`` samples named ``{prefix}-{i:05d}`` with planted gold labels."""
    samples = []
    for i in range(id_offset, id_offset + n):
        sid = f"{prefix}-{i:05d}"
        labels = planted_label(
            sid, taxonomy, cfg, suite, rule_seed, active_classes, class_bias, n_labels
        )
        sentence = None
        if with_sentences:
            sentence = "i should act because " + " and ".join(sorted(labels.ids))
        samples.append(
            AdSample(
                sample_id=sid,
                image_ref=f"stub://{sid}",
                ocr_text=f"synthetic ad {i}",
                gold_labels=labels,
                gold_action_reason=sentence,
            )
        )
    return samples


def balanced_holdout(
    taxonomy: Taxonomy,
    cfg: ExtractorConfig,
    suite: ExtractorSuite,
    per_class: int,
    active_classes: tuple[str, ...],
    prefix: str = "held",
    rule_seed: int = 0,
    class_bias: np.ndarray | None = None,
    max_candidates: int = 20000,
) -> list[AdSample]:
    """A held-out set with ``per_class`` samples of each active class,
    drawn by rejection from the same planted-label universe."""
    quota = {c: per_class for c in active_classes}
    out: list[AdSample] = []
    i = 0
    while any(q > 0 for q in quota.values()) and i < max_candidates:
        sid = f"{prefix}-{i:05d}"
        labels = planted_label(
            sid, taxonomy, cfg, suite, rule_seed, active_classes, class_bias, n_labels=1
        )
        top = labels.ids[0]
        if quota.get(top, 0) > 0:
            quota[top] -= 1
            out.append(
                AdSample(
                    sample_id=sid,
                    image_ref=f"stub://{sid}",
                    ocr_text=f"heldout ad {i}",
                    gold_labels=labels,
                )
            )
        i += 1
    missing = {c: q for c, q in quota.items() if q > 0}
    if missing:
        raise RuntimeError(f"could not fill held-out quotas: {missing}")
    return out
