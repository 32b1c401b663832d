"""End-to-end training of the fusion model and batch prediction.

Training is fully seeded: the same corpus, config, and seed reproduce
the loss trajectory run-to-run on the same machine. Samples missing a
gold action-reason sentence simply contribute zero generation loss.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from ..corpus import AdSample, corpus_hash
from ..errors import DivergenceError, EmptyCorpusError, NumericalError, ValidationError
from ..features.cache import FeatureCache
from ..features.config import ExtractorConfig
from ..features.pipeline import RawFeatures, extract_raw_features
from ..features.ports import ExtractorSuite
from ..metrics import EvalReport, recall_at_k, top1_accuracy, topk_accuracy
from ..taxonomy import StrategySet, Taxonomy, encode_labels
from .fusion import FusionConfig, FusionModel, PredictionResult, collate_raw, make_prediction
from .losses import focal_loss, generation_loss, multitask_loss, strategy_loss
from .vocab import PAD, Vocabulary


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 30
    lambda_gen: float = 1.0
    seed: int = 0
    use_focal: bool = False
    focal_gamma: float = 2.0
    vocab_min_freq: int = 2
    # reduction is fixed: mean over classes, then over the batch
    reduction: str = "mean"

    def __post_init__(self):
        if self.lambda_gen < 0:
            raise ValidationError("lambda_gen must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainedModel:
    """A parameter snapshot bound to its taxonomy and vocabulary."""

    model: FusionModel
    taxonomy: Taxonomy
    vocab: Vocabulary
    train_config: TrainConfig
    history: list[dict] = field(default_factory=list)

    @property
    def fusion_config(self) -> FusionConfig:
        return self.model.config

    def _raws(self, samples, suite, cache):
        cfg = self.fusion_config.extractor
        if cache is not None:
            return [cache.get_or_extract(s, cfg, suite) for s in samples]
        return [extract_raw_features(s, cfg, suite) for s in samples]

    def predict_raw(self, raws: list[RawFeatures], batch_size: int = 64) -> list[PredictionResult]:
        self.model.eval()
        cfg = self.fusion_config.extractor
        ids = self.taxonomy.ids
        out: list[PredictionResult] = []
        with torch.no_grad():
            for start in range(0, len(raws), batch_size):
                chunk = raws[start : start + batch_size]
                blocks, mask = collate_raw(chunk, cfg)
                _, pooled, probs = self.model(blocks, mask)
                for p, v in zip(probs, pooled):
                    out.append(make_prediction(p.numpy(), v.numpy(), ids))
        return out

    def predict(self, samples, suite: ExtractorSuite, cache: FeatureCache | None = None,
                batch_size: int = 64) -> list[PredictionResult]:
        return self.predict_raw(self._raws(samples, suite, cache), batch_size)

    def evaluate(self, samples, suite, cache=None, checkpoint_hash=None) -> EvalReport:
        """Top-1/top-3/recall against the samples' gold labels."""
        labeled = [s for s in samples if s.gold_labels is not None]
        if not labeled:
            raise EmptyCorpusError("no labeled samples to evaluate")
        preds = self.predict(labeled, suite, cache)
        truths = [s.gold_labels for s in labeled]
        return EvalReport(
            top1=top1_accuracy(preds, truths),
            top3=topk_accuracy(preds, truths, k=3),
            recall=recall_at_k(preds, truths, k=3),
            n_samples=len(labeled),
            checkpoint_hash=checkpoint_hash,
            corpus_hash=corpus_hash(labeled),
        )

    def greedy_sentence(self, sample: AdSample, suite, cache=None) -> str:
        """Greedy action-reason decode for one sample."""
        raw = self._raws([sample], suite, cache)[0]
        blocks, mask = collate_raw([raw], self.fusion_config.extractor)
        self.model.eval()
        with torch.no_grad():
            enc = self.model.encode(self.model.bundle_from_raw(blocks, mask))
        return self.vocab.decode(self.model.greedy_decode(enc[0]))


def _encode_targets(samples, vocab: Vocabulary, max_len: int):
    """Token-id tensors for samples that carry a gold sentence."""
    encoded = {}
    for i, s in enumerate(samples):
        if s.gold_action_reason:
            encoded[i] = vocab.encode(s.gold_action_reason, max_len=max_len)
    return encoded


def _pad_batch(seqs: list[list[int]]) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), PAD, dtype=torch.long)
    for r, s in enumerate(seqs):
        out[r, : len(s)] = torch.tensor(s, dtype=torch.long)
    return out


def train(
    samples: list[AdSample],
    taxonomy: Taxonomy,
    suite: ExtractorSuite,
    arch: FusionConfig | None = None,
    cfg: TrainConfig | None = None,
    cache: FeatureCache | None = None,
    eval_samples: list[AdSample] | None = None,
    log_path: str | Path | None = None,
    warm_start: TrainedModel | None = None,
) -> TrainedModel:
    """Train the fusion model end to end on a labeled corpus.

    Every sample must carry gold labels; gold action-reason sentences are
    optional and feed the auxiliary generation loss. ``warm_start``
    continues from an existing snapshot instead of reinitializing.

    Raises
    ------
    EmptyCorpusError
        No training samples.
    ValidationError
        A sample without gold labels.
    DivergenceError
        Loss became non-finite; carries the last good state dict.
    """
    cfg = cfg or TrainConfig()
    if not samples:
        raise EmptyCorpusError("no training samples")
    unlabeled = [s.sample_id for s in samples if s.gold_labels is None]
    if unlabeled:
        raise ValidationError(f"samples missing gold labels: {unlabeled[:5]}")

    torch.manual_seed(cfg.seed)
    shuffle_rng = np.random.default_rng(cfg.seed)

    if warm_start is not None:
        trained = warm_start
        model, vocab = trained.model, trained.vocab
        arch = model.config
    else:
        sentences = [s.gold_action_reason for s in samples if s.gold_action_reason]
        vocab = Vocabulary.build(sentences, min_freq=cfg.vocab_min_freq)
        arch = arch or FusionConfig()
        arch = replace(arch, num_classes=taxonomy.num_classes, vocab_size=len(vocab))
        model = FusionModel(arch)
        trained = TrainedModel(
            model=model, taxonomy=taxonomy, vocab=vocab, train_config=cfg
        )

    ex = arch.extractor
    raws = (
        [cache.get_or_extract(s, ex, suite) for s in samples]
        if cache is not None
        else [extract_raw_features(s, ex, suite) for s in samples]
    )
    blocks_all, mask_all = collate_raw(raws, ex)
    targets_all = torch.as_tensor(
        np.stack([encode_labels(s.gold_labels, taxonomy) for s in samples]),
        dtype=torch.float32,
    )
    sentence_ids = _encode_targets(samples, vocab, arch.max_decode_len)

    if eval_samples is not None:
        report_samples = eval_samples
        report_raws = (
            [cache.get_or_extract(s, ex, suite) for s in eval_samples]
            if cache is not None
            else [extract_raw_features(s, ex, suite) for s in eval_samples]
        )
    else:
        report_samples, report_raws = samples, raws
    report_truths = [s.gold_labels for s in report_samples]

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    log_file = Path(log_path).open("a") if log_path else None
    last_good = copy.deepcopy(model.state_dict())
    class_loss = focal_loss if cfg.use_focal else strategy_loss

    n = len(samples)
    try:
        for epoch in range(cfg.epochs):
            model.train()
            order = shuffle_rng.permutation(n)
            epoch_ls, epoch_lg, batches = 0.0, 0.0, 0
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                idx_t = torch.as_tensor(idx)
                blocks = {k: v[idx_t] for k, v in blocks_all.items()}
                enc, _, probs = model(blocks, mask_all[idx_t])
                if cfg.use_focal:
                    l_s = class_loss(probs, targets_all[idx_t], gamma=cfg.focal_gamma)
                else:
                    l_s = class_loss(probs, targets_all[idx_t])

                with_sentence = [j for j, i in enumerate(idx) if int(i) in sentence_ids]
                if cfg.lambda_gen > 0 and with_sentence:
                    seqs = [sentence_ids[int(idx[j])] for j in with_sentence]
                    tgt = _pad_batch(seqs)
                    logits = model.decode_action_reason(enc[with_sentence], tgt)
                    l_gen = generation_loss(logits, tgt, pad_id=PAD)
                else:
                    l_gen = torch.zeros((), dtype=l_s.dtype)

                loss = multitask_loss(l_s, l_gen, cfg.lambda_gen)
                if not math.isfinite(float(loss.detach())):
                    raise DivergenceError(
                        f"non-finite loss at epoch {epoch}",
                        last_good_state={"state_dict": last_good, "epoch": epoch - 1},
                    )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                epoch_ls += float(l_s.detach())
                epoch_lg += float(l_gen.detach())
                batches += 1

            record = {
                "epoch": epoch,
                "l_s": epoch_ls / batches,
                "l_gen": epoch_lg / batches,
            }
            try:
                preds = trained.predict_raw(report_raws)
            except NumericalError as e:
                raise DivergenceError(
                    f"non-finite activations at epoch {epoch}: {e}",
                    last_good_state={"state_dict": last_good, "epoch": epoch - 1},
                ) from e
            last_good = copy.deepcopy(model.state_dict())
            record["top1"] = top1_accuracy(preds, report_truths)
            record["top3"] = topk_accuracy(preds, report_truths, k=3)
            trained.history.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
    finally:
        if log_file:
            log_file.close()
    return trained
