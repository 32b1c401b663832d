"""Cross-modal attention fusion model.

The stacked modality bundle (default 114 x 256) passes through a 2-layer
transformer encoder; the encoded rows are collapsed to one vector by
softmax self-attention pooling scored against a learned vector; a linear
head with per-class sigmoids yields independent strategy probabilities
(multi-label, so the probabilities deliberately do not sum to 1). A
transformer decoder cross-attends on the encoded rows to generate the
action-reason sentence as the auxiliary task.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import torch
from torch import nn

from ..errors import NumericalError, ShapeError, ValidationError, VocabError
from ..features.config import ExtractorConfig
from ..features.pipeline import RawFeatures
from ..metrics import rank_classes
from .vocab import BOS, EOS, PAD

_BLOCKS = ("image", "rois", "ocr", "captions", "symbols")


@dataclass(frozen=True)
class FusionConfig:
    """Architecture hyperparameters; depth 2 and width 256 follow the
    modeling recipe, the rest are recorded defaults."""

    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    num_classes: int = 21
    n_heads: int = 4
    ff_width: int = 512
    dropout: float = 0.1
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    vocab_size: int = 4
    max_decode_len: int = 40

    def __post_init__(self):
        if self.extractor.d_model % self.n_heads != 0:
            raise ValidationError(
                f"d_model {self.extractor.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.num_classes < 1:
            raise ValidationError("num_classes must be >= 1")
        if self.vocab_size < 4:
            raise ValidationError("vocab must include pad/begin/end/unknown")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["extractor"] = self.extractor.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FusionConfig":
        d = dict(d)
        d["extractor"] = ExtractorConfig.from_dict(d["extractor"])
        return cls(**d)


@dataclass(frozen=True)
class PredictionResult:
    """Per-sample prediction: independent class probabilities, the full
    class ranking (descending probability, ascending index on ties), and
    the pooled representation."""

    probs: np.ndarray
    topk: tuple
    pooled: np.ndarray

    def top(self, k: int = 3) -> tuple:
        return self.topk[:k]


def make_prediction(probs: np.ndarray, pooled: np.ndarray, class_ids=None) -> PredictionResult:
    probs = np.asarray(probs, dtype=np.float64)
    order = rank_classes(probs)
    labels = tuple(class_ids[i] for i in order) if class_ids is not None else tuple(order.tolist())
    return PredictionResult(probs=probs, topk=labels, pooled=np.asarray(pooled))


def pool_self_attention(enc: torch.Tensor, w_pool: torch.Tensor) -> torch.Tensor:
    """Softmax self-attention pooling over the encoded rows.

    Row scores are ``enc @ w_pool``; the softmax over rows gives convex
    weights, and the output is the weighted combination of rows, so it
    always lies in the convex hull of the input.
    """
    if enc.shape[-1] != w_pool.shape[0]:
        raise ShapeError(f"enc width {enc.shape[-1]} vs w_pool {tuple(w_pool.shape)}")
    scores = enc @ w_pool  # [..., rows, 1]
    if not torch.isfinite(scores).all():
        raise NumericalError("non-finite pooling scores")
    weights = torch.softmax(scores, dim=-2)
    return (weights * enc).sum(dim=-2)


def collate_raw(raws: list[RawFeatures], cfg: ExtractorConfig):
    """Stack raw per-sample features into batch tensors plus the
    content-row mask."""
    blocks = {
        name: torch.as_tensor(
            np.stack([getattr(r, name) for r in raws]), dtype=torch.float32
        )
        for name in _BLOCKS
    }
    mask = torch.as_tensor(
        np.stack([r.content_mask(cfg) for r in raws]), dtype=torch.float32
    )
    return blocks, mask


class FusionModel(nn.Module):
    def __init__(self, config: FusionConfig):
        super().__init__()
        self.config = config
        ex = config.extractor
        d = ex.d_model
        widths = {
            "image": ex.backbone_dim,
            "rois": ex.backbone_dim,
            "ocr": ex.backbone_dim,
            "captions": ex.backbone_dim,
            "symbols": ex.symbol_classes,
        }
        self.projections = nn.ModuleDict(
            {name: nn.Linear(widths[name], d) for name in _BLOCKS}
        )
        layer = nn.TransformerEncoderLayer(
            d_model=d,
            nhead=config.n_heads,
            dim_feedforward=config.ff_width,
            dropout=config.dropout,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=config.n_encoder_layers)
        self.pool_vector = nn.Parameter(torch.empty(d, 1))
        nn.init.uniform_(self.pool_vector, -1.0 / d**0.5, 1.0 / d**0.5)
        self.head = nn.Linear(d, config.num_classes)

        self.token_embedding = nn.Embedding(config.vocab_size, d, padding_idx=PAD)
        self.position_embedding = nn.Embedding(config.max_decode_len, d)
        dec_layer = nn.TransformerDecoderLayer(
            d_model=d,
            nhead=config.n_heads,
            dim_feedforward=config.ff_width,
            dropout=config.dropout,
            batch_first=True,
        )
        self.decoder = nn.TransformerDecoder(dec_layer, num_layers=config.n_decoder_layers)
        self.vocab_projection = nn.Linear(d, config.vocab_size)

    @classmethod
    def build(cls, config: FusionConfig, seed: int = 0) -> "FusionModel":
        """Construct with fully seeded initialization (uniform, scaled by
        fan-in), so two builds with the same seed are identical."""
        torch.manual_seed(seed)
        return cls(config)

    # --- forward pieces -------------------------------------------------

    def bundle_from_raw(self, blocks: dict, mask: torch.Tensor) -> torch.Tensor:
        """Project each modality block to d_model and stack in the fixed
        order [image | RoI | OCR | caption | symbol]; padding rows are
        forced back to exact zero."""
        dtype = self.head.weight.dtype
        parts = []
        for name in _BLOCKS:
            parts.append(self.projections[name](blocks[name].to(dtype)))
        bundle = torch.cat(parts, dim=1)
        return bundle * mask.to(dtype).unsqueeze(-1)

    def encode(self, bundle: torch.Tensor) -> torch.Tensor:
        """Cross-modal attention over the stacked bundle; shape-preserving."""
        ex = self.config.extractor
        squeeze = bundle.dim() == 2
        if squeeze:
            bundle = bundle.unsqueeze(0)
        if bundle.shape[-2:] != (ex.total_rows, ex.d_model):
            raise ShapeError(
                f"bundle: expected [*, {ex.total_rows}, {ex.d_model}], "
                f"got {tuple(bundle.shape)}"
            )
        if not torch.isfinite(bundle).all():
            raise NumericalError("non-finite encoder input")
        enc = self.encoder(bundle)
        if not torch.isfinite(enc).all():
            raise NumericalError("non-finite encoder output")
        return enc.squeeze(0) if squeeze else enc

    def pool(self, enc: torch.Tensor) -> torch.Tensor:
        return pool_self_attention(enc, self.pool_vector)

    def class_probs(self, pooled: torch.Tensor) -> torch.Tensor:
        """Independent per-class sigmoid probabilities."""
        return torch.sigmoid(self.head(pooled))

    def forward(self, blocks: dict, mask: torch.Tensor):
        """Full classification path; returns (enc, pooled, probs)."""
        enc = self.encode(self.bundle_from_raw(blocks, mask))
        pooled = self.pool(enc)
        return enc, pooled, self.class_probs(pooled)

    # --- action-reason decoder ------------------------------------------

    def _check_targets(self, targets: torch.Tensor):
        if targets.min() < 0 or targets.max() >= self.config.vocab_size:
            raise VocabError(
                f"token id out of range [0, {self.config.vocab_size}): "
                f"{int(targets.min())}..{int(targets.max())}"
            )
        if targets.shape[-1] > self.config.max_decode_len:
            raise ValidationError(
                f"target length {targets.shape[-1]} exceeds max {self.config.max_decode_len}"
            )
        if (targets[..., 0] != BOS).any():
            raise ValidationError("target sequences must begin with the begin token")

    def decode_action_reason(self, enc: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        """Teacher-forced decoding: per-step vocabulary logits.

        Step t's logits are produced from gold tokens 0..t only (causal
        mask), cross-attending on the encoded bundle.
        """
        squeeze = targets.dim() == 1
        if squeeze:
            targets = targets.unsqueeze(0)
            enc = enc.unsqueeze(0) if enc.dim() == 2 else enc
        self._check_targets(targets)
        T = targets.shape[1]
        positions = torch.arange(T, device=targets.device)
        emb = self.token_embedding(targets) + self.position_embedding(positions)
        causal = torch.triu(
            torch.full((T, T), float("-inf"), dtype=emb.dtype), diagonal=1
        )
        out = self.decoder(tgt=emb, memory=enc, tgt_mask=causal)
        logits = self.vocab_projection(out)
        return logits.squeeze(0) if squeeze else logits

    @torch.no_grad()
    def greedy_decode(self, enc: torch.Tensor, max_len: int | None = None) -> list[int]:
        """Argmax decoding for one sample, stopping at the end token."""
        self.eval()
        max_len = max_len or self.config.max_decode_len
        tokens = [BOS]
        for _ in range(max_len - 1):
            t = torch.tensor(tokens, dtype=torch.long)
            logits = self.decode_action_reason(enc, t)
            nxt = int(logits[-1].argmax())
            tokens.append(nxt)
            if nxt == EOS:
                break
        return tokens
