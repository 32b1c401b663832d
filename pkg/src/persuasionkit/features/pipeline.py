"""Per-modality extraction and assembly of the stacked encoder input.

Raw backbone features are extracted once per sample (and cached); the
learned per-modality projections to ``d_model`` are owned by the fusion
model and applied on top. :class:`ModalityProjector` is the numpy view
of those projections, used by the functional ``extract_*`` operations
and for torch/numpy parity checks. Padding rows stay exactly zero
through projection; no attention mask is handed to the encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError, ShapeError, ValidationError
from .config import ExtractorConfig
from .ports import ExtractorSuite, seeded_rng

_BLOCKS = ("image", "rois", "ocr", "captions", "symbols")


@dataclass(frozen=True)
class RawFeatures:
    """Backbone-width modality blocks for one sample, zero-padded to the
    configured row counts. ``n_*`` record how many rows are content."""

    sample_id: str
    image: np.ndarray      # [1, backbone_dim]
    rois: np.ndarray       # [n_roi, backbone_dim]
    ocr: np.ndarray        # [ocr_max_tokens, backbone_dim]
    captions: np.ndarray   # [n_cap, backbone_dim]
    symbols: np.ndarray    # [1, symbol_classes]
    n_rois: int
    n_ocr_tokens: int
    n_captions: int

    def content_mask(self, cfg: ExtractorConfig) -> np.ndarray:
        """1.0 for rows carrying content, 0.0 for padding, over the full
        stacked bundle layout."""
        mask = np.zeros(cfg.total_rows)
        offsets = cfg.block_offsets()
        mask[offsets["image"][0]] = 1.0
        mask[offsets["rois"][0] : offsets["rois"][0] + self.n_rois] = 1.0
        mask[offsets["ocr"][0] : offsets["ocr"][0] + self.n_ocr_tokens] = 1.0
        mask[offsets["captions"][0] : offsets["captions"][0] + self.n_captions] = 1.0
        mask[offsets["symbols"][0]] = 1.0
        return mask


@dataclass(frozen=True)
class FeatureBundle:
    """Projected modality blocks, all of width ``d_model``."""

    sample_id: str
    e_img: np.ndarray
    e_roi: np.ndarray
    e_ocr: np.ndarray
    e_cap: np.ndarray
    e_sym: np.ndarray

    def blocks(self) -> dict[str, np.ndarray]:
        return {
            "image": self.e_img,
            "rois": self.e_roi,
            "ocr": self.e_ocr,
            "captions": self.e_cap,
            "symbols": self.e_sym,
        }


class ModalityProjector:
    """Numpy projections backbone width -> d_model, one per modality.

    Content rows map through ``x @ W + b``; zero padding rows are kept
    at zero (the bias is not smeared into padding).
    """

    def __init__(self, weights: dict[str, np.ndarray], biases: dict[str, np.ndarray]):
        self.weights = weights
        self.biases = biases

    @classmethod
    def seeded(cls, cfg: ExtractorConfig, seed: int = 0) -> "ModalityProjector":
        """Fixed random projections; scale 1/sqrt(fan_in) like a fresh
        linear layer."""
        weights, biases = {}, {}
        for name in _BLOCKS:
            fan_in = cfg.symbol_classes if name == "symbols" else cfg.backbone_dim
            rng = seeded_rng(f"projector|{seed}|{name}|{fan_in}x{cfg.d_model}")
            bound = 1.0 / np.sqrt(fan_in)
            weights[name] = rng.uniform(-bound, bound, size=(fan_in, cfg.d_model))
            biases[name] = rng.uniform(-bound, bound, size=cfg.d_model)
        return cls(weights, biases)

    def project(self, name: str, block: np.ndarray, n_content: int) -> np.ndarray:
        w, b = self.weights[name], self.biases[name]
        if block.shape[1] != w.shape[0]:
            raise ShapeError(
                f"{name}: block width {block.shape[1]} != projection fan-in {w.shape[0]}"
            )
        out = np.zeros((block.shape[0], w.shape[1]))
        if n_content > 0:
            out[:n_content] = block[:n_content] @ w + b
        return out


def _pad_rows(rows: np.ndarray, target: int, width: int, name: str) -> np.ndarray:
    if rows.size == 0:
        rows = np.zeros((0, width))
    if rows.ndim != 2 or rows.shape[1] != width:
        raise ShapeError(f"{name}: expected [*, {width}], got {rows.shape}")
    if rows.shape[0] > target:
        raise ShapeError(f"{name}: {rows.shape[0]} rows exceed budget {target}")
    out = np.zeros((target, width))
    out[: rows.shape[0]] = rows
    return out


def _check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {name} features")
    return arr


def extract_raw_features(sample, cfg: ExtractorConfig, suite: ExtractorSuite) -> RawFeatures:
    """Run all five ports for one sample and zero-pad each block to the
    configured geometry.

    RoIs are the top-``n_roi`` detections by confidence; OCR text is
    whitespace-truncated to ``ocr_max_tokens`` words before encoding;
    the symbol distribution must sum to 1 within 1e-6.
    """
    sid = sample if isinstance(sample, str) else sample.sample_id

    image = suite.image.encode_image(sample, cfg).reshape(1, -1)

    detections = list(suite.detector.detect(sample, cfg))
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].confidence, i))
    kept = [detections[i] for i in order[: cfg.n_roi]]
    rois = np.stack([d.embedding for d in kept]) if kept else np.zeros((0, cfg.backbone_dim))

    text = "" if isinstance(sample, str) else (sample.ocr_text or "")
    words = text.split()[: cfg.ocr_max_tokens]
    ocr = suite.text.encode_tokens(words, cfg)

    caps = list(suite.captioner.captions(sample, cfg))[: cfg.n_cap]
    captions = np.stack(caps) if caps else np.zeros((0, cfg.backbone_dim))

    dist = np.asarray(suite.symbols.distribution(sample, cfg), dtype=np.float64)
    if dist.ndim != 1:
        raise ShapeError(f"symbols: expected 1-d distribution, got {dist.shape}")
    if abs(float(dist.sum()) - 1.0) > 1e-6:
        raise ValidationError(
            f"symbol distribution sums to {dist.sum():.8f}, expected 1 within 1e-6"
        )

    raw = RawFeatures(
        sample_id=sid,
        image=_check_finite(image, "image"),
        rois=_check_finite(_pad_rows(rois, cfg.n_roi, cfg.backbone_dim, "rois"), "rois"),
        ocr=_check_finite(_pad_rows(ocr, cfg.ocr_max_tokens, cfg.backbone_dim, "ocr"), "ocr"),
        captions=_check_finite(
            _pad_rows(captions, cfg.n_cap, cfg.backbone_dim, "captions"), "captions"
        ),
        symbols=_check_finite(dist.reshape(1, -1), "symbols"),
        n_rois=len(kept),
        n_ocr_tokens=len(words),
        n_captions=len(caps),
    )
    if raw.image.shape != (1, cfg.backbone_dim):
        raise ShapeError(f"image: expected [1, {cfg.backbone_dim}], got {raw.image.shape}")
    if raw.symbols.shape != (1, cfg.symbol_classes):
        raise ShapeError(
            f"symbols: expected [1, {cfg.symbol_classes}], got {raw.symbols.shape}"
        )
    return raw


def extract_image(sample, cfg, suite, projector) -> np.ndarray:
    """Whole-image embedding row, projected to [1, d_model]."""
    raw = suite.image.encode_image(sample, cfg).reshape(1, -1)
    return projector.project("image", _check_finite(raw, "image"), 1)


def extract_ocr(text: str, cfg, suite, projector) -> np.ndarray:
    """Word-truncated, per-token OCR block [ocr_max_tokens, d_model];
    rows past the token count are zero."""
    words = (text or "").split()[: cfg.ocr_max_tokens]
    raw = suite.text.encode_tokens(words, cfg)
    padded = _pad_rows(raw, cfg.ocr_max_tokens, cfg.backbone_dim, "ocr")
    return projector.project("ocr", _check_finite(padded, "ocr"), len(words))


def extract_rois(sample, cfg, suite, projector) -> np.ndarray:
    """Top-confidence detection embeddings [n_roi, d_model], zero-padded."""
    detections = list(suite.detector.detect(sample, cfg))
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].confidence, i))
    kept = [detections[i] for i in order[: cfg.n_roi]]
    raw = np.stack([d.embedding for d in kept]) if kept else np.zeros((0, cfg.backbone_dim))
    padded = _pad_rows(raw, cfg.n_roi, cfg.backbone_dim, "rois")
    return projector.project("rois", _check_finite(padded, "rois"), len(kept))


def extract_captions(sample, cfg, suite, projector) -> np.ndarray:
    """Caption embeddings [n_cap, d_model], zero-padded."""
    caps = list(suite.captioner.captions(sample, cfg))[: cfg.n_cap]
    raw = np.stack(caps) if caps else np.zeros((0, cfg.backbone_dim))
    padded = _pad_rows(raw, cfg.n_cap, cfg.backbone_dim, "captions")
    return projector.project("captions", _check_finite(padded, "captions"), len(caps))


def extract_symbols(sample, cfg, suite, projector) -> np.ndarray:
    """Symbol-distribution row [1, d_model]; the port's distribution must
    sum to 1 within 1e-6."""
    dist = np.asarray(suite.symbols.distribution(sample, cfg), dtype=np.float64)
    if abs(float(dist.sum()) - 1.0) > 1e-6:
        raise ValidationError(
            f"symbol distribution sums to {dist.sum():.8f}, expected 1 within 1e-6"
        )
    return projector.project("symbols", _check_finite(dist.reshape(1, -1), "symbols"), 1)


def project_raw(raw: RawFeatures, cfg: ExtractorConfig, projector: ModalityProjector) -> FeatureBundle:
    """Apply the learned projections to cached raw features."""
    return FeatureBundle(
        sample_id=raw.sample_id,
        e_img=projector.project("image", raw.image, 1),
        e_roi=projector.project("rois", raw.rois, raw.n_rois),
        e_ocr=projector.project("ocr", raw.ocr, raw.n_ocr_tokens),
        e_cap=projector.project("captions", raw.captions, raw.n_captions),
        e_sym=projector.project("symbols", raw.symbols, 1),
    )


def extract_bundle(sample, cfg, suite, projector) -> FeatureBundle:
    """Full per-sample extraction: all modalities, projected."""
    return project_raw(extract_raw_features(sample, cfg, suite), cfg, projector)


def assemble_bundle(e_img, e_roi, e_ocr, e_cap, e_sym, cfg: ExtractorConfig) -> np.ndarray:
    """Stack the projected blocks [image | RoI | OCR | caption | symbol]
    into the [total_rows, d_model] encoder input.

    Raises
    ------
    ShapeError
        Naming the offending block when its row count or width is wrong.
    NumericalError
        Any non-finite entry.
    """
    expected = {
        "image": (1, e_img),
        "rois": (cfg.n_roi, e_roi),
        "ocr": (cfg.ocr_max_tokens, e_ocr),
        "captions": (cfg.n_cap, e_cap),
        "symbols": (1, e_sym),
    }
    parts = []
    for name, (rows, block) in expected.items():
        block = np.asarray(block, dtype=np.float64)
        if block.ndim != 2 or block.shape != (rows, cfg.d_model):
            raise ShapeError(
                f"{name}: expected [{rows}, {cfg.d_model}], got {tuple(block.shape)}"
            )
        parts.append(block)
    stacked = np.vstack(parts)
    return _check_finite(stacked, "bundle")


def split_bundle(matrix: np.ndarray, cfg: ExtractorConfig, sample_id: str = "") -> FeatureBundle:
    """Inverse of :func:`assemble_bundle`: slice the stacked matrix back
    into its modality blocks at the documented offsets."""
    matrix = np.asarray(matrix)
    if matrix.shape != (cfg.total_rows, cfg.d_model):
        raise ShapeError(
            f"bundle: expected [{cfg.total_rows}, {cfg.d_model}], got {matrix.shape}"
        )
    o = cfg.block_offsets()
    return FeatureBundle(
        sample_id=sample_id,
        e_img=matrix[o["image"][0] : o["image"][1]],
        e_roi=matrix[o["rois"][0] : o["rois"][1]],
        e_ocr=matrix[o["ocr"][0] : o["ocr"][1]],
        e_cap=matrix[o["captions"][0] : o["captions"][1]],
        e_sym=matrix[o["symbols"][0] : o["symbols"][1]],
    )
