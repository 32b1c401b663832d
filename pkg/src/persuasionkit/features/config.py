"""Geometry of the stacked encoder input."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

from ..errors import ValidationError


@dataclass(frozen=True)
class ExtractorConfig:
    """Row/width budget of the fused feature bundle.

    The default budget is 1 image row + 10 RoI rows + 100 OCR rows +
    2 caption rows + 1 symbol row = 114 rows of width 256. Only the
    total (114) and the OCR budget (100) are fixed by the modeling
    recipe; the 10/2 RoI/caption split is a recorded default.
    """

    d_model: int = 256
    ocr_max_tokens: int = 100
    image_side: int = 224
    patch_side: int = 16
    n_roi: int = 10
    n_cap: int = 2
    backbone_dim: int = 768
    symbol_classes: int = 64

    def __post_init__(self):
        if self.d_model <= 0:
            raise ValidationError("d_model must be positive")
        if self.backbone_dim <= 0 or self.symbol_classes <= 0:
            raise ValidationError("backbone widths must be positive")
        for name in ("ocr_max_tokens", "n_roi", "n_cap"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.image_side <= 0 or self.patch_side <= 0:
            raise ValidationError("image/patch sides must be positive")

    @property
    def total_rows(self) -> int:
        return 1 + self.n_roi + self.ocr_max_tokens + self.n_cap + 1

    def block_offsets(self) -> dict[str, tuple[int, int]]:
        """Half-open [start, stop) row ranges of each modality block in
        the assembled bundle, in stacking order."""
        offsets = {}
        row = 0
        for name, count in (
            ("image", 1),
            ("rois", self.n_roi),
            ("ocr", self.ocr_max_tokens),
            ("captions", self.n_cap),
            ("symbols", 1),
        ):
            offsets[name] = (row, row + count)
            row += count
        return offsets

    def content_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode()
        ).hexdigest()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractorConfig":
        return cls(**d)
