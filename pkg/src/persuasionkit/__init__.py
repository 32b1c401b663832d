"""Active-learning annotation and training toolkit for persuasion-strategy
prediction on advertisement images."""

__version__ = "0.1.0"

from .taxonomy import (  # noqa: F401
    Strategy,
    StrategySet,
    Taxonomy,
    decode_labels,
    encode_labels,
    load_taxonomy,
    validate_label_set,
)
