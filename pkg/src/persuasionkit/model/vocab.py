"""Word-level decoder vocabulary for action-reason generation.

Built from the training corpus with a min-frequency cutoff; special
tokens (pad, begin, end, unknown) occupy the first four ids.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

PAD, BOS, EOS, UNK = 0, 1, 2, 3
_SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]

    def __post_init__(self):
        assert self.tokens[:4] == _SPECIALS

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, sentences, min_freq: int = 2) -> "Vocabulary":
        """Whitespace-tokenized vocabulary over ``sentences``; words below
        ``min_freq`` map to the unknown token."""
        counts = Counter()
        for s in sentences:
            if s:
                counts.update(s.lower().split())
        kept = sorted(w for w, c in counts.items() if c >= min_freq)
        return cls(tokens=_SPECIALS + tuple(kept))

    @classmethod
    def empty(cls) -> "Vocabulary":
        return cls(tokens=_SPECIALS)

    def encode(self, sentence: str, max_len: int | None = None) -> list[int]:
        """``[BOS] + word ids + [EOS]``, truncated to ``max_len`` total."""
        lookup = {w: i for i, w in enumerate(self.tokens)}
        ids = [BOS] + [lookup.get(w, UNK) for w in sentence.lower().split()] + [EOS]
        if max_len is not None:
            ids = ids[:max_len]
        return ids

    def decode(self, ids) -> str:
        words = []
        for i in ids:
            if i == EOS:
                break
            if i in (PAD, BOS):
                continue
            words.append(self.tokens[i] if 0 <= i < len(self.tokens) else "<unk>")
        return " ".join(words)
