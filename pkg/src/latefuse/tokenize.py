"""Pluggable token counting.

The curation thresholds are defined over token counts. Two handles are
provided: a whitespace splitter for hermetic tests, and a small BPE tokenizer
driven by an externally supplied merges table (one "left right" pair per line,
ranked by file order) for parity with production counts. Handles are
stateless after construction and safe to share across threads.
"""

from __future__ import annotations

from typing import Protocol


class TokenizerHandle(Protocol):
    name: str

    def tokenize(self, text: str) -> list[str]: ...

    def count(self, text: str) -> int: ...


class WhitespaceTokenizer:
    name = "whitespace"

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def count(self, text: str) -> int:
        return len(text.split())


class BpeTokenizer:
    """Greedy lowest-rank pair merging over whitespace-split words."""

    def __init__(self, merges: list[tuple[str, str]], name: str = "bpe"):
        self.name = name
        self.ranks = {pair: i for i, pair in enumerate(merges)}
        self._cache: dict[str, tuple[str, ...]] = {}

    @classmethod
    def from_file(cls, path) -> "BpeTokenizer":
        merges = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise ValueError(f"malformed merges line: {line!r}")
                merges.append((parts[0], parts[1]))
        return cls(merges, name=str(path))

    def _encode_word(self, word: str) -> tuple[str, ...]:
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        pieces = list(word)
        while len(pieces) > 1:
            best_rank, best_i = None, -1
            for i in range(len(pieces) - 1):
                rank = self.ranks.get((pieces[i], pieces[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank, best_i = rank, i
            if best_rank is None:
                break
            pieces[best_i:best_i + 2] = [pieces[best_i] + pieces[best_i + 1]]
        result = tuple(pieces)
        if len(self._cache) < 1_000_000:
            self._cache[word] = result
        return result

    def tokenize(self, text: str) -> list[str]:
        out: list[str] = []
        for word in text.split():
            out.extend(self._encode_word(word))
        return out

    def count(self, text: str) -> int:
        return sum(len(self._encode_word(w)) for w in text.split())


def load_tokenizer(spec: str | None) -> TokenizerHandle:
    """"whitespace" (or None) for the fallback, otherwise a path to a merges file."""
    if spec is None or spec == "whitespace":
        return WhitespaceTokenizer()
    return BpeTokenizer.from_file(spec)


def count_tokens(text: str, tokenizer: TokenizerHandle) -> int:
    if tokenizer is None:
        raise ValueError("tokenizer not loaded")
    return tokenizer.count(text)
