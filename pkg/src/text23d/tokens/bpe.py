"""Byte-pair-encoding caption tokenizer.

Byte-level base alphabet (ids 2..257 after the reserved pad and
start-of-caption ids), greedy most-frequent-pair merges, frequency ties
broken by the lexicographically smallest byte pair.  decode(encode(t))
round-trips any text; encode truncates at the configured max length and
flags it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..errors import ContractViolation

PAD_ID = 0
SOC_ID = 1  # start-of-caption
BYTE_OFFSET = 2
BASE_VOCAB = BYTE_OFFSET + 256


@dataclass
class CaptionTokens:
    ids: list[int]
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.ids)


def _pair_counts(seqs: list[list[int]]) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for seq in seqs:
        for pair in zip(seq[:-1], seq[1:]):
            counts[pair] = counts.get(pair, 0) + 1
    return counts


def _apply_merge(seq: list[int], pair: tuple[int, int], new_id: int) -> list[int]:
    out = []
    i = 0
    while i < len(seq):
        if i + 1 < len(seq) and seq[i] == pair[0] and seq[i + 1] == pair[1]:
            out.append(new_id)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out


class BPETokenizer:
    def __init__(self, merges: list[tuple[int, int]], vocab_size: int, max_len: int):
        self.merges = list(merges)
        self.vocab_size = vocab_size
        self.max_len = max_len
        self._rank = {pair: i for i, pair in enumerate(self.merges)}
        # id -> bytes, for decoding and lexicographic tie-breaks
        self._bytes: dict[int, bytes] = {BYTE_OFFSET + b: bytes([b]) for b in range(256)}
        for i, (a, b) in enumerate(self.merges):
            self._bytes[BASE_VOCAB + i] = self._bytes[a] + self._bytes[b]

    @classmethod
    def build(cls, corpus: list[str], vocab_size: int, max_len: int) -> "BPETokenizer":
        """Greedy BPE merges until ``vocab_size`` is reached or no pair repeats."""
        if not corpus:
            raise ContractViolation("bpe_build needs a non-empty corpus")
        if vocab_size <= BASE_VOCAB:
            raise ContractViolation(
                f"vocab_size must exceed the base alphabet size {BASE_VOCAB}")
        seqs = [[BYTE_OFFSET + b for b in text.encode("utf-8")] for text in corpus]
        id_bytes: dict[int, bytes] = {BYTE_OFFSET + b: bytes([b]) for b in range(256)}
        merges: list[tuple[int, int]] = []
        next_id = BASE_VOCAB
        while next_id < vocab_size:
            counts = _pair_counts(seqs)
            if not counts:
                break
            best_count = max(counts.values())
            if best_count < 2:
                break
            candidates = [p for p, c in counts.items() if c == best_count]
            best = min(candidates, key=lambda p: (id_bytes[p[0]], id_bytes[p[1]]))
            merges.append(best)
            id_bytes[next_id] = id_bytes[best[0]] + id_bytes[best[1]]
            seqs = [_apply_merge(s, best, next_id) for s in seqs]
            next_id += 1
        return cls(merges, vocab_size, max_len)

    def encode(self, text: str) -> CaptionTokens:
        """SOC + merged byte tokens, truncated to ``max_len`` when needed."""
        seq = [BYTE_OFFSET + b for b in text.encode("utf-8")]
        while len(seq) >= 2:
            pairs = set(zip(seq[:-1], seq[1:]))
            ranked = [p for p in pairs if p in self._rank]
            if not ranked:
                break
            best = min(ranked, key=lambda p: self._rank[p])
            seq = _apply_merge(seq, best, BASE_VOCAB + self._rank[best])
        ids = [SOC_ID] + seq
        if len(ids) > self.max_len:
            return CaptionTokens(ids[:self.max_len], truncated=True)
        return CaptionTokens(ids, truncated=False)

    def pad(self, tokens: CaptionTokens) -> list[int]:
        return tokens.ids + [PAD_ID] * (self.max_len - len(tokens.ids))

    def decode(self, ids: list[int]) -> str:
        data = b"".join(self._bytes[i] for i in ids if i not in (PAD_ID, SOC_ID))
        return data.decode("utf-8", errors="replace")

    # merge table serialization: ordered "left right" lines
    def save_merges(self, path: Path | str) -> None:
        lines = [f"{self.vocab_size} {self.max_len}"]
        lines += [f"{a} {b}" for a, b in self.merges]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load_merges(cls, path: Path | str) -> "BPETokenizer":
        lines = Path(path).read_text().strip().splitlines()
        vocab_size, max_len = (int(v) for v in lines[0].split())
        merges = [tuple(int(v) for v in line.split()) for line in lines[1:]]
        return cls(merges, vocab_size, max_len)
