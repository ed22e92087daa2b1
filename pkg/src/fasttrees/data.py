"""Vocabulary, encoding, and length-bucketed batching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<bos>", "<eos>")


class Vocab:
    """Deterministic token ids: reserved symbols, then frequency-descending
    with lexicographic tie-break."""

    def __init__(self, tokens: list[str]):
        self.itos = list(RESERVED) + tokens
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise DataError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, token_seqs) -> "Vocab":
        freq: dict[str, int] = {}
        for seq in token_seqs:
            for tok in seq:
                freq[tok] = freq.get(tok, 0) + 1
        ordered = sorted(freq, key=lambda t: (-freq[t], t))
        return cls(ordered)

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, tokens) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.itos[i] for i in ids if i not in (PAD, BOS, EOS)]

    def to_json(self) -> dict:
        return {"tokens": self.itos[len(RESERVED):]}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocab":
        return cls(list(obj["tokens"]))


def tokenize_words(text: str) -> list[str]:
    return text.split()


def tokenize_chars(text: str) -> list[str]:
    return list(text)


def pad_block(seqs: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Stack id lists into a [B, L] PAD-padded block plus true lengths."""
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    block = np.full((len(seqs), max(1, int(lengths.max(initial=0)))), PAD,
                    dtype=np.int64)
    for i, s in enumerate(seqs):
        block[i, :len(s)] = s
    return block, lengths


@dataclass
class PairBatch:
    ids1: np.ndarray          # [B, L1]
    lengths1: np.ndarray
    ids2: np.ndarray | None   # [B, L2] or None for single-sentence tasks
    lengths2: np.ndarray | None
    labels: np.ndarray        # [B]

    @property
    def size(self) -> int:
        return len(self.labels)


@dataclass
class Seq2SeqBatch:
    src: np.ndarray       # [B, Ls]
    src_len: np.ndarray
    tgt_in: np.ndarray    # [B, Lt], BOS-prefixed
    tgt_out: np.ndarray   # [B, Lt], EOS-suffixed
    tgt_mask: np.ndarray  # [B, Lt], 1 on real positions

    @property
    def size(self) -> int:
        return len(self.src)


def _bucketed_order(keys: list[int], batch_size: int, bucket_width: int,
                    rng: np.random.Generator | None) -> list[list[int]]:
    order = sorted(range(len(keys)), key=lambda i: (keys[i], i))
    batches, current = [], []
    for idx in order:
        if current and (len(current) == batch_size or
                        keys[idx] - keys[current[0]] > bucket_width):
            batches.append(current)
            current = []
        current.append(idx)
    if current:
        batches.append(current)
    if rng is not None:
        rng.shuffle(batches)
    return batches


def batch_pairs(encoded, batch_size: int, bucket_width: int = 4,
                rng: np.random.Generator | None = None) -> list[PairBatch]:
    """encoded: list of (ids1, ids2 | None, label_id)."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    keys = [max(len(e[0]), len(e[1]) if e[1] is not None else 0)
            for e in encoded]
    out = []
    for batch_idx in _bucketed_order(keys, batch_size, bucket_width, rng):
        rows = [encoded[i] for i in batch_idx]
        ids1, len1 = pad_block([r[0] for r in rows])
        if rows[0][1] is not None:
            ids2, len2 = pad_block([r[1] for r in rows])
        else:
            ids2, len2 = None, None
        labels = np.array([r[2] for r in rows], dtype=np.int64)
        out.append(PairBatch(ids1, len1, ids2, len2, labels))
    return out


def batch_seq2seq(encoded, batch_size: int, bucket_width: int = 8,
                  rng: np.random.Generator | None = None) -> list[Seq2SeqBatch]:
    """encoded: list of (src_ids, tgt_ids) without BOS/EOS."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    keys = [len(src) + len(tgt) for src, tgt in encoded]
    out = []
    for batch_idx in _bucketed_order(keys, batch_size, bucket_width, rng):
        rows = [encoded[i] for i in batch_idx]
        src, src_len = pad_block([r[0] for r in rows])
        tgt_in, _ = pad_block([[BOS] + r[1] for r in rows])
        tgt_out, tgt_len = pad_block([r[1] + [EOS] for r in rows])
        mask = (np.arange(tgt_out.shape[1])[None, :] < tgt_len[:, None])
        out.append(Seq2SeqBatch(src, src_len, tgt_in, tgt_out,
                                mask.astype(np.float64)))
    return out
