"""Transformer blocks with the sequence-level tree-induction gate.

All activations are batch-major [B, L, d_model]. The gate applies a
cumulative-softmax split along the feature axis per position:

    A = cumax(F_a(X));  B = 1 - cumax(F_b(X))
    F = sigma(F_h(X)) * (A*B) + (A - A*B);  Y = F * X
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .data import BOS, EOS, PAD
from .errors import ConfigError, DimensionError
from .module import Linear, Module, uniform_init, zeros_init
from .tensor import Tensor

NEG_INF = -1e9


def sinusoidal_encoding(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length)[:, None].astype(np.float64)
    dim = np.arange(d_model)[None, :].astype(np.float64)
    angle = pos / np.power(10000.0, 2 * (dim // 2) / d_model)
    pe = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return pe


class LayerNorm(Module):
    def __init__(self, d: int):
        self.scale = Tensor(np.ones(d), requires_grad=True)
        self.offset = zeros_init(d)

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.scale, self.offset)


class MultiHeadAttention(Module):
    def __init__(self, rng, d_model: int, n_heads: int,
                 literal_scaling: bool = False):
        if d_model % n_heads != 0:
            raise ConfigError(f"d_model {d_model} not divisible by "
                              f"{n_heads} heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.literal_scaling = literal_scaling
        self.wq = Linear(rng, d_model, d_model)
        self.wk = Linear(rng, d_model, d_model)
        self.wv = Linear(rng, d_model, d_model)
        self.wo = Linear(rng, d_model, d_model)

    def _split(self, x: Tensor, batch: int, length: int) -> Tensor:
        return x.reshape(batch, length, self.n_heads,
                         self.d_head).swapaxes(1, 2)

    def __call__(self, x_q: Tensor, x_kv: Tensor,
                 mask: np.ndarray | None = None) -> Tensor:
        b, lq, d = x_q.shape
        lk = x_kv.shape[1]
        q = self._split(self.wq(x_q), b, lq)
        k = self._split(self.wk(x_kv), b, lk)
        v = self._split(self.wv(x_kv), b, lk)
        scores = q @ k.swapaxes(-1, -2)  # [B, H, Lq, Lk]
        if not self.literal_scaling:
            scores = scores * (1.0 / np.sqrt(self.d_head))
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape[-1] != lk or mask.shape[-2] not in (1, lq):
                raise DimensionError(f"attention mask {mask.shape} does not "
                                     f"match query/key lengths ({lq}, {lk})")
            full = np.broadcast_to(mask, scores.shape)
            scores = scores + Tensor(np.where(full, 0.0, NEG_INF))
        probs = T.softmax(scores, axis=-1)
        out = probs @ v
        if self.literal_scaling:
            # scale applied outside the softmax, as a configurable variant
            out = out * (1.0 / np.sqrt(self.d_head))
        out = out.swapaxes(1, 2).reshape(b, lq, d)
        return self.wo(out)


class GateMap(Module):
    """Per-position affine map, or a width-k causal conv over the sequence."""

    def __init__(self, rng, d_model: int, conv_k: int = 0):
        self.conv_k = conv_k
        if conv_k:
            scale = 1.0 / np.sqrt(d_model * conv_k)
            self.kernel = uniform_init(rng, (conv_k, d_model, d_model), scale)
            self.bias = zeros_init(d_model)
        else:
            self.lin = Linear(rng, d_model, d_model)

    def __call__(self, x: Tensor) -> Tensor:
        if not self.conv_k:
            return self.lin(x)
        seq_major = x.swapaxes(0, 1)  # causal conv runs along axis 0
        out = T.causal_conv1d(seq_major, self.kernel, self.bias)
        return out.swapaxes(0, 1)


class FastTreesGate(Module):
    def __init__(self, rng, d_model: int, conv_k: int = 0):
        self.f_a = GateMap(rng, d_model, conv_k)
        self.f_b = GateMap(rng, d_model, conv_k)
        self.f_h = GateMap(rng, d_model, conv_k)

    def gates(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        a = T.cumax(self.f_a(x), axis=-1)
        b = 1.0 - T.cumax(self.f_b(x), axis=-1)
        ab = a * b
        f = T.sigmoid(self.f_h(x)) * ab + (a - ab)
        return a, b, f

    def __call__(self, x: Tensor) -> Tensor:
        _, _, f = self.gates(x)
        return f * x


class FeedForward(Module):
    def __init__(self, rng, d_model: int, d_ff: int):
        self.l1 = Linear(rng, d_model, d_ff)
        self.l2 = Linear(rng, d_ff, d_model)

    def __call__(self, x: Tensor) -> Tensor:
        return self.l2(T.relu(self.l1(x)))


class EncoderBlock(Module):
    """Pre-norm block; the gate sits at the head of the FFN branch, so its
    attenuation is bypassed by the residual path."""

    def __init__(self, rng, d_model: int, n_heads: int, d_ff: int,
                 gated: bool = True, conv_gate: int = 0,
                 literal_scaling: bool = False):
        self.ln1 = LayerNorm(d_model)
        self.attn = MultiHeadAttention(rng, d_model, n_heads, literal_scaling)
        self.ln2 = LayerNorm(d_model)
        self.gate = FastTreesGate(rng, d_model, conv_gate) if gated else None
        self.ffn = FeedForward(rng, d_model, d_ff)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        xn = self.ln1(x)
        x = x + self.attn(xn, xn, mask)
        y = self.ln2(x)
        if self.gate is not None:
            y = self.gate(y)
        return x + self.ffn(y)


class DecoderBlock(Module):
    """Pre-norm decoder block; gates sit right after self- and
    cross-attention inside their residual branches."""

    def __init__(self, rng, d_model: int, n_heads: int, d_ff: int,
                 gated: bool = True, conv_gate: int = 0,
                 literal_scaling: bool = False):
        self.ln1 = LayerNorm(d_model)
        self.self_attn = MultiHeadAttention(rng, d_model, n_heads,
                                            literal_scaling)
        self.gate_self = FastTreesGate(rng, d_model, conv_gate) if gated \
            else None
        self.ln2 = LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(rng, d_model, n_heads,
                                             literal_scaling)
        self.gate_cross = FastTreesGate(rng, d_model, conv_gate) if gated \
            else None
        self.ln3 = LayerNorm(d_model)
        self.ffn = FeedForward(rng, d_model, d_ff)

    def __call__(self, x: Tensor, memory: Tensor, self_mask: np.ndarray,
                 cross_mask: np.ndarray | None) -> Tensor:
        xn = self.ln1(x)
        h = self.attn_branch(self.self_attn, self.gate_self, xn, xn,
                             self_mask)
        x = x + h
        h = self.attn_branch(self.cross_attn, self.gate_cross, self.ln2(x),
                             memory, cross_mask)
        x = x + h
        return x + self.ffn(self.ln3(x))

    @staticmethod
    def attn_branch(attn, gate, x_q, x_kv, mask):
        h = attn(x_q, x_kv, mask)
        return gate(h) if gate is not None else h


def padding_mask(ids: np.ndarray) -> np.ndarray:
    """[B, 1, 1, L] mask that hides PAD keys."""
    return (ids != PAD)[:, None, None, :]


def causal_mask(length: int) -> np.ndarray:
    return np.tril(np.ones((length, length), dtype=bool))[None, None]


class Seq2SeqTransformer(Module):
    """Encoder-decoder transformer for character/token-level transduction."""

    def __init__(self, rng, src_vocab: int, tgt_vocab: int, d_model: int = 128,
                 n_heads: int = 4, n_layers: int = 2, d_ff: int = 256,
                 gated: bool = True, decoder_gate: bool = True,
                 conv_gate: int = 0, literal_scaling: bool = False,
                 max_len: int = 512):
        self.d_model = d_model
        self.max_len = max_len
        scale = 1.0 / np.sqrt(d_model)
        self.src_embed = uniform_init(rng, (src_vocab, d_model), scale)
        self.tgt_embed = uniform_init(rng, (tgt_vocab, d_model), scale)
        self.pos = sinusoidal_encoding(max_len, d_model)
        self.enc_blocks = [EncoderBlock(rng, d_model, n_heads, d_ff, gated,
                                        conv_gate, literal_scaling)
                           for _ in range(n_layers)]
        self.dec_blocks = [DecoderBlock(rng, d_model, n_heads, d_ff,
                                        gated and decoder_gate, conv_gate,
                                        literal_scaling)
                           for _ in range(n_layers)]
        self.enc_norm = LayerNorm(d_model)
        self.dec_norm = LayerNorm(d_model)
        self.out = Linear(rng, d_model, tgt_vocab)

    def _embed(self, table: Tensor, ids: np.ndarray) -> Tensor:
        x = T.embedding_lookup(table, ids) * np.sqrt(self.d_model)
        return x + Tensor(self.pos[:ids.shape[1]])

    def encode(self, src: np.ndarray) -> tuple[Tensor, np.ndarray]:
        mask = padding_mask(src)
        x = self._embed(self.src_embed, src)
        for block in self.enc_blocks:
            x = block(x, mask)
        return self.enc_norm(x), mask

    def forward(self, src: np.ndarray, tgt_in: np.ndarray) -> Tensor:
        """Teacher-forced logits [B, Lt, tgt_vocab]."""
        memory, src_mask = self.encode(src)
        lt = tgt_in.shape[1]
        self_mask = causal_mask(lt) & (tgt_in != PAD)[:, None, None, :]
        x = self._embed(self.tgt_embed, tgt_in)
        for block in self.dec_blocks:
            x = block(x, memory, self_mask, src_mask)
        return self.out(self.dec_norm(x))

    # -- decoding ---------------------------------------------------------

    def greedy_decode(self, src: np.ndarray, max_len: int = 32):
        """Batched greedy decode; returns (list of id lists, truncated flags)."""
        with T.no_grad():
            b = src.shape[0]
            hyp = np.full((b, 1), BOS, dtype=np.int64)
            done = np.zeros(b, dtype=bool)
            for _ in range(max_len):
                logits = self.forward(src, hyp).data[:, -1]
                nxt = logits.argmax(axis=-1)
                nxt[done] = PAD
                hyp = np.concatenate([hyp, nxt[:, None]], axis=1)
                done |= nxt == EOS
                if done.all():
                    break
        out = []
        for row in hyp[:, 1:]:
            ids = []
            for t in row:
                if t in (EOS, PAD):
                    break
                ids.append(int(t))
            out.append(ids)
        return out, ~done

    def beam_decode(self, src_row: np.ndarray, beam_size: int = 4,
                    length_penalty: float = 0.6, max_len: int = 32):
        """Beam search for one source sequence; returns (ids, score, truncated).

        Hypotheses are ranked by logprob / ((5+len)/6)^alpha. Beam size 1
        reproduces greedy decoding exactly.
        """
        def lp(n: int) -> float:
            return ((5.0 + n) / 6.0) ** length_penalty

        with T.no_grad():
            src = src_row[None, :]
            beams = [([], 0.0)]  # (ids, logprob)
            finished: list[tuple[list[int], float, bool]] = []
            for step in range(max_len):
                candidates = []
                for ids, score in beams:
                    tgt_in = np.array([[BOS] + ids], dtype=np.int64)
                    logits = self.forward(src, tgt_in).data[0, -1]
                    logits = logits - logits.max()
                    logp = logits - np.log(np.exp(logits).sum())
                    top = np.argsort(-logp, kind="stable")[:beam_size]
                    for tok in top:
                        candidates.append((ids + [int(tok)],
                                           score + float(logp[tok])))
                candidates.sort(key=lambda c: (-c[1], c[0]))
                beams = []
                for ids, score in candidates[:beam_size]:
                    if ids[-1] == EOS:
                        finished.append((ids[:-1], score / lp(len(ids)), False))
                    else:
                        beams.append((ids, score))
                if not beams or (finished and len(finished) >= beam_size):
                    break
            for ids, score in beams:
                finished.append((ids, score / lp(len(ids) + 1), True))
            finished.sort(key=lambda c: (-c[1], c[0]))
            ids, score, truncated = finished[0]
            return ids, score, truncated
