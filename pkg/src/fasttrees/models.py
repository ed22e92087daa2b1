"""Task models assembled from the recurrent encoders."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .cells import GateTrace, StackedEncoder
from .errors import UsageError
from .module import Linear, Module, uniform_init
from .tensor import Tensor


class SequenceClassifier(Module):
    """Single- or twin-sentence classifier over a recurrent encoder.

    Twin mode encodes both sentences with the shared encoder and classifies
    the feature vector [h1; h2; h1*h2; h1-h2].
    """

    def __init__(self, rng, vocab_size: int, n_classes: int, variant: str,
                 d_emb: int = 128, d_hidden: int = 400, n_layers: int = 1,
                 dropout: float = 0.0, chunk: int = 8, master_depth: int = 2,
                 conv_k: int = 3, twin: bool = True, mlp_hidden: int = 512,
                 max_len: int = 512):
        self.twin = twin
        self.dropout = dropout
        self.embed = uniform_init(rng, (vocab_size, d_emb),
                                  1.0 / np.sqrt(d_emb))
        self.encoder = StackedEncoder(rng, variant, d_emb, d_hidden,
                                      n_layers=n_layers, dropout=dropout,
                                      chunk=chunk, master_depth=master_depth,
                                      conv_k=conv_k, max_len=max_len)
        d_feat = 4 * d_hidden if twin else d_hidden
        self.mlp = Linear(rng, d_feat, mlp_hidden)
        self.cls = Linear(rng, mlp_hidden, n_classes)

    def encode(self, ids: np.ndarray, lengths: np.ndarray,
               train: bool = False, rng=None) -> Tensor:
        """Final hidden state per sequence, [B, d_hidden]."""
        x = T.embedding_lookup(self.embed, ids).swapaxes(0, 1)  # [L, B, d]
        h_seq, _, _ = self.encoder(x, train=train, rng=rng)
        return h_seq[lengths - 1, np.arange(len(lengths))]

    def forward(self, batch, train: bool = False, rng=None) -> Tensor:
        h1 = self.encode(batch.ids1, batch.lengths1, train, rng)
        if self.twin:
            if batch.ids2 is None:
                raise UsageError("twin classifier needs sentence pairs")
            h2 = self.encode(batch.ids2, batch.lengths2, train, rng)
            feats = T.concat([h1, h2, h1 * h2, h1 - h2], axis=-1)
        else:
            feats = h1
        if train and self.dropout > 0:
            feats = T.dropout(feats, self.dropout, rng, train=True)
        return self.cls(T.relu(self.mlp(feats)))

    def gate_trace(self, ids: np.ndarray, trace_layer: int = 0) -> GateTrace:
        with T.no_grad():
            x = T.embedding_lookup(self.embed, ids).swapaxes(0, 1)
            _, _, trace = self.encoder(x, trace_layer=trace_layer)
        return trace


class RNNLanguageModel(Module):
    """Next-token prediction over a recurrent encoder stack."""

    def __init__(self, rng, vocab_size: int, variant: str, d_emb: int = 128,
                 d_hidden: int = 400, n_layers: int = 3, dropout: float = 0.0,
                 chunk: int = 8, master_depth: int = 2, conv_k: int = 3,
                 max_len: int = 512):
        self.dropout = dropout
        self.embed = uniform_init(rng, (vocab_size, d_emb),
                                  1.0 / np.sqrt(d_emb))
        self.encoder = StackedEncoder(rng, variant, d_emb, d_hidden,
                                      n_layers=n_layers, dropout=dropout,
                                      chunk=chunk, master_depth=master_depth,
                                      conv_k=conv_k, max_len=max_len)
        self.out = Linear(rng, d_hidden, vocab_size)

    def forward(self, ids: np.ndarray, train: bool = False, rng=None) -> Tensor:
        """Logits [B, L, V] for the token following each position."""
        x = T.embedding_lookup(self.embed, ids).swapaxes(0, 1)
        h_seq, _, _ = self.encoder(x, train=train, rng=rng)
        return self.out(h_seq.swapaxes(0, 1))

    def gate_trace(self, ids: np.ndarray, trace_layer: int = 0) -> GateTrace:
        with T.no_grad():
            x = T.embedding_lookup(self.embed, ids).swapaxes(0, 1)
            _, _, trace = self.encoder(x, trace_layer=trace_layer)
        return trace
