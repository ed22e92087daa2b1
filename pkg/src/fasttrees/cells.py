"""Recurrent cell variants built around structured master gating.

Variants:
  lstm            vanilla LSTM
  onlstm          autoregressive master gates (depend on h_{t-1})
  fasttrees       master gates from a position-wise feed-forward head,
                  precomputed for the whole sequence in one batched pass
  conv_fasttrees  master gates from a causal convolution head
  faster          quasi-recurrent: every gate precomputed from the input,
                  only the elementwise cell-state scan stays sequential

Sequences are [L, B, d] tensors (time-major). Master gates live in a low
dimension D_m = d_hidden / chunk; each master element governs `chunk`
consecutive hidden units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, NumericError, UsageError
from .module import Linear, Module, uniform_init, zeros_init
from .tensor import Tensor

VARIANTS = ("lstm", "onlstm", "fasttrees", "conv_fasttrees", "faster")


@dataclass
class CellConfig:
    d_in: int
    d_hidden: int
    chunk: int = 8            # C; master dimension D_m = d_hidden / C
    master_depth: int = 2     # affine layers in the feed-forward master head
    conv_k: int = 3           # causal-conv head kernel width
    max_len: int = 512

    def __post_init__(self):
        if self.d_hidden % self.chunk != 0:
            raise ConfigError(f"chunk factor {self.chunk} must divide "
                              f"d_hidden {self.d_hidden}")
        if self.master_depth not in (1, 2):
            raise ConfigError(f"master_depth must be 1 or 2, got "
                              f"{self.master_depth}")
        if self.conv_k < 1:
            raise ConfigError(f"conv_k must be >= 1, got {self.conv_k}")
        if self.conv_k > self.max_len:
            raise ConfigError(f"conv kernel width {self.conv_k} exceeds the "
                              f"declared max length {self.max_len}")

    @property
    def d_master(self) -> int:
        return self.d_hidden // self.chunk


@dataclass
class CellState:
    h: Tensor
    c: Tensor


@dataclass
class GateTrace:
    """Per-timestep master gates (numpy, detached), [L, B, D_m] each."""
    mf: np.ndarray
    mi: np.ndarray
    omega: np.ndarray = field(init=False)

    def __post_init__(self):
        self.omega = self.mf * self.mi


# -- master gate heads -----------------------------------------------------

class FeedForwardHead(Module):
    """Position-wise map from the current input to master-gate logits."""

    flavor = "feedforward"

    def __init__(self, rng, d_in: int, d_master: int, depth: int = 2):
        self.l0 = Linear(rng, d_in, d_master)
        self.l1 = Linear(rng, d_master, d_master) if depth == 2 else None

    def __call__(self, x: Tensor) -> Tensor:
        z = self.l0(x)
        if self.l1 is not None:
            z = self.l1(T.tanh(z))
        return z


class ConvHead(Module):
    """Causal convolution over the sequence, then a position-wise layer."""

    flavor = "causal-conv"

    def __init__(self, rng, d_in: int, d_master: int, k: int):
        scale = 1.0 / np.sqrt(d_in * k)
        self.kernel = uniform_init(rng, (k, d_in, d_master), scale)
        self.bias = zeros_init(d_master)
        self.l1 = Linear(rng, d_master, d_master)

    def __call__(self, x_seq: Tensor) -> Tensor:
        z = T.causal_conv1d(x_seq, self.kernel, self.bias)
        return self.l1(T.tanh(z))


class AutoregressiveHead(Module):
    """Affine map over the current input and the previous hidden state."""

    flavor = "autoregressive"

    def __init__(self, rng, d_in: int, d_hidden: int, d_master: int):
        self.W = uniform_init(rng, (d_in, d_master), 1.0 / np.sqrt(d_in))
        self.U = uniform_init(rng, (d_hidden, d_master),
                              1.0 / np.sqrt(d_hidden))
        self.b = zeros_init(d_master)

    def __call__(self, x_t: Tensor, h_prev: Tensor) -> Tensor:
        return x_t @ self.W + h_prev @ self.U + self.b


def master_gates_parallel(x_seq: Tensor, head_f, head_i) -> tuple[Tensor, Tensor]:
    """Master forget/input gates for the whole sequence in one batched pass.

    Only heads that never look at a hidden state qualify; the autoregressive
    flavor is rejected because its gates cannot be precomputed.
    """
    for head in (head_f, head_i):
        if head.flavor == "autoregressive":
            raise UsageError("master_gates_parallel requires a feedforward or "
                             "causal-conv head, got autoregressive")
    mf = T.cumax(head_f(x_seq))
    mi = 1.0 - T.cumax(head_i(x_seq))
    return mf, mi


def structured_gating(f, i, mf, mi, chunk: int, d_hidden: int):
    """Mix plain gates with (pre-expansion) master gates.

    f, i: [..., d_hidden]; mf, mi: [..., D_m]. Returns (f_eff, i_eff, omega)
    at width d_hidden.
    """
    if mf.shape[-1] * chunk != d_hidden:
        raise ConfigError(f"chunk {chunk} x D_m {mf.shape[-1]} != d_hidden "
                          f"{d_hidden}")
    mf_e = T.repeat_last(mf, chunk) if chunk > 1 else mf
    mi_e = T.repeat_last(mi, chunk) if chunk > 1 else mi
    omega = mf_e * mi_e
    f_eff = f * omega + (mf_e - omega)
    i_eff = i * omega + (mi_e - omega)
    return f_eff, i_eff, omega


# -- cells -----------------------------------------------------------------

def _check_state(h: np.ndarray, t: int) -> None:
    if not np.all(np.isfinite(h)):
        raise NumericError(f"non-finite hidden state at step {t}")


class LSTMCore(Module):
    """Standard LSTM weights; gate order along the 4H axis is f, i, o, c."""

    def __init__(self, rng, cfg: CellConfig):
        self.cfg = cfg
        d, H = cfg.d_in, cfg.d_hidden
        sw, sh = 1.0 / np.sqrt(d), 1.0 / np.sqrt(H)
        self.W_f = uniform_init(rng, (d, H), sw)
        self.W_i = uniform_init(rng, (d, H), sw)
        self.W_o = uniform_init(rng, (d, H), sw)
        self.W_c = uniform_init(rng, (d, H), sw)
        self.U_f = uniform_init(rng, (H, H), sh)
        self.U_i = uniform_init(rng, (H, H), sh)
        self.U_o = uniform_init(rng, (H, H), sh)
        self.U_c = uniform_init(rng, (H, H), sh)
        self.b_f = zeros_init(H)
        self.b_f.data += 1.0  # standard forget-gate bias
        self.b_i = zeros_init(H)
        self.b_o = zeros_init(H)
        self.b_c = zeros_init(H)

    def _cat(self):
        Wc = T.concat([self.W_f, self.W_i, self.W_o, self.W_c], axis=1)
        Uc = T.concat([self.U_f, self.U_i, self.U_o, self.U_c], axis=1)
        bc = T.concat([self.b_f, self.b_i, self.b_o, self.b_c], axis=0)
        return Wc, Uc, bc

    def _init_state(self, batch: int) -> CellState:
        H = self.cfg.d_hidden
        zero = Tensor(np.zeros((batch, H), dtype=T.get_default_dtype()))
        return CellState(zero, zero)

    @staticmethod
    def _gates(pre: Tensor, H: int):
        f = T.sigmoid(pre[:, 0 * H:1 * H])
        i = T.sigmoid(pre[:, 1 * H:2 * H])
        o = T.sigmoid(pre[:, 2 * H:3 * H])
        c_hat = T.tanh(pre[:, 3 * H:4 * H])
        return f, i, o, c_hat


class LSTMCell(LSTMCore):
    variant = "lstm"
    has_master = False

    def forward_sequence(self, x_seq: Tensor, state: CellState | None = None,
                         trace: bool = False, master_override=None):
        if trace:
            raise UsageError("vanilla LSTM has no master gates to trace")
        L, B = x_seq.shape[0], x_seq.shape[1]
        H = self.cfg.d_hidden
        st = state or self._init_state(B)
        if L == 0:
            return Tensor(np.zeros((0, B, H))), st, None
        Wc, Uc, bc = self._cat()
        xproj = x_seq @ Wc + bc
        hs = []
        h, c = st.h, st.c
        for t in range(L):
            f, i, o, c_hat = self._gates(xproj[t] + h @ Uc, H)
            c = f * c + i * c_hat
            h = o * T.tanh(c)
            _check_state(h.data, t)
            hs.append(h)
        return T.stack(hs, axis=0), CellState(h, c), None


class FastTreesCell(LSTMCore):
    """Structured gating with parallel (input-only) master gates."""

    has_master = True

    def __init__(self, rng, cfg: CellConfig, conv: bool = False):
        super().__init__(rng, cfg)
        self.variant = "conv_fasttrees" if conv else "fasttrees"
        if conv:
            self.master_f = ConvHead(rng, cfg.d_in, cfg.d_master, cfg.conv_k)
            self.master_i = ConvHead(rng, cfg.d_in, cfg.d_master, cfg.conv_k)
        else:
            self.master_f = FeedForwardHead(rng, cfg.d_in, cfg.d_master,
                                            cfg.master_depth)
            self.master_i = FeedForwardHead(rng, cfg.d_in, cfg.d_master,
                                            cfg.master_depth)

    def step(self, x_t: Tensor, state: CellState, mf_t: Tensor,
             mi_t: Tensor) -> CellState:
        """Single timestep with precomputed master gates (reference path)."""
        H = self.cfg.d_hidden
        Wc, Uc, bc = self._cat()
        f, i, o, c_hat = self._gates(x_t @ Wc + bc + state.h @ Uc, H)
        f_eff, i_eff, _ = structured_gating(f, i, mf_t, mi_t,
                                            self.cfg.chunk, H)
        c = f_eff * state.c + i_eff * c_hat
        h = o * T.tanh(c)
        return CellState(h, c)

    def forward_sequence(self, x_seq: Tensor, state: CellState | None = None,
                         trace: bool = False, master_override=None):
        L, B = x_seq.shape[0], x_seq.shape[1]
        H = self.cfg.d_hidden
        st = state or self._init_state(B)
        if L == 0:
            return Tensor(np.zeros((0, B, H))), st, None
        if master_override is None:
            mf, mi = master_gates_parallel(x_seq, self.master_f, self.master_i)
        else:
            mf, mi = (m if isinstance(m, Tensor) else Tensor(m)
                      for m in master_override)
        Wc, Uc, bc = self._cat()
        xproj = x_seq @ Wc + bc
        hs = []
        h, c = st.h, st.c
        for t in range(L):
            f, i, o, c_hat = self._gates(xproj[t] + h @ Uc, H)
            f_eff, i_eff, _ = structured_gating(f, i, mf[t], mi[t],
                                                self.cfg.chunk, H)
            c = f_eff * c + i_eff * c_hat
            h = o * T.tanh(c)
            _check_state(h.data, t)
            hs.append(h)
        tr = GateTrace(np.array(mf.data), np.array(mi.data)) if trace else None
        return T.stack(hs, axis=0), CellState(h, c), tr


class ONLSTMCell(LSTMCore):
    """Autoregressive master gates: logits also read h_{t-1}, so the master
    computation is necessarily inside the recurrent loop."""

    variant = "onlstm"
    has_master = True

    def __init__(self, rng, cfg: CellConfig):
        super().__init__(rng, cfg)
        self.master_f = AutoregressiveHead(rng, cfg.d_in, cfg.d_hidden,
                                           cfg.d_master)
        self.master_i = AutoregressiveHead(rng, cfg.d_in, cfg.d_hidden,
                                           cfg.d_master)

    def step(self, x_t: Tensor, state: CellState) -> CellState:
        H = self.cfg.d_hidden
        Wc, Uc, bc = self._cat()
        mf = T.cumax(self.master_f(x_t, state.h))
        mi = 1.0 - T.cumax(self.master_i(x_t, state.h))
        f, i, o, c_hat = self._gates(x_t @ Wc + bc + state.h @ Uc, H)
        f_eff, i_eff, _ = structured_gating(f, i, mf, mi, self.cfg.chunk, H)
        c = f_eff * state.c + i_eff * c_hat
        h = o * T.tanh(c)
        return CellState(h, c)

    def forward_sequence(self, x_seq: Tensor, state: CellState | None = None,
                         trace: bool = False, master_override=None):
        L, B = x_seq.shape[0], x_seq.shape[1]
        H = self.cfg.d_hidden
        st = state or self._init_state(B)
        if L == 0:
            return Tensor(np.zeros((0, B, H))), st, None
        Wc, Uc, bc = self._cat()
        xproj = x_seq @ Wc + bc
        # input contributions to the master logits can still be batched
        xm_f = x_seq @ self.master_f.W + self.master_f.b
        xm_i = x_seq @ self.master_i.W + self.master_i.b
        hs, mfs, mis = [], [], []
        h, c = st.h, st.c
        for t in range(L):
            if master_override is None:
                mf = T.cumax(xm_f[t] + h @ self.master_f.U)
                mi = 1.0 - T.cumax(xm_i[t] + h @ self.master_i.U)
            else:
                mf = Tensor(np.asarray(master_override[0])[t])
                mi = Tensor(np.asarray(master_override[1])[t])
            f, i, o, c_hat = self._gates(xproj[t] + h @ Uc, H)
            f_eff, i_eff, _ = structured_gating(f, i, mf, mi,
                                                self.cfg.chunk, H)
            c = f_eff * c + i_eff * c_hat
            h = o * T.tanh(c)
            _check_state(h.data, t)
            hs.append(h)
            if trace:
                mfs.append(np.array(mf.data))
                mis.append(np.array(mi.data))
        tr = GateTrace(np.stack(mfs), np.stack(mis)) if trace else None
        return T.stack(hs, axis=0), CellState(h, c), tr


class FasterCell(Module):
    """Quasi-recurrent variant: no hidden-to-hidden transitions at all.

    f, i, o come from per-position linear maps of the input, the candidate is
    tanh(W_c x_t + b_c), and the only sequential computation is the
    elementwise cell-state scan.
    """

    variant = "faster"
    has_master = True

    def __init__(self, rng, cfg: CellConfig):
        self.cfg = cfg
        d, H = cfg.d_in, cfg.d_hidden
        self.F_f = Linear(rng, d, H)
        self.F_i = Linear(rng, d, H)
        self.F_o = Linear(rng, d, H)
        self.F_f.b.data += 1.0
        self.W_c = uniform_init(rng, (d, H), 1.0 / np.sqrt(d))
        self.b_c = zeros_init(H)
        self.master_f = FeedForwardHead(rng, d, cfg.d_master, cfg.master_depth)
        self.master_i = FeedForwardHead(rng, d, cfg.d_master, cfg.master_depth)

    def _init_state(self, batch: int) -> CellState:
        zero = Tensor(np.zeros((batch, self.cfg.d_hidden),
                               dtype=T.get_default_dtype()))
        return CellState(zero, zero)

    def forward_sequence(self, x_seq: Tensor, state: CellState | None = None,
                         trace: bool = False, master_override=None,
                         fused: bool = True):
        L, B = x_seq.shape[0], x_seq.shape[1]
        H = self.cfg.d_hidden
        st = state or self._init_state(B)
        if L == 0:
            return Tensor(np.zeros((0, B, H))), st, None
        if state is not None and np.any(state.c.data):
            raise UsageError("faster cell does not support carried-in state")
        if master_override is None:
            mf, mi = master_gates_parallel(x_seq, self.master_f, self.master_i)
        else:
            mf, mi = (m if isinstance(m, Tensor) else Tensor(m)
                      for m in master_override)
        if fused:
            hseq, c_data = T.faster_cell_fused(
                x_seq, self.F_f.W, self.F_f.b, self.F_i.W, self.F_i.b,
                self.F_o.W, self.F_o.b, self.W_c, self.b_c, mf, mi,
                self.cfg.chunk)
            c_last = Tensor(c_data[L - 1])
        else:
            f = T.sigmoid(self.F_f(x_seq))
            i = T.sigmoid(self.F_i(x_seq))
            o = T.sigmoid(self.F_o(x_seq))
            z = T.tanh(x_seq @ self.W_c + self.b_c)
            f_eff, i_eff, _ = structured_gating(f, i, mf, mi,
                                                self.cfg.chunk, H)
            cs, prev = [], Tensor(np.zeros((B, H)))
            for t in range(L):
                prev = f_eff[t] * prev + i_eff[t] * z[t]
                cs.append(prev)
            c = T.stack(cs, axis=0)
            hseq = o * T.tanh(c)
            c_last = c[L - 1]
        _check_state(hseq.data, L - 1)
        final = CellState(hseq[L - 1], c_last)
        tr = GateTrace(np.array(mf.data), np.array(mi.data)) if trace else None
        return hseq, final, tr


def make_cell(rng, variant: str, cfg: CellConfig) -> Module:
    if variant == "lstm":
        return LSTMCell(rng, cfg)
    if variant == "onlstm":
        return ONLSTMCell(rng, cfg)
    if variant == "fasttrees":
        return FastTreesCell(rng, cfg, conv=False)
    if variant == "conv_fasttrees":
        return FastTreesCell(rng, cfg, conv=True)
    if variant == "faster":
        return FasterCell(rng, cfg)
    raise ConfigError(f"unknown cell variant {variant!r}; "
                      f"expected one of {VARIANTS}")


class StackedEncoder(Module):
    """Multi-layer recurrent encoder with inter-layer dropout."""

    def __init__(self, rng, variant: str, d_in: int, d_hidden: int,
                 n_layers: int = 1, dropout: float = 0.0, chunk: int = 8,
                 master_depth: int = 2, conv_k: int = 3, max_len: int = 512):
        self.variant = variant
        self.dropout = dropout
        self.layers = []
        for idx in range(n_layers):
            cfg = CellConfig(d_in if idx == 0 else d_hidden, d_hidden,
                             chunk=chunk, master_depth=master_depth,
                             conv_k=conv_k, max_len=max_len)
            self.layers.append(make_cell(rng, variant, cfg))

    @property
    def has_master(self) -> bool:
        return self.layers[0].has_master

    def __call__(self, x_seq: Tensor, train: bool = False,
                 rng: np.random.Generator | None = None,
                 trace_layer: int | None = None):
        if trace_layer is not None and not self.has_master:
            raise UsageError(f"variant {self.variant!r} has no master gates "
                             f"to trace")
        h = x_seq
        trace = None
        final = None
        for idx, cell in enumerate(self.layers):
            want = trace_layer is not None and idx == trace_layer
            h, final, tr = cell.forward_sequence(h, trace=want)
            if want:
                trace = tr
            if idx < len(self.layers) - 1 and self.dropout > 0 and train:
                h = T.dropout(h, self.dropout, rng, train=True)
        return h, final, trace
