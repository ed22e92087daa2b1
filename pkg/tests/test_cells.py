"""Recurrent cells: structured-gating algebra, reduction law,oracle
rollouts, and gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fasttrees import tensor as T
from fasttrees.cells import (CellConfig, CellState, FastTreesCell, FasterCell,
                             GateTrace, LSTMCell, ONLSTMCell, StackedEncoder,
                             VARIANTS, make_cell, master_gates_parallel,
                             structured_gating)
from fasttrees.errors import ConfigError, NumericError, UsageError
from fasttrees.optim import grad_check
from fasttrees.tensor import Tensor


def cfg(d_in=6, d_hidden=8, chunk=4, **kw):
    return CellConfig(d_in, d_hidden, chunk=chunk, **kw)


# -- structured gating --------------------------------------------------------

def test_structured_gating_hand_example():
    mf = Tensor(np.array([0.25, 0.5, 0.75, 1.0]))
    mi = Tensor(np.array([1.0, 0.75, 0.5, 0.25]))
    f = Tensor(np.full(4, 0.5))
    i = Tensor(np.full(4, 0.5))
    f_eff, i_eff, omega = structured_gating(f, i, mf, mi, 1, 4)
    np.testing.assert_allclose(omega.data, [0.25, 0.375, 0.375, 0.25])
    np.testing.assert_allclose(f_eff.data, [0.125, 0.3125, 0.5625, 0.875])
    # same law with the roles of the master gates exchanged
    np.testing.assert_allclose(i_eff.data, [0.875, 0.5625, 0.3125, 0.125])


def test_chunk_expansion_repeats_each_master_element():
    mf = Tensor(np.array([0.2, 0.9]))
    mi = Tensor(np.ones(2))
    f = Tensor(np.zeros(6))
    i = Tensor(np.zeros(6))
    f_eff, _, omega = structured_gating(f, i, mf, mi, 3, 6)
    np.testing.assert_allclose(omega.data, [0.2] * 3 + [0.9] * 3)
    # with f=0 the effective gate is mf - omega = mf(1 - mi) = 0 here...
    np.testing.assert_allclose(f_eff.data, 0.0, atol=1e-15)


def test_structured_gating_bad_chunk():
    with pytest.raises(ConfigError):
        structured_gating(Tensor(np.zeros(6)), Tensor(np.zeros(6)),
                          Tensor(np.zeros(2)), Tensor(np.zeros(2)), 4, 6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_structured_gating_bounds(seed):
    # with f,i,mf,mi all in [0,1], the effective gates stay in [0,1]
    r = np.random.default_rng(seed)
    f, i = (Tensor(r.uniform(0, 1, 8)) for _ in range(2))
    mf, mi = (Tensor(r.uniform(0, 1, 4)) for _ in range(2))
    f_eff, i_eff, omega = structured_gating(f, i, mf, mi, 2, 8)
    for g in (f_eff, i_eff, omega):
        assert np.all(g.data >= -1e-12) and np.all(g.data <= 1 + 1e-12)


def test_master_override_full_on_recovers_plain_gates(rng):
    # mf = mi = 1 -> omega = 1 -> f_eff = f, i_eff = i
    f = Tensor(rng.uniform(0, 1, (3, 8)))
    i = Tensor(rng.uniform(0, 1, (3, 8)))
    ones = Tensor(np.ones((3, 4)))
    f_eff, i_eff, _ = structured_gating(f, i, ones, ones, 2, 8)
    np.testing.assert_array_equal(f_eff.data, f.data)
    np.testing.assert_array_equal(i_eff.data, i.data)


# -- master heads -------------------------------------------------------------

def test_parallel_masters_reject_autoregressive(rng):
    cell = ONLSTMCell(rng, cfg())
    x = Tensor(rng.standard_normal((3, 2, 6)))
    with pytest.raises(UsageError):
        master_gates_parallel(x, cell.master_f, cell.master_i)


def test_master_gate_shapes_and_ranges(rng):
    cell = FastTreesCell(rng, cfg())
    x = Tensor(rng.standard_normal((5, 3, 6)))
    mf, mi = master_gates_parallel(x, cell.master_f, cell.master_i)
    assert mf.shape == (5, 3, 2)
    assert np.all(mf.data >= 0) and np.all(mf.data <= 1 + 1e-12)
    assert np.all(np.diff(mf.data, axis=-1) >= -1e-12)   # cumax monotone
    assert np.all(np.diff(mi.data, axis=-1) <= 1e-12)    # 1 - cumax


def test_conv_head_k1_equals_feedforward_depth2(rng):
    """A width-1 causal conv head is the same function family as the
    depth-2 feed-forward head; with copied weights they match bitwise."""
    c = cfg(conv_k=1)
    conv_cell = FastTreesCell(np.random.default_rng(1), c, conv=True)
    ff_cell = FastTreesCell(np.random.default_rng(1), c, conv=False)
    for conv_head, ff_head in ((conv_cell.master_f, ff_cell.master_f),
                               (conv_cell.master_i, ff_cell.master_i)):
        ff_head.l0.W.data = conv_head.kernel.data[0].copy()
        ff_head.l0.b.data = conv_head.bias.data.copy()
        ff_head.l1.W.data = conv_head.l1.W.data.copy()
        ff_head.l1.b.data = conv_head.l1.b.data.copy()
    x = Tensor(np.random.default_rng(2).standard_normal((4, 2, 6)))
    np.testing.assert_array_equal(conv_cell.master_f(x).data,
                                  ff_cell.master_f(x).data)


# -- reduction law ------------------------------------------------------------

def _copy_lstm_core(src, dst):
    for name, p in src.named_parameters().items():
        ref = dst.named_parameters()
        if name in ref and ref[name].shape == p.shape:
            ref[name].data = p.data.copy()


@pytest.mark.parametrize("variant", ["fasttrees", "conv_fasttrees", "faster",
                                     "onlstm"])
def test_masters_forced_on_reduce_to_lstm(variant, rng):
    """Master gates pinned at 1 kill the structured term bit-exactly."""
    c = cfg()
    cell = make_cell(np.random.default_rng(5), variant, c)
    x = Tensor(rng.standard_normal((4, 3, 6)))
    if variant == "faster":
        # no U-matrices: the reduction target is its own gating with omega=1
        ones = np.ones((4, 3, c.d_master))
        h1, _, _ = cell.forward_sequence(x, master_override=(ones, ones))
        f = T.sigmoid(cell.F_f(x)).data
        i = T.sigmoid(cell.F_i(x)).data
        o = T.sigmoid(cell.F_o(x)).data
        z = np.tanh(x.data @ cell.W_c.data + cell.b_c.data)
        ch = np.zeros_like(f[0])
        hs = []
        for t in range(4):
            ch = f[t] * ch + i[t] * z[t]
            hs.append(o[t] * np.tanh(ch))
        np.testing.assert_array_equal(h1.data, np.stack(hs))
        return
    lstm = LSTMCell(np.random.default_rng(5), c)
    _copy_lstm_core(cell, lstm)
    ones = np.ones((4, 3, c.d_master))
    if variant == "onlstm":
        h1, _, _ = cell.forward_sequence(x, master_override=(ones, ones))
    else:
        h1, _, _ = cell.forward_sequence(x, master_override=(ones, ones))
    h0, _, _ = lstm.forward_sequence(x)
    np.testing.assert_array_equal(h1.data, h0.data)


# -- rollout oracle -----------------------------------------------------------

def test_lstm_zero_input_scalar_rollout():
    """Zero inputs, zero init: every gate sits at sigmoid(bias), the
    candidate at tanh(0)=0, so c stays 0 and h stays 0. With a nonzero
    candidate bias the rollout follows the scalar recurrence exactly."""
    c = CellConfig(1, 2, chunk=1)
    cell = LSTMCell(np.random.default_rng(0), c)
    # forget bias is +1, others 0; push a candidate bias to get motion
    cell.b_c.data[:] = 0.5
    x = Tensor(np.zeros((3, 1, 1)))
    h_seq, _, _ = cell.forward_sequence(x)
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    # independent scalar rollout including the U @ h feedback
    Uc = np.concatenate([cell.U_f.data, cell.U_i.data, cell.U_o.data,
                         cell.U_c.data], axis=1)
    bc = np.concatenate([cell.b_f.data, cell.b_i.data, cell.b_o.data,
                         cell.b_c.data])
    h, cst = np.zeros(2), np.zeros(2)
    for t in range(3):
        pre = h @ Uc + bc
        f, i, o = sig(pre[0:2]), sig(pre[2:4]), sig(pre[4:6])
        z = np.tanh(pre[6:8])
        cst = f * cst + i * z
        h = o * np.tanh(cst)
        np.testing.assert_allclose(h_seq.data[t, 0], h, atol=1e-12)


def test_fasttrees_step_matches_sequence(rng):
    """The documented single-step path reproduces the batched sequence."""
    c = cfg()
    cell = FastTreesCell(np.random.default_rng(3), c)
    x = Tensor(rng.standard_normal((4, 2, 6)))
    h_seq, final, _ = cell.forward_sequence(x)
    mf, mi = master_gates_parallel(x, cell.master_f, cell.master_i)
    st = CellState(Tensor(np.zeros((2, 8))), Tensor(np.zeros((2, 8))))
    for t in range(4):
        st = cell.step(x[t], st, mf[t], mi[t])
        np.testing.assert_allclose(st.h.data, h_seq.data[t], atol=1e-12)
    np.testing.assert_allclose(st.c.data, final.c.data, atol=1e-12)


def test_faster_fused_equals_naive(rng):
    cell = FasterCell(np.random.default_rng(4), cfg())
    x = Tensor(rng.standard_normal((6, 3, 6)))
    h_fused, _, _ = cell.forward_sequence(x, fused=True)
    h_naive, _, _ = cell.forward_sequence(x, fused=False)
    np.testing.assert_array_equal(h_fused.data, h_naive.data)


def test_faster_fused_equals_naive_gradients(rng):
    x_data = rng.standard_normal((5, 2, 6))
    grads = []
    for fused in (True, False):
        cell = FasterCell(np.random.default_rng(4), cfg())
        h, _, _ = cell.forward_sequence(Tensor(x_data), fused=fused)
        T.tsum(h * h).backward()
        grads.append({k: p.grad.copy() for k, p in
                      cell.named_parameters().items()})
    # the fused kernel reorders gradient accumulation, so agreement is to
    # float reordering noise rather than bit-exact (values stay bit-exact)
    for k in grads[0]:
        np.testing.assert_allclose(grads[0][k], grads[1][k],
                                   rtol=1e-10, atol=1e-12)


def test_faster_rejects_carried_state(rng):
    cell = FasterCell(rng, cfg())
    x = Tensor(rng.standard_normal((2, 1, 6)))
    carried = CellState(Tensor(np.ones((1, 8))), Tensor(np.ones((1, 8))))
    with pytest.raises(UsageError):
        cell.forward_sequence(x, state=carried)


def test_lstm_trace_rejected(rng):
    cell = LSTMCell(rng, cfg())
    with pytest.raises(UsageError):
        cell.forward_sequence(Tensor(np.zeros((2, 1, 6))), trace=True)


def test_empty_sequence(rng):
    cell = FastTreesCell(rng, cfg())
    h, st, tr = cell.forward_sequence(Tensor(np.zeros((0, 3, 6))))
    assert h.shape == (0, 3, 8)
    assert tr is None


def test_nan_state_aborts(rng):
    cell = LSTMCell(rng, cfg())
    x = Tensor(np.full((2, 1, 6), np.nan))
    with pytest.raises(NumericError):
        cell.forward_sequence(x)


# -- gradients ----------------------------------------------------------------

@pytest.mark.parametrize("variant", VARIANTS)
def test_cell_gradcheck(variant, rng):
    c = CellConfig(5, 8, chunk=4, conv_k=2)
    cell = make_cell(np.random.default_rng(7), variant, c)
    x = Tensor(rng.standard_normal((5, 2, 5)), requires_grad=True)
    params = [x] + cell.parameters()

    def loss():
        h, _, _ = cell.forward_sequence(x)
        return T.tsum(h * h)

    assert grad_check(loss, params) < 1e-4


def test_gate_trace_shapes_and_omega(rng):
    cell = FastTreesCell(rng, cfg())
    x = Tensor(rng.standard_normal((4, 3, 6)))
    _, _, tr = cell.forward_sequence(x, trace=True)
    assert isinstance(tr, GateTrace)
    assert tr.mf.shape == (4, 3, 2)
    np.testing.assert_allclose(tr.omega, tr.mf * tr.mi)


# -- stacked encoder ----------------------------------------------------------

def test_stacked_encoder_shapes(rng):
    enc = StackedEncoder(rng, "fasttrees", 6, 8, n_layers=2, chunk=4)
    x = Tensor(rng.standard_normal((5, 3, 6)))
    h, final, tr = enc(x, trace_layer=1)
    assert h.shape == (5, 3, 8)
    assert tr.mf.shape == (5, 3, 2)


def test_stacked_encoder_trace_requires_master(rng):
    enc = StackedEncoder(rng, "lstm", 6, 8, chunk=4)
    with pytest.raises(UsageError):
        enc(Tensor(np.zeros((2, 1, 6))), trace_layer=0)


def test_cell_config_validation():
    with pytest.raises(ConfigError):
        CellConfig(4, 10, chunk=4)
    with pytest.raises(ConfigError):
        CellConfig(4, 8, chunk=4, master_depth=3)
    with pytest.raises(ConfigError):
        CellConfig(4, 8, chunk=4, conv_k=600, max_len=512)
