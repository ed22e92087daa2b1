"""End-to-end acceptance suite.

Each test here checks one release criterion at its stated tolerance. The
cheap criteria (gradients, reduction law, cumax properties, oracle
equivalence, tree pipeline, determinism) run in a few minutes combined.
The two training criteria and the speed benchmark are genuinely heavy on a
single CPU core: the logic-training test alone is budgeted at up to two
hours, and the arithmetic smoke test at tens of minutes. Run
``pytest tests/test_acceptance.py -v`` on an otherwise idle machine.

Every assertion is against behavior measured in this process; nothing is
hard-coded from previous runs except the frozen training budgets, which
are documented inline.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from fasttrees import tensor as T
from fasttrees.bench import bench, encoder_params, match_hidden
from fasttrees.cells import (CellConfig, LSTMCell, StackedEncoder, make_cell)
from fasttrees.config import resolve_config
from fasttrees.logic import (FULL, SentenceSampler, denotation,
                             generate_logic_dataset, read_pairs, relation_of,
                             relation_truth_table, surface)
from fasttrees.arith import generate_arithmetic_dataset
from fasttrees.optim import grad_check
from fasttrees.tensor import Tensor, tsum
from fasttrees.train import _build_model, evaluate, save_model, train, viz
from fasttrees.transformer import (DecoderBlock, EncoderBlock,
                                   Seq2SeqTransformer, causal_mask,
                                   padding_mask)
from fasttrees.trees import (Tree, bracket_f1, greedy_tree, leaf, node,
                             render_sexpr, tree_spans)
from fasttrees.data import Vocab, tokenize_words


# ---------------------------------------------------------------------------
# 1. Gradient suite: every differentiable op and every full cell/block passes
#    finite-difference checks at rel. err < 1e-4 (double precision, seq len
#    <= 6, dims <= 16); whole suite under 2 minutes.
# ---------------------------------------------------------------------------

def _leaf(rng, *shape, scale=1.0):
    t = Tensor(rng.standard_normal(shape) * scale)
    t.requires_grad = True
    return t


def test_criterion_1_gradient_suite(rng):
    t_start = time.perf_counter()
    worst: dict[str, float] = {}

    def check(name, f, params, h=1e-5):
        worst[name] = grad_check(f, params, h=h)

    a = _leaf(rng, 3, 4)
    b = _leaf(rng, 3, 4)
    c = _leaf(rng, 4)  # broadcast partner
    check("add", lambda: tsum((a + b) * (a + b)), [a, b])
    check("sub", lambda: tsum((a - b) * (a - b)), [a, b])
    check("mul", lambda: tsum((a * b) * (a * b)), [a, b])
    check("div", lambda: tsum((a / (b * b + 1.0)) * (a / (b * b + 1.0))),
          [a, b])
    check("broadcast", lambda: tsum((a + c) * (a + c)), [a, c])
    for name, fn in [("sigmoid", T.sigmoid), ("tanh", T.tanh),
                     ("relu", T.relu), ("exp", T.texp)]:
        check(name, lambda fn=fn: tsum(fn(a) * fn(a)), [a])
    pos = _leaf(rng, 3, 4)
    pos.data = np.abs(pos.data) + 0.5
    check("log", lambda: tsum(T.tlog(pos) * T.tlog(pos)), [pos])
    check("sqrt", lambda: tsum(T.tsqrt(pos) * T.tsqrt(pos)), [pos])
    check("sum_axis", lambda: tsum(tsum(a, axis=0) * tsum(a, axis=0)), [a])
    check("mean", lambda: tsum(T.tmean(a, axis=1) * T.tmean(a, axis=1)), [a])
    check("reshape", lambda: tsum(T.reshape(a, 4, 3) * T.reshape(a, 4, 3)),
          [a])
    check("swapaxes", lambda: tsum(T.swapaxes(a, 0, 1) * T.swapaxes(a, 0, 1)),
          [a])
    check("getitem", lambda: tsum(a[1] * a[1]), [a])
    check("concat", lambda: tsum(T.concat([a, b], axis=1) *
                                 T.concat([a, b], axis=1)), [a, b])
    check("stack", lambda: tsum(T.stack([a, b]) * T.stack([a, b])), [a, b])
    check("repeat_last", lambda: tsum(T.repeat_last(a, 3) *
                                      T.repeat_last(a, 3)), [a])
    m1 = _leaf(rng, 3, 4)
    m2 = _leaf(rng, 4, 5)
    check("matmul", lambda: tsum((m1 @ m2) * (m1 @ m2)), [m1, m2])
    b1 = _leaf(rng, 2, 3, 4)
    check("matmul_batched", lambda: tsum((b1 @ m2) * (b1 @ m2)), [b1, m2])
    check("softmax", lambda: tsum(T.softmax(a) * T.softmax(a)), [a])
    check("cumsum", lambda: tsum(T.cumsum(a) * T.cumsum(a)), [a])
    check("cumax", lambda: tsum(T.cumax(a) * T.cumax(a)), [a])
    tbl = _leaf(rng, 7, 4)
    ids = np.array([[0, 3, 6], [2, 2, 5]])
    check("embedding", lambda: tsum(T.embedding_lookup(tbl, ids) *
                                    T.embedding_lookup(tbl, ids)), [tbl])
    lg = _leaf(rng, 5, 6)
    tg = np.array([0, 2, 5, 1, 3])
    check("cross_entropy", lambda: T.cross_entropy(lg, tg), [lg])
    xk = _leaf(rng, 4, 3, 5)
    ker = _leaf(rng, 2, 5, 6, scale=0.5)
    kb = _leaf(rng, 6, scale=0.1)
    check("causal_conv1d", lambda: tsum(T.causal_conv1d(xk, ker, kb) *
                                        T.causal_conv1d(xk, ker, kb)),
          [xk, ker, kb])
    sf = Tensor(1.0 / (1.0 + np.exp(-rng.standard_normal((5, 2, 3)))))
    si = Tensor(1.0 / (1.0 + np.exp(-rng.standard_normal((5, 2, 3)))))
    sz = _leaf(rng, 5, 2, 3)
    sf.requires_grad = si.requires_grad = True
    check("ewise_scan", lambda: tsum(T.ewise_scan(sf, si, sz) *
                                     T.ewise_scan(sf, si, sz)), [sf, si, sz])
    ls = _leaf(rng, 6)
    lo = _leaf(rng, 6)
    lx = _leaf(rng, 4, 6)
    check("layer_norm", lambda: tsum(T.layer_norm(lx, ls, lo) *
                                     T.layer_norm(lx, ls, lo)), [lx, ls, lo])

    # full recurrent cells (L=5 <= 6, dims <= 16)
    for variant in ("lstm", "onlstm", "fasttrees", "conv_fasttrees",
                    "faster"):
        cell = make_cell(np.random.default_rng(3), variant,
                         CellConfig(6, 8, chunk=4))
        x = _leaf(rng, 5, 2, 6)

        def loss(cell=cell, x=x):
            h, _, _ = cell.forward_sequence(x)
            return tsum(h * h)
        check(f"cell:{variant}", loss, list(cell.parameters()) + [x])

    # transformer blocks, gated and vanilla; larger finite-difference steps
    # keep roundoff below tolerance through the deeper compositions
    for gated in (True, False):
        blk = EncoderBlock(np.random.default_rng(4), 6, 2, 8, gated=gated)
        bx = _leaf(rng, 2, 4, 6)
        check(f"encoder_block:gated={gated}",
              lambda blk=blk, bx=bx: tsum(blk(bx) * blk(bx)) * 0.01,
              list(blk.parameters()) + [bx], h=1e-4)
    dec = DecoderBlock(np.random.default_rng(5), 6, 2, 8, gated=True)
    dx = _leaf(rng, 2, 3, 6)
    mem = _leaf(rng, 2, 4, 6)
    cm = causal_mask(3)
    check("decoder_block",
          lambda: tsum(dec(dx, mem, cm, None) * dec(dx, mem, cm, None))
          * 0.01,
          list(dec.parameters()) + [dx, mem], h=1e-4)
    tr = Seq2SeqTransformer(np.random.default_rng(6), 7, 7, d_model=6,
                            n_heads=2, n_layers=1, d_ff=8, gated=True,
                            max_len=8)
    src = np.array([[1, 4, 2, 0], [3, 5, 0, 0]])
    tin = np.array([[1, 2, 6], [1, 3, 0]])
    tout = np.array([[2, 6, 0], [3, 0, 0]])

    def tr_loss():
        logits = tr.forward(src, tin)
        v = logits.shape[-1]
        return T.cross_entropy(T.reshape(logits, -1, v), tout.reshape(-1))
    check("seq2seq_transformer", tr_loss, list(tr.parameters()), h=3e-4)

    elapsed = time.perf_counter() - t_start
    bad = {k: v for k, v in worst.items() if not v < 1e-4}
    assert not bad, f"gradient checks above 1e-4: {bad}"
    assert elapsed < 120.0, f"gradient suite took {elapsed:.1f}s (>120s)"


# ---------------------------------------------------------------------------
# 2. Reduction law: with master gates forced to all-ones, FastTrees and
#    ON-LSTM sequence outputs match a vanilla LSTM bit-exactly on 100 random
#    configurations.
# ---------------------------------------------------------------------------

def test_criterion_2_reduction_law():
    meta = np.random.default_rng(20)
    for case in range(100):
        chunk = int(meta.choice([1, 2, 4]))
        d_hidden = chunk * int(meta.integers(1, 16 // chunk + 1))
        d_in = int(meta.integers(1, 11))
        L = int(meta.integers(1, 7))
        B = int(meta.integers(1, 5))
        variant = ("fasttrees", "onlstm")[case % 2]
        cfg = CellConfig(d_in, d_hidden, chunk=chunk)
        cell = make_cell(np.random.default_rng(1000 + case), variant, cfg)
        lstm = LSTMCell(np.random.default_rng(2000 + case), cfg)
        shared = lstm.named_parameters()
        for name, p in cell.named_parameters().items():
            if name in shared and shared[name].shape == p.shape:
                shared[name].data = p.data.copy()
        x = Tensor(meta.standard_normal((L, B, d_in)))
        ones = np.ones((L, B, cfg.d_master))
        h_cell, _, _ = cell.forward_sequence(x, master_override=(ones, ones))
        h_lstm, _, _ = lstm.forward_sequence(x)
        np.testing.assert_array_equal(
            h_cell.data, h_lstm.data,
            err_msg=f"config {case}: {variant} d_in={d_in} "
                    f"d_hidden={d_hidden} chunk={chunk} L={L} B={B}")


# ---------------------------------------------------------------------------
# 3. cumax property suite: monotonicity, range, terminal-1 across 1e5 random
#    rows including +/-50 logits; zero failures.
# ---------------------------------------------------------------------------

def test_criterion_3_cumax_properties(rng):
    n, d = 100_000, 9
    z = rng.standard_normal((n, d)) * 3.0
    z[:2000] = rng.choice([-50.0, 50.0], size=(2000, d))     # saturated
    z[2000:4000] *= 50.0 / 3.0                               # wide spread
    z[4000, :] = 50.0
    z[4001, :] = -50.0
    y = T.cumax(Tensor(z)).data
    diffs = np.diff(y, axis=1)
    assert int((diffs < 0).sum()) == 0, "cumax not monotone"
    assert int((y < 0).sum()) == 0, "cumax below 0"
    assert int((y > 1.0 + 1e-12).sum()) == 0, "cumax above 1"
    assert int((np.abs(y[:, -1] - 1.0) > 1e-9).sum()) == 0, \
        "cumax terminal element != 1"


# ---------------------------------------------------------------------------
# 4. Logic oracle equivalence: generator labels agree 100% with the
#    independent truth-table oracle on 1e5 random pairs, and exactly one of
#    the seven relation conditions holds on every pair.
# ---------------------------------------------------------------------------

def test_criterion_4_logic_oracle_equivalence():
    sampler = SentenceSampler(6)
    rng = np.random.default_rng(4)
    n_pairs = 100_000
    mismatches = 0
    for k in range(n_pairs):
        s1 = sampler.sample(rng, int(rng.integers(0, 7)))
        s2 = sampler.sample(rng, int(rng.integers(0, 7)))
        label = relation_of(s1, s2)
        if label != relation_truth_table(s1, s2):
            mismatches += 1
        # relation exclusivity on non-degenerate denotations (the domain
        # where the seven set-theoretic relations are defined)
        d1, d2 = denotation(s1), denotation(s2)
        if d1 in (0, FULL) or d2 in (0, FULL):
            continue
        inter, union = d1 & d2, d1 | d2
        conds = [d1 == d2,                                        # equivalent
                 d1 != d2 and inter == d1,                        # forward
                 d1 != d2 and inter == d2,                        # reverse
                 inter == 0 and union == FULL,                    # exh. contr.
                 inter == 0 and union != FULL,                    # contr.
                 inter != 0 and union == FULL
                 and inter not in (d1, d2),                       # cover
                 inter != 0 and union != FULL
                 and inter not in (d1, d2)]                       # independent
        assert sum(conds) == 1, \
            f"pair {k}: relations not exclusive ({surface(s1)!r}, " \
            f"{surface(s2)!r})"
    assert mismatches == 0, f"{mismatches}/{n_pairs} oracle disagreements"


# ---------------------------------------------------------------------------
# 5. Desk-scale logic training: FastTrees (d_hidden=400, emb=128) reaches
#    >= 90% test accuracy on lengths <= 6 within 30 epochs and beats a
#    vanilla LSTM trained identically on length 12. Budget: < 2h CPU.
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def logic_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("logic_data")
    generate_logic_dataset(out, per_length=4000, max_train_len=6,
                           max_eval_len=12, seed=0)
    return out


def _short_len_accuracy(report: dict) -> float:
    per = report["accuracy_per_length"]
    keys = [k for k in per if int(k) <= 6]
    return float(np.mean([per[k] for k in keys]))


def test_criterion_5_logic_training(logic_corpus, tmp_path):
    t0 = time.perf_counter()
    reports = {}
    for variant in ("fasttrees", "lstm"):
        cfg = resolve_config({
            "task": "logic",
            "data_dir": str(logic_corpus),
            "run_dir": str(tmp_path / variant),
            "model": {"variant": variant, "d_emb": 128, "d_hidden": 400},
            "optimizer": {"plateau_patience": 4},
            "training": {"epochs": 30},
        })
        out = train(cfg)
        reports[variant] = evaluate(out["checkpoint"], "test",
                                    per_length=True)
    elapsed = time.perf_counter() - t0
    ft_short = _short_len_accuracy(reports["fasttrees"])
    ft_12 = reports["fasttrees"]["accuracy_per_length"]["12"]
    lstm_12 = reports["lstm"]["accuracy_per_length"]["12"]
    assert ft_short >= 0.90, \
        f"fasttrees length<=6 test accuracy {ft_short:.3f} < 0.90"
    assert ft_12 > lstm_12, \
        f"length-12 accuracy: fasttrees {ft_12:.3f} <= lstm {lstm_12:.3f}"
    assert elapsed < 7200, f"training took {elapsed / 3600:.2f}h (>2h)"


# ---------------------------------------------------------------------------
# 6. Speed ordering at d_hidden=400, batch=128, len=35.
#
#    Two protocols are measured. With every variant held at the same
#    dimensions (parameter gaps reported per row), the orderings
#    faster < fasttrees < onlstm and lstm < onlstm hold robustly. With
#    parameter counts matched within 1% by adjusting d_hidden, this suite
#    reports the margin honestly: on a single CPU core, batched and
#    per-step GEMMs at these sizes run at the same throughput, so equal
#    parameters mean equal FLOPs and the architectural advantage reduces
#    to per-step call overhead. Measured across chunk settings that is
#    4-8%, short of the required 10%; the matched-params test below is
#    therefore expected to fail and does so with the measured numbers.
#    chunk=1 is used because it is the one setting where fasttrees and
#    onlstm match parameters within 1% at identical dimensions (0.06% gap).
# ---------------------------------------------------------------------------

def test_criterion_6_speed_ordering_equal_dims():
    report = bench(["lstm", "onlstm", "fasttrees", "faster"], d_emb=128,
                   d_hidden=400, batch=128, length=35, reps=7, chunk=1,
                   matching="dims", threads=1)
    med = {v: r["median_seconds"] for v, r in report["variants"].items()}
    assert med["faster"] < med["fasttrees"], med
    assert med["fasttrees"] < med["onlstm"], med
    assert med["lstm"] < med["onlstm"], med


def test_criterion_6_speed_margin_matched_params():
    report = bench(["onlstm", "fasttrees", "faster"], d_emb=128,
                   d_hidden=400, batch=128, length=35, reps=7, chunk=1,
                   matching="params", base="onlstm", threads=1)
    rows = report["variants"]
    for v in ("fasttrees", "faster"):
        assert rows[v]["param_gap"] <= 0.01, \
            f"{v} not parameter-matched: {rows[v]}"
    med = {v: r["median_seconds"] for v, r in rows.items()}
    margin = (med["onlstm"] - med["fasttrees"]) / med["onlstm"]
    failures = []
    if not med["faster"] < med["fasttrees"]:
        failures.append(
            f"faster ({med['faster']:.3f}s, d_hidden="
            f"{rows['faster']['d_hidden']}) is not faster than fasttrees "
            f"({med['fasttrees']:.3f}s) at matched parameters: equal "
            f"parameters mean equal GEMM FLOPs, and the fused cell's "
            f"elementwise volume grows with its inflated d_hidden")
    if not margin >= 0.10:
        failures.append(
            f"fasttrees is {margin * 100:.1f}% faster than onlstm at "
            f"matched parameters (+/-1%), below the 10% target; on a "
            f"single CPU core batched and per-step GEMMs at these sizes "
            f"run at equal throughput, so the advantage reduces to "
            f"per-step overhead (see README, acceptance status)")
    if failures:
        pytest.fail("; ".join(failures))


# ---------------------------------------------------------------------------
# 7. Tree pipeline: bracket_f1 vs a brute-force span oracle on 1k random tree
#    pairs; greedy_tree closed forms on monotone distances; side-by-side
#    rendering on 10 held-out sentences end to end.
# ---------------------------------------------------------------------------

def _random_tree(rng, tokens: list[str]) -> Tree:
    nodes = [leaf(t) for t in tokens]
    while len(nodes) > 1:
        i = int(rng.integers(0, len(nodes) - 1))
        nodes[i:i + 2] = [node(nodes[i], nodes[i + 1])]
    return nodes[0]


def _oracle_spans(tree: Tree) -> set:
    spans = []

    def walk(t, start):
        if t.is_leaf:
            return start + 1
        end = start
        for ch in t.children:
            end = walk(ch, end)
        spans.append((start, end))
        return end

    walk(tree, 0)
    full = (0, len(tree.leaves()))
    return {s for s in spans if s != full}


def test_criterion_7_bracket_f1_oracle():
    rng = np.random.default_rng(7)
    for case in range(1000):
        k = int(rng.integers(2, 11))
        tokens = [f"w{j}" for j in range(k)]
        pred = _random_tree(rng, tokens)
        gold = _random_tree(rng, tokens)
        p, r, f1 = bracket_f1(pred, gold)
        ps, gs = _oracle_spans(pred), _oracle_spans(gold)
        hit = len(ps & gs)
        p_ref = hit / len(ps) if ps else 1.0
        r_ref = hit / len(gs) if gs else 1.0
        f_ref = (2 * p_ref * r_ref / (p_ref + r_ref)
                 if p_ref + r_ref else 0.0)
        assert (p, r, f1) == pytest.approx((p_ref, r_ref, f_ref)), \
            f"case {case}"


def test_criterion_7_greedy_tree_closed_forms():
    for n in range(2, 13):
        toks = [f"t{j}" for j in range(n)]
        inc = greedy_tree(list(range(1, n + 1)), toks)
        dec = greedy_tree(list(range(n, 0, -1)), toks)
        # strictly increasing distances -> fully left-branching
        want_left = leaf(toks[0])
        for t in toks[1:]:
            want_left = node(want_left, leaf(t))
        # strictly decreasing distances -> fully right-branching
        want_right = leaf(toks[-1])
        for t in reversed(toks[:-1]):
            want_right = node(leaf(t), want_right)
        assert inc == want_left, f"n={n} increasing"
        assert dec == want_right, f"n={n} decreasing"


def test_criterion_7_side_by_side_rendering(tmp_path):
    corpus = tmp_path / "mini"
    generate_logic_dataset(corpus, per_length=24, max_train_len=4,
                           max_eval_len=4, seed=1)
    held_out = [s1 for s1, s2, _ in read_pairs(corpus / "test.tsv")][:10]
    assert len(held_out) == 10
    cfg = resolve_config({
        "task": "logic", "data_dir": str(corpus),
        "run_dir": str(tmp_path / "run"),
        "model": {"variant": "fasttrees", "d_emb": 8, "d_hidden": 8,
                  "chunk": 2},
    })
    vocab = Vocab.build(tokenize_words(s) for s in held_out)
    model = _build_model(cfg, vocab)
    ckpt = tmp_path / "run" / "model.ckpt"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_model(ckpt, model, cfg, vocab, {"epoch": 0})
    gold_path = tmp_path / "gold.txt"
    gold_lines = []
    for s in held_out:
        # parentheses are vocabulary tokens but not legal s-expression
        # leaves; the gold trees span the word tokens only
        toks = [t for t in tokenize_words(s) if t not in "()"]
        t = leaf(toks[0])
        for tok in toks[1:]:
            t = node(t, leaf(tok))
        gold_lines.append(render_sexpr(t))
    gold_path.write_text("\n".join(gold_lines) + "\n")
    out = viz(ckpt, held_out, fmt="ascii", gold_path=gold_path)
    blocks = out.split("\n\n")
    assert len(blocks) == 10
    for blk in blocks:
        assert "induced:" in blk and "gold:" in blk and "bracket F1:" in blk


# ---------------------------------------------------------------------------
# 8. Arithmetic transduction smoke: gated Transformer (2 layers, d_model=128)
#    reaches >= 90% sequence accuracy on 2-digit addition/subtraction within
#    20k steps, and does not underperform an identically-sized vanilla block
#    by more than 2%.
# ---------------------------------------------------------------------------

ARITH_MAX_STEPS = 4000  # frozen budget; both models train identically


@pytest.fixture(scope="session")
def arith_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("arith_data")
    generate_arithmetic_dataset(out, digit_range=(1, 2), ops=("+", "-"),
                                count=12000, seed=0)
    return out


def test_criterion_8_arithmetic_smoke(arith_corpus, tmp_path):
    assert ARITH_MAX_STEPS <= 20_000
    accs = {}
    for gated in (True, False):
        name = "gated" if gated else "vanilla"
        cfg = resolve_config({
            "task": "arithmetic",
            "data_dir": str(arith_corpus),
            "run_dir": str(tmp_path / name),
            "model": {"d_model": 128, "n_layers": 2, "gated": gated},
            "training": {"epochs": 0, "max_steps": ARITH_MAX_STEPS},
        })
        accs[name] = train(cfg)["best_sequence_accuracy"]
    assert accs["gated"] >= 0.90, \
        f"gated sequence accuracy {accs['gated']:.3f} < 0.90"
    assert accs["gated"] >= accs["vanilla"] - 0.02, \
        f"gated {accs['gated']:.3f} underperforms vanilla " \
        f"{accs['vanilla']:.3f} by more than 2%"


# ---------------------------------------------------------------------------
# 9. Determinism: two single-threaded runs from one config + seed produce
#    byte-identical metrics streams.
# ---------------------------------------------------------------------------

def test_criterion_9_determinism(tmp_path):
    corpus = tmp_path / "data"
    generate_logic_dataset(corpus, per_length=40, max_train_len=4,
                           max_eval_len=4, seed=2)
    streams = []
    for run in ("a", "b"):
        cfg = resolve_config({
            "task": "logic", "data_dir": str(corpus),
            "run_dir": str(tmp_path / run),
            "model": {"variant": "fasttrees", "d_emb": 16, "d_hidden": 16,
                      "chunk": 4},
            "training": {"epochs": 2, "batch_size": 32},
        })
        with threadpool_limits(limits=1):
            train(cfg)
        streams.append((tmp_path / run / "metrics.jsonl").read_bytes())
    assert streams[0] == streams[1], "metrics streams differ between runs"
