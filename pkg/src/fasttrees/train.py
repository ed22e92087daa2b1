"""Training, evaluation, and parse-extraction entry points.

Every run directory receives: config.resolved.json, metrics.jsonl
(deterministic fields only), timings.jsonl (wall-clock, optional),
last.ckpt and best.ckpt.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import tensor as T
from .arith import OPS
from .checkpoint import load_checkpoint, load_into, save_checkpoint
from .config import derive_rng, echo_config
from .data import (Vocab, batch_pairs, batch_seq2seq, tokenize_chars,
                   tokenize_words)
from .errors import ConfigError, DataError, NumericError, UsageError
from .logic import RELATIONS, pair_length, read_pairs
from .models import RNNLanguageModel, SequenceClassifier
from .optim import Adam, ReduceOnPlateau, SGD, clip_global_norm
from .transformer import Seq2SeqTransformer
from .trees import (Tree, corpus_bracket_f1, greedy_tree, label_accuracy,
                    parse_sexpr, render_tree, strip_punct, syntactic_distance,
                    bracket_f1)


class MetricsWriter:
    """Append-only JSONL; deterministic fields and wall-clock kept apart so a
    fixed seed reproduces metrics.jsonl byte for byte."""

    def __init__(self, run_dir: Path, record_timing: bool = True,
                 append: bool = False):
        self.metrics_path = run_dir / "metrics.jsonl"
        self.timings_path = run_dir / "timings.jsonl"
        self.record_timing = record_timing
        if not append:
            self.metrics_path.write_text("")
            if record_timing:
                self.timings_path.write_text("")

    def write(self, record: dict, timing: dict | None = None) -> None:
        with open(self.metrics_path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        if timing and self.record_timing:
            with open(self.timings_path, "a") as fh:
                fh.write(json.dumps({**record, **timing}, sort_keys=True)
                         + "\n")


def _apply_precision(cfg: dict) -> None:
    T.set_default_dtype(np.float32 if cfg["training"]["precision"] ==
                        "float32" else np.float64)


def _make_optimizer(cfg: dict, params):
    opt_cfg = cfg["optimizer"]
    if opt_cfg["algo"] == "sgd":
        return SGD(params, lr=opt_cfg["lr"])
    return Adam(params, lr=opt_cfg["lr"])


def _round(x: float, places: int = 6) -> float:
    return float(np.format_float_positional(x, places, unique=False))


# -- checkpoint plumbing -----------------------------------------------------

def save_model(path, model, cfg: dict, vocab: Vocab, extra: dict | None = None,
               opt=None):
    meta = {"config": cfg, "vocab": vocab.to_json(), **(extra or {})}
    named = model.named_parameters()
    tensors = dict(named)
    if isinstance(opt, Adam):
        meta["opt_step_count"] = opt.step_count
        meta["opt_lr"] = opt.lr
        for name, m, v in zip(named, opt.m, opt.v):
            tensors[f"__opt_m__.{name}"] = m
            tensors[f"__opt_v__.{name}"] = v
    save_checkpoint(path, tensors, meta)


def _restore_optimizer(opt, arrays: dict, meta: dict, named: dict) -> None:
    if not isinstance(opt, Adam) or "opt_step_count" not in meta:
        return
    opt.step_count = meta["opt_step_count"]
    opt.lr = meta["opt_lr"]
    for i, name in enumerate(named):
        opt.m[i][...] = arrays[f"__opt_m__.{name}"]
        opt.v[i][...] = arrays[f"__opt_v__.{name}"]


def build_model_from_meta(meta: dict):
    cfg = meta["config"]
    _apply_precision(cfg)
    vocab = Vocab.from_json(meta["vocab"])
    rng = derive_rng(cfg["training"]["seed"], "init")
    model = _build_model(cfg, vocab)
    return model, vocab, cfg, rng


def _build_model(cfg: dict, vocab: Vocab):
    m = cfg["model"]
    task = cfg["task"]
    rng = derive_rng(cfg["training"]["seed"], "init")
    if task == "logic":
        return SequenceClassifier(
            rng, len(vocab), len(RELATIONS), m["variant"], d_emb=m["d_emb"],
            d_hidden=m["d_hidden"], n_layers=m["n_layers"],
            dropout=m["dropout"], chunk=m["chunk"],
            master_depth=m["master_depth"], conv_k=m["conv_k"],
            twin=m["twin"], mlp_hidden=m["mlp_hidden"], max_len=m["max_len"])
    if task == "lm":
        return RNNLanguageModel(
            rng, len(vocab), m["variant"], d_emb=m["d_emb"],
            d_hidden=m["d_hidden"], n_layers=m["n_layers"],
            dropout=m["dropout"], chunk=m["chunk"],
            master_depth=m["master_depth"], conv_k=m["conv_k"],
            max_len=m["max_len"])
    if task == "arithmetic":
        if m["variant"] != "transformer":
            raise ConfigError("arithmetic task runs on the transformer "
                              "variant")
        return Seq2SeqTransformer(
            rng, len(vocab), len(vocab), d_model=m["d_model"],
            n_heads=m["n_heads"], n_layers=m["n_layers"], d_ff=m["d_ff"],
            gated=m["gated"], decoder_gate=m["decoder_gate"],
            conv_gate=m["conv_gate"],
            literal_scaling=m["paper_literal_attention"],
            max_len=m["max_len"])
    raise ConfigError(f"task {task!r} is not trainable")


def load_model(ckpt_path):
    arrays, meta = load_checkpoint(ckpt_path)
    model, vocab, cfg, _ = build_model_from_meta(meta)
    for name, p in model.named_parameters().items():
        if name not in arrays:
            raise DataError(f"checkpoint missing tensor {name!r}")
        if tuple(arrays[name].shape) != tuple(p.shape):
            raise DataError(f"checkpoint tensor {name}: shape "
                            f"{arrays[name].shape} vs expected {p.shape}")
        p.data = arrays[name].astype(p.data.dtype)
    return model, vocab, cfg, meta


# -- logic task ---------------------------------------------------------------

def _encode_logic(pairs, vocab: Vocab):
    label_ids = {rel: i for i, rel in enumerate(RELATIONS)}
    out = []
    for s1, s2, rel in pairs:
        if rel not in label_ids:
            raise DataError(f"unknown relation symbol {rel!r}")
        out.append((vocab.encode(tokenize_words(s1)),
                    vocab.encode(tokenize_words(s2)), label_ids[rel]))
    return out


def _classifier_accuracy(model, batches) -> tuple[float, float]:
    total = correct = 0
    loss_sum = 0.0
    with T.no_grad():
        for batch in batches:
            logits = model.forward(batch, train=False)
            loss = T.cross_entropy(logits, batch.labels)
            loss_sum += loss.item() * batch.size
            correct += int((logits.data.argmax(axis=1) ==
                            batch.labels).sum())
            total += batch.size
    return correct / max(total, 1), loss_sum / max(total, 1)


def train_logic(cfg: dict, resume: bool = False) -> dict:
    _apply_precision(cfg)
    data_dir = Path(cfg["data_dir"])
    run_dir = Path(cfg["run_dir"])
    run_dir.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, run_dir)
    tr_cfg = cfg["training"]
    seed = tr_cfg["seed"]

    train_pairs = read_pairs(data_dir / "train.tsv")
    valid_pairs = read_pairs(data_dir / "valid.tsv")
    vocab = Vocab.build(tokenize_words(s) for s1, s2, _ in train_pairs
                        for s in (s1, s2))
    train_enc = _encode_logic(train_pairs, vocab)
    valid_enc = _encode_logic(valid_pairs, vocab)
    valid_batches = batch_pairs(valid_enc, tr_cfg["batch_size"],
                                tr_cfg["bucket_width"])

    model = _build_model(cfg, vocab)
    opt = _make_optimizer(cfg, model.parameters())
    sched = ReduceOnPlateau(opt, factor=cfg["optimizer"]["plateau_factor"],
                            patience=cfg["optimizer"]["plateau_patience"],
                            mode="max")
    start_epoch = 0
    if resume:
        arrays, meta = load_checkpoint(run_dir / "last.ckpt")
        named = model.named_parameters()
        for name, p in named.items():
            p.data = arrays[name].astype(p.data.dtype)
        _restore_optimizer(opt, arrays, meta, named)
        start_epoch = meta["epoch"] + 1
    writer = MetricsWriter(run_dir, tr_cfg["record_timing"], append=resume)
    best_acc, bad_epochs = -1.0, 0
    # one optimizer step per batch; recompute the step counter on resume so
    # rng derivation stays aligned with the uninterrupted run
    step = opt.step_count if isinstance(opt, Adam) else 0
    for epoch in range(start_epoch, tr_cfg["epochs"]):
        t0 = time.perf_counter()
        shuffle_rng = derive_rng(seed, "shuffle", epoch)
        batches = batch_pairs(train_enc, tr_cfg["batch_size"],
                              tr_cfg["bucket_width"], shuffle_rng)
        loss_sum = tokens = correct = count = 0
        for batch in batches:
            drop_rng = derive_rng(seed, "dropout", step)
            logits = model.forward(batch, train=True, rng=drop_rng)
            loss = T.cross_entropy(logits, batch.labels)
            if not np.isfinite(loss.item()):
                raise NumericError(f"non-finite loss at step {step}; "
                                   f"last good checkpoint kept in {run_dir}")
            opt.zero_grad()
            loss.backward()
            clip_global_norm(model.parameters(), cfg["optimizer"]["clip"])
            opt.step()
            loss_sum += loss.item() * batch.size
            correct += int((logits.data.argmax(axis=1) == batch.labels).sum())
            count += batch.size
            tokens += int(batch.lengths1.sum() + batch.lengths2.sum())
            step += 1
            if tr_cfg["max_steps"] and step >= tr_cfg["max_steps"]:
                break
        wall = time.perf_counter() - t0
        writer.write({"step": step, "epoch": epoch, "split": "train",
                      "loss": _round(loss_sum / max(count, 1)),
                      "accuracy": _round(correct / max(count, 1))},
                     {"wall_seconds_epoch": wall,
                      "tokens_per_second": tokens / wall})
        val_acc, val_loss = _classifier_accuracy(model, valid_batches)
        writer.write({"step": step, "epoch": epoch, "split": "valid",
                      "loss": _round(val_loss), "accuracy": _round(val_acc)})
        save_model(run_dir / "last.ckpt", model, cfg, vocab,
                   {"epoch": epoch}, opt=opt)
        sched.update(val_acc)
        if val_acc > best_acc:
            best_acc = val_acc
            bad_epochs = 0
            save_model(run_dir / "best.ckpt", model, cfg, vocab,
                       {"epoch": epoch, "valid_accuracy": val_acc})
        else:
            bad_epochs += 1
            if tr_cfg["early_stop_patience"] and \
                    bad_epochs >= tr_cfg["early_stop_patience"]:
                break
        if tr_cfg["max_steps"] and step >= tr_cfg["max_steps"]:
            break
    return {"best_valid_accuracy": best_acc,
            "checkpoint": str(run_dir / "best.ckpt")}


def evaluate_logic(ckpt_path, split: str = "test",
                   per_length: bool = True, data_dir=None) -> dict:
    model, vocab, cfg, meta = load_model(ckpt_path)
    data_dir = Path(data_dir or cfg["data_dir"])
    pairs = read_pairs(data_dir / f"{split}.tsv")
    enc = _encode_logic(pairs, vocab)
    report: dict = {"task": "logic", "split": split,
                    "n_examples": len(pairs)}
    batches = batch_pairs(enc, cfg["training"]["batch_size"],
                          cfg["training"]["bucket_width"])
    acc, loss = _classifier_accuracy(model, batches)
    report["accuracy"] = _round(acc)
    report["loss"] = _round(loss)
    if per_length:
        buckets: dict[int, list] = {}
        for (s1, s2, _), ex in zip(pairs, enc):
            buckets.setdefault(pair_length(s1, s2), []).append(ex)
        table = {}
        for length in range(1, max(buckets, default=0) + 1):
            if length not in buckets:
                table[str(length)] = "n/a"
                continue
            bs = batch_pairs(buckets[length], cfg["training"]["batch_size"],
                             cfg["training"]["bucket_width"])
            a, _ = _classifier_accuracy(model, bs)
            table[str(length)] = _round(a)
        report["accuracy_per_length"] = table
    return report


# -- arithmetic task ----------------------------------------------------------

def _read_seq2seq(path) -> list[tuple[str, str]]:
    rows = []
    for ln, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{ln + 1}: expected src<TAB>tgt")
        rows.append((parts[0], parts[1]))
    return rows


def sequence_accuracy(model, vocab: Vocab, rows, batch_size: int = 64,
                      max_batches: int = 0, max_len: int = 32) -> float:
    """Exact-match accuracy per sequence using batched greedy decoding."""
    enc = [(vocab.encode(tokenize_chars(src)), vocab.encode(
        tokenize_chars(tgt))) for src, tgt in rows]
    batches = batch_seq2seq(enc, batch_size)
    if max_batches:
        batches = batches[:max_batches]
    correct = total = 0
    for batch in batches:
        hyps, _ = model.greedy_decode(batch.src, max_len=max_len)
        for hyp, ref_row, ref_len in zip(hyps, batch.tgt_out,
                                         batch.tgt_mask.sum(axis=1)):
            ref = [int(t) for t in ref_row[:int(ref_len) - 1]]  # drop EOS
            correct += int(hyp == ref)
            total += 1
    return correct / max(total, 1)


def train_arithmetic(cfg: dict) -> dict:
    _apply_precision(cfg)
    data_dir = Path(cfg["data_dir"])
    run_dir = Path(cfg["run_dir"])
    run_dir.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, run_dir)
    tr_cfg = cfg["training"]
    seed = tr_cfg["seed"]

    train_rows = _read_seq2seq(data_dir / "train.tsv")
    test_rows = _read_seq2seq(data_dir / "test.tsv")
    vocab = Vocab.build(tokenize_chars(s) for row in train_rows for s in row)
    enc = [(vocab.encode(tokenize_chars(src)),
            vocab.encode(tokenize_chars(tgt))) for src, tgt in train_rows]

    model = _build_model(cfg, vocab)
    opt = _make_optimizer(cfg, model.parameters())
    sched = ReduceOnPlateau(opt, factor=cfg["optimizer"]["plateau_factor"],
                            patience=cfg["optimizer"]["plateau_patience"],
                            mode="max")
    warmup = cfg["optimizer"]["warmup_steps"]
    base_lr = cfg["optimizer"]["lr"]
    writer = MetricsWriter(run_dir, tr_cfg["record_timing"])
    best_acc, step = -1.0, 0
    epochs = tr_cfg["epochs"] if tr_cfg["epochs"] else 10 ** 9
    for epoch in range(epochs):
        t0 = time.perf_counter()
        shuffle_rng = derive_rng(seed, "shuffle", epoch)
        batches = batch_seq2seq(enc, tr_cfg["batch_size"],
                                tr_cfg["bucket_width"], shuffle_rng)
        loss_sum = tokens = 0
        for batch in batches:
            if warmup and step < warmup:
                opt.lr = base_lr * (step + 1) / warmup
            logits = model.forward(batch.src, batch.tgt_in)
            v = logits.shape[-1]
            loss = T.cross_entropy(logits.reshape(-1, v),
                                   batch.tgt_out.reshape(-1),
                                   batch.tgt_mask.reshape(-1))
            if not np.isfinite(loss.item()):
                raise NumericError(f"non-finite loss at step {step}; "
                                   f"last good checkpoint kept in {run_dir}")
            opt.zero_grad()
            loss.backward()
            clip_global_norm(model.parameters(), cfg["optimizer"]["clip"])
            opt.step()
            n_tok = int(batch.tgt_mask.sum())
            loss_sum += loss.item() * n_tok
            tokens += n_tok
            step += 1
            if tr_cfg["max_steps"] and step >= tr_cfg["max_steps"]:
                break
        wall = time.perf_counter() - t0
        writer.write({"step": step, "epoch": epoch, "split": "train",
                      "loss": _round(loss_sum / max(tokens, 1))},
                     {"wall_seconds_epoch": wall,
                      "tokens_per_second": tokens / wall})
        acc = sequence_accuracy(model, vocab, test_rows,
                                tr_cfg["batch_size"],
                                tr_cfg["eval_batches"],
                                max_len=cfg["model"]["max_len"])
        writer.write({"step": step, "epoch": epoch, "split": "test",
                      "accuracy": _round(acc)})
        save_model(run_dir / "last.ckpt", model, cfg, vocab,
                   {"epoch": epoch})
        if acc > best_acc:
            best_acc = acc
            save_model(run_dir / "best.ckpt", model, cfg, vocab,
                       {"epoch": epoch, "sequence_accuracy": acc})
        sched.update(acc)
        if tr_cfg["max_steps"] and step >= tr_cfg["max_steps"]:
            break
    return {"best_sequence_accuracy": best_acc,
            "checkpoint": str(run_dir / "best.ckpt")}


def evaluate_arithmetic(ckpt_path, split: str = "test",
                        data_dir=None) -> dict:
    model, vocab, cfg, _ = load_model(ckpt_path)
    data_dir = Path(data_dir or cfg["data_dir"])
    rows = _read_seq2seq(data_dir / f"{split}.tsv")
    acc = sequence_accuracy(model, vocab, rows,
                            cfg["training"]["batch_size"],
                            max_len=cfg["model"]["max_len"])
    return {"task": "arithmetic", "split": split, "n_examples": len(rows),
            "sequence_accuracy": _round(acc)}


def decode_file(ckpt_path, src_path, out_path, beam_size: int = 4,
                length_penalty: float = 0.6, max_len: int = 32,
                refs_path=None) -> None:
    """Decode one source per line into JSON-lines records."""
    model, vocab, _, _ = load_model(ckpt_path)
    srcs = Path(src_path).read_text().splitlines()
    refs = Path(refs_path).read_text().splitlines() if refs_path else None
    with open(out_path, "w") as fh:
        for i, src in enumerate(srcs):
            ids = np.array(vocab.encode(tokenize_chars(src)), dtype=np.int64)
            hyp_ids, score, truncated = model.beam_decode(
                ids, beam_size=beam_size, length_penalty=length_penalty,
                max_len=max_len)
            rec = {"src": src, "hyp": "".join(vocab.decode(hyp_ids)),
                   "score": score, "truncated": bool(truncated)}
            if refs:
                rec["ref"] = refs[i]
            fh.write(json.dumps(rec) + "\n")


# -- language modeling --------------------------------------------------------

def _lm_batches(ids: np.ndarray, batch_size: int, bptt: int):
    n = (len(ids) // batch_size) * batch_size
    stream = ids[:n].reshape(batch_size, -1)
    for start in range(0, stream.shape[1] - 1, bptt):
        chunk = stream[:, start:start + bptt + 1]
        if chunk.shape[1] < 2:
            break
        yield chunk[:, :-1], chunk[:, 1:]


def train_lm(cfg: dict) -> dict:
    _apply_precision(cfg)
    data_dir = Path(cfg["data_dir"])
    run_dir = Path(cfg["run_dir"])
    run_dir.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, run_dir)
    tr_cfg = cfg["training"]
    seed = tr_cfg["seed"]

    train_tokens = tokenize_words(Path(data_dir / "train.txt").read_text())
    valid_tokens = tokenize_words(Path(data_dir / "valid.txt").read_text())
    vocab = Vocab.build([train_tokens])
    train_ids = np.array(vocab.encode(train_tokens), dtype=np.int64)
    valid_ids = np.array(vocab.encode(valid_tokens), dtype=np.int64)

    model = _build_model(cfg, vocab)
    opt = _make_optimizer(cfg, model.parameters())
    writer = MetricsWriter(run_dir, tr_cfg["record_timing"])
    best_ppl, step = float("inf"), 0
    for epoch in range(tr_cfg["epochs"]):
        t0 = time.perf_counter()
        loss_sum = tokens = 0
        for inp, tgt in _lm_batches(train_ids, tr_cfg["batch_size"],
                                    tr_cfg["bptt"]):
            drop_rng = derive_rng(seed, "dropout", step)
            logits = model.forward(inp, train=True, rng=drop_rng)
            v = logits.shape[-1]
            loss = T.cross_entropy(logits.reshape(-1, v), tgt.reshape(-1))
            if not np.isfinite(loss.item()):
                raise NumericError(f"non-finite loss at step {step}")
            opt.zero_grad()
            loss.backward()
            clip_global_norm(model.parameters(), cfg["optimizer"]["clip"])
            opt.step()
            loss_sum += loss.item() * tgt.size
            tokens += tgt.size
            step += 1
            if tr_cfg["max_steps"] and step >= tr_cfg["max_steps"]:
                break
        wall = time.perf_counter() - t0
        writer.write({"step": step, "epoch": epoch, "split": "train",
                      "loss": _round(loss_sum / max(tokens, 1))},
                     {"wall_seconds_epoch": wall,
                      "tokens_per_second": tokens / wall})
        val_loss_sum = val_tokens = 0
        with T.no_grad():
            for inp, tgt in _lm_batches(valid_ids, tr_cfg["batch_size"],
                                        tr_cfg["bptt"]):
                logits = model.forward(inp)
                v = logits.shape[-1]
                loss = T.cross_entropy(logits.reshape(-1, v), tgt.reshape(-1))
                val_loss_sum += loss.item() * tgt.size
                val_tokens += tgt.size
        ppl = float(np.exp(val_loss_sum / max(val_tokens, 1)))
        writer.write({"step": step, "epoch": epoch, "split": "valid",
                      "perplexity": _round(ppl)})
        save_model(run_dir / "last.ckpt", model, cfg, vocab,
                   {"epoch": epoch})
        if ppl < best_ppl:
            best_ppl = ppl
            save_model(run_dir / "best.ckpt", model, cfg, vocab,
                       {"epoch": epoch, "perplexity": ppl})
        if tr_cfg["max_steps"] and step >= tr_cfg["max_steps"]:
            break
    return {"best_valid_perplexity": best_ppl,
            "checkpoint": str(run_dir / "best.ckpt")}


def train(cfg: dict, resume: bool = False) -> dict:
    task = cfg["task"]
    if task == "logic":
        return train_logic(cfg, resume=resume)
    if task == "arithmetic":
        return train_arithmetic(cfg)
    if task == "lm":
        return train_lm(cfg)
    raise ConfigError(f"task {task!r} is not trainable")


def evaluate(ckpt_path, split: str = "test", per_length: bool = True,
             data_dir=None) -> dict:
    _, meta = load_checkpoint(ckpt_path)
    task = meta["config"]["task"]
    if task == "logic":
        return evaluate_logic(ckpt_path, split, per_length, data_dir)
    if task == "arithmetic":
        return evaluate_arithmetic(ckpt_path, split, data_dir)
    raise ConfigError(f"no evaluator for task {task!r}")


# -- parse extraction ---------------------------------------------------------

def induce_tree(model, vocab: Vocab, tokens: list[str], trace_layer: int = 0,
                flavor: str = "expected") -> Tree:
    if len(tokens) == 1:
        return greedy_tree([0.0], tokens)
    ids = np.array([vocab.encode(tokens)], dtype=np.int64)
    trace = model.gate_trace(ids, trace_layer=trace_layer)
    if trace is None:
        raise UsageError("model produced no gate trace")
    dist = syntactic_distance(trace, 0, flavor)
    return greedy_tree(dist, tokens)


def parse_eval(ckpt_path, gold_path, include_full_span: bool = False,
               remove_punct: bool = False, flavor: str = "expected",
               trace_layer: int | None = None) -> dict:
    """Score model-induced trees against a file of gold bracketings."""
    model, vocab, cfg, _ = load_model(ckpt_path)
    layer = cfg["trace_layer"] if trace_layer is None else trace_layer
    golds, preds = [], []
    for line in Path(gold_path).read_text().splitlines():
        if not line.strip():
            continue
        gold = parse_sexpr(line)
        if remove_punct:
            gold = strip_punct(gold)
            if gold is None or gold.is_leaf:
                continue
        golds.append(gold)
        preds.append(induce_tree(model, vocab, gold.leaves(), layer, flavor))
    p, r, f1 = corpus_bracket_f1(preds, golds, include_full_span)
    per_label = {}
    for label in ("ADJP", "NP", "PP"):
        acc = label_accuracy(preds, golds, label)
        per_label[label] = "undefined" if acc is None else _round(acc)
    return {"n_sentences": len(golds), "precision": _round(p),
            "recall": _round(r), "f1": _round(f1), "per_label": per_label}


def viz(ckpt_path, sentences: list[str], fmt: str = "ascii",
        gold_path=None, flavor: str = "expected",
        trace_layer: int | None = None) -> str:
    """Render induced trees, optionally side by side with gold trees."""
    model, vocab, cfg, _ = load_model(ckpt_path)
    layer = cfg["trace_layer"] if trace_layer is None else trace_layer
    golds = None
    if gold_path:
        golds = [parse_sexpr(line) for line in
                 Path(gold_path).read_text().splitlines() if line.strip()]
        sentences = [" ".join(g.leaves()) for g in golds]
    blocks = []
    for i, sent in enumerate(sentences):
        tokens = tokenize_words(sent)
        pred = induce_tree(model, vocab, tokens, layer, flavor)
        block = [f"# {sent}", "induced:", render_tree(pred, fmt)]
        if golds is not None:
            _, _, f1 = bracket_f1(pred, golds[i])
            block += ["gold:", render_tree(golds[i], fmt),
                      f"bracket F1: {f1:.3f}"]
        blocks.append("\n".join(block))
    return "\n\n".join(blocks)
