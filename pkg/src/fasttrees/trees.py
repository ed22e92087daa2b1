"""Constituency trees: extraction from gate traces, scoring, rendering.

Induced trees are strictly binary; gold trees read from bracketed files may
be n-ary and carry labels. Spans are (start, end) with end exclusive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cells import GateTrace
from .errors import DataError, UsageError

PUNCT = {".", ",", ":", ";", "``", "''", "'", "`", "-LRB-", "-RRB-",
         "(", ")", "!", "?", "--", "..."}


@dataclass
class Tree:
    """Leaf (token set, children empty) or internal node (children non-empty)."""
    label: str | None = None
    token: str | None = None
    children: list["Tree"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def leaves(self) -> list[str]:
        if self.is_leaf:
            return [self.token]
        out = []
        for ch in self.children:
            out.extend(ch.leaves())
        return out

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return (self.label == other.label and self.token == other.token
                and self.children == other.children)


def leaf(token: str, label: str | None = None) -> Tree:
    return Tree(label=label, token=token)


def node(*children: Tree, label: str | None = None) -> Tree:
    return Tree(label=label, children=list(children))


# -- s-expression I/O -------------------------------------------------------

def parse_sexpr(text: str, labeled: bool = True) -> Tree:
    """Parse one bracketed tree.

    labeled=True reads treebank style, e.g. ``(NP (DT the) (NN cat))``: the
    symbol right after ``(`` is the node label and ``(TAG token)`` becomes a
    tagged leaf. labeled=False reads plain groupings like ``((a b) c)``.
    """
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    if not tokens:
        raise DataError("empty s-expression")
    pos = 0

    def parse() -> Tree:
        nonlocal pos
        if tokens[pos] != "(":
            tok = tokens[pos]
            pos += 1
            return leaf(tok)
        pos += 1  # consume '('
        label = None
        if labeled and tokens[pos] not in "()":
            label = tokens[pos]
            pos += 1
        children = []
        while pos < len(tokens) and tokens[pos] != ")":
            children.append(parse())
        if pos >= len(tokens):
            raise DataError(f"unbalanced s-expression: {text!r}")
        pos += 1  # consume ')'
        if label is None and not children:
            raise DataError(f"empty group in s-expression: {text!r}")
        if label is not None and not children:
            return leaf(label)
        if (label is not None and len(children) == 1
                and children[0].is_leaf and children[0].label is None):
            # preterminal like (DT the): keep the token, remember its tag
            return leaf(children[0].token, label=label)
        return Tree(label=label, children=children)

    tree = parse()
    if pos != len(tokens):
        raise DataError(f"trailing content in s-expression: {text!r}")
    return tree


def render_sexpr(tree: Tree) -> str:
    if tree.is_leaf:
        return tree.token
    inner = " ".join(render_sexpr(ch) for ch in tree.children)
    if tree.label:
        return f"({tree.label} {inner})"
    return f"({inner})"


def render_ascii(tree: Tree) -> str:
    """Deterministic box-drawing rendering, one node per line."""
    lines: list[str] = []

    def walk(t: Tree, prefix: str, is_last: bool, is_root: bool) -> None:
        connector = "" if is_root else ("└── " if is_last else "├── ")
        text = t.token if t.is_leaf else (t.label or "·")
        lines.append(prefix + connector + text)
        child_prefix = prefix if is_root else prefix + ("    " if is_last
                                                        else "│   ")
        for i, ch in enumerate(t.children):
            walk(ch, child_prefix, i == len(t.children) - 1, False)

    walk(tree, "", True, True)
    return "\n".join(lines)


def render_qtree(tree: Tree) -> str:
    def walk(t: Tree) -> str:
        if t.is_leaf:
            return t.token
        head = f".{t.label} " if t.label else " "
        return "[" + head + " ".join(walk(ch) for ch in t.children) + " ]"
    return "\\Tree " + walk(tree)


RENDERERS = {"sexpr": render_sexpr, "ascii": render_ascii,
             "latex-qtree": render_qtree}


def render_tree(tree: Tree, fmt: str = "sexpr") -> str:
    try:
        return RENDERERS[fmt](tree)
    except KeyError:
        raise UsageError(f"unknown render format {fmt!r}; "
                         f"expected one of {sorted(RENDERERS)}") from None


# -- distances and greedy parsing -------------------------------------------

def syntactic_distance(trace: GateTrace, batch_index: int = 0,
                       flavor: str = "expected") -> np.ndarray:
    """Per-position boundary strength from the master forget gate.

    ``expected``: d_t = D_m - sum_k mf_{t,k}, the expected split depth.
    ``argmax``:   index of the largest increment of the monotone gate.
    Higher d_t means a stronger constituent boundary before token t.
    """
    if trace is None or trace.mf.size == 0:
        raise UsageError("syntactic_distance needs a non-empty gate trace")
    mf = trace.mf[:, batch_index, :]  # [L, D_m]
    if flavor == "expected":
        return mf.shape[-1] - mf.sum(axis=-1)
    if flavor == "argmax":
        inc = np.diff(np.concatenate([np.zeros((mf.shape[0], 1)), mf], axis=1),
                      axis=1)
        return inc.argmax(axis=-1).astype(float)
    raise UsageError(f"unknown distance flavor {flavor!r}")


def greedy_tree(distances, tokens: list[str]) -> Tree:
    """Top-down greedy split at the maximal boundary distance.

    distances[t] scores the boundary immediately before token t
    (distances[0] is unused); ties break leftmost.
    """
    d = np.asarray(distances, dtype=float)
    n = len(tokens)
    if n < 1:
        raise UsageError("greedy_tree needs at least one token")
    if len(d) != n:
        raise DataError(f"got {len(d)} distances for {n} tokens")

    def build(lo: int, hi: int) -> Tree:
        if hi - lo == 1:
            return leaf(tokens[lo])
        split = lo + 1 + int(np.argmax(d[lo + 1:hi]))
        return node(build(lo, split), build(split, hi))

    return build(0, n)


# -- bracket scoring ---------------------------------------------------------

def strip_punct(tree: Tree) -> Tree | None:
    """Remove punctuation leaves; collapses emptied nodes."""
    if tree.is_leaf:
        return None if tree.token in PUNCT else tree
    kept = [s for s in (strip_punct(ch) for ch in tree.children)
            if s is not None]
    if not kept:
        return None
    if len(kept) == 1:
        return kept[0]
    return Tree(label=tree.label, children=kept)


def tree_spans(tree: Tree, include_full_span: bool = False,
               labeled: bool = False):
    """Spans of length >= 2 as a set of (start, end[, label]) tuples."""
    n = len(tree.leaves())
    spans = set()

    def walk(t: Tree, start: int) -> int:
        if t.is_leaf:
            return start + 1
        end = start
        for ch in t.children:
            end = walk(ch, end)
        if end - start >= 2 and (include_full_span or (start, end) != (0, n)):
            spans.add((start, end, t.label) if labeled else (start, end))
        return end

    walk(tree, 0)
    return spans


def bracket_f1(pred: Tree, gold: Tree, include_full_span: bool = False,
               sentence_id: str | None = None):
    """Unlabeled precision/recall/F1 over spans of length >= 2."""
    if len(pred.leaves()) != len(gold.leaves()):
        raise DataError(f"leaf count mismatch"
                        f"{' in sentence ' + sentence_id if sentence_id else ''}"
                        f": pred {len(pred.leaves())} vs gold "
                        f"{len(gold.leaves())}")
    ps = tree_spans(pred, include_full_span)
    gs = tree_spans(gold, include_full_span)
    match = len(ps & gs)
    p = match / len(ps) if ps else (1.0 if not gs else 0.0)
    r = match / len(gs) if gs else (1.0 if not ps else 0.0)
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def corpus_bracket_f1(preds, golds, include_full_span: bool = False):
    """Micro-averaged corpus F1: counts pooled over all sentences."""
    match = n_pred = n_gold = 0
    for idx, (pred, gold) in enumerate(zip(preds, golds)):
        if len(pred.leaves()) != len(gold.leaves()):
            raise DataError(f"leaf count mismatch in sentence {idx}")
        ps = tree_spans(pred, include_full_span)
        gs = tree_spans(gold, include_full_span)
        match += len(ps & gs)
        n_pred += len(ps)
        n_gold += len(gs)
    p = match / n_pred if n_pred else 1.0
    r = match / n_gold if n_gold else 1.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def label_accuracy(preds, golds, label: str):
    """Fraction of gold spans with `label` present in the induced tree.

    Returns None when the corpus has no gold span of that label.
    """
    hit = total = 0
    for pred, gold in zip(preds, golds):
        gold_spans = {(s, e) for (s, e, lb) in tree_spans(gold, True, True)
                      if lb == label}
        if not gold_spans:
            continue
        pred_spans = tree_spans(pred, True)
        total += len(gold_spans)
        hit += len(gold_spans & pred_spans)
    if total == 0:
        return None
    return hit / total
