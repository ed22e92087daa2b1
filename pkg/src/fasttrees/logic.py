"""Propositional-logic inference data: grammar, exact semantics, generation.

Sentences are built from six atoms p1..p6 with `and`, `or`, `not`. A
sentence denotes the set of satisfying truth assignments over all 64 worlds
(one bit per world). The relation between two sentences is one of seven
mutually exclusive natural-logic relations, decided exactly from the two
denotations.

ASTs are nested tuples: ("atom", i) | ("not", s) | ("and", a, b) |
("or", a, b). The surface form tokenizes parentheses as standalone tokens.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

N_ATOMS = 6
ATOMS = tuple(f"p{i + 1}" for i in range(N_ATOMS))
N_WORLDS = 1 << N_ATOMS
FULL = (1 << N_WORLDS) - 1

# world w assigns atom i the truth value of bit i of w
ATOM_MASKS = tuple(
    sum(1 << w for w in range(N_WORLDS) if (w >> i) & 1)
    for i in range(N_ATOMS))

EQUIV, ENTAIL_FWD, ENTAIL_REV = "≡", "⊏", "⊐"
CONTRADICT_EXH, CONTRADICT_NONEXH = "∧", "|"
COVER, INDEPENDENT = "⌣", "#"
RELATIONS = (EQUIV, ENTAIL_FWD, ENTAIL_REV, CONTRADICT_EXH,
             CONTRADICT_NONEXH, COVER, INDEPENDENT)


# -- sentences ---------------------------------------------------------------

def n_ops(s) -> int:
    if s[0] == "atom":
        return 0
    if s[0] == "not":
        return 1 + n_ops(s[1])
    return 1 + n_ops(s[1]) + n_ops(s[2])


def surface(s) -> str:
    if s[0] == "atom":
        return ATOMS[s[1]]
    if s[0] == "not":
        return f"( not {surface(s[1])} )"
    return f"( {surface(s[1])} {s[0]} {surface(s[2])} )"


def parse_surface(text: str):
    tokens = text.split()
    pos = 0

    def parse():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok != "(":
            if tok not in ATOMS:
                raise DataError(f"unknown token {tok!r} in {text!r}")
            return ("atom", ATOMS.index(tok))
        if tokens[pos] == "not":
            pos += 1
            inner = parse()
            out = ("not", inner)
        else:
            left = parse()
            op = tokens[pos]
            pos += 1
            if op not in ("and", "or"):
                raise DataError(f"unknown operator {op!r} in {text!r}")
            right = parse()
            out = (op, left, right)
        if tokens[pos] != ")":
            raise DataError(f"missing ')' in {text!r}")
        pos += 1
        return out

    out = parse()
    if pos != len(tokens):
        raise DataError(f"trailing tokens in {text!r}")
    return out


# -- semantics ---------------------------------------------------------------

def denotation(s) -> int:
    """Bitset over the 64 worlds in which the sentence is true."""
    if s[0] == "atom":
        return ATOM_MASKS[s[1]]
    if s[0] == "not":
        return FULL ^ denotation(s[1])
    if s[0] == "and":
        return denotation(s[1]) & denotation(s[2])
    if s[0] == "or":
        return denotation(s[1]) | denotation(s[2])
    raise DataError(f"malformed sentence {s!r}")


def relation_of(s1, s2) -> str:
    d1, d2 = denotation(s1), denotation(s2)
    inter, union = d1 & d2, d1 | d2
    if d1 == d2:
        return EQUIV
    if inter == d1:
        return ENTAIL_FWD
    if inter == d2:
        return ENTAIL_REV
    if inter == 0 and union == FULL:
        return CONTRADICT_EXH
    if inter == 0:
        return CONTRADICT_NONEXH
    if union == FULL:
        return COVER
    return INDEPENDENT


def eval_world(s, world: int) -> bool:
    """Direct truth evaluation under one assignment (independent oracle)."""
    if s[0] == "atom":
        return bool((world >> s[1]) & 1)
    if s[0] == "not":
        return not eval_world(s[1], world)
    if s[0] == "and":
        return eval_world(s[1], world) and eval_world(s[2], world)
    return eval_world(s[1], world) or eval_world(s[2], world)


def relation_truth_table(s1, s2) -> str:
    """Second oracle: classify from per-world truth counts, no set algebra."""
    both = only1 = only2 = neither = 0
    for w in range(N_WORLDS):
        a, b = eval_world(s1, w), eval_world(s2, w)
        if a and b:
            both += 1
        elif a:
            only1 += 1
        elif b:
            only2 += 1
        else:
            neither += 1
    if only1 == 0 and only2 == 0:
        return EQUIV
    if only1 == 0:
        return ENTAIL_FWD
    if only2 == 0:
        return ENTAIL_REV
    if both == 0 and neither == 0:
        return CONTRADICT_EXH
    if both == 0:
        return CONTRADICT_NONEXH
    if neither == 0:
        return COVER
    return INDEPENDENT


# -- uniform AST sampling ------------------------------------------------------

def _tree_counts(max_ops: int) -> list[int]:
    c = [N_ATOMS]
    for n in range(1, max_ops + 1):
        total = c[n - 1]  # not
        for i in range(n):
            total += 2 * c[i] * c[n - 1 - i]  # and / or over a split
        c.append(total)
    return c


class SentenceSampler:
    """Uniform sampling over ASTs with an exact operator count, via the
    dynamic-programming census of tree shapes."""

    def __init__(self, max_ops: int):
        self.counts = _tree_counts(max_ops)

    def sample(self, rng: np.random.Generator, ops: int):
        if ops == 0:
            return ("atom", int(rng.integers(N_ATOMS)))
        c = self.counts
        weights = [c[ops - 1]]
        choices: list[tuple] = [("not",)]
        for i in range(ops):
            for op in ("and", "or"):
                weights.append(c[i] * c[ops - 1 - i])
                choices.append((op, i))
        pick = choices[self._weighted(rng, weights)]
        if pick[0] == "not":
            return ("not", self.sample(rng, ops - 1))
        op, i = pick
        return (op, self.sample(rng, i), self.sample(rng, ops - 1 - i))

    @staticmethod
    def _weighted(rng, weights) -> int:
        # exact integer weights can overflow float64 at large op counts
        total = sum(weights)
        r = int(rng.integers(total)) if total < 2 ** 62 else (
            int.from_bytes(rng.bytes(16), "little") % total)
        acc = 0
        for idx, w in enumerate(weights):
            acc += w
            if r < acc:
                return idx
        return len(weights) - 1


def _grow(rng: np.random.Generator, sampler: SentenceSampler, s, target: int):
    """Wrap a formula with random material until it has `target` operators."""
    while n_ops(s) < target:
        roll = rng.integers(3)
        if roll == 0:
            s = ("not", s)
        else:
            op = "and" if roll == 1 else "or"
            budget = int(rng.integers(0, target - n_ops(s)))
            other = sampler.sample(rng, budget)
            s = (op, s, other) if rng.integers(2) else (op, other, s)
    return s


def _subformulas(s) -> list:
    out = [s]
    if s[0] == "not":
        out += _subformulas(s[1])
    elif s[0] != "atom":
        out += _subformulas(s[1]) + _subformulas(s[2])
    return out


@dataclass
class LogicPair:
    s1: str
    s2: str
    relation: str
    length: int


def _sample_pair(rng, sampler: SentenceSampler, length: int) -> LogicPair:
    """One pair whose longer side has exactly `length` operators.

    Half the time both sides are sampled generically; otherwise a targeted
    construction (negation, weakening, strengthening, commutation, exclusion)
    is applied so the rarer relations actually occur. Labels always come from
    the exact decision procedure, never from the construction.
    """
    move = int(rng.integers(10))
    if move == 0 and length >= 1:  # negation: tends to exhaust. contradiction
        s1 = sampler.sample(rng, length - 1)
        s2 = ("not", s1)
    elif move == 1 and length >= 1:  # or-weakening: tends to entailment
        i = int(rng.integers(0, length))
        s1 = sampler.sample(rng, i)
        s2 = ("or", s1, sampler.sample(rng, length - 1 - i))
    elif move == 2 and length >= 1:  # and-strengthening: reverse entailment
        i = int(rng.integers(0, length))
        s1 = sampler.sample(rng, i)
        s2 = ("and", s1, sampler.sample(rng, length - 1 - i))
    elif move == 3 and length >= 1:  # commutation / double negation: equiv
        s1 = sampler.sample(rng, length)
        if s1[0] in ("and", "or"):
            s2 = (s1[0], s1[2], s1[1])
        elif length >= 2:
            s2 = ("not", ("not", sampler.sample(rng, length - 2)))
            s1 = s2[1][1]
        else:
            s2 = sampler.sample(rng, length)
    elif move == 4 and length >= 2:  # exclusion: non-exhaustive contradiction
        i = int(rng.integers(0, length - 1))
        s1 = sampler.sample(rng, i)
        s2 = ("and", ("not", s1), sampler.sample(rng, length - 2 - i))
    else:
        s1 = sampler.sample(rng, length)
        n2 = int(rng.integers(0, length + 1))
        if rng.random() < 0.5:
            s2 = sampler.sample(rng, n2)
        else:
            # mutate a subformula of s1: related pairs beat independent noise
            pool = [u for u in _subformulas(s1) if n_ops(u) <= n2]
            seed = pool[int(rng.integers(len(pool)))] if pool else \
                sampler.sample(rng, 0)
            s2 = _grow(rng, sampler, seed, n2)
    if rng.integers(2):
        s1, s2 = s2, s1
    return LogicPair(surface(s1), surface(s2), relation_of(s1, s2), length)


def generate_logic_dataset(out_dir, counts: dict[int, int] | None = None,
                           max_train_len: int = 6, max_eval_len: int = 12,
                           seed: int = 0, per_length: int = 10_000,
                           budget_factor: int = 100) -> dict:
    """Write train/valid/test TSVs plus a manifest; returns the manifest.

    counts maps pair length -> number of pairs (default `per_length` each for
    lengths 1..max_eval_len). Lengths <= max_train_len are split 80/20
    train/test with 10% of train reserved for validation; longer lengths are
    test-only. Relation labels are balanced per length on a best-effort
    rejection-sampling budget; the achieved histogram is recorded.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if counts is None:
        counts = {n: per_length for n in range(1, max_eval_len + 1)}
    rng = np.random.default_rng(seed)
    sampler = SentenceSampler(max_eval_len)
    seen: set[tuple[str, str]] = set()
    splits = {"train": [], "valid": [], "test": []}
    histogram: dict[int, dict[str, int]] = {}
    warnings: list[str] = []

    for length in sorted(counts):
        want = counts[length]
        quota = {rel: want // len(RELATIONS) for rel in RELATIONS}
        balanced_target = sum(quota.values())
        kept: list[LogicPair] = []
        overflow: list[LogicPair] = []
        attempts = 0
        while len(kept) < balanced_target and attempts < want * budget_factor:
            attempts += 1
            pair = _sample_pair(rng, sampler, length)
            key = (pair.s1, pair.s2)
            if key in seen:
                continue
            if quota.get(pair.relation, 0) > 0:
                quota[pair.relation] -= 1
                kept.append(pair)
                seen.add(key)
            elif len(overflow) < want:
                overflow.append(pair)
        for pair in overflow:
            if len(kept) >= want:
                break
            key = (pair.s1, pair.s2)
            if key not in seen:
                kept.append(pair)
                seen.add(key)
        if any(quota.values()):
            warnings.append(
                f"length {length}: balance not reached within budget, "
                f"missing {dict((k, v) for k, v in quota.items() if v)}")
        hist: dict[str, int] = {rel: 0 for rel in RELATIONS}
        for pair in kept:
            hist[pair.relation] += 1
        histogram[length] = hist
        order = rng.permutation(len(kept))
        kept = [kept[i] for i in order]
        if length <= max_train_len:
            n_test = len(kept) // 5
            test, train = kept[:n_test], kept[n_test:]
            n_valid = len(train) // 10
            valid, train = train[:n_valid], train[n_valid:]
            splits["train"] += train
            splits["valid"] += valid
            splits["test"] += test
        else:
            splits["test"] += kept

    for name, pairs in splits.items():
        with open(out_dir / f"{name}.tsv", "w", encoding="utf-8") as fh:
            for p in pairs:
                fh.write(f"{p.s1}\t{p.s2}\t{p.relation}\n")
    manifest = {
        "task": "logic",
        "seed": seed,
        "counts": {str(k): v for k, v in counts.items()},
        "max_train_len": max_train_len,
        "max_eval_len": max_eval_len,
        "split_sizes": {k: len(v) for k, v in splits.items()},
        "label_histogram": {str(k): v for k, v in histogram.items()},
        "warnings": warnings,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                      ensure_ascii=False))
    return manifest


def pair_length(s1_text: str, s2_text: str) -> int:
    return max(n_ops(parse_surface(s1_text)), n_ops(parse_surface(s2_text)))


def read_pairs(path) -> list[tuple[str, str, str]]:
    out = []
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8")
                              .splitlines()):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{ln + 1}: expected 3 tab-separated "
                            f"fields, got {len(parts)}")
        out.append(tuple(parts))
    return out
