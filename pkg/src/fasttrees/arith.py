"""Arithmetic transduction data in the `x=85,y=-523,x*y -> -44455` format."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError

OPS = ("+", "-", "*")


def make_example(a: int, b: int, op: str) -> tuple[str, str]:
    if op not in OPS:
        raise ConfigError(f"unsupported operator {op!r}; expected one of {OPS}")
    src = f"x={a},y={b},x{op}y"
    result = a + b if op == "+" else a - b if op == "-" else a * b
    return src, str(result)


def generate_arithmetic_dataset(out_dir, digit_range: tuple[int, int] = (1, 3),
                                ops: tuple[str, ...] = OPS,
                                count: int = 10_000, seed: int = 0,
                                eval_fraction: float = 0.1) -> dict:
    """Write train/test TSVs of `src<TAB>tgt` pairs plus a manifest.

    Operands are signed integers whose magnitude has between digit_range[0]
    and digit_range[1] decimal digits.
    """
    lo_d, hi_d = digit_range
    if not 1 <= lo_d <= hi_d <= 18:
        raise ConfigError(f"digit_range {digit_range} out of supported range")
    for op in ops:
        if op not in OPS:
            raise ConfigError(f"unsupported operator {op!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    pairs = []
    seen = set()
    while len(pairs) < count:
        d1 = int(rng.integers(lo_d, hi_d + 1))
        d2 = int(rng.integers(lo_d, hi_d + 1))
        a = int(rng.integers(0, 10 ** d1)) * (1 if rng.integers(2) else -1)
        b = int(rng.integers(0, 10 ** d2)) * (1 if rng.integers(2) else -1)
        op = ops[int(rng.integers(len(ops)))]
        src, tgt = make_example(a, b, op)
        if src in seen:
            continue
        seen.add(src)
        pairs.append((src, tgt))
    n_eval = int(len(pairs) * eval_fraction)
    split = {"test": pairs[:n_eval], "train": pairs[n_eval:]}
    for name, rows in split.items():
        with open(out_dir / f"{name}.tsv", "w", encoding="utf-8") as fh:
            for src, tgt in rows:
                fh.write(f"{src}\t{tgt}\n")
    manifest = {"task": "arithmetic", "seed": seed, "count": count,
                "digit_range": list(digit_range), "ops": list(ops),
                "split_sizes": {k: len(v) for k, v in split.items()}}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
