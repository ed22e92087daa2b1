"""Wall-clock comparison of cell variants at matched parameter counts.

Timing follows a fixed token budget rather than a fixed batch count: each
repetition runs forward + backward + SGD update over enough steps to consume
the budget, so variants remain comparable regardless of how they batch work
internally. Reported statistics are the median and MAD over >= 5 repetitions
after one warm-up.

Two sources of measurement noise are controlled explicitly:

* repetitions are interleaved across variants (the variant order rotates
  every repetition) so that slow drift in machine load hits all variants
  roughly equally instead of biasing whichever variant ran last;
* the garbage collector is disabled during timing and a manual collection
  runs before every timed segment, so collection pauses never land inside
  a measured interval.

Parameter matching supports two protocols:

* ``matching="params"`` adjusts each variant's d_hidden (at chunk
  granularity) until its parameter count is nearest the base variant's;
  the residual relative gap is reported per row and ``comparable`` flags
  whether it is within 1%.
* ``matching="dims"`` keeps every variant at the nominal dimensions and
  reports the parameter gap honestly; this mirrors comparisons that hold
  layer sizes constant across variants.
"""

from __future__ import annotations

import gc
import time

import numpy as np

from . import tensor as T
from .cells import StackedEncoder
from .config import derive_rng
from .errors import UsageError
from .optim import SGD
from .tensor import Tensor, tsum


def _limit_threads(n: int):
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def encoder_params(variant: str, d_emb: int, d_hidden: int, **kw) -> int:
    rng = np.random.default_rng(0)
    return StackedEncoder(rng, variant, d_emb, d_hidden, **kw).num_parameters()


def match_hidden(variant: str, target_params: int, d_emb: int,
                 start_hidden: int, chunk: int = 8, **kw):
    """Pick a d_hidden (multiple of chunk) whose parameter count is nearest
    the target. Returns (d_hidden, params, relative_gap)."""
    def gap(h: int) -> tuple[int, float]:
        p = encoder_params(variant, d_emb, h, chunk=chunk, **kw)
        return p, abs(p - target_params) / target_params

    best_h = max(chunk, chunk * round(start_hidden / chunk))
    best_p, best_g = gap(best_h)
    improved = True
    while improved:
        improved = False
        for h in (best_h - chunk, best_h + chunk):
            if h < chunk:
                continue
            p, g = gap(h)
            if g < best_g:
                best_h, best_p, best_g = h, p, g
                improved = True
    return best_h, best_p, best_g


def _train_step(enc, opt, x, steps: int) -> None:
    for _ in range(steps):
        h_seq, _, _ = enc(Tensor(x))
        opt.zero_grad()
        tsum(h_seq).backward()
        opt.step()


def bench(variants: list[str], d_emb: int = 128, d_hidden: int = 400,
          batch: int = 128, length: int = 35, reps: int = 5,
          token_budget: int = 0, base: str = "onlstm", threads: int = 1,
          seed: int = 0, chunk: int = 8, matching: str = "params",
          **kw) -> dict:
    """Produce a timing table for the given variants.

    The baseline variant anchors both the parameter-count match and the
    speedup column: speedup = (t_base - t_variant) / t_base.
    """
    if reps < 5:
        raise UsageError("need at least 5 repetitions for a stable median")
    if matching not in ("params", "dims"):
        raise UsageError(f"matching must be 'params' or 'dims', "
                         f"got {matching!r}")
    if base not in variants:
        variants = [base] + list(variants)
    token_budget = token_budget or batch * length
    steps = max(1, token_budget // (batch * length))

    rows: dict[str, dict] = {}
    setups: dict[str, tuple] = {}
    target = encoder_params(base, d_emb, d_hidden, chunk=chunk, **kw)
    for variant in variants:
        if matching == "params" and variant != base:
            h, params, p_gap = match_hidden(variant, target, d_emb, d_hidden,
                                            chunk=chunk, **kw)
        else:
            h = d_hidden
            params = encoder_params(variant, d_emb, h, chunk=chunk, **kw)
            p_gap = abs(params - target) / target
        rng = derive_rng(seed, "bench", variant)
        enc = StackedEncoder(rng, variant, d_emb, h, chunk=chunk, **kw)
        opt = SGD(enc.parameters(), lr=0.0)
        x = rng.standard_normal((length, batch, d_emb)).astype(
            T.get_default_dtype())
        setups[variant] = (enc, opt, x)
        rows[variant] = {"d_hidden": h, "params": params,
                         "param_gap": round(p_gap, 6),
                         "comparable": p_gap <= 0.01}

    times: dict[str, list[float]] = {v: [] for v in variants}
    order = list(variants)
    with _limit_threads(threads):
        for variant in order:  # warm-up pass, untimed
            _train_step(*setups[variant], steps)
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            for rep in range(reps):
                shift = rep % len(order)
                for variant in order[shift:] + order[:shift]:
                    gc.collect()
                    t0 = time.perf_counter()
                    _train_step(*setups[variant], steps)
                    times[variant].append(time.perf_counter() - t0)
        finally:
            if gc_was_enabled:
                gc.enable()

    resolution = time.get_clock_info("perf_counter").resolution
    for variant in variants:
        med = float(np.median(times[variant]))
        mad = float(np.median(np.abs(np.array(times[variant]) - med)))
        if resolution > 0.01 * med:
            raise UsageError(
                f"timer resolution {resolution:g}s exceeds 1% of the "
                f"measured interval {med:g}s; raise the token budget")
        rows[variant].update({"median_seconds": med, "mad_seconds": mad,
                              "times": times[variant]})
    t_base = rows[base]["median_seconds"]
    for variant, row in rows.items():
        row["speedup_vs_base"] = (t_base - row["median_seconds"]) / t_base
    return {"base": base, "d_emb": d_emb, "batch": batch, "length": length,
            "token_budget": token_budget, "repetitions": reps,
            "threads": threads, "chunk": chunk, "matching": matching,
            "variants": rows}
