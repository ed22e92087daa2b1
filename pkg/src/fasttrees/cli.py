"""Command-line entry point (installed as ``ftl``)."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import (ConfigError, DataError, FastTreesError, NumericError,
                     UsageError)


def _add_gen_logic(sub):
    p = sub.add_parser("gen-logic", help="generate a logical-inference "
                       "dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--max-train-len", type=int, default=6)
    p.add_argument("--max-eval-len", type=int, default=12)
    p.add_argument("--per-length", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)


def _add_gen_arith(sub):
    p = sub.add_parser("gen-arith", help="generate an arithmetic "
                       "transduction dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100000)
    p.add_argument("--min-digits", type=int, default=1)
    p.add_argument("--max-digits", type=int, default=3)
    p.add_argument("--ops", default="+,-,*")
    p.add_argument("--seed", type=int, default=0)


def _add_train(sub):
    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--resume", action="store_true", help="continue from "
                   "last.ckpt in the run directory")


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--out", default=None, help="write the JSON report here "
                   "instead of stdout")


def _add_bench(sub):
    p = sub.add_parser("bench", help="time cell variants at matched "
                       "parameter counts")
    p.add_argument("--variants", default="lstm,onlstm,fasttrees,faster")
    p.add_argument("--d-emb", type=int, default=128)
    p.add_argument("--d-hidden", type=int, default=400)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--length", type=int, default=35)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--token-budget", type=int, default=0)
    p.add_argument("--base", default="onlstm")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chunk", type=int, default=8)
    p.add_argument("--matching", choices=("params", "dims"),
                   default="params")
    p.add_argument("--out", default=None)


def _add_parse_eval(sub):
    p = sub.add_parser("parse-eval", help="score induced trees against "
                       "gold bracketings")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--include-full-span", action="store_true")
    p.add_argument("--strip-punct", action="store_true")
    p.add_argument("--flavor", choices=("expected", "argmax"),
                   default="expected")
    p.add_argument("--trace-layer", type=int, default=None)
    p.add_argument("--out", default=None)


def _add_viz(sub):
    p = sub.add_parser("viz", help="render induced trees")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--fmt", choices=("sexpr", "ascii", "latex-qtree"),
                   default="ascii")
    p.add_argument("--gold", default=None, help="gold bracketing file; "
                   "renders side by side with per-sentence F1")
    p.add_argument("--flavor", choices=("expected", "argmax"),
                   default="expected")
    p.add_argument("--trace-layer", type=int, default=None)
    p.add_argument("sentences", nargs="*")


def _emit(report: dict, out_path) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _dispatch(args) -> None:
    if args.command == "gen-logic":
        from .logic import generate_logic_dataset
        manifest = generate_logic_dataset(
            args.out, max_train_len=args.max_train_len,
            max_eval_len=args.max_eval_len, per_length=args.per_length,
            seed=args.seed)
        print(json.dumps(manifest["counts"], sort_keys=True))
    elif args.command == "gen-arith":
        from .arith import generate_arithmetic_dataset
        ops = tuple(args.ops.split(","))
        manifest = generate_arithmetic_dataset(
            args.out, digit_range=(args.min_digits, args.max_digits),
            ops=ops, count=args.count, seed=args.seed)
        print(json.dumps(manifest["split_sizes"], sort_keys=True))
    elif args.command == "train":
        from .config import load_config
        from .train import train
        result = train(load_config(args.config), resume=args.resume)
        print(json.dumps(result, sort_keys=True))
    elif args.command == "eval":
        from .train import evaluate
        _emit(evaluate(args.ckpt, args.split, data_dir=args.data_dir),
              args.out)
    elif args.command == "bench":
        from .bench import bench
        report = bench(args.variants.split(","), d_emb=args.d_emb,
                       d_hidden=args.d_hidden, batch=args.batch,
                       length=args.length, reps=args.reps,
                       token_budget=args.token_budget, base=args.base,
                       threads=args.threads, seed=args.seed,
                       chunk=args.chunk, matching=args.matching)
        _emit(report, args.out)
    elif args.command == "parse-eval":
        from .train import parse_eval
        _emit(parse_eval(args.ckpt, args.gold,
                         include_full_span=args.include_full_span,
                         remove_punct=args.strip_punct, flavor=args.flavor,
                         trace_layer=args.trace_layer), args.out)
    elif args.command == "viz":
        from .train import viz
        if not args.sentences and not args.gold:
            raise UsageError("viz needs sentences or --gold")
        print(viz(args.ckpt, args.sentences, fmt=args.fmt,
                  gold_path=args.gold, flavor=args.flavor,
                  trace_layer=args.trace_layer))
    else:  # pragma: no cover - argparse enforces the choices
        raise UsageError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ftl", description="tree-induction sequence models: data "
        "generation, training, evaluation, benchmarking, parse scoring")
    sub = parser.add_subparsers(dest="command", required=True)
    for add in (_add_gen_logic, _add_gen_arith, _add_train, _add_eval,
                _add_bench, _add_parse_eval, _add_viz):
        add(sub)
    args = parser.parse_args(argv)
    try:
        _dispatch(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except FastTreesError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
