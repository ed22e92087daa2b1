"""Run configuration: schema validation, defaults, reproducible RNG derivation."""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError

MODEL_DEFAULTS = {
    "variant": "fasttrees",
    "d_emb": 128,
    "d_hidden": 400,
    "n_layers": 1,
    "dropout": 0.2,
    "chunk": 8,
    "master_depth": 2,
    "conv_k": 3,
    "twin": True,
    "mlp_hidden": 512,
    # transformer-specific
    "d_model": 128,
    "n_heads": 4,
    "d_ff": 256,
    "gated": True,
    "decoder_gate": True,
    "conv_gate": 0,
    "paper_literal_attention": False,
    "max_len": 512,
}

OPTIMIZER_DEFAULTS = {
    "algo": "adam",
    "lr": 1e-3,
    "clip": 1.0,
    "plateau_factor": 0.2,
    "plateau_patience": 2,
    "warmup_steps": 0,
}

TRAINING_DEFAULTS = {
    "batch_size": 128,
    "epochs": 30,
    "max_steps": 0,
    "seed": 0,
    "early_stop_patience": 0,
    "precision": "float32",
    "bucket_width": 4,
    "eval_batches": 0,
    "record_timing": True,
    "bptt": 35,
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["task"],
    "properties": {
        "task": {"enum": ["logic", "arithmetic", "lm", "parse-eval", "bench"]},
        "data_dir": {"type": "string"},
        "run_dir": {"type": "string"},
        "trace_layer": {"type": "integer", "minimum": 0},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "variant": {"enum": ["lstm", "onlstm", "fasttrees",
                                     "conv_fasttrees", "faster",
                                     "transformer"]},
                "d_emb": {"type": "integer", "minimum": 1},
                "d_hidden": {"type": "integer", "minimum": 1},
                "n_layers": {"type": "integer", "minimum": 1},
                "dropout": {"type": "number", "minimum": 0,
                            "exclusiveMaximum": 1},
                "chunk": {"type": "integer", "minimum": 1},
                "master_depth": {"enum": [1, 2]},
                "conv_k": {"type": "integer", "minimum": 1},
                "twin": {"type": "boolean"},
                "mlp_hidden": {"type": "integer", "minimum": 1},
                "d_model": {"type": "integer", "minimum": 1},
                "n_heads": {"type": "integer", "minimum": 1},
                "d_ff": {"type": "integer", "minimum": 1},
                "gated": {"type": "boolean"},
                "decoder_gate": {"type": "boolean"},
                "conv_gate": {"type": "integer", "minimum": 0},
                "paper_literal_attention": {"type": "boolean"},
                "max_len": {"type": "integer", "minimum": 1},
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "algo": {"enum": ["adam", "sgd"]},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "clip": {"type": "number", "minimum": 0},
                "plateau_factor": {"type": "number", "exclusiveMinimum": 0,
                                   "maximum": 1},
                "plateau_patience": {"type": "integer", "minimum": 0},
                "warmup_steps": {"type": "integer", "minimum": 0},
            },
        },
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "batch_size": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 0},
                "max_steps": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "early_stop_patience": {"type": "integer", "minimum": 0},
                "precision": {"enum": ["float32", "float64"]},
                "bucket_width": {"type": "integer", "minimum": 0},
                "eval_batches": {"type": "integer", "minimum": 0},
                "record_timing": {"type": "boolean"},
                "bptt": {"type": "integer", "minimum": 2},
            },
        },
    },
}


def resolve_config(raw: dict) -> dict:
    """Validate a raw config dict and fill in all defaults."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"invalid config: {e.message} "
                          f"(at {'/'.join(str(p) for p in e.absolute_path)})")
    cfg = {
        "task": raw["task"],
        "data_dir": raw.get("data_dir", "data"),
        "run_dir": raw.get("run_dir", "runs/run"),
        "trace_layer": raw.get("trace_layer", 0),
        "model": {**MODEL_DEFAULTS, **raw.get("model", {})},
        "optimizer": {**OPTIMIZER_DEFAULTS, **raw.get("optimizer", {})},
        "training": {**TRAINING_DEFAULTS, **raw.get("training", {})},
    }
    if cfg["model"]["d_hidden"] % cfg["model"]["chunk"] != 0:
        raise ConfigError(f"chunk {cfg['model']['chunk']} must divide "
                          f"d_hidden {cfg['model']['d_hidden']}")
    return cfg


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return resolve_config(raw)


def echo_config(cfg: dict, run_dir) -> None:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.resolved.json").write_text(
        json.dumps(cfg, indent=2, sort_keys=True))


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator keyed by (seed, *keys); strings are hashed."""
    ints = tuple(zlib.crc32(str(k).encode()) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=ints))
