"""JSON Schemas for every machine-readable file the CLI writes."""

_num = {"type": "number"}
_vec = {"type": "array", "items": _num}
_mat = {"type": "array", "items": _vec}
_tokens = {"type": "array", "items": {"type": "string"}}

DATASET = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "meta", "vocab_ref", "instances"],
    "properties": {
        "schema": {"const": 1},
        "meta": {"type": "object"},
        "vocab_ref": {"type": "string"},
        "instances": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["q", "answers", "subtitles", "frames", "gold"],
                "properties": {
                    "q": _tokens,
                    "answers": {"type": "array", "items": _tokens, "minItems": 5, "maxItems": 5},
                    "subtitles": {"type": "array", "items": _tokens, "minItems": 1},
                    "frames": {"type": "array", "items": _mat, "minItems": 1},
                    "gold": {"type": "integer", "minimum": 0, "maximum": 4},
                    "info": {"type": "object"},
                },
            },
        },
    },
}

_bucket = {
    "type": "object",
    "required": ["correct", "total", "accuracy"],
    "properties": {
        "correct": {"type": "integer"},
        "total": {"type": "integer"},
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
    },
}

METRICS = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "command", "config", "metrics"],
    "properties": {
        "schema": {"const": 1},
        "command": {"enum": ["train", "eval"]},
        "config": {"type": "object"},
        "metrics": {
            "type": "object",
            "required": ["accuracy", "correct", "total", "per_type", "history"],
            "properties": {
                "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                "correct": {"type": "integer"},
                "total": {"type": "integer"},
                "per_type": {"type": "object", "additionalProperties": _bucket},
                "history": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["epoch", "train_loss", "dev_accuracy"],
                        "properties": {
                            "epoch": {"type": "integer"},
                            "train_loss": {"type": ["number", "null"]},
                            "dev_accuracy": {"type": "number"},
                        },
                    },
                },
                "best_epoch": {"type": ["integer", "null"]},
            },
        },
    },
}

CHECKPOINT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "variant", "dims", "lam", "hops", "normalize_coattention",
                 "config", "config_hash", "W1", "W2"],
    "properties": {
        "schema": {"const": 1},
        "variant": {"type": "string"},
        "dims": {
            "type": "object",
            "required": ["d", "d_w", "d_r"],
            "properties": {k: {"type": "integer", "minimum": 1} for k in ("d", "d_w", "d_r")},
        },
        "lam": {"type": "number", "minimum": 0},
        "hops": {"type": "integer", "minimum": 1},
        "normalize_coattention": {"type": "boolean"},
        "config": {"type": "object"},
        "config_hash": {"type": "string"},
        "W1": _mat,
        "W2": _mat,
        "metrics": {"type": "object"},
    },
}

_hop = {
    "type": "object",
    "required": ["delta", "zeta", "epsilon"],
    "properties": {"delta": _vec, "zeta": _vec, "epsilon": _mat},
}

TRACE = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "instance", "variant", "gold", "f", "p", "argmax", "config"],
    "properties": {
        "schema": {"const": 1},
        "instance": {"type": "integer", "minimum": 0},
        "variant": {"type": "string"},
        "gold": {"type": "integer"},
        "f": {**_vec, "minItems": 5, "maxItems": 5},
        "p": {**_vec, "minItems": 5, "maxItems": 5},
        "argmax": {"type": "integer", "minimum": 0, "maximum": 4},
        "answers": {
            "type": "object",
            "additionalProperties": {"type": "object", "additionalProperties": _hop},
        },
        "alpha": {"type": "object", "additionalProperties": _vec},
        "config": {"type": "object"},
    },
}

ABLATION = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "config", "rows"],
    "properties": {
        "schema": {"const": 1},
        "config": {"type": "object"},
        "rows": {
            "type": "array",
            "minItems": 40,
            "maxItems": 40,
            "items": {
                "type": "object",
                "required": ["stage", "spec", "label", "rows", "cols", "dev_accuracy"],
                "properties": {
                    "stage": {"enum": ["single", "pair"]},
                    "spec": {"type": "string"},
                    "label": {"type": "string"},
                    "rows": {"type": "integer"},
                    "cols": {"type": "integer"},
                    "dev_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                    "best_epoch": {"type": ["integer", "null"]},
                    "diverged": {"type": "boolean"},
                },
            },
        },
    },
}

_gc_matrix = {
    "type": "object",
    "required": ["max_rel_error", "median_rel_error", "entries"],
    "properties": {
        "max_rel_error": _num,
        "median_rel_error": _num,
        "entries": {"type": "integer"},
    },
}

GRADCHECK = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "config", "tolerance", "W1", "W2", "passed"],
    "properties": {
        "schema": {"const": 1},
        "config": {"type": "object"},
        "tolerance": _num,
        "W1": _gc_matrix,
        "W2": _gc_matrix,
        "passed": {"type": "boolean"},
    },
}

ALL = {
    "dataset": DATASET,
    "metrics": METRICS,
    "checkpoint": CHECKPOINT,
    "trace": TRACE,
    "ablation": ABLATION,
    "gradcheck": GRADCHECK,
}
