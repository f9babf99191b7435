"""Command-line entry point: ``hmmn <command> [flags]``.

Commands: generate, train, eval, ablate, gradcheck, attend. All randomness
comes from ``--seed`` through named sub-streams. Settings resolve as
flags > ``--config`` JSON file > built-in defaults, and the effective
configuration is written into every output file. ``HMMN_LOG`` sets the log
level (default WARNING).

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import data as data_mod
from .ablation import build_representation, enumerate_specs
from .data import SyntheticConfig, generate_synthetic
from .encodings import ModelParams, encode_instance
from .gradients import backward, finite_diff_grad, relative_error
from .numerics import set_dtype
from .training import TrainConfig, TrainingDiverged, evaluate, load_checkpoint, save_checkpoint, train
from .variants import parse_variant, predict

log = logging.getLogger("hmmn")

GRADCHECK_DIMS = {
    "toy": dict(d=8, d_w=6, d_r=5, m=4, n=3, vocab_size=10),
    "small": dict(d=16, d_w=12, d_r=10, m=6, n=5, vocab_size=20),
}
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


def _write_json(path, doc):
    text = json.dumps(doc, indent=1, sort_keys=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _load_config_file(path):
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RuntimeError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise RuntimeError(f"config {path} must hold a JSON object")
    return doc


def _resolve(cls, file_cfg: dict, flags: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(file_cfg) - names
    if unknown:
        raise RuntimeError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = dict(file_cfg)
    merged.update({k: v for k, v in flags.items() if v is not None and k in names})
    return cls(**merged)


def _train_config(args) -> TrainConfig:
    flags = dict(lr=args.lr, batch=args.batch, epochs=args.epochs, patience=args.patience,
                 seed=args.seed, variant=args.variant, d=args.dim, lam=args.lam, hops=args.hops,
                 optimizer=args.optimizer, clip=args.clip, threads=args.threads)
    if args.normalize_coattention:
        flags["normalize_coattention"] = True
    cfg = _resolve(TrainConfig, _load_config_file(args.config), flags)
    cfg.validate()
    return cfg


def _load_data(args):
    ds = data_mod.load(args.data, args.vocab)
    if ds.vocab is None:
        raise RuntimeError("no vocabulary: pass --vocab or set vocab_ref in the dataset")
    return ds


# -- commands -----------------------------------------------------------------


def cmd_generate(args):
    flags = dict(seed=args.seed, instances=args.instances, mode=args.mode, cue=args.cue,
                 m=args.m, n=args.n)
    cfg = _resolve(SyntheticConfig, _load_config_file(args.config), flags)
    try:
        cfg.validate()
    except ValueError as exc:
        raise RuntimeError(f"invalid generator config: {exc}") from None
    ds = generate_synthetic(cfg)
    data_mod.save(ds, args.out, args.vocab)
    print(f"wrote {len(ds)} instances to {args.out}")


def cmd_train(args):
    cfg = _train_config(args)
    ds = _load_data(args)
    if args.dim is None and "d" not in _load_config_file(args.config) and "d" in ds.meta:
        cfg.d = int(ds.meta["d"])
    if args.dev:
        train_set, dev_set = ds, data_mod.load(args.dev, args.vocab)
    else:
        train_set, dev_set = data_mod.split(ds, args.dev_fraction, cfg.seed)
    params, metrics = train(cfg, train_set, dev_set, ds.vocab)
    config = {"train": asdict(cfg), "data": str(args.data), "dev_fraction": args.dev_fraction,
              "float64": args.float64}
    save_checkpoint(args.out, params, cfg, extra={"metrics": metrics.to_json()})
    metrics_path = args.metrics or str(Path(args.out).with_suffix(".metrics.json"))
    _write_json(metrics_path, {"schema": 1, "command": "train", "config": config,
                               "metrics": metrics.to_json()})
    print(metrics.table())


def _checkpoint_params(args):
    params, doc = load_checkpoint(args.checkpoint)
    changes = {}
    if args.hops is not None:
        changes["hops"] = args.hops
    if args.lam is not None:
        changes["lam"] = args.lam
    if changes:
        params = params.replace(**changes)
    variant = args.variant or doc["variant"]
    parse_variant(variant)
    return params, variant


def cmd_eval(args):
    params, variant = _checkpoint_params(args)
    ds = _load_data(args)
    metrics = evaluate(params, ds, ds.vocab, variant)
    config = {"checkpoint": str(args.checkpoint), "data": str(args.data), "variant": variant,
              "hops": params.hops, "lam": params.lam, "float64": args.float64}
    doc = {"schema": 1, "command": "eval", "config": config, "metrics": metrics.to_json()}
    if args.out:
        _write_json(args.out, doc)
    print(metrics.table())


def cmd_ablate(args):
    cfg = _train_config(args)
    ds = _load_data(args)
    if args.dim is None and "d" not in _load_config_file(args.config) and "d" in ds.meta:
        cfg.d = int(ds.meta["d"])
    train_set, dev_set = data_mod.split(ds, args.dev_fraction, cfg.seed)
    probe_params = ModelParams.initialize(cfg.d, ds.vocab.dim, ds.instances[0].frames[0].shape[1],
                                          seed=cfg.seed)
    probe = encode_instance(ds.instances[0], ds.vocab, probe_params)
    rows = []
    for spec in enumerate_specs():
        spec_cfg = TrainConfig(**{**asdict(cfg), "variant": f"spec:{spec.name}"})
        # a diverging spec keeps its best pre-divergence score and is flagged
        diverged = False
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                _, metrics = train(spec_cfg, train_set, dev_set, ds.vocab)
        except TrainingDiverged as exc:
            metrics, diverged = exc.metrics, True
            log.warning("%s: %s", spec.name, exc)
        shape = build_representation(spec, probe).shape
        rows.append({"stage": spec.stage, "spec": spec.name, "label": spec.pretty,
                     "rows": int(shape[0]), "cols": int(shape[1]),
                     "dev_accuracy": metrics.accuracy, "best_epoch": metrics.best_epoch,
                     "diverged": diverged})
        log.info("%s %.4f", spec.name, metrics.accuracy)
    config = {"train": asdict(cfg), "data": str(args.data), "dev_fraction": args.dev_fraction,
              "float64": args.float64}
    out = Path(args.out)
    lines = ["stage\tspec\tlabel\trows\tcols\tdev_accuracy\tdiverged"]
    lines += [f"{r['stage']}\t{r['spec']}\t{r['label']}\t{r['rows']}\t{r['cols']}"
              f"\t{r['dev_accuracy']:.4f}\t{'yes' if r['diverged'] else 'no'}" for r in rows]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_json(out.with_suffix(".json"), {"schema": 1, "config": config, "rows": rows})
    print("\n".join(lines))


def cmd_gradcheck(args):
    dims = GRADCHECK_DIMS[args.dims]
    variant = args.variant or "hmmn"
    parse_variant(variant)
    hops = 2 if args.hops is None else args.hops
    lam = 0.45 if args.lam is None else args.lam
    set_dtype(np.float64)
    err1, err2 = [], []
    for i in range(args.instances):
        seed = args.seed + i
        raw, vocab = data_mod.toy_problem(seed, **dims)
        params = ModelParams.initialize(dims["d"], dims["d_w"], dims["d_r"], seed=seed,
                                        lam=lam, hops=hops)
        exact = backward([raw], vocab, params, variant)
        approx = finite_diff_grad([raw], vocab, params, h=args.step, variant=variant, seed=seed)
        err1.append(relative_error(exact.dW1, approx.dW1)[approx.mask1])
        err2.append(relative_error(exact.dW2, approx.dW2)[approx.mask2])
    report = {"schema": 1,
              "config": {"seed": args.seed, "dims": args.dims, **dims, "variant": variant,
                         "hops": hops, "lam": lam, "instances": args.instances, "step": args.step},
              "tolerance": GRADCHECK_TOL}
    passed = True
    for name, errs in (("W1", err1), ("W2", err2)):
        e = np.concatenate(errs)
        report[name] = {"max_rel_error": float(e.max()), "median_rel_error": float(np.median(e)),
                        "entries": int(e.size)}
        passed &= bool(e.max() < GRADCHECK_TOL)
        print(f"{name}: max rel err {e.max():.3e}  median {np.median(e):.3e}  ({e.size} entries)")
    report["passed"] = passed
    if args.out:
        _write_json(args.out, report)
    print("PASS" if passed else "FAIL")
    return 0 if passed else 1


_RAMP = " .:-=+*#%@"


def heatmap(trace_doc: dict) -> str:
    """ASCII rendering of subtitle (delta) and frame (zeta) weights per hop."""
    lines = []
    for k, hops in trace_doc.get("answers", {}).items():
        for t, h in hops.items():
            for name in ("delta", "zeta"):
                w = h[name]
                cells = "".join(_RAMP[min(len(_RAMP) - 1, int(x * (len(_RAMP) - 1) + 0.5))] for x in w)
                lines.append(f"a{k} hop{t} {name:<5} |{cells}|  max {max(w):.2f} @ {int(np.argmax(w))}")
    for t, w in trace_doc.get("alpha", {}).items():
        cells = "".join(_RAMP[min(len(_RAMP) - 1, int(x * (len(_RAMP) - 1) + 0.5))] for x in w)
        lines.append(f"hop{t} alpha |{cells}|  max {max(w):.2f} @ {int(np.argmax(w))}")
    return "\n".join(lines)


def cmd_attend(args):
    params, variant = _checkpoint_params(args)
    ds = _load_data(args)
    if not 0 <= args.index < len(ds):
        raise RuntimeError(f"instance index {args.index} out of range (dataset has {len(ds)})")
    raw = ds.instances[args.index]
    pred = predict(encode_instance(raw, ds.vocab, params), params, variant, keep_trace=True)
    body = pred.to_json()
    doc = {"schema": 1, "instance": args.index, "variant": variant, "gold": raw.gold}
    doc.update({k: v for k, v in body.items() if k != "schema"})
    doc["config"] = {"checkpoint": str(args.checkpoint), "data": str(args.data),
                     "hops": params.hops, "lam": params.lam, "float64": args.float64}
    if args.out:
        _write_json(args.out, doc)
    else:
        print(json.dumps(doc))
    if args.heatmap:
        print(heatmap(doc))


# -- parser -------------------------------------------------------------------


def _parser():
    p = argparse.ArgumentParser(prog="hmmn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--seed", type=int, default=None if data else 0)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--float64", action="store_true", help="64-bit arithmetic (default 32-bit)")
        if data:
            sp.add_argument("--data", required=True)
            sp.add_argument("--vocab", default=None)

    def model_flags(sp):
        sp.add_argument("--variant", default=None)
        sp.add_argument("--hops", type=int, default=None)
        sp.add_argument("--lambda", dest="lam", type=float, default=None)

    def train_flags(sp):
        model_flags(sp)
        sp.add_argument("--config", default=None, help="JSON file with training settings")
        sp.add_argument("--lr", type=float, default=None)
        sp.add_argument("--batch", type=int, default=None)
        sp.add_argument("--epochs", type=int, default=None)
        sp.add_argument("--patience", type=int, default=None)
        sp.add_argument("--dim", type=int, default=None, help="model dimension d")
        sp.add_argument("--optimizer", choices=("sgd", "momentum", "adam"), default=None)
        sp.add_argument("--clip", type=float, default=None)
        sp.add_argument("--normalize-coattention", action="store_true")
        sp.add_argument("--dev-fraction", type=float, default=0.1)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--config", default=None, help="JSON file with generator settings")
    g.add_argument("--out", required=True)
    g.add_argument("--vocab", default=None, help="vocabulary output path")
    g.add_argument("--instances", type=int, default=None)
    g.add_argument("--mode", choices=data_mod.MODES, default=None)
    g.add_argument("--cue", type=float, default=None)
    g.add_argument("--m", type=int, default=None, help="subtitle sentences per instance")
    g.add_argument("--n", type=int, default=None, help="frames per instance")
    g.add_argument("--threads", type=int, default=None)
    g.add_argument("--float64", action="store_true")

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    common(t)
    train_flags(t)
    t.add_argument("--dev", default=None, help="separate dev dataset instead of a split")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--metrics", default=None)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    common(e)
    model_flags(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", default=None)

    a = sub.add_parser("ablate", help="train and score all 40 baseline representations")
    common(a)
    train_flags(a)
    a.add_argument("--out", required=True, help="TSV path; JSON goes next to it")

    gc = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--dims", choices=sorted(GRADCHECK_DIMS), default="toy")
    gc.add_argument("--instances", type=int, default=20)
    gc.add_argument("--step", type=float, default=1e-5)
    gc.add_argument("--out", default=None)
    gc.add_argument("--threads", type=int, default=None)
    gc.add_argument("--float64", action="store_true")
    model_flags(gc)

    at = sub.add_parser("attend", help="export attention weights for one instance")
    common(at)
    model_flags(at)
    at.add_argument("--checkpoint", required=True)
    at.add_argument("--index", type=int, default=0)
    at.add_argument("--out", default=None)
    at.add_argument("--heatmap", action="store_true")
    return p


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "attend": cmd_attend,
}


def _validate(args):
    if getattr(args, "threads", None) is not None and args.threads < 1:
        raise UsageError("--threads must be at least 1")
    if getattr(args, "variant", None):
        try:
            parse_variant(args.variant)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    frac = getattr(args, "dev_fraction", None)
    if frac is not None and not 0 < frac < 1:
        raise UsageError("--dev-fraction must lie strictly between 0 and 1")


def run(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        _validate(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hmmn: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=os.environ.get("HMMN_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    if args.command != "generate" and getattr(args, "seed", 0) is None:
        args.seed = 0
    set_dtype(np.float64 if args.float64 else np.float32)
    try:
        outputs = [args.out, getattr(args, "metrics", None)]
        if args.command == "generate":
            outputs.append(args.vocab)
        for path in outputs:
            if path:
                Path(path).parent.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](args)
    except (RuntimeError, ValueError, OSError, KeyError) as exc:
        print(f"hmmn {args.command}: {exc}", file=sys.stderr)
        return 1
    finally:
        set_dtype(np.float64)
    return 0 if code is None else code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
