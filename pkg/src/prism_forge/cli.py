"""Command-line interface.

Subcommands: gen, train-encoder, train-classifier, classify, restore,
session, eval, diag, ablate, ttest.  Exit codes: 0 success, 1 usage error,
2 runtime failure.  ``--seed`` overrides the config seed everywhere and
defaults to 42.  The environment variable PRISM_FORGE_THREADS caps the
worker count of batch subcommands.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint, evaluation
from .dataset import DatasetConfig, build_dataset, read_manifest, load_depth
from .embedding import TrainConfig, encode, predict_labels, train_classifier, train_encoder, write_training_log
from .fileio import read_depth, read_png, write_png
from .prompts import PromptParseError, RestorationRequest, parse_prompt
from .restoration import auto_restore, restore, restore_sequential
from .rng import DEFAULT_SEED

__all__ = ["main", "worker_count"]


def worker_count(requested: int | None = None) -> int:
    """Worker cap from PRISM_FORGE_THREADS (default: single worker)."""
    cap = os.environ.get("PRISM_FORGE_THREADS")
    limit = max(1, int(cap)) if cap else 1
    if requested is None:
        return limit
    return max(1, min(requested, limit))


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="prism-forge", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a benchmark dataset")
    g.add_argument("--config", help="dataset config JSON")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--n", type=int, default=None, help="override item count")

    te = sub.add_parser("train-encoder", help="train the embedding encoder")
    te.add_argument("--manifest", required=True)
    te.add_argument("--out", required=True, help="output directory")
    te.add_argument("--scheme", default="jaccard")
    te.add_argument("--tau", type=float, default=0.10)
    te.add_argument("--epochs", type=int, default=None)
    te.add_argument("--seed", type=int, default=None)

    tc = sub.add_parser("train-classifier", help="train the distortion classifier")
    tc.add_argument("--manifest", required=True)
    tc.add_argument("--encoder", required=True)
    tc.add_argument("--out", required=True, help="classifier checkpoint path")
    tc.add_argument("--seed", type=int, default=None)

    cl = sub.add_parser("classify", help="predict distortion labels for an image")
    cl.add_argument("--in", dest="input", required=True)
    cl.add_argument("--encoder", required=True)
    cl.add_argument("--classifier", required=True)
    cl.add_argument("--threshold", type=float, default=0.85)

    r = sub.add_parser("restore", help="prompt-driven restoration")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--prompt", default=None)
    r.add_argument("--auto", action="store_true", help="classifier-driven targets")
    r.add_argument("--sequential", action="store_true")
    r.add_argument("--manifest", default=None, help="oracle parameters for the input item")
    r.add_argument("--encoder", default=None)
    r.add_argument("--classifier", default=None)
    r.add_argument("--depth", default=None)
    r.add_argument("--seed", type=int, default=None)

    s = sub.add_parser("session", help="interactive stepwise restoration")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", default="session-out")
    s.add_argument("--manifest", default=None)
    s.add_argument("--depth", default=None)

    ev = sub.add_parser("eval", help="restore a split and report PSNR/SSIM")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--split", default="test", choices=["train", "val", "test"])
    ev.add_argument("--oracle", action="store_true")
    ev.add_argument("--encoder", default=None)
    ev.add_argument("--classifier", default=None)
    ev.add_argument("--limit", type=int, default=None)

    d = sub.add_parser("diag", help="temperature-sweep latent diagnostics")
    d.add_argument("--manifest", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--tau-list", default="0.03,0.07,0.10,0.20,0.50")
    d.add_argument("--seeds", default="2,42,420")
    d.add_argument("--epochs", type=int, default=None)

    ab = sub.add_parser("ablate", help="protocol harnesses")
    ab.add_argument("--what", required=True, choices=["schemes", "nsweep"])
    ab.add_argument("--out", required=True)
    ab.add_argument("--manifest", default=None, help="required for schemes")
    ab.add_argument("--seeds", default="2,42,420")
    ab.add_argument("--epochs", type=int, default=None)
    ab.add_argument("--n-images", type=int, default=None, help="nsweep dataset size")

    tt = sub.add_parser("ttest", help="paired t-test over two aligned result files")
    tt.add_argument("--a", required=True, help="CSV of numbers (one per line)")
    tt.add_argument("--b", required=True)
    return p


def _read_series(path: str) -> np.ndarray:
    vals = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip().split(",")[-1]
            if not line:
                continue
            try:
                vals.append(float(line))
            except ValueError:
                continue  # header line
    if not vals:
        raise ValueError(f"no numeric values found in {path}")
    return np.asarray(vals)


def _load_manifest(path: str):
    manifest = Path(path)
    return read_manifest(manifest), manifest.parent


def _find_item(triplets, image_path: str):
    name = Path(image_path).name
    for t in triplets:
        if Path(t.distorted_path).name == name or t.id == Path(image_path).stem:
            return t
    return None


def _cmd_gen(args) -> int:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            cfg = DatasetConfig.from_json(json.load(f))
    else:
        cfg = DatasetConfig()
    if args.seed is not None:
        cfg.global_seed = args.seed
    if args.n is not None:
        cfg.n_images = args.n
    cfg.validate()
    triplets = build_dataset(cfg, args.out)
    print(f"wrote {len(triplets)} items under {args.out}")
    return 0


def _cmd_train_encoder(args) -> int:
    triplets, mdir = _load_manifest(args.manifest)
    cfg = TrainConfig(weighting_scheme=args.scheme, tau=args.tau)
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    cfg = replace(cfg, seed=args.seed if args.seed is not None else DEFAULT_SEED)
    enc, probe, log = train_encoder(triplets, mdir, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.save_encoder(out / "encoder.bin", enc)
    checkpoint.save_head(out / "probe.bin", probe)
    write_training_log(log, out / "training_log.csv")
    print(f"final loss {log[-1]['loss']:.4f}; encoder saved to {out / 'encoder.bin'}")
    return 0


def _cmd_train_classifier(args) -> int:
    triplets, mdir = _load_manifest(args.manifest)
    enc = checkpoint.load_encoder(args.encoder)
    cfg = TrainConfig(seed=args.seed if args.seed is not None else DEFAULT_SEED)
    head = train_classifier(enc, triplets, mdir, cfg)
    checkpoint.save_head(args.out, head)
    print(f"classifier saved to {args.out}")
    return 0


def _cmd_classify(args) -> int:
    enc = checkpoint.load_encoder(args.encoder)
    clf = checkpoint.load_head(args.classifier)
    img = read_png(args.input)
    emb = encode(enc, img)
    probs = clf.probabilities(emb)
    labels = sorted(predict_labels(clf, emb, args.threshold))
    from .distortions import CATEGORIES

    print(json.dumps({
        "labels": labels,
        "probabilities": {c: round(float(p), 4) for c, p in zip(CATEGORIES, probs)},
        "threshold": args.threshold,
    }, indent=2, sort_keys=True))
    return 0


def _resolve_oracle(args, img_path: str):
    """(known_specs, present, depth) for an input image, if a manifest names it."""
    specs = present = depth = None
    if args.manifest:
        triplets, mdir = _load_manifest(args.manifest)
        item = _find_item(triplets, img_path)
        if item is None:
            raise ValueError(f"{img_path} not found in manifest {args.manifest}")
        specs = item.applied_specs
        present = item.applied_labels
        depth = load_depth(item, mdir)
    if getattr(args, "depth", None):
        depth = read_depth(args.depth)
    return specs, present, depth


def _cmd_restore(args) -> int:
    img = read_png(args.input)
    specs, present, depth = _resolve_oracle(args, args.input)
    if args.auto:
        if not (args.encoder and args.classifier):
            raise _UsageError("--auto requires --encoder and --classifier")
        enc = checkpoint.load_encoder(args.encoder)
        clf = checkpoint.load_head(args.classifier)
        out, plan_obj = auto_restore(img, clf, enc, depth=depth)
    else:
        if not args.prompt:
            raise _UsageError("restore needs --prompt or --auto")
        parsed = parse_prompt(args.prompt)
        request = RestorationRequest(parsed.targets, "full", args.prompt)
        if present is None and args.encoder and args.classifier:
            enc = checkpoint.load_encoder(args.encoder)
            clf = checkpoint.load_head(args.classifier)
            present = predict_labels(clf, encode(enc, img))
        fn = restore_sequential if args.sequential else restore
        out, plan_obj = fn(request, img, depth=depth, known_specs=specs, present=present)
    write_png(args.out, out)
    plan_path = Path(args.out).with_suffix(".plan.json")
    with open(plan_path, "w", encoding="utf-8") as f:
        json.dump(plan_obj.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"restored -> {args.out} (plan: {'+'.join(plan_obj.categories) or 'empty'})")
    return 0


def _cmd_session(args) -> int:
    img = read_png(args.input)
    specs, present, depth = _resolve_oracle(args, args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    current = img
    step = 0
    print("stepwise restoration session; enter a prompt per line, 'undo', or 'quit'")
    history = [img]
    for line in sys.stdin:
        text = line.strip()
        if not text or text.lower() in ("quit", "exit", "q"):
            break
        if text.lower() == "undo":
            if len(history) > 1:
                history.pop()
                current = history[-1]
                print("undone")
            else:
                print("nothing to undo")
            continue
        try:
            parsed = parse_prompt(text)
        except PromptParseError as exc:
            print(f"could not parse: {exc} (unmatched: {', '.join(exc.unmatched) or 'none'})")
            continue
        request = RestorationRequest(parsed.targets, "full", text)
        current, plan_obj = restore(request, current, depth=depth, known_specs=specs, present=present)
        history.append(current)
        step += 1
        out_path = out_dir / f"step-{step:02d}.png"
        write_png(out_path, current)
        print(f"[{step}] {'+'.join(plan_obj.categories) or 'no-op'} -> {out_path}")
    return 0


def _cmd_eval(args) -> int:
    triplets, mdir = _load_manifest(args.manifest)
    enc = checkpoint.load_encoder(args.encoder) if args.encoder else None
    clf = checkpoint.load_head(args.classifier) if args.classifier else None
    report = evaluation.evaluate_restoration(
        triplets,
        mdir,
        split=args.split,
        oracle=args.oracle,
        encoder=enc,
        classifier=clf,
        limit=args.limit,
        workers=worker_count(8),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "metrics.csv")
    report.write_json(out / "metrics.json")
    print(json.dumps(report.summary(), indent=2, sort_keys=True))
    return 0


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _cmd_diag(args) -> int:
    triplets, mdir = _load_manifest(args.manifest)
    cfg = TrainConfig()
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    report = evaluation.tau_sweep(
        triplets,
        mdir,
        cfg,
        tau_list=_parse_floats(args.tau_list),
        seeds=[int(s) for s in args.seeds.split(",")],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_report(report, out / "tau_sweep.json")
    print(f"tau sweep written to {out / 'tau_sweep.json'}")
    return 0


def _cmd_ablate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig()
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    seeds = [int(s) for s in args.seeds.split(",")]
    if args.what == "schemes":
        if not args.manifest:
            raise _UsageError("--what schemes requires --manifest")
        triplets, mdir = _load_manifest(args.manifest)
        report = evaluation.weighting_ablation(triplets, mdir, cfg, seeds=seeds)
        evaluation.write_report(report, out / "weighting_ablation.json")
        print(f"weighting ablation written to {out / 'weighting_ablation.json'}")
    else:
        ds = DatasetConfig(n_images=args.n_images or 1200, image_size=48)
        report = evaluation.n_sweep(out / "datasets", ds, cfg)
        evaluation.write_report(report, out / "n_sweep.json")
        print(f"n sweep written to {out / 'n_sweep.json'}")
    return 0


def _cmd_ttest(args) -> int:
    a = _read_series(args.a)
    b = _read_series(args.b)
    res = evaluation.paired_t_test(a, b)
    print(json.dumps({
        "t": round(res.t, 6),
        "p": round(res.p, 6),
        "dof": res.dof,
        "mean_diff": res.mean_diff,
        "significant_at_0.05": res.p < 0.05,
    }, indent=2, sort_keys=True))
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train-encoder": _cmd_train_encoder,
    "train-classifier": _cmd_train_classifier,
    "classify": _cmd_classify,
    "restore": _cmd_restore,
    "session": _cmd_session,
    "eval": _cmd_eval,
    "diag": _cmd_diag,
    "ablate": _cmd_ablate,
    "ttest": _cmd_ttest,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except PromptParseError as exc:
        print(f"prompt error: {exc} (unmatched tokens: {', '.join(exc.unmatched) or 'none'})", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
