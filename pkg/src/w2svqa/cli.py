"""Command-line entry point: ``w2svqa <subcommand> ...``.

Environment:
  W2S_ENCODER  encoder executable, or a full encode template containing {input}
  W2S_THREADS  worker threads for metric extraction (default 1)
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .annotation import (
    PredictionStore,
    annotate_corpus,
    read_annotations,
    read_predictions,
    sample_pairs,
    severity_pairs,
    write_annotations,
)
from .artifacts import digest, make_header, read_jsonl, write_json, write_jsonl
from .config import PipelineConfig, load_config
from .curation import build_histograms, match_subset, read_target, target_edges, write_target
from .distortions import GRIDS, DistortionSpec, apply, manifest_record, write_manifest
from .errors import ConfigError, PreconditionError, W2SError
from .evaluation import benchmark, read_truth_csv
from .gmad import mine_gmad, read_scored_pool, write_pairs
from .inference import calibrate, read_logits, soft_score, symmetrize
from .media import EncoderConfig, load_clip, save_clip
from .metrics import MetricConfig, metric_vector, read_metrics_csv, read_metrics_jsonl, write_metrics_csv
from .pipeline import Calibrator, W2SConfig, choose_anchors, config_to_dict, final_calibrator, run_all
from .student import StudentRanker, TrainConfig, train_student

CLIP_SUFFIXES = (".y4m", ".raw", ".yuv")


def _header(args, payload_cfg) -> dict:
    return make_header(digest(payload_cfg), getattr(args, "seed", None))


def _args_digest_payload(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}


def _load_metrics(path) -> dict:
    return read_metrics_jsonl(path) if str(path).endswith(".jsonl") else read_metrics_csv(path)


def _clip_paths(inputs) -> list:
    out = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            out += sorted(q for q in p.iterdir() if q.suffix.lower() in CLIP_SUFFIXES and q.is_file())
        elif p.exists():
            out.append(p)
        else:
            raise ConfigError(f"input {p} does not exist")
    return out


# -- subcommands ---------------------------------------------------------------

def cmd_metrics(args) -> int:
    paths = _clip_paths(args.inputs)
    if not paths:
        raise ConfigError("no clip files found (expected .y4m or raw files with a .json sidecar)")
    cfg = MetricConfig(all_frames=args.all_frames)
    threads = max(1, int(os.environ.get("W2S_THREADS", "1")))

    def one(path):
        return path.stem, metric_vector(load_clip(path), cfg)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = dict(pool.map(one, paths))
    header = _header(args, _args_digest_payload(args))
    comment = " ".join(f"{k}={v}" for k, v in header.items())
    write_metrics_csv(rows, args.out, header_comment=comment)
    return 0


def cmd_curate(args) -> int:
    pool = _load_metrics(args.pool)
    if args.target:
        target = read_target(args.target)
    elif args.target_metrics:
        vecs = list(_load_metrics(args.target_metrics).values())
        target = build_histograms(vecs, edges=target_edges(vecs, args.bins))
        if args.write_target:
            write_target(target, args.write_target)
    else:
        raise ConfigError("curate needs --target or --target-metrics")
    plan = match_subset(pool, target, args.k, args.mode)
    write_json(args.out, plan.to_json(), _header(args, _args_digest_payload(args)))
    return 0


def cmd_distort(args) -> int:
    clip = load_clip(args.input)
    specs = [DistortionSpec.parse(s) for s in args.spec]
    if args.ladder:
        specs += [DistortionSpec(args.ladder, lvl, args.seed) for lvl in range(1, len(GRIDS[args.ladder]) + 1)]
    if not specs:
        raise ConfigError("distort needs --spec or --ladder")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    encoder = EncoderConfig(executable=args.encoder) if args.encoder else None
    stem = Path(args.input).stem
    records = []
    for spec in specs:
        dest = out_dir / f"{stem}_{spec.family}_{spec.level}.y4m"
        save_clip(apply(clip, spec, encoder), dest)
        records.append(manifest_record(stem, spec, dest))
    if args.manifest:
        write_manifest(records, args.manifest, _header(args, _args_digest_payload(args)))
    return 0


def _severity_from_manifest(path, stage):
    ladders = {}
    for rec in read_jsonl(path):
        key = (rec["source_id"], rec["family"], rec.get("seed", 0))
        ladders.setdefault(key, []).append((int(rec["level"]), Path(rec["output_path"]).stem))
    out = []
    for key in sorted(ladders):
        ids = [cid for _, cid in sorted(ladders[key])]
        out += severity_pairs(ids, stage)
    return out


def cmd_annotate(args) -> int:
    annotations = []
    errors = {}
    if args.predictions:
        store: PredictionStore = read_predictions(args.predictions)
        if args.pairs:
            pairs = [(str(r["first"]), str(r["second"])) for r in read_jsonl(args.pairs)]
        else:
            pairs = sample_pairs(store.video_ids, args.n_pairs, np.random.default_rng(args.seed))
        rep = annotate_corpus(pairs, store, args.stage, args.rule)
        annotations += rep.annotations
        errors = rep.errors
    if args.severity_manifest:
        annotations += _severity_from_manifest(args.severity_manifest, args.stage)
    if not (args.predictions or args.severity_manifest):
        raise ConfigError("annotate needs --predictions and/or --severity-manifest")
    write_annotations(annotations, args.out, _header(args, _args_digest_payload(args)))
    for idx in sorted(errors):
        print(json.dumps({"pair_index": idx, "error": errors[idx]}), file=sys.stderr)
    return 1 if errors else 0


def cmd_mine(args) -> int:
    res = mine_gmad(read_scored_pool(args.pool), args.k_levels, args.per_level)
    write_pairs(res.pairs, args.out, _header(args, _args_digest_payload(args)))
    for role, lvl in res.skipped:
        print(json.dumps({"skipped_level": lvl, "role_order": role}), file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    if args.stage > 1:
        if not args.prior or not Path(args.prior).is_file():
            raise PreconditionError(
                f"stage {args.stage} training needs the stage {args.stage - 1} checkpoint (--prior)")
        StudentRanker.load(args.prior)
    annotations = [a for path in args.annotations for a in read_annotations(path)]
    features = _load_metrics(args.metrics)
    tcfg = TrainConfig(epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
                       seed=args.seed, use_conf=not args.no_conf)
    model, report = train_student(annotations, features, tcfg)
    header = _header(args, _args_digest_payload(args))
    write_json(args.out, {**model.to_json(), "stage": args.stage, "train": report.to_json()}, header)
    return 0


def _anchor_ids(args):
    if args.anchors:
        return args.anchors.split(",")
    if args.pseudo:
        store = read_predictions(args.pseudo)
        pseudo = {v: float(np.mean([p.score for p in store.get(v)])) for v in store.video_ids}
        return choose_anchors(pseudo, args.n_anchors)
    raise ConfigError("calibrate needs --anchors or --pseudo")


def cmd_calibrate(args) -> int:
    records = []
    if args.logits:
        if not args.anchors:
            raise ConfigError("calibrate --logits needs --anchors")
        anchors = args.anchors.split(",")
        index = {a: k for k, a in enumerate(anchors)}
        dists = {(f, s): d for f, s, d in read_logits(args.logits)}
        n = len(anchors)
        raw = np.full((n, n), 0.5)
        for (f, s), d in dists.items():
            if f in index and s in index and f != s:
                raw[index[s], index[f]] = soft_score(d)  # P(second beats first)
        block = symmetrize(raw)
        tests = sorted({s for f, s in dists if f in index and s not in index})
        for vid in tests:
            fwd = [dists.get((a, vid)) for a in anchors]
            if any(d is None for d in fwd):
                missing = [a for a, d in zip(anchors, fwd) if d is None]
                raise ConfigError(f"{vid} has no comparison against anchor(s) {missing}")
            rev = [dists.get((vid, a)) for a in anchors]
            score = calibrate(fwd, block, reverse=None if any(d is None for d in rev) else rev)
            records.append({"video_id": vid, "score": score})
    else:
        if not (args.checkpoint and args.metrics):
            raise ConfigError("calibrate needs --logits, or --checkpoint with --metrics")
        with open(args.checkpoint) as fh:
            model = StudentRanker.from_json(json.load(fh))
        feats = _load_metrics(args.metrics)
        anchors = _anchor_ids(args)
        cal = Calibrator.build(model, [feats[a] for a in anchors])
        for vid in sorted(feats):
            records.append({"video_id": vid, "score": cal.score(feats[vid])})
    write_jsonl(args.out, records, _header(args, _args_digest_payload(args)))
    return 0


def cmd_evaluate(args) -> int:
    scores = {str(r["video_id"]): float(r["score"]) for r in read_jsonl(args.scores)}
    truth = read_truth_csv(args.truth)
    rep = benchmark(scores, truth, args.dataset, logistic=args.logistic)
    payload = rep.to_json()
    if args.out:
        write_json(args.out, payload, _header(args, _args_digest_payload(args)))
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_run_all(args) -> int:
    pcfg = load_config(args.config) if args.config else PipelineConfig(W2SConfig(), {})
    cfg = pcfg.w2s
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out_dir = Path(args.out_dir or pcfg.paths.get("output_dir") or "w2s_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg_dict = config_to_dict(cfg)
    header = make_header(digest(cfg_dict), cfg.seed)
    state = run_all(cfg)
    for res in state.results:
        write_json(out_dir / f"stage{res.stage}_report.json", res.report, header)
        write_json(out_dir / f"student_stage{res.stage}.json", res.model.to_json(), header)
        write_annotations(res.annotations, out_dir / f"annotations_stage{res.stage}.jsonl", header)
    cal, anchors = final_calibrator(state)
    held = state.corpus.clips_of(state.splits["held_out"])
    scores = cal.score_all(state.corpus.features, held)
    truth = state.corpus.truth
    write_jsonl(out_dir / "scores.jsonl",
                ({"video_id": v, "score": scores[v], "truth": truth[v]} for v in sorted(scores)), header)
    summary = {
        "config": cfg_dict,
        "anchors": anchors,
        "splits": {str(k): v for k, v in state.splits.items()},
        "held_out_srcc": {f"stage{r.stage}": r.report["held_out"]["srcc"] for r in state.results},
        "teacher_mean_srcc": state.results[0].report.get("teacher_mean_srcc"),
    }
    write_json(out_dir / "summary.json", summary, header)
    print(json.dumps(summary["held_out_srcc"], sort_keys=True))
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="w2svqa",
        description="Weak-to-strong video quality toolkit.",
        epilog="Environment: W2S_ENCODER (encoder executable or template with {input}), "
               "W2S_THREADS (metric extraction threads).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", help="nine-metric table for clip files")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, help="clip files or directories")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--all-frames", action="store_true", help="use every frame instead of 1 fps sampling")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("curate", help="histogram-matched subset selection")
    p.add_argument("--pool", required=True, help="pool metric table (CSV or JSONL)")
    p.add_argument("--target", help="target histogram JSON")
    p.add_argument("--target-metrics", help="metric table whose histograms form the target")
    p.add_argument("--write-target", help="save the derived target histogram here")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mode", choices=("greedy", "exact"), default="greedy")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("distort", help="apply synthetic distortions")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--spec", action="append", default=[], help="family:level[:seed], repeatable")
    p.add_argument("--ladder", choices=sorted(GRIDS), help="every level of one family")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--encoder", help="encoder executable for h264/h265")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--manifest", help="JSONL manifest output")
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("annotate", help="ensemble and severity pair labels")
    p.add_argument("--predictions", help="teacher predictions JSONL {model_id, video_id, score}")
    p.add_argument("--pairs", help="pairs JSONL {first, second}; default samples --n-pairs")
    p.add_argument("--n-pairs", type=int, default=250)
    p.add_argument("--severity-manifest", help="distortion manifest; emits all ladder pairs")
    p.add_argument("--rule", choices=("verbatim", "symmetric"), default="verbatim")
    p.add_argument("--stage", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("mine", help="gMAD pair mining")
    p.add_argument("--pool", required=True, help="JSONL {video_id, weak_score, student_score}")
    p.add_argument("--k-levels", type=int, default=10)
    p.add_argument("--per-level", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("train", help="train the pairwise student")
    p.add_argument("--annotations", nargs="+", required=True)
    p.add_argument("--metrics", required=True)
    p.add_argument("--stage", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--prior", help="checkpoint of the previous stage (required for stage > 1)")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--no-conf", action="store_true", help="pure cross-entropy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="absolute scores via anchors and Thurstone MAP")
    p.add_argument("--logits", help="comparison logits JSONL {first, second, logits}")
    p.add_argument("--checkpoint", help="student checkpoint JSON")
    p.add_argument("--metrics", help="metric table of videos to score")
    p.add_argument("--anchors", help="comma-separated anchor ids")
    p.add_argument("--pseudo", help="predictions JSONL used to pick percentile anchors")
    p.add_argument("--n-anchors", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="SRCC/PLCC against ground truth")
    p.add_argument("--scores", required=True, help="JSONL {video_id, score}")
    p.add_argument("--truth", required=True, help="CSV {video_id, mos}")
    p.add_argument("--dataset", default="dataset")
    p.add_argument("--logistic", action="store_true", help="four-parameter logistic before PLCC")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run-all", help="three-stage weak-to-strong run on the synthetic corpus")
    p.add_argument("--config", help="TOML or JSON pipeline configuration")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int, help="overrides the configured seed")
    p.set_defaults(func=cmd_run_all)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except (W2SError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
