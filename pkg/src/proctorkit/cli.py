"""Command-line surface: simulate sessions, extract features, train both
models, evaluate them side by side, and replay a session as a live score
stream.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
All outputs are deterministic given identical inputs and seeds (no
timestamps, sorted keys, fixed float formatting).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from .config import PipelineConfig, load_config
from .errors import ProctorKitError
from .features import (
    FeatureVector,
    Preprocessor,
    read_feature_csv,
    write_feature_csv,
)
from .gbdt import GBDTParams, load_gbdt, predict_proba, save_gbdt
from .lstm import LSTMParams, StreamScorer, load_lstm, save_lstm
from .metrics import comparison_table
from .pipeline import (
    evaluate_models,
    extract_frame,
    train_models,
    TrainedModels,
)
from .records import read_session, write_session
from .synth import (
    BehaviorSegment,
    ScenarioScript,
    default_benchmark,
    generate_session,
    reference_embedding,
)

ENV_CONFIG = "PROCTORKIT_CONFIG"


class UsageError(Exception):
    """Input/configuration problem; maps to exit code 2."""


def _load_cfg(path) -> PipelineConfig:
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    if path is None:
        return PipelineConfig()
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    return load_config(path)


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _script_from_dict(obj: dict) -> tuple[ScenarioScript, str]:
    segments = tuple(
        BehaviorSegment(behavior=s["behavior"], duration_frames=int(s["duration_frames"]))
        for s in obj["segments"]
    )
    script = ScenarioScript(
        session_id=obj["session_id"],
        segments=segments,
        frame_rate_hz=float(obj.get("frame_rate_hz", 10.0)),
        landmark_jitter=float(obj.get("landmark_jitter", 0.002)),
        detection_dropout=float(obj.get("detection_dropout", 0.05)),
        seed=int(obj.get("seed", 0)),
    )
    return script, obj.get("split", "train")


def _load_scripts(path) -> list[tuple[ScenarioScript, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    entries = raw["sessions"] if isinstance(raw, dict) else raw
    return [_script_from_dict(e) for e in entries]


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args.config)
    if args.script is not None:
        if not os.path.exists(args.script):
            raise UsageError(f"script file not found: {args.script}")
        scripts = _load_scripts(args.script)
    else:
        train, test = default_benchmark()
        scripts = [(s, "train") for s in train] + [(s, "test") for s in test]

    os.makedirs(args.out, exist_ok=True)
    ref = reference_embedding()
    manifest = {"reference_embedding": ref.tolist(), "sessions": []}
    for script, split in scripts:
        stream = generate_session(script, cfg, ref)
        fname = f"{script.session_id}.jsonl"
        fpath = os.path.join(args.out, fname)
        n = write_session(stream, fpath)
        manifest["sessions"].append(
            {
                "session_id": script.session_id,
                "file": fname,
                "frames": n,
                "frame_rate_hz": script.frame_rate_hz,
                "seed": script.seed,
                "split": split,
                "sha256": _sha256_file(fpath),
            }
        )
        print(f"wrote {fpath} ({n} frames, split={split})")
    mpath = os.path.join(args.out, "manifest.json")
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    print(f"wrote {mpath}")
    return 0


def _load_manifest(path) -> dict:
    if not os.path.exists(path):
        raise UsageError(f"manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def cmd_extract(args) -> int:
    cfg = _load_cfg(args.config)
    manifest = _load_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    ref = np.asarray(manifest["reference_embedding"], dtype=np.float64)
    os.makedirs(args.out, exist_ok=True)
    for entry in manifest["sessions"]:
        if args.split != "all" and entry["split"] != args.split:
            continue
        stream = read_session(os.path.join(base, entry["file"]),
                              frame_rate_hz=entry["frame_rate_hz"])
        vectors = [extract_frame(rec, cfg, ref) for rec in stream]
        out_path = os.path.join(args.out, f"{entry['session_id']}.csv")
        n = write_feature_csv(out_path, vectors)
        print(f"wrote {out_path} ({n} rows)")
    return 0


def _features_for_split(manifest: dict, features_dir, split: str) -> dict[str, list[FeatureVector]]:
    out = {}
    for entry in manifest["sessions"]:
        if split != "all" and entry["split"] != split:
            continue
        path = os.path.join(features_dir, f"{entry['session_id']}.csv")
        if not os.path.exists(path):
            raise UsageError(f"feature file not found: {path} (run extract first)")
        out[entry["session_id"]] = read_feature_csv(path)
    if not out:
        raise UsageError(f"no sessions with split={split!r} in manifest")
    return out


def cmd_train(args) -> int:
    manifest = _load_manifest(args.manifest)
    features = _features_for_split(manifest, args.features, "train")
    gbdt_params = GBDTParams(
        n_trees=args.n_trees,
        max_depth=args.max_depth,
        learning_rate=args.learning_rate,
        min_samples_leaf=args.min_samples_leaf,
        l2_lambda=args.l2_lambda,
    )
    lstm_params = LSTMParams(
        hidden=args.hidden,
        dropout_rate=args.dropout,
        fc1_dim=args.fc1_dim,
        window=args.window,
        learning_rate=args.lstm_lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        seed=args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    models = train_models(
        features,
        gbdt_params=gbdt_params,
        lstm_params=lstm_params,
        smote_k=args.smote_k,
        seed=args.seed,
        kinds=args.kind,
    )
    pre_path = os.path.join(args.out, "preprocess.json")
    models.preprocessor.save(pre_path)
    print(f"wrote {pre_path}")
    if args.kind in ("static", "both"):
        path = os.path.join(args.out, "static.json")
        save_gbdt(models.static, path)
        print(f"wrote {path} (threshold {models.static.threshold_opt:.4f})")
    if args.kind in ("temporal", "both"):
        path = os.path.join(args.out, "temporal.json")
        save_lstm(models.temporal, path)
        print(
            f"wrote {path} (threshold {models.temporal.threshold_opt:.4f}, "
            f"best epoch {models.temporal_history.best_epoch})"
        )
    return 0


def cmd_evaluate(args) -> int:
    manifest = _load_manifest(args.manifest)
    features = _features_for_split(manifest, args.features, args.split)
    pre = Preprocessor.load(args.preprocess)
    static = load_gbdt(args.static)
    temporal = load_lstm(args.temporal)
    models = TrainedModels(preprocessor=pre, static=static, temporal=temporal)
    bundle = evaluate_models(models, features)
    os.makedirs(args.out, exist_ok=True)
    spath = os.path.join(args.out, "eval_static.json")
    tpath = os.path.join(args.out, "eval_temporal.json")
    bundle.static.save(spath)
    bundle.temporal.save(tpath)
    print(comparison_table([bundle.static, bundle.temporal]))
    print(f"wrote {spath}")
    print(f"wrote {tpath}")
    return 0


def cmd_stream(args) -> int:
    cfg = _load_cfg(args.config)
    if not os.path.exists(args.session):
        raise UsageError(f"session file not found: {args.session}")
    pre = Preprocessor.load(args.preprocess)
    static = load_gbdt(args.static) if args.static else None
    scorer = None
    if args.temporal:
        scorer = StreamScorer(load_lstm(args.temporal), pre)
    ref = None
    if args.manifest:
        ref = np.asarray(_load_manifest(args.manifest)["reference_embedding"])

    interval = 1.0 / args.rate if args.rate else 0.0
    zones = {0: "white", 1: "yellow", 2: "red"}
    mouths = {0: "closed", 1: "partial", 2: "open"}
    gazes = {-1.0: "left", 0.0: "center", 1.0: "right"}
    for rec in read_session(args.session):
        start = time.perf_counter()
        fv = extract_frame(rec, cfg, ref)
        static_p = None
        if static is not None:
            static_p = predict_proba(static, pre.transform(fv.values))
        temporal_p = scorer.push(fv.values) if scorer is not None else None
        v = fv.values
        line = {
            "frame_index": rec.frame_index,
            "static_p": None if static_p is None else round(static_p, 6),
            "temporal_p": None if temporal_p is None else round(temporal_p, 6),
            "zone": None if np.isnan(v[6]) else zones[int(v[6])],
            "gaze": None if np.isnan(v[9]) else gazes[v[9]],
            "mouth": None if np.isnan(v[11]) else mouths[int(v[11])],
            "single_face_ok": bool(v[0] == 1.0),
        }
        print(json.dumps(line, separators=(",", ":")), flush=True)
        if interval:
            remaining = interval - (time.perf_counter() - start)
            if remaining > 0:
                time.sleep(remaining)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proctorkit",
        description="Multi-modal proctoring pipeline: simulate, extract, train, evaluate, stream.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic labeled sessions")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--script", help="scenario script JSON (default: built-in benchmark)")
    p.add_argument("--config", help="pipeline config JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", help="convert sessions to feature CSVs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="all", choices=("train", "test", "all"))
    p.add_argument("--config")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="fit preprocessing and proctoring models")
    p.add_argument("kind", choices=("static", "temporal", "both"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True, help="directory of feature CSVs")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--smote-k", type=int, default=5)
    p.add_argument("--n-trees", type=int, default=200)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--min-samples-leaf", type=int, default=5)
    p.add_argument("--l2-lambda", type=float, default=1.0)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--dropout", type=float, default=0.35)
    p.add_argument("--fc1-dim", type=int, default=32)
    p.add_argument("--window", type=int, default=15)
    p.add_argument("--lstm-lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=30)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score held-out sessions with both models")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--static", required=True)
    p.add_argument("--temporal", required=True)
    p.add_argument("--preprocess", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "test", "all"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stream", help="replay a session as a live probability feed")
    p.add_argument("--session", required=True)
    p.add_argument("--preprocess", required=True)
    p.add_argument("--static")
    p.add_argument("--temporal")
    p.add_argument("--manifest", help="for the reference identity embedding")
    p.add_argument("--config")
    p.add_argument("--rate", type=float, default=0.0,
                   help="throttle to this many frames per second (0 = no throttle)")
    p.set_defaults(func=cmd_stream)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ProctorKitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
