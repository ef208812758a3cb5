"""Command-line pipeline.

One command per stage: ``synth`` (benchmark stream), ``prepare`` (stitch,
scale, scenario switch, chronological split), ``train``, ``calibrate``,
``predict``, ``baseline`` (shallow detectors and the link-prediction model),
``inject-experiment`` (identity-swap retraining study), and ``report``
(metrics JSON from score CSVs).  Every JSON artifact embeds the effective
configuration and seed; score CSVs get a ``.meta.json`` sidecar with the
same.  Numeric settings come from defaults, then an optional JSON config
file, then flags, in increasing precedence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import dataio, evaluation, svdd
from .baselines import (
    TabularView,
    isolation_forest,
    lof_scores,
    vanilla_tgn_calibrate,
    vanilla_tgn_fit,
    vanilla_tgn_predict,
)
from .ctdg import NORMAL, is_attack
from .encoder import EncoderDims

SCENARIOS = ("with-features", "without-features")


@dataclass(frozen=True)
class RunConfig:
    """Numeric/scenario settings shared across commands."""

    d_m: int = 32
    d_t: int = 32
    p: int = 32
    heads: int = 2
    epochs: int = 25
    batch_size: int = 200
    n_neighbors: int = 10
    quantile: float = 0.99
    weight_decay: float = 1e-4
    lr: float = 1e-4
    seed: int = 0
    scenario: str = "with-features"
    n_train: int = 0   # 0 = derive the split from the first attack label
    n_val: int = 0

    def __post_init__(self):
        if min(self.d_m, self.d_t, self.p, self.heads, self.epochs, self.batch_size,
               self.n_neighbors) < 1:
            raise ValueError("dimension and count settings must be positive")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError(f"quantile must lie in (0,1), got {self.quantile}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.n_train < 0 or self.n_val < 0:
            raise ValueError("split sizes must be nonnegative")


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def load_config(path) -> RunConfig:
    """RunConfig from a JSON file; unknown keys are rejected by name."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise ValueError(f"{path}: unknown config key {unknown[0]!r}")
    return RunConfig(**doc)


def effective_config(args) -> RunConfig:
    """File values (if --config) overridden by any flags that were set."""
    rc = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        name: getattr(args, name)
        for name in _CONFIG_KEYS
        if getattr(args, name, None) is not None
    }
    return replace(rc, **overrides) if overrides else rc


def _fit_config(rc: RunConfig, d_e: int) -> svdd.FitConfig:
    return svdd.FitConfig(
        dims=EncoderDims(d_m=rc.d_m, d_t=rc.d_t, p=rc.p, d_e=d_e, heads=rc.heads),
        epochs=rc.epochs,
        batch_size=rc.batch_size,
        n_neighbors=rc.n_neighbors,
        lr=rc.lr,
        weight_decay=rc.weight_decay,
        quantile=rc.quantile,
        seed=rc.seed,
    )


def _write_json(path, doc: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _sidecar(path, command: str, rc: RunConfig, inputs: list[str]):
    _write_json(str(path) + ".meta.json", {
        "command": command,
        "config": asdict(rc),
        "inputs": [str(p) for p in inputs],
    })


def _split_spec(stream, rc: RunConfig) -> dataio.SplitSpec:
    if rc.n_train > 0:
        return dataio.SplitSpec(n_train=rc.n_train, n_val=rc.n_val)
    return dataio.default_split(stream)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = dataio.SynthConfig(
        n_nodes=args.n_nodes,
        n_benign_events=args.n_benign,
        n_attack_events=args.n_attack,
        attacker_count=args.attacker_count,
        seed=args.seed if args.seed is not None else 7,
        hard_mode=args.hard_mode,
    )
    stream, info = dataio.synth_generate(cfg)
    dataio.save_temporal_csv(args.out, stream)
    meta = {
        "command": "synth",
        "config": asdict(cfg),
        "attacker_ids": info.attacker_ids,
        "suspect": info.suspect,
        "victim_ids": info.victim_ids,
        "late_joiner_ids": info.late_joiner_ids,
        "first_attack_index": info.first_attack_index,
        "attack_start_time": info.attack_start_time,
    }
    _write_json(args.meta, meta)
    print(f"wrote {len(stream)} events to {args.out} (meta: {args.meta})")
    return 0


def cmd_prepare(args) -> int:
    rc = effective_config(args)
    if args.benign and args.attack_day:
        benign, b_keys, _ = dataio.load_temporal_csv(args.benign)
        attack, a_keys, _ = dataio.load_temporal_csv(args.attack_day)
        stream, _ = dataio.stitch_days(benign, attack, b_keys, a_keys)
        inputs = [args.benign, args.attack_day]
    elif args.input:
        stream, _, _ = dataio.load_temporal_csv(args.input)
        inputs = [args.input]
    else:
        raise ValueError("prepare needs --in, or --benign with --attack-day")
    spec = _split_spec(stream, rc)
    stream, (lo, hi) = dataio.scale_features(stream, spec.n_train)
    if rc.scenario == "without-features":
        stream = dataio.zero_features(stream)
    train, val, test = dataio.chrono_split(stream, spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_temporal_csv(out / "train.csv", train)
    dataio.save_temporal_csv(out / "val.csv", val)
    dataio.save_temporal_csv(out / "test.csv", test)
    _write_json(out / "prepare.json", {
        "command": "prepare",
        "config": asdict(rc),
        "inputs": inputs,
        "split": {"n_train": spec.n_train, "n_val": spec.n_val, "n_test": len(test)},
        "feature_min": [float(v) for v in lo],
        "feature_max": [float(v) for v in hi],
    })
    print(f"prepared {len(train)}/{len(val)}/{len(test)} events into {out}")
    return 0


def cmd_train(args) -> int:
    rc = effective_config(args)
    train, _, _ = dataio.load_temporal_csv(args.train)
    model = svdd.fit(train, _fit_config(rc, train.features.shape[1]))
    svdd.save_model(args.model, model)
    first, last = model.history["epoch_mean_score"][0], model.history["epoch_mean_score"][-1]
    print(f"trained {rc.epochs} epochs; mean score {first:.6f} -> {last:.6f}; model: {args.model}")
    return 0


def cmd_calibrate(args) -> int:
    rc = effective_config(args)
    model = svdd.load_model(args.model)
    train, _, _ = dataio.load_temporal_csv(args.train)
    tau = svdd.calibrate_threshold(model, train, rc.quantile)
    svdd.save_model(args.model, model)
    print(f"threshold at q={rc.quantile}: {tau:.6f}")
    return 0


def cmd_predict(args) -> int:
    rc = effective_config(args)
    model = svdd.load_model(args.model)
    test, _, _ = dataio.load_temporal_csv(args.test)
    warmup = tuple(dataio.load_temporal_csv(p)[0] for p in args.warmup)
    scores, pred = svdd.predict_stream(model, test, warmup=warmup)
    start = sum(len(w) for w in warmup)
    evaluation.write_scores_csv(args.scores, test, scores, model.tau, pred, start_index=start)
    _sidecar(args.scores, "predict", rc, [args.model, args.test, *args.warmup])
    n_alarm = sum(p == "Attack" for p in pred)
    print(f"scored {len(test)} events; {n_alarm} above threshold; scores: {args.scores}")
    return 0


def _contamination(test) -> float:
    ratio = sum(1 for lab in test.labels if is_attack(lab)) / len(test)
    if ratio == 0.0:
        raise ValueError("cannot derive contamination: test stream has no attack labels")
    if ratio > 0.5:
        raise ValueError(f"contamination {ratio:.3f} exceeds 0.5; pass --contamination")
    return ratio


def cmd_baseline(args) -> int:
    rc = effective_config(args)
    train, _, _ = dataio.load_temporal_csv(args.train)
    test, _, _ = dataio.load_temporal_csv(args.test)
    val = dataio.load_temporal_csv(args.val)[0] if args.val else None
    train_view = TabularView.from_stream(train)
    test_view = TabularView.from_stream(test)
    contamination = args.contamination or _contamination(test)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    which = ["lof-novelty", "lof-outlier", "iforest", "vanilla-tgn"] if args.which == "all" \
        else [args.which]
    written = {}

    def emit(name: str, scores, tau: float):
        pred = ["Attack" if s > tau else NORMAL for s in scores]
        path = out / f"{name.replace('-', '_')}.csv"
        evaluation.write_scores_csv(path, test, scores, tau, pred)
        _sidecar(path, "baseline", rc, [args.train, args.test])
        written[name] = str(path)

    for name in which:
        if name == "lof-novelty":
            scores = lof_scores(train_view, test_view, k=args.k, mode="novelty")
            emit(name, scores, float(np.quantile(scores, 1.0 - contamination)))
        elif name == "lof-outlier":
            scores = lof_scores(None, test_view, k=args.k, mode="outlier")
            emit(name, scores, float(np.quantile(scores, 1.0 - contamination)))
        elif name == "iforest":
            scores, labels = isolation_forest(
                train_view, test_view, contamination=contamination, seed=rc.seed
            )
            tau = float(np.quantile(scores, 1.0 - contamination))
            emit(name, scores, tau)
        elif name == "vanilla-tgn":
            model = vanilla_tgn_fit(train, _fit_config(rc, train.features.shape[1]))
            vanilla_tgn_calibrate(model, train, rc.quantile)
            warmup = (train, val) if val is not None else (train,)
            scores, _pred = vanilla_tgn_predict(model, test, warmup=warmup)
            emit(name, scores, model.tau)
        else:
            raise ValueError(f"unknown baseline {name!r}")
    _write_json(out / "baseline.json", {
        "command": "baseline",
        "config": asdict(rc),
        "contamination": contamination,
        "outputs": written,
    })
    print(f"baselines written to {out}: {', '.join(written)}")
    return 0


def cmd_inject_experiment(args) -> int:
    rc = effective_config(args)
    train, _, _ = dataio.load_temporal_csv(args.train)
    val, _, _ = dataio.load_temporal_csv(args.val)
    test, _, _ = dataio.load_temporal_csv(args.test)
    with open(args.meta, encoding="utf-8") as fh:
        meta = json.load(fh)
    suspect = meta["suspect"]
    if suspect is None:
        raise ValueError(f"{args.meta}: no suspect node recorded (generate with hard mode)")
    if args.donor is not None:
        donor = args.donor
    else:
        counts = np.bincount(train.src)
        donor = int(np.argmax(counts))
    injected = dataio.inject_identity_swap(train, donor, suspect, n=args.n_inject, seed=rc.seed)
    model = svdd.fit(injected, _fit_config(rc, injected.features.shape[1]))
    svdd.calibrate_threshold(model, injected, rc.quantile)
    scores, pred = svdd.predict_stream(model, test, warmup=(injected, val))

    truth = evaluation.as_binary(test.labels)
    auc = evaluation.roc_auc(truth, scores)
    suspect_normal = [
        i for i in range(len(test))
        if int(test.src[i]) == suspect and test.labels[i] == NORMAL
    ]
    below = sum(1 for i in suspect_normal if scores[i] <= model.tau)
    fraction = below / len(suspect_normal) if suspect_normal else None

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    svdd.save_model(out / "injected_model.json", model)
    evaluation.write_scores_csv(out / "injected_scores.csv", test, scores, model.tau, pred)
    _sidecar(out / "injected_scores.csv", "inject-experiment", rc,
             [args.train, args.val, args.test, args.meta])
    _write_json(out / "inject_experiment.json", {
        "command": "inject-experiment",
        "config": asdict(rc),
        "donor": donor,
        "suspect": suspect,
        "n_injected": args.n_inject,
        "suspect_normal_events": len(suspect_normal),
        "suspect_normal_below_threshold": fraction,
        "roc_auc": auc,
        "threshold": model.tau,
    })
    frac = "n/a" if fraction is None else f"{fraction:.3f}"
    print(f"injection study: suspect-normal below threshold {frac}, ROC AUC {auc:.3f}")
    return 0


def cmd_report(args) -> int:
    rc = effective_config(args)
    models = {}
    for entry in args.add:
        name, _, path = entry.partition("=")
        if not path:
            raise ValueError(f"--add expects name=path, got {entry!r}")
        cols = evaluation.read_scores_csv(path)
        models[name] = evaluation.model_block(
            cols["true_label"], cols["score"], float(cols["threshold"][0])
        )
    report = evaluation.build_report(rc.scenario, asdict(rc), models)
    evaluation.write_report(args.out, report)
    print(f"report with {len(models)} model blocks: {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_config_flags(sub):
    sub.add_argument("--config", help="JSON config file (flags take precedence)")
    for name in sorted(_CONFIG_KEYS):
        flag = "--" + name.replace("_", "-")
        if name == "scenario":
            sub.add_argument(flag, choices=SCENARIOS, default=None)
        elif name in ("quantile", "weight_decay", "lr"):
            sub.add_argument(flag, type=float, default=None)
        else:
            sub.add_argument(flag, type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tgnsvdd",
        description="One-class intrusion detection on continuous-time dynamic graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic benchmark stream")
    p.add_argument("--out", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--n-nodes", type=int, default=50)
    p.add_argument("--n-benign", type=int, default=2000)
    p.add_argument("--n-attack", type=int, default=200)
    p.add_argument("--attacker-count", type=int, default=2)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hard-mode", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="scale, apply scenario, and split chronologically")
    p.add_argument("--in", dest="input")
    p.add_argument("--benign", help="benign-day CSV (stitched before --attack-day)")
    p.add_argument("--attack-day", help="attack-day CSV appended after the benign day")
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="fit the one-class detector")
    p.add_argument("--train", required=True)
    p.add_argument("--model", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="set the alarm threshold from train scores")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="score a stream and emit the score CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--warmup", nargs="*", default=[],
                   help="streams replayed before the test stream (train [val])")
    p.add_argument("--scores", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("baseline", help="run the reference detectors")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--val", help="validation CSV (warmup for the link-prediction model)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--which", default="all",
                   choices=["all", "lof-novelty", "lof-outlier", "iforest", "vanilla-tgn"])
    p.add_argument("--k", type=int, default=20, help="LOF neighbor count")
    p.add_argument("--contamination", type=float, default=None,
                   help="override the test-derived attack fraction")
    _add_config_flags(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("inject-experiment",
                       help="identity-swap injection, retrain, and re-evaluation")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--meta", required=True, help="synth meta JSON naming the suspect id")
    p.add_argument("--donor", type=int, default=None,
                   help="donor node id (default: most active train source)")
    p.add_argument("--n-inject", type=int, default=50)
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_inject_experiment)

    p = sub.add_parser("report", help="metrics JSON from score CSVs")
    p.add_argument("--out", required=True)
    p.add_argument("--add", nargs="+", default=[], metavar="NAME=SCORES_CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:  # surface inner rejections verbatim, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
