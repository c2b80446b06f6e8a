"""Command-line pipeline: synth -> smooth -> featurize -> train -> evaluate
-> explain -> predict.

Every subcommand writes its artifacts (never stdout-only) plus a manifest
recording the configuration, and prints a one-line JSON summary.  All
stages are deterministic under a fixed seed, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attention import DemographicEncoder, DemographicRecord, attention_overlay, fuse_and_score, overlay_svg
from .curves import SmootherConfig, TimeVolumeCurve, differentiate_flow, gaussian_smooth, volume_flow_curve
from .data import CohortSpec, generate_synthetic_cohort, load_time_volume_csv, write_time_volume_csv
from .detection import DetectionConfig, DetectionModel
from .errors import SpiroError
from .horizon import HORIZON_ORDER, HorizonLabel, future_feature_vector, predict_future_risk, top_horizon
from .metrics import metrics_report, subgroup_reports
from .phases import concavity_features
from .training import LogisticModel, TrainConfig, train_logistic, write_training_log

FORMAT_VERSION = 1


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _manifest(out_dir: Path, command: str, config: dict, counts: dict | None = None):
    _write_json(
        out_dir / f"manifest_{command.replace('-', '_')}.json",
        {
            "format_version": FORMAT_VERSION,
            "command": command,
            "config": config,
            "counts": counts or {},
            "version": __version__,
        },
    )


def _summary(payload: dict):
    print(json.dumps(payload, sort_keys=True))


# ---------------------------------------------------------------------------
# cohort files


def _write_cohort(out_dir: Path, records):
    write_time_volume_csv(out_dir / "curves.csv", [(r.record_id, r.curve) for r in records])
    with open(out_dir / "demographics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "sex", "age", "smoking", "fev1_fvc_ratio"])
        for r in records:
            writer.writerow([r.record_id, r.demo.sex, repr(r.demo.age), r.demo.smoking, repr(r.demo.fev1_fvc_ratio)])
    with open(out_dir / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "copd", "horizon"])
        for r in records:
            writer.writerow([r.record_id, r.copd, r.horizon.value])


def _load_cohort(cohort_dir: Path):
    """Returns aligned lists: ids, curves, demos, copd labels, horizon labels."""
    curves = dict(load_time_volume_csv(cohort_dir / "curves.csv"))
    demos, copd, horizon = {}, {}, {}
    with open(cohort_dir / "demographics.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            demos[row["id"]] = DemographicRecord(
                sex=row["sex"],
                age=float(row["age"]),
                smoking=row["smoking"],
                fev1_fvc_ratio=float(row["fev1_fvc_ratio"]),
            )
    with open(cohort_dir / "labels.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            copd[row["id"]] = int(row["copd"])
            horizon[row["id"]] = HorizonLabel(row["horizon"])
    ids = sorted(curves)
    return (
        ids,
        [curves[i] for i in ids],
        [demos[i] for i in ids],
        np.array([copd[i] for i in ids]),
        [horizon[i] for i in ids],
    )


def _preprocess(curves, args):
    """Smooth, differentiate and build Volume-Flow curves and flow series."""
    cfg = SmootherConfig(k=args.window, sigma=args.sigma)
    vf_curves = []
    for curve in curves:
        smoothed = gaussian_smooth(curve, cfg)
        vf_curves.append(volume_flow_curve(smoothed, differentiate_flow(smoothed)))
    return vf_curves, [vf.flows for vf in vf_curves]


def _split(ids, seed: int, test_fraction: float = 0.2):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    n_test = max(1, int(len(ids) * test_fraction))
    test = set(order[:n_test].tolist())
    return [i for i in range(len(ids)) if i not in test], sorted(test)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_per_class = max(1, args.n // len(HORIZON_ORDER))
    spec = CohortSpec(n_per_class=n_per_class, noise=args.noise, seed=args.seed)
    records = generate_synthetic_cohort(spec)
    _write_cohort(out_dir, records)
    _write_json(
        out_dir / "cohort_manifest.json",
        {
            "format_version": FORMAT_VERSION,
            "seed": args.seed,
            "spec": {"n_per_class": n_per_class, "noise": args.noise},
            "counts": {"total": len(records), "copd": int(sum(r.copd for r in records))},
            "version": __version__,
        },
    )
    _manifest(out_dir, "synth", {"seed": args.seed, "n": args.n, "noise": args.noise}, {"total": len(records)})
    _summary({"command": "synth", "out_dir": str(out_dir), "records": len(records)})
    return 0


def cmd_smooth(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = load_time_volume_csv(Path(args.cohort) / "curves.csv")
    cfg = SmootherConfig(k=args.window, sigma=args.sigma)
    smoothed = [(blow_id, gaussian_smooth(curve, cfg)) for blow_id, curve in records]
    write_time_volume_csv(out_dir / "smoothed_curves.csv", smoothed)
    _manifest(out_dir, "smooth", {"window": args.window, "sigma": args.sigma}, {"curves": len(smoothed)})
    _summary({"command": "smooth", "out_dir": str(out_dir), "curves": len(smoothed)})
    return 0


def cmd_featurize(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids, curves, _, _, _ = _load_cohort(Path(args.cohort))
    vf_curves, _ = _preprocess(curves, args)
    with open(out_dir / "features.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "c_pef_fef25", "c_fef25_fef50", "c_fef50_fef75", "c_fef75_plus", "trend"])
        for blow_id, vf in zip(ids, vf_curves):
            profile = concavity_features(vf)
            writer.writerow(
                [blow_id]
                + [repr(v) for v in profile.as_array().tolist()]
                + [repr(profile.trend)]
            )
    _manifest(out_dir, "featurize", _smoother_config(args), {"curves": len(ids)})
    _summary({"command": "featurize", "out_dir": str(out_dir), "curves": len(ids)})
    return 0


def _smoother_config(args):
    return {"window": args.window, "sigma": args.sigma}


def cmd_train_detect(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids, curves, demos, copd, _ = _load_cohort(Path(args.cohort))
    _, series = _preprocess(curves, args)
    train_idx, test_idx = _split(ids, args.seed)
    max_len = max(len(s) for s in series)
    model = DetectionModel(
        DetectionConfig(patch_len=args.k, channels=args.channels, hidden=args.hidden, seed=args.seed),
        max_length=max_len,
    )
    cfg = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    trace = model.train([series[i] for i in train_idx], copd[train_idx], cfg)

    # fusion model on top of the detector's probabilities, train split only
    encoder = DemographicEncoder().fit([demos[i] for i in train_idx])
    p_train = model.predict_proba([series[i] for i in train_idx])
    fusion_x = np.stack(
        [np.concatenate([[p], encoder.transform(demos[i])]) for p, i in zip(p_train, train_idx)]
    )
    fusion = train_logistic(fusion_x, copd[train_idx], cfg)

    checkpoint = model.to_dict()
    checkpoint.update(
        {
            "format_version": FORMAT_VERSION,
            "kind": "detection",
            "test_ids": [ids[i] for i in test_idx],
            "smoother": _smoother_config(args),
        }
    )
    _write_json(out_dir / "detect_model.json", checkpoint)
    _write_json(
        out_dir / "fusion_model.json",
        {
            "format_version": FORMAT_VERSION,
            "kind": "fusion",
            "model": fusion.to_dict(),
            "demographic_encoder": encoder.to_dict(),
        },
    )
    write_training_log(out_dir / "train_detect_log.jsonl", trace, args.seed)
    _manifest(
        out_dir,
        "train-detect",
        {
            "seed": args.seed,
            "epochs": args.epochs,
            "lr": args.lr,
            "batch_size": args.batch_size,
            "k": args.k,
            "hidden": args.hidden,
            "channels": args.channels,
            **_smoother_config(args),
        },
        {"train": len(train_idx), "test": len(test_idx)},
    )
    _summary({"command": "train-detect", "out_dir": str(out_dir), "final_loss": trace[-1]})
    return 0


def _load_models(model_dir: Path):
    detect_blob = json.loads((model_dir / "detect_model.json").read_text())
    fusion_blob = json.loads((model_dir / "fusion_model.json").read_text())
    model = DetectionModel.from_dict(detect_blob)
    fusion = LogisticModel.from_dict(fusion_blob["model"])
    encoder = DemographicEncoder.from_dict(fusion_blob["demographic_encoder"])
    return model, fusion, encoder, detect_blob


def _fused_risks(series, demos, model, fusion, encoder):
    p_hat = model.predict_proba(series)
    risks = []
    for p, demo in zip(p_hat, demos):
        risk, _ = fuse_and_score(float(p), demo, fusion, encoder)
        risks.append(risk)
    return p_hat, np.array(risks)


def cmd_train_horizon(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids, curves, demos, copd, horizons = _load_cohort(Path(args.cohort))
    model, fusion, encoder, _ = _load_models(Path(args.models))
    vf_curves, series = _preprocess(curves, args)
    _, risks = _fused_risks(series, demos, model, fusion, encoder)
    features = np.stack(
        [
            future_feature_vector(risk, concavity_features(vf), demo, encoder)
            for risk, vf, demo in zip(risks, vf_curves, demos)
        ]
    )
    labels = np.array([h.value for h in horizons])
    cfg = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    horizon_model = train_logistic(features, labels, cfg)
    _write_json(
        out_dir / "horizon_model.json",
        {"format_version": FORMAT_VERSION, "kind": "horizon", "model": horizon_model.to_dict()},
    )
    write_training_log(out_dir / "train_horizon_log.jsonl", horizon_model.loss_trace, args.seed)
    _manifest(
        out_dir,
        "train-horizon",
        {"seed": args.seed, "epochs": args.epochs, "lr": args.lr, **_smoother_config(args)},
        {"records": len(ids)},
    )
    _summary({"command": "train-horizon", "out_dir": str(out_dir), "final_loss": horizon_model.loss_trace[-1]})
    return 0


def cmd_evaluate(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids, curves, demos, copd, _ = _load_cohort(Path(args.cohort))
    model, fusion, encoder, detect_blob = _load_models(Path(args.models))
    _, series = _preprocess(curves, args)
    test_ids = set(detect_blob.get("test_ids", ids))
    sel = [i for i, blow_id in enumerate(ids) if blow_id in test_ids]
    p_hat, risks = _fused_risks([series[i] for i in sel], [demos[i] for i in sel], model, fusion, encoder)
    labels = copd[sel]
    report = {
        "detection": metrics_report(p_hat, labels, args.threshold, split="test"),
        "fused": metrics_report(risks, labels, args.threshold, split="test"),
    }
    if args.subgroup:
        report["subgroups"] = subgroup_reports(p_hat, labels, [demos[i] for i in sel], args.subgroup, args.threshold)
    _write_json(out_dir / "metrics.json", report)
    _manifest(out_dir, "evaluate", {"threshold": args.threshold, "subgroup": args.subgroup, **_smoother_config(args)})
    _summary({"command": "evaluate", "out_dir": str(out_dir), "auroc": report["detection"]["auroc"]})
    return 0


def cmd_explain(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids, curves, demos, _, _ = _load_cohort(Path(args.cohort))
    model, fusion, encoder, _ = _load_models(Path(args.models))
    vf_curves, series = _preprocess(curves, args)
    targets = [args.id] if args.id else ids
    written = []
    for blow_id in targets:
        i = ids.index(blow_id)
        p_hat, weights, scores, plan = model.explain(series[i])
        risk, contributions = fuse_and_score(p_hat, demos[i], fusion, encoder)
        from .attention import AttentionResult

        result = AttentionResult(weights=weights, context=np.zeros(0), score_trace=scores)
        overlay = attention_overlay(result, vf_curves[i], plan)
        overlay.update({"p_hat": p_hat, "fused_risk": risk, "contributions": contributions})
        _write_json(out_dir / f"overlay_{blow_id}.json", overlay)
        if args.svg:
            (out_dir / f"overlay_{blow_id}.svg").write_text(overlay_svg(overlay, vf_curves[i]))
        written.append(blow_id)
    _manifest(out_dir, "explain", {"id": args.id, "svg": args.svg, **_smoother_config(args)}, {"overlays": len(written)})
    _summary({"command": "explain", "out_dir": str(out_dir), "overlays": len(written)})
    return 0


def cmd_predict(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids, curves, demos, _, _ = _load_cohort(Path(args.cohort))
    model, fusion, encoder, _ = _load_models(Path(args.models))
    horizon_blob = json.loads((Path(args.models) / "horizon_model.json").read_text())
    horizon_model = LogisticModel.from_dict(horizon_blob["model"])
    vf_curves, series = _preprocess(curves, args)
    with open(out_dir / "predictions.jsonl", "w") as fh:
        for i, blow_id in enumerate(ids):
            p_hat = float(model.predict_proba([series[i]])[0])
            risk, _ = fuse_and_score(p_hat, demos[i], fusion, encoder)
            record = {"id": blow_id, "p_hat": p_hat, "fused_risk": risk}
            if p_hat > args.threshold:
                record["verdict"] = "copd"
            else:
                record["verdict"] = "non_copd"
                profile = concavity_features(vf_curves[i])
                vec = future_feature_vector(risk, profile, demos[i], encoder)
                dist = predict_future_risk(vec, horizon_model)
                record["horizon"] = {
                    "label_probs": {k.value: v for k, v in dist.items()},
                    "top_label": top_horizon(dist).value,
                    "features_used": list(map(float, vec)),
                }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    _manifest(out_dir, "predict", {"threshold": args.threshold, **_smoother_config(args)}, {"records": len(ids)})
    _summary({"command": "predict", "out_dir": str(out_dir), "records": len(ids)})
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spiroflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, cohort=True, models=False):
        p.add_argument("--out-dir", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--sigma", type=float, default=2.0)
        p.add_argument("--window", type=int, default=5)
        if cohort:
            p.add_argument("--cohort", required=True, help="directory with cohort CSV files")
        if models:
            p.add_argument("--models", required=True, help="directory with trained model files")

    p = sub.add_parser("synth", help="generate a seeded synthetic cohort")
    common(p, cohort=False)
    p.add_argument("--n", type=int, default=60, help="approximate total cohort size")
    p.add_argument("--noise", type=float, default=0.1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("smooth", help="write smoothed Time-Volume curves")
    common(p)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("featurize", help="write per-curve concavity features")
    common(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train-detect", help="train the detection stack and fusion model")
    common(p)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--k", type=int, default=32, help="patch length in samples")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--channels", type=int, default=16)
    p.set_defaults(func=cmd_train_detect)

    p = sub.add_parser("train-horizon", help="train the onset-horizon model")
    common(p, models=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=cmd_train_horizon)

    p = sub.add_parser("evaluate", help="metrics on the held-out split")
    common(p, models=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--subgroup", choices=["sex", "smoke", "age"], default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="attention overlays for cohort curves")
    common(p, models=True)
    p.add_argument("--id", default=None, help="single record id (default: all)")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("predict", help="gated detection + horizon prediction")
    common(p, models=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpiroError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
