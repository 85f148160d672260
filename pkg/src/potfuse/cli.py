"""Command-line entry point orchestrating the full pipeline.

Configuration precedence: flags > JSON config file (--config) > defaults.
Exit codes: 0 success, 1 pipeline failure (failing stage named on stderr),
2 usage error (argparse).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines as baselines_mod
from . import dataset as dataset_mod
from . import features as features_mod
from . import head as head_mod
from . import metrics as metrics_mod
from . import preprocess, synth, viz
from .errors import PotfuseError

CONFIG_DEFAULTS = {
    "batch_size": 30,
    "epochs": 5,
    "dropout_rate": 0.5,
    "learning_rate": 0.01,
    "lr_decay_factor": 1.0,
    "lr_decay_step": 400,
    "weight_decay": 5e-4,
    "momentum": 0.9,
    "lambda1": 1.0,
    "optimizer": "adam",
    "seed": 0,
    "positive_class": 0,
    "extractor_mode": "stub",
    "graph_dir": None,
    "runner_cmd": None,
}


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return data


def _resolve(args: argparse.Namespace, file_config: dict, name: str):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in file_config:
        return file_config[name]
    return CONFIG_DEFAULTS.get(name)


def _effective_training_config(args, file_config) -> head_mod.TrainingConfig:
    fields = (
        "batch_size",
        "epochs",
        "dropout_rate",
        "learning_rate",
        "lr_decay_factor",
        "lr_decay_step",
        "weight_decay",
        "momentum",
        "lambda1",
        "optimizer",
        "seed",
    )
    return head_mod.TrainingConfig(**{f: _resolve(args, file_config, f) for f in fields})


def _build_extractors(args, file_config) -> dict:
    mode = _resolve(args, file_config, "extractor_mode")
    if mode == "stub":
        return features_mod.stub_extractors()
    if mode == "real":
        graph_dir = _resolve(args, file_config, "graph_dir")
        if not graph_dir:
            raise ValueError("extractor mode 'real' needs --graph-dir")
        return features_mod.onnx_extractors(graph_dir, _resolve(args, file_config, "runner_cmd"))
    raise ValueError(f"unknown extractor mode {mode!r}")


def _write_provenance(report_path, effective: dict) -> None:
    side = Path(str(report_path) + ".config.json")
    side.write_text(json.dumps(effective, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _image_label_pipeline(extractors, params):
    def classify(path):
        image = preprocess.standardize(preprocess.load_rgb(path))
        vectors = {
            bid: features_mod.extract_one(extractors[bid], image)
            for bid in features_mod.BACKBONE_ORDER
        }
        fused, _ = features_mod.fuse(vectors)
        return head_mod.predict(params, fused)[0]

    return classify


def _add_config_flag(p):
    p.add_argument("--config", help="JSON config file; flags override its values")


def _add_training_flags(p):
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    p.add_argument("--dropout-rate", type=float, dest="dropout_rate")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--lr-decay-factor", type=float, dest="lr_decay_factor")
    p.add_argument("--lr-decay-step", type=int, dest="lr_decay_step")
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--momentum", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--optimizer", choices=["adam", "sgd_momentum"])
    p.add_argument("--seed", type=int)


def _add_extractor_flags(p):
    p.add_argument("--mode", choices=["stub", "real"], dest="extractor_mode")
    p.add_argument("--graph-dir", dest="graph_dir")
    p.add_argument("--runner-cmd", dest="runner_cmd", help="external ONNX runner argv prefix")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="potfuse",
        description="Road pothole classification from fused frozen-backbone features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the procedural desk-scale dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--count-pothole", type=int, default=450)
    p.add_argument("--count-normal", type=int, default=450)
    p.add_argument("--height", type=int, default=synth.DEFAULT_SIZE[0])
    p.add_argument("--width", type=int, default=synth.DEFAULT_SIZE[1])

    ds = sub.add_parser("dataset", help="manifest operations").add_subparsers(
        dest="subcommand", required=True
    )
    p = ds.add_parser("ingest", help="scan class directories into a manifest")
    p.add_argument("--pothole-dir", required=True)
    p.add_argument("--normal-dir", required=True)
    p.add_argument("--out", required=True)
    p = ds.add_parser("split", help="stratified train/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train-frac", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p = ds.add_parser("verify", help="check files, labels, and split counts")
    p.add_argument("--manifest", required=True)
    p.add_argument("--json", dest="json_out")

    aug = sub.add_parser("augment", help="augmentation utilities").add_subparsers(
        dest="subcommand", required=True
    )
    p = aug.add_parser("preview", help="write augmented PNG samples for inspection")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rotation", type=float, default=45.0)
    p.add_argument("--hflip-prob", type=float, default=0.5, dest="hflip_prob")

    p = sub.add_parser("extract", help="run extractors over a manifest into a PFV1 store")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="all", choices=["train", "test", "all"])
    p.add_argument("--augment", action="store_true", help="augment each image once before extraction")
    p.add_argument("--augment-seed", type=int, default=0, dest="augment_seed")
    _add_extractor_flags(p)
    _add_config_flag(p)

    p = sub.add_parser("train", help="train the fused head on feature stores")
    p.add_argument("--train-store", required=True, dest="train_store")
    p.add_argument("--test-store", required=True, dest="test_store")
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="write per-epoch history JSON here")
    _add_training_flags(p)
    _add_config_flag(p)

    p = sub.add_parser("eval", help="evaluate a trained head on a feature store")
    p.add_argument("--store", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--csv")
    p.add_argument("--model-name", default="transfer_learning", dest="model_name")
    p.add_argument("--positive-class", type=int, choices=[0, 1], dest="positive_class")
    _add_config_flag(p)

    p = sub.add_parser("predict", help="classify a single image")
    p.add_argument("--head", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--positive-class", type=int, choices=[0, 1], dest="positive_class")
    _add_extractor_flags(p)
    _add_config_flag(p)

    bl = sub.add_parser("baseline", help="comparison classifiers").add_subparsers(
        dest="subcommand", required=True
    )
    p = bl.add_parser("train", help="train a baseline on a feature store")
    p.add_argument("--kind", required=True, choices=list(baselines_mod.KINDS))
    p.add_argument("--train-store", required=True, dest="train_store")
    p.add_argument("--out", required=True)
    p.add_argument("--learning-rate", type=float, default=0.01, dest="learning_rate")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=30, dest="batch_size")
    p.add_argument("--weight-decay", type=float, default=5e-4, dest="weight_decay")
    p.add_argument("--hidden-units", type=int, default=128, dest="hidden_units")
    p.add_argument("--seed", type=int, default=0)
    p = bl.add_parser("eval", help="evaluate a saved baseline")
    p.add_argument("--model", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--csv")
    p.add_argument("--model-name", dest="model_name")
    p.add_argument("--positive-class", type=int, choices=[0, 1], dest="positive_class")
    _add_config_flag(p)

    vz = sub.add_parser("viz", help="feature visualizations").add_subparsers(
        dest="subcommand", required=True
    )
    p = vz.add_parser("pca", help="2-D PCA scatter CSV")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p = vz.add_parser("tsne", help="2-D exact t-SNE scatter CSV")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p = vz.add_parser("heatmap", help="sample x feature heat matrix (PGM + CSV)")
    p.add_argument("--store", required=True)
    p.add_argument("--out-prefix", required=True, dest="out_prefix")

    bench = sub.add_parser("bench", help="benchmarks").add_subparsers(
        dest="subcommand", required=True
    )
    p = bench.add_parser("fps", help="end-to-end image->label throughput")
    p.add_argument("--images-dir", required=True, dest="images_dir")
    p.add_argument("--head", required=True)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--limit", type=int)
    p.add_argument("--report")
    _add_extractor_flags(p)
    _add_config_flag(p)

    return parser


def _cmd_synth(args) -> int:
    dirs = synth.generate_dataset(
        args.out,
        n_pothole=args.count_pothole,
        n_normal=args.count_normal,
        seed=args.seed,
        size=(args.height, args.width),
    )
    print(f"wrote {args.count_pothole} pothole + {args.count_normal} normal images under {args.out}")
    for name, d in dirs.items():
        print(f"  {name}: {d}")
    return 0


def _cmd_dataset(args) -> int:
    if args.subcommand == "ingest":
        pot = dataset_mod.ingest(args.pothole_dir, dataset_mod.LABEL_POTHOLE)
        norm = dataset_mod.ingest(args.normal_dir, dataset_mod.LABEL_NORMAL)
        manifest = dataset_mod.Manifest(samples=pot.samples + norm.samples)
        dataset_mod.save_manifest(manifest, args.out)
        skipped = pot.skipped + norm.skipped
        print(f"ingested {len(manifest.samples)} samples -> {args.out}")
        if skipped:
            print(f"skipped {len(skipped)} non-image files:")
            for s in skipped:
                print(f"  {s}")
        return 0
    if args.subcommand == "split":
        manifest = dataset_mod.load_manifest(args.manifest)
        out = dataset_mod.split(manifest, args.train_frac, args.seed)
        dataset_mod.save_manifest(out, args.out)
        counts = out.counts()
        print(f"split -> train {counts['train']}, test {counts['test']} (seed {args.seed})")
        return 0
    report = dataset_mod.verify(dataset_mod.load_manifest(args.manifest))
    payload = {
        "ok": report.ok,
        "counts": report.counts,
        "class_counts": {k: {str(c): n for c, n in v.items()} for k, v in report.class_counts.items()},
        "missing": report.missing,
        "undecodable": report.undecodable,
        "invalid_labels": report.invalid_labels,
        "duplicates": report.duplicates,
    }
    text = json.dumps(payload, indent=2)
    if args.json_out:
        Path(args.json_out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0 if report.ok else 1


def _cmd_augment(args) -> int:
    policy = preprocess.AugmentPolicy(
        rotation_range_deg=(-args.rotation, args.rotation),
        hflip_prob=args.hflip_prob,
        seed=args.seed,
    )
    image = preprocess.standardize(preprocess.load_rgb(args.image))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        sample = preprocess.augment(image, policy, policy.rng_for(i))
        preprocess.save_png(sample, out_dir / f"augmented_{i:03d}.png")
    print(f"wrote {args.count} augmented previews to {out_dir}")
    return 0


def _cmd_extract(args) -> int:
    file_config = _load_config_file(args.config)
    manifest = dataset_mod.load_manifest(args.manifest)
    extractors = _build_extractors(args, file_config)
    policy = None
    if args.augment:
        policy = preprocess.AugmentPolicy(seed=args.augment_seed)
    fm = features_mod.extract_dataset(manifest, extractors, split=args.split, augment_policy=policy)
    features_mod.save_features(fm, args.out)
    print(f"extracted {fm.rows} x {fm.cols} features ({args.split}) -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    file_config = _load_config_file(args.config)
    config = _effective_training_config(args, file_config)
    train_fm = features_mod.load_features(args.train_store)
    test_fm = features_mod.load_features(args.test_store)
    params, history = head_mod.train(train_fm, test_fm, config)
    head_mod.save_head(params, config, args.out, slice_map=train_fm.slice_map or None)
    print(f"trained head ({params.in_dim} -> {params.out_dim}) -> {args.out}")
    print(f"effective config: {json.dumps(config.to_dict(), sort_keys=True)}")
    for e in range(len(history.train_loss)):
        print(
            f"epoch {e + 1}: train loss {history.train_loss[e]:.4f} "
            f"acc {history.train_accuracy[e]:.4f} | test loss {history.test_loss[e]:.4f} "
            f"acc {history.test_accuracy[e]:.4f}"
        )
    if args.history:
        Path(args.history).write_text(
            json.dumps(
                {
                    "train_loss": history.train_loss,
                    "train_accuracy": history.train_accuracy,
                    "test_loss": history.test_loss,
                    "test_accuracy": history.test_accuracy,
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
    return 0


def _cmd_eval(args) -> int:
    file_config = _load_config_file(args.config)
    positive_class = _resolve(args, file_config, "positive_class")
    fm = features_mod.load_features(args.store)
    if fm.labels is None:
        raise ValueError(f"store {args.store} has no labels to evaluate against")
    params, config, _meta = head_mod.load_head(args.head)
    preds, scores = head_mod.predict_batch(params, fm.values, positive_class)
    report = metrics_mod.build_report(preds, fm.labels.astype(np.int64), scores, positive_class)
    metrics_mod.emit_report(report, args.report)
    _write_provenance(
        args.report,
        {
            "store": str(args.store),
            "head": str(args.head),
            "positive_class": positive_class,
            "training_config": config.to_dict(),
        },
    )
    if args.csv:
        metrics_mod.append_csv_row(args.csv, args.model_name, report)
    print(json.dumps(metrics_mod.report_to_dict(report), indent=2))
    return 0


def _cmd_predict(args) -> int:
    file_config = _load_config_file(args.config)
    positive_class = _resolve(args, file_config, "positive_class")
    params, _config, _meta = head_mod.load_head(args.head)
    extractors = _build_extractors(args, file_config)
    image = preprocess.standardize(preprocess.load_rgb(args.image))
    vectors = {
        bid: features_mod.extract_one(extractors[bid], image)
        for bid in features_mod.BACKBONE_ORDER
    }
    fused, _ = features_mod.fuse(vectors)
    label, score = head_mod.predict(params, fused, positive_class)
    name = dataset_mod.LABEL_NAMES[label]
    print(json.dumps({"label": int(label), "class": name, "positive_score": score}))
    return 0


def _cmd_baseline(args) -> int:
    if args.subcommand == "train":
        config = baselines_mod.BaselineConfig(
            learning_rate=args.learning_rate,
            epochs=args.epochs,
            batch_size=args.batch_size,
            weight_decay=args.weight_decay,
            hidden_units=args.hidden_units,
            seed=args.seed,
        )
        fm = features_mod.load_features(args.train_store)
        model = baselines_mod.train_baseline(args.kind, fm, config)
        baselines_mod.save_baseline(model, args.out)
        print(f"trained {args.kind} baseline -> {args.out}")
        return 0
    file_config = _load_config_file(args.config)
    positive_class = _resolve(args, file_config, "positive_class")
    model = baselines_mod.load_baseline(args.model)
    fm = features_mod.load_features(args.store)
    report = baselines_mod.evaluate_baseline(
        model, fm, positive_class, csv_path=args.csv, model_name=args.model_name
    )
    metrics_mod.emit_report(report, args.report)
    _write_provenance(
        args.report,
        {
            "store": str(args.store),
            "model": str(args.model),
            "kind": model.kind,
            "positive_class": positive_class,
            "train_config": model.config.to_dict(),
        },
    )
    print(json.dumps(metrics_mod.report_to_dict(report), indent=2))
    return 0


def _cmd_viz(args) -> int:
    fm = features_mod.load_features(args.store)
    if args.subcommand == "pca":
        emb = viz.pca2(fm)
        viz.save_embedding_csv(emb, args.out)
        print(f"pca scatter -> {args.out} (evr {emb.metadata['explained_variance_ratio']})")
        return 0
    if args.subcommand == "tsne":
        emb = viz.tsne2(fm, perplexity=args.perplexity, iterations=args.iterations, seed=args.seed)
        viz.save_embedding_csv(emb, args.out)
        print(
            f"tsne scatter -> {args.out} "
            f"(kl {emb.metadata['initial_kl']:.4f} -> {emb.metadata['final_kl']:.4f})"
        )
        return 0
    artifact = viz.feature_heatmap(fm)
    paths = viz.write_heatmap(artifact, args.out_prefix)
    print(f"heatmap -> {paths['pgm']}, {paths['csv']}, {paths['json']}")
    return 0


def _cmd_bench(args) -> int:
    file_config = _load_config_file(args.config)
    params, _config, _meta = head_mod.load_head(args.head)
    extractors = _build_extractors(args, file_config)
    images = sorted(
        p for p in Path(args.images_dir).rglob("*") if p.is_file() and p.suffix.lower() == ".png"
    )
    if args.limit:
        images = images[: args.limit]
    if not images:
        raise ValueError(f"no PNG images under {args.images_dir}")
    pipeline = _image_label_pipeline(extractors, params)
    result = metrics_mod.fps_bench(pipeline, images, warmup=args.warmup)
    payload = {
        "fps": result.fps,
        "ms_per_image": result.ms_per_image,
        "n_images": result.n_images,
        "warmup": result.warmup,
        "parallel": result.parallel,
    }
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(payload, indent=2))
    return 0


_DISPATCH = {
    "synth": _cmd_synth,
    "dataset": _cmd_dataset,
    "augment": _cmd_augment,
    "extract": _cmd_extract,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "baseline": _cmd_baseline,
    "viz": _cmd_viz,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    stage = args.command + (f" {args.subcommand}" if getattr(args, "subcommand", None) else "")
    try:
        return _DISPATCH[args.command](args)
    except (PotfuseError, OSError, ValueError, KeyError) as e:
        print(f"error in stage '{stage}': {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
