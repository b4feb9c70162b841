"""Command-line driver for every pipeline stage.

Exit codes: 0 success, 2 usage, 3 missing file, 4 invalid data,
5 runtime failure.  Errors print one machine-parsable line to stderr:
``sketchembed: <code-name>: <message>``.

Relative input paths are also tried under $SKETCHEMBED_DATA when set.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import struct
import sys

import numpy as np

from sketchembed import tokens
from sketchembed.codebook import (
    Codebook,
    CodebookError,
    dict_decode,
    dict_encode,
    fit_codebook,
    load_codebook,
    save_codebook,
)
from sketchembed.container import ContainerError
from sketchembed.dataset import (
    CacheError,
    build_dataset,
    load_cache,
    save_cache,
    sketch_of_item,
    synth_dataset,
)
from sketchembed.embedding import (
    EmbeddingIndex,
    average_precision,
    knn,
    load_embeddings,
    precision_at_k,
    save_embeddings,
)
from sketchembed.pipeline import PipelineError, SketchPipeline, load_pipeline
from sketchembed.quickdraw import ParseError, canonical_json, drawing_payload, parse_quickdraw, scan_words
from sketchembed.simplify import simplify_sketch
from sketchembed.sketch import Sketch, SketchError, to_stroke3
from sketchembed.tokens import GridSpec, TokenError, TokenSequence, grid_decode, grid_encode
from sketchembed.training import TrainConfig, TrainingError, parse_config_file, train_model

EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_INVALID_DATA = 4
EXIT_RUNTIME = 5

_INVALID = (
    CacheError, CodebookError, ContainerError, ParseError, PipelineError,
    SketchError, TokenError, TrainingError, ValueError, KeyError,
    struct.error,
)


def _resolve(path: str) -> str:
    """Input path, optionally under the $SKETCHEMBED_DATA root."""
    if os.path.isabs(path) or os.path.exists(path):
        return path
    root = os.environ.get("SKETCHEMBED_DATA")
    if root and os.path.exists(os.path.join(root, path)):
        return os.path.join(root, path)
    return path


def _iter_sketches(path: str, class_ids=None):
    """Sketches from ndjson lines: records, {"strokes": ...}, or bare lists."""
    with open(_resolve(path), encoding="utf-8") as fp:
        for line_no, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{line_no}: invalid JSON") from exc
            if isinstance(obj, dict) and "strokes" in obj and "drawing" not in obj:
                obj = obj["strokes"]
            try:
                yield parse_quickdraw(obj, class_ids)
            except ParseError as exc:
                raise ParseError(f"{path}:{line_no}: {exc}") from exc


@contextlib.contextmanager
def _out_fp(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fp:
            yield fp


def _emit(fp, obj) -> None:
    fp.write(canonical_json(obj) + "\n")


def _load_pipeline(args) -> SketchPipeline:
    codebook = getattr(args, "codebook", None)
    return load_pipeline(_resolve(args.checkpoint), _resolve(codebook) if codebook else None)


def _codec_from_args(args):
    if getattr(args, "codebook", None):
        return load_codebook(_resolve(args.codebook))
    if getattr(args, "grid_side", None):
        return GridSpec(side=args.grid_side)
    raise ValueError("pass --codebook or --grid-side to pick a token scheme")


def _dataset_sketch(ds, item_id: str) -> Sketch:
    try:
        split, index = item_id.split("/")
        index = int(index)
    except ValueError:
        raise ValueError(f"item id {item_id!r} is not of the form split/NNNNN") from None
    ids = ds.item_ids(split)
    if item_id not in ids:
        raise ValueError(f"dataset has no item {item_id!r}")
    return sketch_of_item(ds.items[index], ds.meta.canvas, label=int(ds.labels[index]))


# ---- commands --------------------------------------------------------------


def cmd_ingest(args) -> int:
    classes = args.classes.split(",") if args.classes else scan_words(_resolve(args.input))
    class_ids = {name: i for i, name in enumerate(classes)} if classes else None
    sketches = list(_iter_sketches(args.input, class_ids))
    ds = build_dataset(
        sketches,
        rdp_epsilon=args.rdp_epsilon,
        train_fraction=args.train_fraction,
        seed=args.seed,
        class_names=classes,
    )
    save_cache(args.output, ds)
    _emit(sys.stdout, {
        "items": len(ds),
        "train": ds.meta.split_sizes["train"],
        "test": ds.meta.split_sizes["test"],
        "classes": list(ds.meta.class_names),
        "offset_scale": ds.meta.offset_scale,
        "output": args.output,
    })
    return 0


def cmd_synth(args) -> int:
    ds = synth_dataset(args.train_per_class, args.test_per_class,
                       seed=args.seed, rdp_epsilon=args.rdp_epsilon)
    save_cache(args.output, ds)
    _emit(sys.stdout, {
        "items": len(ds),
        "train": ds.meta.split_sizes["train"],
        "test": ds.meta.split_sizes["test"],
        "classes": list(ds.meta.class_names),
        "offset_scale": ds.meta.offset_scale,
        "output": args.output,
    })
    return 0


def cmd_fit_dict(args) -> int:
    ds = load_cache(_resolve(args.dataset))
    items, _ = ds.split("train")
    cb = fit_codebook(items, k=args.k, sample_size=args.sample,
                      lift_fraction=args.lift_fraction, seed=args.seed,
                      offset_scale=ds.meta.offset_scale)
    save_codebook(args.output, cb)
    _emit(sys.stdout, {
        "k": cb.k,
        "vocab_size": cb.vocab_size,
        "iterations": len(cb.objective_trace),
        "objective": cb.objective_trace[-1],
        "output": args.output,
    })
    return 0


def cmd_train(args) -> int:
    from sketchembed.model.checkpoint import save_checkpoint
    from sketchembed.model.config import ModelConfig
    from sketchembed.model.network import SketchTransformer

    ds = load_cache(_resolve(args.dataset))
    items, labels = ds.split("train")
    model_kwargs, train_kwargs = ({}, {})
    if args.config:
        model_kwargs, train_kwargs = parse_config_file(_resolve(args.config))

    codec = None
    if args.scheme == "dict":
        if not args.codebook:
            raise ValueError("--scheme dict needs --codebook")
        codec = load_codebook(_resolve(args.codebook))
        mode, vocab = "tokenized", codec.vocab_size
    elif args.scheme == "grid":
        codec = GridSpec(side=args.grid_side)
        mode, vocab = "tokenized", codec.vocab_size
    else:
        mode, vocab = "continuous", 5
    for key, value in (("mode", mode), ("vocab_size", vocab)):
        if key in model_kwargs and model_kwargs[key] != value:
            raise ValueError(f"config model.{key}={model_kwargs[key]} contradicts --scheme {args.scheme}")
        model_kwargs[key] = value

    use_classifier = not args.no_classifier and len(ds.meta.class_names) > 0
    if use_classifier and (np.asarray(labels) < 0).any():
        raise ValueError("dataset has unlabeled items; pass --no-classifier")
    model_kwargs.setdefault("n_classes", len(ds.meta.class_names) if use_classifier else 0)
    if args.no_classifier:
        model_kwargs["n_classes"] = 0

    if args.steps is not None:
        train_kwargs["steps"] = args.steps
    if args.seed is not None:
        train_kwargs["seed"] = args.seed
    if args.shuffle_strokes:
        train_kwargs["shuffle_strokes"] = True
    train_cfg = TrainConfig(**train_kwargs)

    model = SketchTransformer(ModelConfig(**model_kwargs), seed=train_cfg.seed)
    last = []
    with _out_fp(args.log) if args.log else contextlib.nullcontext(None) as log_fp:
        opt = train_model(model, items, labels if model.classifier is not None else None,
                          codec, train_cfg, offset_scale=ds.meta.offset_scale,
                          log_fp=log_fp, stop_fn=lambda rep: last.__setitem__(slice(None), [rep]) or False)
    pipe = SketchPipeline(
        model=model, codec=codec, offset_scale=ds.meta.offset_scale,
        rdp_epsilon=ds.meta.rdp_epsilon, class_names=tuple(ds.meta.class_names),
        canvas=ds.meta.canvas,
    )
    meta = pipe.train_meta()
    meta.update(train_cfg.to_meta())
    save_checkpoint(args.output, model, opt_state=opt.state, train_meta=meta)
    summary = {"steps": opt.state.step, "scheme": args.scheme, "output": args.output}
    if last:
        summary["final_loss"] = last[0].total
    _emit(sys.stdout, summary)
    return 0


def cmd_encode(args) -> int:
    codec = _codec_from_args(args)
    with _out_fp(args.output) as fp:
        for sketch in _iter_sketches(args.input):
            simplified = simplify_sketch(sketch, args.rdp_epsilon)
            if isinstance(codec, Codebook):
                seq = dict_encode(to_stroke3(simplified), codec)
            else:
                seq = grid_encode(simplified, codec)
            _emit(fp, {"tokens": [int(t) for t in seq.ids]})
    return 0


def cmd_decode(args) -> int:
    codec = _codec_from_args(args)
    canvas = (255.0, 255.0)
    with open(_resolve(args.input), encoding="utf-8") as src, _out_fp(args.output) as fp:
        for line_no, line in enumerate(src, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            ids = np.asarray(obj["tokens"], dtype=np.int64)
            seq = TokenSequence(ids, codec.vocab_size)
            if isinstance(codec, Codebook):
                sketch = sketch_of_item(dict_decode(seq, codec), canvas)
            else:
                sketch = grid_decode(seq, codec)
            _emit(fp, {"strokes": drawing_payload(sketch)})
    return 0


def cmd_reconstruct(args) -> int:
    pipe = _load_pipeline(args)
    with _out_fp(args.output) as fp:
        for sketch in _iter_sketches(args.input):
            _emit(fp, {"strokes": drawing_payload(pipe.reconstruct(sketch))})
    return 0


def cmd_interpolate(args) -> int:
    pipe = _load_pipeline(args)
    if args.input:
        sketches = list(_iter_sketches(args.input))
        if len(sketches) != 2:
            raise ValueError(f"--input must hold exactly 2 sketches, got {len(sketches)}")
        a, b = sketches
    else:
        if not (args.dataset and args.id_a and args.id_b):
            raise ValueError("pass either --input or --dataset with --id-a/--id-b")
        ds = load_cache(_resolve(args.dataset))
        a, b = _dataset_sketch(ds, args.id_a), _dataset_sketch(ds, args.id_b)
    frames = pipe.interpolate(a, b, steps=args.steps)
    with _out_fp(args.output) as fp:
        _emit(fp, {"frames": [drawing_payload(f) for f in frames]})
    return 0


def cmd_perturb(args) -> int:
    pipe = _load_pipeline(args)
    with _out_fp(args.output) as fp:
        for sketch in _iter_sketches(args.input):
            out = pipe.perturb_sketch(sketch, args.sigma, seed=args.seed)
            _emit(fp, {"strokes": drawing_payload(out)})
    return 0


def cmd_embed(args) -> int:
    pipe = _load_pipeline(args)
    if args.dataset:
        ds = load_cache(_resolve(args.dataset))
        items, _ = ds.split(args.split)
        sketches = [sketch_of_item(it, ds.meta.canvas) for it in items]
        ids = ds.item_ids(args.split)
    else:
        if not args.input:
            raise ValueError("pass --dataset or --input")
        sketches = list(_iter_sketches(args.input))
        ids = [f"input/{i:05d}" for i in range(len(sketches))]
    matrix = pipe.embed_many(sketches)
    if args.json:
        with _out_fp(args.output) as fp:
            for row in matrix:
                _emit(fp, {"embedding": [float(v) for v in row]})
        return 0
    if not args.output or args.output == "-":
        raise ValueError("--output is required unless --json is set")
    save_embeddings(args.output, EmbeddingIndex(matrix, ids, metric=args.metric))
    _emit(sys.stdout, {"items": len(ids), "dim": int(matrix.shape[1]), "output": args.output})
    return 0


def cmd_quantization_report(args) -> int:
    ds = load_cache(_resolve(args.dataset))
    train_items, _ = ds.split("train")
    test_items, _ = ds.split("test")
    if not test_items:
        raise ValueError("dataset has no test split to measure")
    rows = []
    for side in args.grid_sides:
        spec = GridSpec(side=side, canvas=ds.meta.canvas)
        errors = []
        for item in test_items:
            sketch = sketch_of_item(item, ds.meta.canvas)
            decoded = grid_decode(grid_encode(sketch, spec), spec)
            for orig, back in zip(sketch.strokes, decoded.strokes):
                errors.append(np.linalg.norm(orig - back, axis=1))
        errors = np.concatenate(errors)
        rows.append(("grid", side, errors.mean(), errors.max()))
    for k in args.dict_ks:
        cb = fit_codebook(train_items, k=k, sample_size=args.sample,
                          lift_fraction=args.lift_fraction, seed=args.seed,
                          offset_scale=ds.meta.offset_scale)
        errors = []
        for item in test_items:
            decoded = dict_decode(dict_encode(item, cb), cb)
            drift = np.cumsum(item[:, :2], axis=0) - np.cumsum(decoded[:, :2], axis=0)
            errors.append(np.linalg.norm(drift, axis=1))
        errors = np.concatenate(errors)
        rows.append(("dict", k, errors.mean(), errors.max()))
    with _out_fp(args.output) as fp:
        writer = csv.writer(fp)
        writer.writerow(["scheme", "param", "mean_error", "max_error"])
        for scheme, param, mean_err, max_err in rows:
            writer.writerow([scheme, param, f"{mean_err:.6f}", f"{max_err:.6f}"])
    return 0


def cmd_train_joint(args) -> int:
    from sketchembed.crossmodal.convnet import INPUT_SIDE, train_raster_encoder
    from sketchembed.crossmodal.joint import JointConfig, JointHeads, train_joint
    from sketchembed.crossmodal.store import save_joint
    from sketchembed.raster import rasterize

    pipe = _load_pipeline(args)
    ds = load_cache(_resolve(args.dataset))
    items, labels = ds.split("train")
    if len(ds.meta.class_names) < 2:
        raise ValueError("joint training needs a labeled multi-class dataset")
    labels = np.asarray(labels)
    sketches = [sketch_of_item(it, ds.meta.canvas) for it in items]
    images = np.stack([rasterize(s, INPUT_SIDE).pixels for s in sketches])
    encoder, _, acc = train_raster_encoder(
        images, labels, len(ds.meta.class_names),
        steps=args.pretrain_steps, seed=args.seed,
    )
    feats = _batched(encoder.forward, images)
    z = pipe.embed_many(sketches)
    heads = JointHeads(
        vector_dim=z.shape[1], raster_dim=feats.shape[1],
        n_classes=len(ds.meta.class_names), seed=args.seed,
    )
    cfg = JointConfig(phase1_steps=args.phase1_steps, phase2_steps=args.phase2_steps,
                      batch_size=args.batch_size, seed=args.seed)
    train_joint(heads, z, feats, labels, cfg,
                log_fp=sys.stderr if args.verbose else None)
    save_joint(args.output, encoder, heads, z.shape[1], list(ds.meta.class_names))
    summary = {"pretrain_accuracy": acc, "output": args.output}
    if args.index_out:
        idx_items, _ = ds.split(args.index_split)
        idx_sketches = [sketch_of_item(it, ds.meta.canvas) for it in idx_items]
        idx_images = np.stack([rasterize(s, INPUT_SIDE).pixels for s in idx_sketches])
        u_r = heads.embed_raster(_batched(encoder.forward, idx_images))
        save_embeddings(args.index_out, EmbeddingIndex(u_r, ds.item_ids(args.index_split)))
        summary["index"] = args.index_out
    _emit(sys.stdout, summary)
    return 0


def _batched(fn, arr: np.ndarray, size: int = 64) -> np.ndarray:
    return np.concatenate([fn(arr[i : i + size]) for i in range(0, len(arr), size)])


def cmd_retrieve(args) -> int:
    pipe = _load_pipeline(args)
    index = load_embeddings(_resolve(args.index))
    sketches = list(_iter_sketches(args.query))
    if len(sketches) != 1:
        raise ValueError(f"--query must hold exactly 1 sketch, got {len(sketches)}")
    z = pipe.embed(sketches[0])
    if args.joint:
        from sketchembed.crossmodal.store import load_joint

        _, heads, _ = load_joint(_resolve(args.joint))
        z = heads.embed_vector(z[None])[0]
    results = knn(index, z, args.k)
    with _out_fp(args.output) as fp:
        _emit(fp, {"results": [{"id": rid, "score": score} for rid, score in results]})
    return 0


def cmd_eval_classify(args) -> int:
    pipe = _load_pipeline(args)
    if args.input:
        with _out_fp(args.output) as fp:
            for sketch in _iter_sketches(args.input):
                name, probs = pipe.classify_sketch(sketch)
                _emit(fp, {"class": name, "probabilities": [float(p) for p in probs]})
        return 0
    if not args.dataset:
        raise ValueError("pass --dataset or --input")
    ds = load_cache(_resolve(args.dataset))
    items, labels = ds.split(args.split)
    if not items:
        raise ValueError(f"split {args.split!r} is empty")
    names = list(ds.meta.class_names)
    correct = np.zeros(len(names), dtype=np.int64)
    total = np.zeros(len(names), dtype=np.int64)
    for item, label in zip(items, labels):
        predicted, _ = pipe.classify_sketch(sketch_of_item(item, ds.meta.canvas))
        total[label] += 1
        if predicted == names[label]:
            correct[label] += 1
    with _out_fp(args.output) as fp:
        writer = csv.writer(fp)
        writer.writerow(["class", "n", "correct", "accuracy"])
        for i, name in enumerate(names):
            if total[i]:
                writer.writerow([name, total[i], correct[i], f"{correct[i] / total[i]:.4f}"])
        writer.writerow(["overall", total.sum(), correct.sum(),
                         f"{correct.sum() / total.sum():.4f}"])
    return 0


def cmd_eval_retrieval(args) -> int:
    pipe = _load_pipeline(args)
    ds = load_cache(_resolve(args.dataset))
    items, labels = ds.split(args.split)
    if len(items) < 2:
        raise ValueError("retrieval eval needs at least 2 items")
    labels = np.asarray(labels)
    sketches = [sketch_of_item(it, ds.meta.canvas) for it in items]
    matrix = pipe.embed_many(sketches)
    ids = ds.item_ids(args.split)
    index = EmbeddingIndex(matrix, ids, metric=args.metric)
    id_to_label = {item_id: int(label) for item_id, label in zip(ids, labels)}
    ks = [int(k) for k in args.k.split(",")]
    aps, hits = [], {k: [] for k in ks}
    for qi, item_id in enumerate(ids):
        ranked = [rid for rid, _ in knn(index, matrix[qi], len(ids)) if rid != item_id]
        relevant = np.asarray([id_to_label[rid] == labels[qi] for rid in ranked])
        aps.append(average_precision(relevant))
        for k in ks:
            hits[k].append(precision_at_k(relevant, k))
    with _out_fp(args.output) as fp:
        writer = csv.writer(fp)
        writer.writerow(["metric", "value"])
        writer.writerow(["map", f"{np.mean(aps):.6f}"])
        for k in ks:
            writer.writerow([f"p@{k}", f"{np.mean(hits[k]):.6f}"])
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from sketchembed.service import ServiceConfig, create_app

    cfg = ServiceConfig(
        checkpoint=_resolve(args.checkpoint),
        codebook=_resolve(args.codebook) if args.codebook else None,
        index=_resolve(args.index) if args.index else None,
        joint=_resolve(args.joint) if args.joint else None,
        max_points=args.max_points,
    )
    uvicorn.run(create_app(cfg), host=args.host, port=args.port, log_level="warning")
    return 0


# ---- parser ----------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchembed",
        description="Stroke-sequence autoencoder pipeline: data, training, inference, serving.",
        epilog="exit codes: 0 ok, 2 usage, 3 missing-file, 4 invalid-data, 5 runtime",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a dataset cache from interchange ndjson")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--classes", help="comma-separated category words (default: scan file)")
    p.add_argument("--rdp-epsilon", type=float, default=2.0)
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("synth", help="generate the synthetic shape corpus")
    p.add_argument("--train-per-class", type=int, default=500)
    p.add_argument("--test-per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rdp-epsilon", type=float, default=2.0)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("fit-dict", help="fit a K-means motion codebook")
    p.add_argument("--dataset", required=True)
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--sample", type=int, default=100_000)
    p.add_argument("--lift-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_fit_dict)

    p = sub.add_parser("train", help="train the autoencoder")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scheme", choices=("dict", "grid", "continuous"), required=True)
    p.add_argument("--codebook")
    p.add_argument("--grid-side", type=int, default=20)
    p.add_argument("--config", help="key=value file with model.* and train.* entries")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--shuffle-strokes", action="store_true")
    p.add_argument("--no-classifier", action="store_true")
    p.add_argument("--log", help="loss records path ('-' for stdout)")
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("encode", help="tokenize sketches")
    p.add_argument("--input", required=True)
    p.add_argument("--codebook")
    p.add_argument("--grid-side", type=int)
    p.add_argument("--rdp-epsilon", type=float, default=2.0)
    p.add_argument("--output")
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("decode", help="rebuild sketches from token lines")
    p.add_argument("--input", required=True)
    p.add_argument("--codebook")
    p.add_argument("--grid-side", type=int)
    p.add_argument("--output")
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("reconstruct", help="autoencode sketches through the model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codebook")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("interpolate", help="decode the path between two embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codebook")
    p.add_argument("--dataset")
    p.add_argument("--id-a")
    p.add_argument("--id-b")
    p.add_argument("--input", help="ndjson with exactly two sketches (alternative to ids)")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--output")
    p.set_defaults(fn=cmd_interpolate)

    p = sub.add_parser("perturb", help="decode a noised embedding")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codebook")
    p.add_argument("--input", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(fn=cmd_perturb)

    p = sub.add_parser("embed", help="embed sketches into the bottleneck space")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codebook")
    p.add_argument("--dataset")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--input")
    p.add_argument("--metric", default="cosine", choices=("cosine", "euclidean"))
    p.add_argument("--json", action="store_true", help="print embedding lines instead of a dump")
    p.add_argument("--output")
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("quantization-report",
                       help="round-trip error sweep over grid sides and codebook sizes")
    p.add_argument("--dataset", required=True)
    p.add_argument("--grid-sides", type=_int_list, default=list(range(10, 101, 10)))
    p.add_argument("--dict-ks", type=_int_list, default=[500, 1000])
    p.add_argument("--sample", type=int, default=20_000)
    p.add_argument("--lift-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(fn=cmd_quantization_report)

    p = sub.add_parser("train-joint", help="train the cross-modal retrieval heads")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codebook")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pretrain-steps", type=int, default=400)
    p.add_argument("--phase1-steps", type=int, default=400)
    p.add_argument("--phase2-steps", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--index-out", help="also dump a raster-side retrieval index")
    p.add_argument("--index-split", default="test", choices=("train", "test"))
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_train_joint)

    p = sub.add_parser("retrieve", help="query an embedding index with a sketch")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codebook")
    p.add_argument("--index", required=True)
    p.add_argument("--joint", help="joint checkpoint; maps the query into the joint space")
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--output")
    p.set_defaults(fn=cmd_retrieve)

    p = sub.add_parser("eval-classify", help="classification accuracy over a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codebook")
    p.add_argument("--dataset")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--input", help="classify ndjson sketches line by line instead")
    p.add_argument("--output")
    p.set_defaults(fn=cmd_eval_classify)

    p = sub.add_parser("eval-retrieval", help="leave-one-out mAP and precision@k")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codebook")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--metric", default="cosine", choices=("cosine", "euclidean"))
    p.add_argument("--k", default="1,5,10")
    p.add_argument("--output")
    p.set_defaults(fn=cmd_eval_retrieval)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codebook")
    p.add_argument("--index")
    p.add_argument("--joint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--max-points", type=int, default=20_000)
    p.set_defaults(fn=cmd_serve)

    return parser


def _fail(name: str, exc: BaseException, code: int) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"sketchembed: {name}: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail("missing-file", exc, EXIT_MISSING_FILE)
    except _INVALID as exc:
        return _fail("invalid-data", exc, EXIT_INVALID_DATA)
    except BrokenPipeError:
        return 0
    except Exception as exc:
        return _fail("runtime", exc, EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
