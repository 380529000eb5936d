"""Command-line entry points for the retrieval-augmentation pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _add_prompts(subparsers) -> None:
    p = subparsers.add_parser("prompts", help="emit class prompts from a synset file")
    sub = p.add_subparsers(dest="prompts_cmd", required=True)
    emit = sub.add_parser("emit", help="write prompt JSON-lines to stdout or --out")
    emit.add_argument(
        "--method",
        required=True,
        choices=["simple", "simple-no-ws", "clip", "sariyildiz"],
    )
    emit.add_argument("--synsets", required=True, help="synset JSON-lines file")
    emit.add_argument("--seed", type=int, default=0)
    emit.add_argument("--per-category", type=int, default=1)
    emit.add_argument("--backgrounds", help="text file with one background per line")
    emit.add_argument("--out", help="output file (default stdout)")


def _run_prompts(args) -> int:
    from . import prompts as pf

    synsets = pf.load_synsets(args.synsets)
    backgrounds = []
    if args.backgrounds:
        backgrounds = [
            line.strip() for line in Path(args.backgrounds).read_text().splitlines() if line.strip()
        ]
    emitted = []
    for i, synset in enumerate(synsets):
        if args.method == "simple":
            emitted.append(pf.simple_prompt(synset, no_ws=False))
        elif args.method == "simple-no-ws":
            emitted.append(pf.simple_prompt(synset, no_ws=True))
        elif args.method == "clip":
            emitted.append(pf.sample_clip_prompt(synset, rng_seed=args.seed + i))
        else:
            emitted.extend(
                pf.sariyildiz_prompts(synset, backgrounds, args.per_category, args.seed + i)
            )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            pf.dump_prompts(emitted, fh)
    else:
        pf.dump_prompts(emitted, sys.stdout)
    return 0


def _add_index(subparsers) -> None:
    p = subparsers.add_parser("index", help="build a catalog index")
    sub = p.add_subparsers(dest="index_cmd", required=True)
    build = sub.add_parser("build", help="ingest a float32 matrix + JSON-lines metadata")
    build.add_argument("--matrix", required=True, help=".npy file of raw embeddings")
    build.add_argument("--metadata", required=True, help="JSON-lines catalog metadata")
    build.add_argument("--out", required=True, help="index file to write")


def _run_index(args) -> int:
    from .catalog import CatalogIndex, load_catalog_records

    records = load_catalog_records(args.matrix, args.metadata)
    index = CatalogIndex(records)
    index.save(args.out)
    print(f"indexed {index.count} records (d={index.dim}) -> {args.out}")
    return 0


def _add_retrieve(subparsers) -> None:
    p = subparsers.add_parser("retrieve", help="run per-class retrieval against an index")
    p.add_argument("--policy", help="JSON file of policy overrides")
    p.add_argument("--prompts", required=True, help="JSON-lines with class_wnid + query embedding")
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True, help="output directory")


def _run_retrieve(args) -> int:
    from .catalog import CatalogIndex
    from .retrieval import DedupChecker, RetrievalPolicy, retrieve_class

    policy_kwargs = {}
    if args.policy:
        policy_kwargs = json.loads(Path(args.policy).read_text())
    policy = RetrievalPolicy(**policy_kwargs)
    index = CatalogIndex.load(args.index)
    dedup = DedupChecker()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    statuses = {}
    with open(args.prompts, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            query = json.loads(line)
            wnid = query["class_wnid"]
            result = retrieve_class(
                index, np.asarray(query["embedding"], dtype=np.float32), policy, dedup, wnid
            )
            statuses[wnid] = result.status.value
            with open(out_dir / f"{wnid}.jsonl", "w", encoding="utf-8") as out:
                for acc in result.accepted:
                    out.write(
                        json.dumps(
                            {
                                "class_wnid": wnid,
                                "record_id": acc.record_id,
                                "url": index.record(acc.record_id).url,
                                "similarity": acc.similarity,
                                "fetch_round": acc.fetch_round,
                            }
                        )
                        + "\n"
                    )
    (out_dir / "statuses.json").write_text(json.dumps(statuses, indent=2))
    short = sum(1 for s in statuses.values() if s != "complete")
    print(f"retrieved {len(statuses)} classes ({short} insufficient) -> {out_dir}")
    return 0


def _add_download(subparsers) -> None:
    p = subparsers.add_parser("download", help="fetch images listed in a manifest")
    p.add_argument("--manifest", required=True, help="JSON-lines with record_id + url")
    p.add_argument("--out", required=True)
    p.add_argument("--concurrency", type=int, default=8)
    p.add_argument("--log", help="outcome log file (default <out>/outcomes.jsonl)")


def _run_download(args) -> int:
    from .fetcher import FetchTask, fetch_all, write_outcome_log

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = []
    with open(args.manifest, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            tasks.append(
                FetchTask(
                    record_id=int(obj["record_id"]),
                    url=obj["url"],
                    dest_path=str(out_dir / str(obj["record_id"])),
                )
            )
    outcomes = fetch_all(tasks, max_concurrency=args.concurrency)
    log_path = Path(args.log) if args.log else out_dir / "outcomes.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        write_outcome_log(outcomes, fh)
    ok = sum(1 for o in outcomes if o.status.value == "ok")
    print(f"downloaded {ok}/{len(tasks)} -> {out_dir} (log: {log_path})")
    return 0


def _add_dedup(subparsers) -> None:
    p = subparsers.add_parser("dedup", help="perceptual-hash duplicate tools")
    sub = p.add_subparsers(dest="dedup_cmd", required=True)
    scan = sub.add_parser("scan", help="flag cross-set near-duplicate candidates")
    scan.add_argument("--left", required=True, help="image directory or hash-cache JSON-lines")
    scan.add_argument("--right", required=True, help="image directory or hash-cache JSON-lines")
    scan.add_argument("--radius", type=int, default=10)
    scan.add_argument("--out", help="candidate pairs JSON-lines (default stdout)")
    est = sub.add_parser("estimate", help="extrapolate true duplicates from a review sample")
    est.add_argument("--candidates", type=int, required=True)
    est.add_argument("--reviewed", type=int, required=True)
    est.add_argument("--confirmed", type=int, required=True)
    hash_cmd = sub.add_parser("hash", help="hash a directory of images into a cache file")
    hash_cmd.add_argument("--images", required=True)
    hash_cmd.add_argument("--out", required=True)


def _hashes_from_arg(path_str: str) -> dict[str, int]:
    from .dedup import load_hashes, phash_file

    path = Path(path_str)
    if path.is_dir():
        hashes = {}
        for child in sorted(path.iterdir()):
            if child.is_file():
                hashes[child.stem] = phash_file(child)
        return hashes
    return load_hashes(path)


def _run_dedup(args) -> int:
    from . import dedup

    if args.dedup_cmd == "scan":
        left = _hashes_from_arg(args.left)
        right = _hashes_from_arg(args.right)
        pairs = dedup.scan(left, right, args.radius)
        out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
        try:
            for pair in pairs:
                out.write(
                    json.dumps(
                        {
                            "left_id": pair.left_id,
                            "right_id": pair.right_id,
                            "distance": pair.distance,
                            "verdict": pair.verdict.value,
                        }
                    )
                    + "\n"
                )
        finally:
            if args.out:
                out.close()
        print(f"{len(pairs)} candidates at radius {args.radius}", file=sys.stderr)
        return 0
    if args.dedup_cmd == "estimate":
        print(dedup.estimate_true_duplicates(args.candidates, args.reviewed, args.confirmed))
        return 0
    hashes = _hashes_from_arg(args.images)
    dedup.save_hashes(hashes, args.out)
    print(f"hashed {len(hashes)} images -> {args.out}")
    return 0


def _add_dataset(subparsers) -> None:
    p = subparsers.add_parser("dataset", help="manifest assembly tools")
    sub = p.add_subparsers(dest="dataset_cmd", required=True)
    ss = sub.add_parser("subsample", help="stratified per-class subsample of a train manifest")
    ss.add_argument("--manifest", required=True)
    ss.add_argument("--fraction", type=float, required=True)
    ss.add_argument("--seed", type=int, required=True)
    ss.add_argument("--out", required=True)
    rep = sub.add_parser("replicas", help="draw fixed-count replica sets from a pool")
    rep.add_argument("--pool", required=True)
    rep.add_argument("--targets", help="JSON file of per-class counts (default: pool counts)")
    rep.add_argument("--n", type=int, required=True)
    rep.add_argument("--seed", type=int, required=True)
    rep.add_argument("--out-dir", required=True)
    mg = sub.add_parser("merge", help="concatenate original + replica minus exclusions")
    mg.add_argument("--original", required=True)
    mg.add_argument("--replica", required=True)
    mg.add_argument("--exclusions", help="text file with one image id per line")
    mg.add_argument("--out", required=True)


def _run_dataset(args) -> int:
    from .assembler import DatasetManifest, Split, make_replicas, merge, stratified_subsample

    if args.dataset_cmd == "subsample":
        manifest = DatasetManifest.load(args.manifest, name="train", split=Split.TRAIN)
        sub = stratified_subsample(manifest, args.fraction, args.seed)
        sub.save(args.out)
        print(f"{len(sub)} of {len(manifest)} records -> {args.out}")
        return 0
    if args.dataset_cmd == "replicas":
        pool = DatasetManifest.load(args.pool, name="pool", split=Split.POOL)
        targets = (
            json.loads(Path(args.targets).read_text()) if args.targets else pool.class_counts()
        )
        replicas = make_replicas(pool, targets, args.n, args.seed)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, replica in enumerate(replicas):
            replica.save(out_dir / f"replica-{i}.jsonl")
        print(f"{len(replicas)} replicas -> {out_dir}")
        return 0
    original = DatasetManifest.load(args.original, name="original", split=Split.TRAIN)
    replica = DatasetManifest.load(args.replica, name="replica", split=Split.REPLICA)
    exclusions = set()
    if args.exclusions:
        exclusions = {
            line.strip() for line in Path(args.exclusions).read_text().splitlines() if line.strip()
        }
    merged = merge(original, replica, exclusions)
    merged.save(args.out)
    print(f"{len(merged)} records -> {args.out}")
    return 0


def _add_cluster(subparsers) -> None:
    p = subparsers.add_parser("cluster", help="k-means a class's embeddings into a manifest")
    p.add_argument("--embeddings", required=True, help=".npy matrix of image embeddings")
    p.add_argument("--ids", required=True, help="text file, one image id per matrix row")
    p.add_argument("--synsets", required=True, help="synset JSON-lines file")
    p.add_argument("--class", dest="wnid", required=True, help="class wnid to label the output")
    p.add_argument("--k", type=int, default=5, choices=[1, 5, 10, 15])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="manifest JSON (default stdout)")


def _run_cluster(args) -> int:
    from .clustering import conditioning_manifest, kmeans
    from .prompts import load_synsets

    points = np.load(args.embeddings)
    ids = [line.strip() for line in Path(args.ids).read_text().splitlines() if line.strip()]
    synset = next(s for s in load_synsets(args.synsets) if s.wnid == args.wnid)
    model = kmeans(points, k=args.k, seed=args.seed, ids=ids)
    manifest = conditioning_manifest(synset, model)
    text = json.dumps(manifest, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def _add_serve(subparsers) -> None:
    p = subparsers.add_parser("serve", help="run the curation HTTP service")
    p.add_argument("--addr", help="HOST:PORT (default 127.0.0.1:8787)")
    p.add_argument("--store", help="store directory")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--workers", type=int)
    p.add_argument("--static", help="directory of built review-UI assets")


def _run_serve(args) -> int:
    import uvicorn

    from .config import load_config, parse_addr
    from .service import create_app

    cfg = load_config(args.config)
    if args.addr:
        cfg.host, cfg.port = parse_addr(args.addr)
    if args.store:
        cfg.store = args.store
    if args.workers:
        cfg.workers = args.workers
    if args.static:
        cfg.static_dir = args.static
    app = create_app(cfg.store, workers=cfg.workers, static_dir=cfg.static_dir)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retaug", description=__doc__)
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_prompts(subparsers)
    _add_index(subparsers)
    _add_retrieve(subparsers)
    _add_download(subparsers)
    _add_dedup(subparsers)
    _add_dataset(subparsers)
    _add_cluster(subparsers)
    _add_serve(subparsers)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    runners = {
        "prompts": _run_prompts,
        "index": _run_index,
        "retrieve": _run_retrieve,
        "download": _run_download,
        "dedup": _run_dedup,
        "dataset": _run_dataset,
        "cluster": _run_cluster,
        "serve": _run_serve,
    }
    return runners[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
