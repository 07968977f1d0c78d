"""Command line pipeline: generate or ingest data, train, score, index, serve.

Every artifact-producing subcommand reads its prerequisites from the snapshot
directory and writes its outputs there, so the pipeline is resumable step by
step and any prefix re-run with the same inputs and seed reproduces identical
bytes. Option precedence: explicit flags beat environment variables, which
beat the config file, which beats built-in defaults.

Config file layout (JSON): top-level "seed" plus one object per subcommand,
for example {"seed": 7, "train-embeddings": {"dimension": 64, "epochs": 15}}.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import artifacts, simulate
from .ann import IndexConfig, build_index, save_index
from .catalog import (
    CatalogError,
    Mood,
    load_catalog,
    load_interactions,
    load_labels,
    write_catalog,
    write_interactions,
    write_labels,
)
from .embeddings import TrainingConfig, TrainingError, load_space, save_space, train_embeddings
from .forests import (
    ForestConfig,
    ForestError,
    MoodScoreTable,
    evaluate,
    labels_to_matrix,
    load_forests,
    save_forests,
    score_catalog,
    split_holdout,
    train_forest,
)
from .sessions import FallbackPool, SessionConfig, SessionError, build_fallback_pool
from .simulate import SimConfig, SimError, generate_world

ADDR_ENV = "MOODRADIO_ADDR"
SNAPSHOT_DIR_ENV = "MOODRADIO_SNAPSHOT_DIR"
DEFAULT_ADDR = "127.0.0.1:8000"

logger = logging.getLogger(__name__)

_ERRORS = (
    artifacts.ArtifactError,
    CatalogError,
    ForestError,
    SessionError,
    SimError,
    TrainingError,
    ValueError,
    OSError,
)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise artifacts.ArtifactError(f"config file not found: {p}")
    try:
        with open(p, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except json.JSONDecodeError as exc:
        raise artifacts.ArtifactError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise artifacts.ArtifactError(f"config file {p} must hold a JSON object")
    return config


class _Options:
    """Merged view of flags, env, config file and defaults for one subcommand."""

    def __init__(self, args: argparse.Namespace, env: dict[str, str]):
        self.args = args
        self.env = env
        self.file = _load_config_file(getattr(args, "config", None))
        self.section = self.file.get(args.command, {})
        if not isinstance(self.section, dict):
            raise artifacts.ArtifactError(
                f"config section {args.command!r} must be a JSON object"
            )

    def get(self, name: str, default):
        flag = getattr(self.args, name.replace("-", "_"), None)
        if flag is not None:
            return flag
        if name in self.section:
            return self.section[name]
        return default

    @property
    def seed(self) -> int:
        if self.args.seed is not None:
            return self.args.seed
        value = self.section.get("seed", self.file.get("seed", 0))
        return int(value)

    @property
    def snapshot_dir(self) -> Path:
        value = getattr(self.args, "snapshot_dir", None)
        if value is None:
            value = self.env.get(SNAPSHOT_DIR_ENV) or self.file.get("snapshot_dir")
        if value is None:
            raise artifacts.ArtifactError(
                f"no snapshot directory: pass --snapshot-dir or set {SNAPSHOT_DIR_ENV}"
            )
        return Path(value)


def _cmd_generate_world(opts: _Options) -> int:
    out_dir = Path(opts.get("out-dir", "data"))
    config = SimConfig(
        n_users=int(opts.get("users", 1200)),
        n_songs=int(opts.get("songs", 3000)),
        n_artists=int(opts.get("artists", 300)),
        seed=opts.seed,
    )
    world = generate_world(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_catalog(out_dir / "catalog.jsonl", world.catalog)
    write_interactions(out_dir / "interactions.csv", world.interactions)
    write_labels(out_dir / "labels.csv", world.labels)
    n_songs, n_artists, n_users = world.catalog.counts()
    print(
        f"world written to {out_dir}: {n_songs} songs, {n_artists} artists, "
        f"{n_users} users, {len(world.interactions)} interactions, {len(world.labels)} labels"
    )
    return 0


def _cmd_ingest(opts: _Options) -> int:
    snap = opts.snapshot_dir
    catalog_path = Path(opts.get("catalog", None) or _missing("--catalog"))
    interactions_path = Path(opts.get("interactions", None) or _missing("--interactions"))
    labels_path = Path(opts.get("labels", None) or _missing("--labels"))
    for p in (catalog_path, interactions_path, labels_path):
        if not p.exists():
            raise artifacts.ArtifactError(f"input file not found: {p}")

    catalog = load_catalog(catalog_path)
    events, warnings = load_interactions(interactions_path, catalog)
    if warnings.total:
        logger.warning("dropped %d interaction rows with unknown ids", warnings.total)
    labels = load_labels(labels_path, catalog)

    model_version = artifacts.compute_model_version(
        [catalog_path, interactions_path, labels_path], opts.seed, opts.section
    )
    snap.mkdir(parents=True, exist_ok=True)
    write_catalog(snap / "catalog.jsonl", catalog)
    write_interactions(snap / "interactions.csv", events)
    write_labels(snap / "labels.csv", labels)

    popularity: dict[str, float] = {}
    for ev in events:
        popularity[ev.song_id] = popularity.get(ev.song_id, 0.0) + ev.weight
    with open(snap / "popularity.json", "w", encoding="utf-8") as fh:
        json.dump(popularity, fh, sort_keys=True, indent=2)
        fh.write("\n")

    n_songs, n_artists, n_users = catalog.counts()
    artifacts.write_manifest(snap, {
        "model_version": model_version,
        "seed": opts.seed,
        "inputs": {
            "catalog": str(catalog_path),
            "interactions": str(interactions_path),
            "labels": str(labels_path),
        },
        "counts": {
            "songs": n_songs,
            "artists": n_artists,
            "users": n_users,
            "interactions": len(events),
            "labels": len(labels),
        },
        "config": opts.section,
    })
    print(f"ingested into {snap}: model_version={model_version}")
    return 0


def _missing(flag: str):
    raise artifacts.ArtifactError(f"required flag {flag} not set")


def _cmd_train_embeddings(opts: _Options) -> int:
    snap = opts.snapshot_dir
    manifest = artifacts.read_manifest(snap)
    catalog = load_catalog(artifacts.require_artifact(snap, "catalog.jsonl"))
    events, _ = load_interactions(artifacts.require_artifact(snap, "interactions.csv"), catalog)
    config = TrainingConfig(
        dimension=int(opts.get("dimension", 64)),
        epochs=int(opts.get("epochs", 15)),
        regularization=float(opts.get("regularization", 0.01)),
        confidence_alpha=float(opts.get("confidence-alpha", 40.0)),
        seed=opts.seed,
    )
    space = train_embeddings(events, catalog, config)
    save_space(snap / "embeddings.snap", space, model_version=manifest["model_version"])
    print(
        f"embedding space trained: {len(space.user_ids)} users x {len(space.song_ids)} songs, "
        f"dimension {space.dimension}, final objective {space.objective_history[-1]:.3f}"
    )
    return 0


def _cmd_train_moods(opts: _Options) -> int:
    snap = opts.snapshot_dir
    manifest = artifacts.read_manifest(snap)
    catalog = load_catalog(artifacts.require_artifact(snap, "catalog.jsonl"))
    labels = load_labels(artifacts.require_artifact(snap, "labels.csv"), catalog)
    holdout_fraction = float(opts.get("holdout-fraction", 0.2))
    train_labels, _ = split_holdout(labels, opts.seed, holdout_fraction)
    config = ForestConfig(
        n_trees=int(opts.get("trees", 100)),
        max_depth=int(opts.get("max-depth", 12)),
        min_leaf=int(opts.get("min-leaf", 2)),
        feature_subsample=int(opts.get("feature-subsample", 16)),
    )
    forests = {}
    for mood in Mood:
        x, y, _ = labels_to_matrix(catalog, train_labels, mood)
        forests[mood] = train_forest(x, y, mood, config, seed=opts.seed)
        print(f"  {mood.value}: {len(y)} training rows ({int(y.sum())} positive)")
    save_forests(snap / "forests.snap", forests, model_version=manifest["model_version"])
    print(f"trained {len(forests)} mood forests ({config.n_trees} trees each)")
    return 0


def _cmd_score_catalog(opts: _Options) -> int:
    snap = opts.snapshot_dir
    manifest = artifacts.read_manifest(snap)
    catalog = load_catalog(artifacts.require_artifact(snap, "catalog.jsonl"))
    forests, _ = load_forests(artifacts.require_artifact(snap, "forests.snap"))
    table, skipped = score_catalog(forests, catalog, model_version=manifest["model_version"])
    table.export_csv(snap / "scores.csv")
    print(f"scored {len(table)} (song, mood) pairs; {len(skipped)} songs lacked embeddings")
    return 0


def _cmd_build_index(opts: _Options) -> int:
    snap = opts.snapshot_dir
    manifest = artifacts.read_manifest(snap)
    space, _ = load_space(artifacts.require_artifact(snap, "embeddings.snap"))
    config = IndexConfig(
        n_cells=opts.get("cells", None),
        n_probe=opts.get("probe", None),
        seed=opts.seed,
    )
    index = build_index(np.array(space.song_ids), space.song_matrix, config)
    save_index(snap / "index.snap", index, model_version=manifest["model_version"])
    print(f"index built: {len(space.song_ids)} songs in {index.n_cells} cells")
    return 0


def _cmd_build_fallback(opts: _Options) -> int:
    snap = opts.snapshot_dir
    manifest = artifacts.read_manifest(snap)
    table = MoodScoreTable.load_csv(artifacts.require_artifact(snap, "scores.csv"))
    with open(artifacts.require_artifact(snap, "popularity.json"), "r", encoding="utf-8") as fh:
        popularity = {k: float(v) for k, v in json.load(fh).items()}
    size = int(opts.get("size", 200))
    threshold = float(opts.get("threshold", 0.5))
    pool = FallbackPool()
    for mood in Mood:
        songs = build_fallback_pool(mood, table, popularity, size=size, threshold=threshold)
        pool.set_pool(mood, songs)
        print(f"  {mood.value}: {len(songs)} songs")
    artifacts.write_fallback(snap, pool, manifest["model_version"])
    print(f"fallback pools written ({len(pool)} entries)")
    return 0


def _cmd_serve(opts: _Options) -> int:
    import uvicorn

    from .service import build_service

    addr = opts.get("addr", None) or opts.env.get(ADDR_ENV) or DEFAULT_ADDR
    host, _, port = addr.rpartition(":")
    session_config = SessionConfig(
        threshold=float(opts.get("threshold", 0.5)),
        candidate_k=int(opts.get("candidate-k", 500)),
        min_candidates=int(opts.get("min-candidates", 50)),
    )
    app, state = build_service(str(opts.snapshot_dir), config=session_config)
    print(f"serving model_version={state.bundle.model_version} on http://{addr}")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return 0


def _cmd_simulate(opts: _Options) -> int:
    snap = opts.snapshot_dir
    bundle = artifacts.load_bundle(snap)
    config = SimConfig(
        n_users=len(bundle.catalog.users),
        n_songs=len(bundle.catalog.songs),
        n_artists=len(bundle.catalog.artists),
        n_days=int(opts.get("days", 14)),
        seed=opts.seed,
    )
    deps = bundle.session_deps(SessionConfig(threshold=float(opts.get("threshold", 0.5))))
    records = simulate.simulate_days(deps, config)
    out = Path(opts.get("out", snap / "streams.csv"))
    simulate.write_stream_log(out, records)
    print(f"simulated {config.n_days} days: {len(records)} streams written to {out}")
    return 0


def _cmd_report(opts: _Options) -> int:
    log_path = Path(opts.get("log", None) or _missing("--log"))
    records = simulate.read_stream_log(log_path)
    shares = simulate.mood_distribution(records)
    out = opts.get("out", None)
    if out is not None:
        simulate.write_distribution(Path(out), shares)
    for day in sorted(shares):
        if not shares[day]:
            print(f"day {day:3d}: no mood-tagged streams")
            continue
        row = "  ".join(
            f"{mood.value}={share:.3f}" for mood, share in shares[day].items()
        )
        print(f"day {day:3d}: {row}")
    return 0


def _cmd_eval(opts: _Options) -> int:
    snap = opts.snapshot_dir
    catalog = load_catalog(artifacts.require_artifact(snap, "catalog.jsonl"))
    labels = load_labels(artifacts.require_artifact(snap, "labels.csv"), catalog)
    forests, _ = load_forests(artifacts.require_artifact(snap, "forests.snap"))
    manifest = artifacts.read_manifest(snap)
    seed = opts.seed if opts.args.seed is not None else int(manifest.get("seed", 0))
    holdout_fraction = float(opts.get("holdout-fraction", 0.2))
    _, holdout = split_holdout(labels, seed, holdout_fraction)
    worst = 1.0
    for mood in Mood:
        x, y, _ = labels_to_matrix(catalog, holdout, mood)
        if len(y) == 0:
            print(f"  {mood.value}: no holdout rows")
            continue
        metrics = evaluate(forests[mood], x, y)
        worst = min(worst, metrics.auc)
        print(
            f"  {mood.value}: auc={metrics.auc:.4f} accuracy={metrics.accuracy_at_half:.4f} "
            f"({len(y)} holdout rows, {int(y.sum())} positive)"
        )
    print(f"worst holdout auc: {worst:.4f}")
    return 0


_COMMANDS = {
    "generate-world": _cmd_generate_world,
    "ingest": _cmd_ingest,
    "train-embeddings": _cmd_train_embeddings,
    "train-moods": _cmd_train_moods,
    "score-catalog": _cmd_score_catalog,
    "build-index": _cmd_build_index,
    "build-fallback": _cmd_build_fallback,
    "serve": _cmd_serve,
    "simulate": _cmd_simulate,
    "report": _cmd_report,
    "eval": _cmd_eval,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moodradio",
        description="Mood-conditioned radio: data pipeline, model training and serving.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, snapshot: bool = True) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
        if snapshot:
            p.add_argument(
                "--snapshot-dir",
                default=None,
                help=f"artifact directory (or ${SNAPSHOT_DIR_ENV})",
            )

    p = sub.add_parser("generate-world", help="write a synthetic catalog, interactions and labels")
    common(p, snapshot=False)
    p.add_argument("--out-dir", default=None, help="output directory (default data)")
    p.add_argument("--users", type=int, default=None)
    p.add_argument("--songs", type=int, default=None)
    p.add_argument("--artists", type=int, default=None)

    p = sub.add_parser("ingest", help="validate inputs and start a snapshot directory")
    common(p)
    p.add_argument("--catalog", default=None, help="catalog JSONL file")
    p.add_argument("--interactions", default=None, help="interaction CSV file")
    p.add_argument("--labels", default=None, help="mood label CSV file")

    p = sub.add_parser("train-embeddings", help="train the collaborative embedding space")
    common(p)
    p.add_argument("--dimension", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--regularization", type=float, default=None)
    p.add_argument("--confidence-alpha", type=float, default=None)

    p = sub.add_parser("train-moods", help="train one classifier forest per mood")
    common(p)
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=None)
    p.add_argument("--feature-subsample", type=int, default=None)
    p.add_argument("--holdout-fraction", type=float, default=None)

    p = sub.add_parser("score-catalog", help="score every embedded song for all moods")
    common(p)

    p = sub.add_parser("build-index", help="build the approximate nearest-neighbor index")
    common(p)
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--probe", type=int, default=None)

    p = sub.add_parser("build-fallback", help="pre-select popular songs per mood")
    common(p)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("serve", help="run the HTTP service")
    common(p)
    p.add_argument("--addr", default=None, help=f"host:port (or ${ADDR_ENV}; default {DEFAULT_ADDR})")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--candidate-k", type=int, default=None)
    p.add_argument("--min-candidates", type=int, default=None)

    p = sub.add_parser("simulate", help="replay days of listening through real sessions")
    common(p)
    p.add_argument("--days", type=int, default=None)
    p.add_argument("--out", default=None, help="stream log CSV path")
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("report", help="per-day mood share table from a stream log")
    common(p, snapshot=False)
    p.add_argument("--log", default=None, help="stream log CSV from `simulate`")
    p.add_argument("--out", default=None, help="distribution CSV path")

    p = sub.add_parser("eval", help="holdout metrics for the trained forests")
    common(p)
    p.add_argument("--holdout-fraction", type=float, default=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        opts = _Options(args, dict(os.environ))
        return _COMMANDS[args.command](opts)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
