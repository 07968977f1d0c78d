"""Artifact bundles: everything the service needs, stamped and consistent.

A pipeline run writes its outputs into one snapshot directory. The manifest
carries the model_version stamp, computed from the input data, the seed and
the training configuration; every artifact produced afterwards embeds the same
stamp. Loading re-checks completeness and stamp agreement so a half-finished
or mixed-version directory is rejected before it can serve a single request.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .ann import AnnIndex, load_index
from .catalog import Catalog, Mood, load_catalog
from .embeddings import EmbeddingSpace, load_space
from .forests import MoodScoreTable, RandomForest, load_forests
from .sessions import FallbackPool, SessionConfig, SessionDeps

MANIFEST_NAME = "manifest.json"

# artifact file -> subcommand that produces it
PRODUCERS = {
    "manifest.json": "ingest",
    "catalog.jsonl": "ingest",
    "interactions.csv": "ingest",
    "labels.csv": "ingest",
    "popularity.json": "ingest",
    "embeddings.snap": "train-embeddings",
    "forests.snap": "train-moods",
    "scores.csv": "score-catalog",
    "index.snap": "build-index",
    "fallback.json": "build-fallback",
}

# the subset a running service loads
SERVE_FILES = (
    "manifest.json",
    "catalog.jsonl",
    "embeddings.snap",
    "forests.snap",
    "scores.csv",
    "index.snap",
    "fallback.json",
)


class ArtifactError(Exception):
    pass


def compute_model_version(input_paths: list[str | Path], seed: int, config: dict) -> str:
    """Content hash of inputs plus run parameters, rendered as a short stamp."""
    h = hashlib.sha256()
    for path in input_paths:
        h.update(Path(path).read_bytes())
        h.update(b"\x00")
    h.update(json.dumps(config, sort_keys=True).encode("utf-8"))
    h.update(str(seed).encode("utf-8"))
    return "v" + h.hexdigest()[:12]


def require_artifact(snapshot_dir: str | Path, name: str) -> Path:
    """Path of an artifact file, or an error naming the subcommand that makes it."""
    path = Path(snapshot_dir) / name
    if not path.exists():
        producer = PRODUCERS.get(name)
        hint = f"; run `moodradio {producer}` first" if producer else ""
        raise ArtifactError(f"missing artifact {name} in {snapshot_dir}{hint}")
    return path


def write_manifest(snapshot_dir: str | Path, manifest: dict) -> Path:
    path = Path(snapshot_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(snapshot_dir: str | Path) -> dict:
    path = require_artifact(snapshot_dir, MANIFEST_NAME)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"corrupt manifest {path}: {exc}") from exc
    if "model_version" not in manifest:
        raise ArtifactError(f"manifest {path} lacks a model_version stamp")
    return manifest


def write_fallback(snapshot_dir: str | Path, fallback: FallbackPool, model_version: str) -> Path:
    path = Path(snapshot_dir) / "fallback.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {"model_version": model_version, "pools": fallback.to_dict()},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    return path


def read_fallback(snapshot_dir: str | Path) -> tuple[FallbackPool, str]:
    path = require_artifact(snapshot_dir, "fallback.json")
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return FallbackPool.from_dict(data["pools"]), data.get("model_version", "")


@dataclass
class ArtifactBundle:
    model_version: str
    manifest: dict
    catalog: Catalog
    space: EmbeddingSpace
    forests: dict[Mood, RandomForest]
    score_table: MoodScoreTable
    index: AnnIndex
    fallback: FallbackPool

    def session_deps(self, config: SessionConfig | None = None) -> SessionDeps:
        return SessionDeps(
            catalog=self.catalog,
            space=self.space,
            index=self.index,
            score_table=self.score_table,
            fallback=self.fallback,
            config=config or SessionConfig(),
        )


def _check_stamps(expected: str, stamps: dict[str, str | None]) -> None:
    for name, stamp in stamps.items():
        if stamp is None or stamp == "":
            raise ArtifactError(f"artifact {name} carries no model_version stamp")
        if stamp != expected:
            raise ArtifactError(
                f"model_version mismatch: manifest has {expected}, {name} has {stamp}"
            )


def load_bundle(snapshot_dir: str | Path) -> ArtifactBundle:
    """Load a complete serve-ready artifact set, verifying version agreement."""
    snapshot_dir = Path(snapshot_dir)
    for name in SERVE_FILES:
        require_artifact(snapshot_dir, name)

    manifest = read_manifest(snapshot_dir)
    expected = manifest["model_version"]

    catalog = load_catalog(snapshot_dir / "catalog.jsonl")
    space, space_version = load_space(snapshot_dir / "embeddings.snap")
    forests, forest_version = load_forests(snapshot_dir / "forests.snap")
    score_table = MoodScoreTable.load_csv(snapshot_dir / "scores.csv")
    index, index_version = load_index(snapshot_dir / "index.snap")
    fallback, fallback_version = read_fallback(snapshot_dir)

    _check_stamps(
        expected,
        {
            "embeddings.snap": space_version,
            "forests.snap": forest_version,
            "scores.csv": score_table.model_version,
            "index.snap": index_version,
            "fallback.json": fallback_version,
        },
    )
    return ArtifactBundle(
        model_version=expected,
        manifest=manifest,
        catalog=catalog,
        space=space,
        forests=forests,
        score_table=score_table,
        index=index,
        fallback=fallback,
    )


__all__ = [
    "ArtifactBundle",
    "ArtifactError",
    "MANIFEST_NAME",
    "PRODUCERS",
    "SERVE_FILES",
    "compute_model_version",
    "load_bundle",
    "read_fallback",
    "read_manifest",
    "require_artifact",
    "write_fallback",
    "write_manifest",
]
