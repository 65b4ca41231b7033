"""Engine persistence: a JSON manifest plus checksummed binary model blobs.

The manifest records every seed and dimension the pipeline consumed, which
is all it takes to rebuild the codebook, the inverted index, and the feature
hashing exactly; only the learned parameters need binary blobs.  Reloading
therefore reproduces the original scoring function bit for bit.

Blobs are referenced by path relative to the manifest's directory together
with a sha256 checksum, verified on load.  Seeds are stored as JSON integers
(they can exceed 2^53; the reference reader is Python, which keeps them
exact).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from .codes import CodeConfig
from .model import ChunkModel, load_model, save_model
from .train import ChunkEnsemble, EngineConfig, TrainConfig

FORMAT_VERSION = 1


class ManifestError(ValueError):
    """Unreadable, mis-versioned, or internally inconsistent manifest."""


class BlobChecksumError(RuntimeError):
    """A model blob's content does not match its recorded checksum."""


@dataclass(frozen=True)
class BlobRef:
    chunk: int
    path: str  # relative to the manifest directory
    sha256: str


@dataclass(frozen=True)
class Manifest:
    """Everything needed to reconstruct a trained engine."""

    format_version: int
    created_at: str
    code_config: CodeConfig
    engine: EngineConfig
    train_config: TrainConfig | None
    blobs: tuple[BlobRef, ...]

    def __post_init__(self) -> None:
        if self.format_version != FORMAT_VERSION:
            raise ManifestError(
                f"unsupported manifest version {self.format_version}, "
                f"this build reads version {FORMAT_VERSION}"
            )
        if len(self.blobs) != self.code_config.num_chunks:
            raise ManifestError("one blob per chunk required")
        if [b.chunk for b in self.blobs] != list(range(len(self.blobs))):
            raise ManifestError("blob list must cover chunks 0..K-1 in order")


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def save_ensemble(
    ensemble: ChunkEnsemble,
    out_dir: str | Path,
    train_config: TrainConfig | None = None,
) -> Path:
    """Write model blobs and manifest.json into out_dir; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    blobs = []
    for model in ensemble.models:
        name = f"chunk_{model.chunk:04d}.bin"
        blob_path = out_dir / name
        with blob_path.open("wb") as fh:
            save_model(model, fh)
        blobs.append(BlobRef(chunk=model.chunk, path=name, sha256=_sha256_file(blob_path)))

    doc = {
        "format_version": FORMAT_VERSION,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "code_config": asdict(ensemble.code_config),
        "engine": asdict(ensemble.engine),
        "train_config": asdict(train_config) if train_config is not None else None,
        "blobs": [asdict(b) for b in blobs],
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def load_manifest(manifest_path: str | Path) -> Manifest:
    """Parse and validate manifest.json without touching the blobs."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"unreadable manifest {manifest_path}: {exc}") from exc
    try:
        return Manifest(
            format_version=doc["format_version"],
            created_at=doc["created_at"],
            code_config=CodeConfig(**doc["code_config"]),
            engine=EngineConfig(**doc["engine"]),
            train_config=(
                TrainConfig(**doc["train_config"]) if doc["train_config"] else None
            ),
            blobs=tuple(BlobRef(**b) for b in doc["blobs"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ManifestError):
            raise
        raise ManifestError(f"malformed manifest {manifest_path}: {exc}") from exc


def verify_blobs(manifest_path: str | Path) -> None:
    """Recompute every blob checksum; raises BlobChecksumError on mismatch."""
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    base = manifest_path.parent
    for ref in manifest.blobs:
        blob_path = base / ref.path
        if not blob_path.is_file():
            raise BlobChecksumError(f"missing model blob {blob_path}")
        actual = _sha256_file(blob_path)
        if actual != ref.sha256:
            raise BlobChecksumError(
                f"checksum mismatch for {blob_path}: "
                f"manifest says {ref.sha256[:12]}…, file is {actual[:12]}…"
            )


def load_ensemble(manifest_path: str | Path) -> tuple[ChunkEnsemble, Manifest]:
    """Load and checksum-verify a trained engine from its manifest."""
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    verify_blobs(manifest_path)
    base = manifest_path.parent
    models: list[ChunkModel] = []
    for ref in manifest.blobs:
        with (base / ref.path).open("rb") as fh:
            model = load_model(fh)
        if model.chunk != ref.chunk:
            raise ManifestError(
                f"blob {ref.path} holds chunk {model.chunk}, manifest says {ref.chunk}"
            )
        models.append(model)
    ensemble = ChunkEnsemble(
        code_config=manifest.code_config, engine=manifest.engine, models=models
    )
    return ensemble, manifest
