"""
On-disk artefacts: versioned `.npz` caches of Riemann maps and the manifest
listing every file written by a build with its SHA-256 digest.
"""

from qcfold import logging
from qcfold.model_domain import Model
from qcfold.riemann_map import CACHE_VERSION, DiscreteRiemannMap

from dataclasses import dataclass
from pathlib import Path
import hashlib
import json

from collections.abc import Iterable
from typing import Any, Optional


logger = logging.getLogger(__name__)


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()

    with path.open("rb") as stream:
        for block in iter(lambda: stream.read(1 << 16), b""):
            digest.update(block)

    return digest.hexdigest()


def dump_json(path: Path, payload: Any) -> Path:
    """
    Write JSON with sorted keys so that equal payloads give equal bytes.
    """

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


@dataclass(frozen=True)
class ArtifactCache:
    """
    Cache directory for Riemann maps, keyed by model hash and resolution.
    """

    directory: Path
    enabled: bool = True

    def riemann_path(self, model_hash: str, resolution: int) -> Path:
        return self.directory / f"riemann-v{CACHE_VERSION}-{model_hash[:16]}-{resolution}.npz"

    def load_riemann(self, model_hash: str, resolution: int, model: Model) -> Optional[DiscreteRiemannMap]:
        if not self.enabled:
            return None

        path = self.riemann_path(model_hash, resolution)

        if not path.is_file():
            logger.debug(f"cache miss: {path.name}")
            return None

        rm = DiscreteRiemannMap.load(path, model)

        if rm is None:
            logger.debug(f"cache entry {path.name} has another version, ignored")

        else:
            logger.debug(f"cache hit: {path.name}")

        return rm

    def store_riemann(self, model_hash: str, rm: DiscreteRiemannMap) -> Optional[Path]:
        if not self.enabled:
            return None

        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.riemann_path(model_hash, rm.resolution)
        rm.save(path)
        return path


def write_manifest(out: Path, files: Iterable[Path], config_hash: str) -> Path:
    """
    `manifest.json` with the digest of every listed file, by path relative to
    `out`.
    """

    entries = {
        str(path.relative_to(out)): file_digest(path)
        for path in sorted(set(files))
        if path.is_file()
    }
    return dump_json(out / "manifest.json", {"config_hash": config_hash, "artifacts": entries})
