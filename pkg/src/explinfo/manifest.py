"""Run manifest, config loading, and the per-run-directory lock.

The manifest is the reproducibility record: config hash, every seed,
provider identifiers, split sizes, selected hyperparameters, and a
content digest for every artifact the pipeline wrote. It contains no
timestamps, so two runs over identical inputs serialize identically.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib


class ManifestError(ValueError):
    pass


class LockHeldError(RuntimeError):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(path) -> dict:
    with Path(path).open("rb") as fh:
        return tomllib.load(fh)


def config_hash(config: dict) -> str:
    """Digest of the canonical JSON form, so dict ordering is irrelevant."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    config_hash: str | None = None
    seeds: dict = field(default_factory=dict)
    providers: dict = field(default_factory=dict)
    split_sizes: dict = field(default_factory=dict)
    hyperparameters: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        manifest = cls(config_hash=data.get("config_hash"))
        for name in ("seeds", "providers", "split_sizes", "hyperparameters", "artifacts", "notes"):
            getattr(manifest, name).update(data.get(name, {}))
        return manifest

    @classmethod
    def load_or_new(cls, path) -> "RunManifest":
        path = Path(path)
        return cls.load(path) if path.exists() else cls()

    def record_artifact(self, path, base_dir):
        """Digest the file and store it under its run-relative name."""
        path = Path(path)
        rel = path.relative_to(base_dir).as_posix()
        self.artifacts[rel] = sha256_file(path)

    def save(self, path):
        """Atomic write (temp file + rename), stable key order."""
        path = Path(path)
        payload = {
            "config_hash": self.config_hash,
            "seeds": self.seeds,
            "providers": self.providers,
            "split_sizes": self.split_sizes,
            "hyperparameters": self.hyperparameters,
            "artifacts": self.artifacts,
            "notes": self.notes,
        }
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, path)


class RunLock:
    """One subcommand at a time per run directory.

    The lock file is created with O_EXCL; a leftover file from a crashed
    process must be removed by hand (its contents name the pid).
    """

    def __init__(self, run_dir):
        self.path = Path(run_dir) / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockHeldError(
                f"run directory is locked by another process ({self.path}); remove the file if that process is gone"
            ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(f"pid {os.getpid()}\n")
        return self

    def __exit__(self, exc_type, exc, tb):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return False
