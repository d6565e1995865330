"""Run manifests: enough provenance to replay any artifact-producing run."""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

MANIFEST_VERSION = 1


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    def __init__(self, argv: list[str], seed=None, config_fingerprint: str | None = None):
        self.argv = list(argv)
        self.seed = seed
        self.config_fingerprint = config_fingerprint
        self.inputs: dict[str, str] = {}
        self.artifacts: list[str] = []
        self.started = datetime.now(timezone.utc).isoformat()

    def add_input(self, path) -> None:
        p = Path(path)
        if p.is_file():
            self.inputs[str(p)] = file_digest(p)
        elif p.is_dir():
            for child in sorted(p.rglob("*")):
                if child.is_file():
                    self.inputs[str(child)] = file_digest(child)

    def add_artifact(self, path) -> None:
        self.artifacts.append(str(path))

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "version": MANIFEST_VERSION,
            "command": self.argv,
            "seed": self.seed,
            "config_fingerprint": self.config_fingerprint,
            "inputs": self.inputs,
            "artifacts": self.artifacts,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
        }
        path = out_dir / "manifest.json"
        path.write_text(
            json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        return path
