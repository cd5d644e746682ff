"""Atomic output directories with a run manifest."""
import hashlib
import os
import shutil
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Union

import pandas as pd
from loguru import logger
from pydantic import ValidationError

from models.errors import InputFileError, ParseError
from models.schemas import RunManifest
from utils.tables import write_csv, write_text

MANIFEST_NAME = "manifest.json"


def file_digest(path: Union[str, Path]) -> str:
    """sha256 of a file, prefixed with the algorithm name."""
    p = Path(path)
    if not p.is_file():
        raise InputFileError(f"input file not found: {path}")
    h = hashlib.sha256()
    with open(p, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return f"sha256:{h.hexdigest()}"


class ArtifactStore:
    """Stages outputs in a hidden directory and moves them into place only on commit."""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self._created = not self.out_dir.exists()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out_dir))
        self.outputs: List[str] = []
        self._started = time.monotonic()
        self._started_at = datetime.now(timezone.utc).isoformat()
        self._closed = False

    def __enter__(self) -> "ArtifactStore":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if not self._closed:
            self.discard()

    def path(self, name: str) -> Path:
        if name not in self.outputs:
            self.outputs.append(name)
        return self.staging / name

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        return write_csv(frame, self.path(name))

    def write_text(self, name: str, text: str) -> Path:
        return write_text(text, self.path(name))

    def commit(self, manifest: RunManifest) -> Path:
        """Write the manifest and move every staged file into the output directory."""
        manifest.outputs = sorted(self.outputs)
        manifest.timing = {
            "started_at": self._started_at,
            "elapsed_seconds": round(time.monotonic() - self._started, 3),
        }
        write_text(manifest.model_dump_json(indent=2) + "\n", self.staging / MANIFEST_NAME)
        for name in [*self.outputs, MANIFEST_NAME]:
            os.replace(self.staging / name, self.out_dir / name)
        shutil.rmtree(self.staging, ignore_errors=True)
        self._closed = True
        logger.info("Wrote {} file(s) to {}", len(self.outputs) + 1, self.out_dir)
        return self.out_dir / MANIFEST_NAME

    def discard(self) -> None:
        """Drop staged files; remove the output directory if this run created it and it is empty."""
        shutil.rmtree(self.staging, ignore_errors=True)
        if self._created:
            try:
                self.out_dir.rmdir()
            except OSError:
                pass
        self._closed = True
        logger.debug("Discarded staged outputs in {}", self.out_dir)


def read_manifest(path: Union[str, Path]) -> RunManifest:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    if not p.is_file():
        raise InputFileError(f"manifest not found: {path}")
    try:
        return RunManifest.model_validate_json(p.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ParseError(f"manifest {p} is invalid: {e.errors()[0].get('msg')}")
