"""Tests for staged output directories and manifests."""
import json

import pandas as pd
import pytest

from models.errors import InputFileError, ParseError
from models.schemas import RunManifest
from services.artifact_store import MANIFEST_NAME, ArtifactStore, file_digest, read_manifest


def _manifest() -> RunManifest:
    return RunManifest(subcommand="fit", argv=["fit", "in.csv"], config={"run": {}}, seed=0, version="test")


def test_commit_moves_outputs_and_writes_manifest(tmp_path):
    out = tmp_path / "run"
    with ArtifactStore(out) as store:
        store.write_frame("a.csv", pd.DataFrame({"gene": ["g1", "g2"], "x": [1.5, float("nan")]}))
        store.write_text("b.txt", "hello\n")
        store.commit(_manifest())

    assert (out / "a.csv").read_text() == "gene,x\ng1,1.5\ng2,\n"
    assert (out / "b.txt").read_text() == "hello\n"
    manifest = read_manifest(out)
    assert manifest.outputs == ["a.csv", "b.txt"]
    assert "elapsed_seconds" in manifest.timing
    assert [p.name for p in out.iterdir() if p.name.startswith(".staging-")] == []


def test_failure_leaves_no_partial_outputs(tmp_path):
    out = tmp_path / "run"
    with pytest.raises(RuntimeError):
        with ArtifactStore(out) as store:
            store.write_text("partial.txt", "x")
            raise RuntimeError("boom")
    assert not out.exists()


def test_existing_directory_is_kept_on_failure(tmp_path):
    (tmp_path / "keep.txt").write_text("k")
    with ArtifactStore(tmp_path) as store:
        store.write_text("partial.txt", "x")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["keep.txt"]


def test_file_digest(tmp_path):
    path = tmp_path / "f.txt"
    path.write_bytes(b"abc")
    assert file_digest(path) == "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    with pytest.raises(InputFileError):
        file_digest(tmp_path / "missing.txt")


def test_read_manifest_errors(tmp_path):
    with pytest.raises(InputFileError):
        read_manifest(tmp_path / "nothing")
    (tmp_path / MANIFEST_NAME).write_text(json.dumps({"subcommand": "fit"}))
    with pytest.raises(ParseError):
        read_manifest(tmp_path)
