"""Run manifests: what a run directory contains and how it was produced.

Every run directory carries a ``manifest.json`` naming the configuration
hash, the effective seed (and where it came from), status, and the
complete list of artifact files.  Reporting refuses to run when any listed
file is missing, so the manifest doubles as an integrity check.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from . import __version__

MANIFEST_FORMAT = 1
MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    seed_source: str = "config"  # config | env
    chain_index: int | None = None
    chains: int = 1
    scheme: str = "z2"
    acceptance_rule: str = "normalized"
    iterations: int = 0
    status: str = "running"  # running | complete | aborted
    created_utc: str = ""
    finished_utc: str = ""
    files: list[str] = field(default_factory=list)
    chain_dirs: list[str] = field(default_factory=list)
    acceptance_rate: float | None = None
    final_delta: float | None = None
    final_beta: float | None = None
    infeasible_count: int | None = None
    solve_failures: int | None = None
    wall_time_s: float | None = None
    format: int = MANIFEST_FORMAT
    code_version: str = __version__

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def write_manifest(run_dir, manifest: RunManifest) -> None:
    path = os.path.join(os.fspath(run_dir), MANIFEST_NAME)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_manifest(run_dir) -> RunManifest:
    path = os.path.join(os.fspath(run_dir), MANIFEST_NAME)
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    fmt = payload.get("format")
    if fmt != MANIFEST_FORMAT:
        raise ValueError(f"{path}: unsupported manifest format {fmt!r}")
    known = {f.name for f in dataclasses.fields(RunManifest)}
    return RunManifest(**{k: v for k, v in payload.items() if k in known})


def missing_files(run_dir, manifest: RunManifest) -> list[str]:
    """Listed artifact files that are absent from the run directory."""
    run_dir = os.fspath(run_dir)
    return [f for f in manifest.files
            if not os.path.exists(os.path.join(run_dir, f))]
