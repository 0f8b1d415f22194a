import os
from pathlib import Path

import pytest


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    """Point the package cache at a per-test temp dir unless a test opts out."""
    monkeypatch.setenv("THERMALAB_CACHE", str(tmp_path / "cache"))
    yield


@pytest.fixture(scope="session")
def shared_workdir(tmp_path_factory) -> Path:
    """Session-wide scratch area for expensive shared artifacts.

    THERMALAB_ACCEPTANCE_DIR can point it at a persistent location to reuse
    spectrum tables and trajectories across pytest invocations.
    """
    env = os.environ.get("THERMALAB_ACCEPTANCE_DIR")
    if env:
        path = Path(env)
        path.mkdir(parents=True, exist_ok=True)
        return path
    return tmp_path_factory.mktemp("thermalab-shared")
