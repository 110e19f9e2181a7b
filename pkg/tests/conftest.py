"""Shared fixtures and test-local import path.

Puts the tests directory itself on sys.path so the oracle module
(`oracles.py`, kept beside the tests on purpose) imports without
packaging it.
"""

import json
import os
import sys
from pathlib import Path

import numpy as np
import pytest

TESTS_DIR = Path(__file__).resolve().parent
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

FIXTURES_DIR = TESTS_DIR / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES_DIR


@pytest.fixture(scope="session")
def system_3x3():
    """Frozen hand-assembled 3x3 systems (uniform and graded K)."""
    with open(FIXTURES_DIR / "system_3x3.json", "r", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    # keep the environment override from leaking into unit tests
    monkeypatch.delenv("HEATMC_SEED", raising=False)
