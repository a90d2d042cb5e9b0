from __future__ import annotations

import json
import time
from types import SimpleNamespace

import pytest
from hypothesis import settings

from qset import cli

settings.register_profile("suite", deadline=None, derandomize=True, max_examples=50)
settings.load_profile("suite")


def _run_bundle(tmp_path_factory, figure: str) -> SimpleNamespace:
    out = tmp_path_factory.mktemp(f"bundle_{figure}")
    start = time.perf_counter()
    rc = cli.main(["reproduce", figure, "--out", str(out)])
    elapsed = time.perf_counter() - start
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    return SimpleNamespace(path=out, report=report, elapsed=elapsed)


@pytest.fixture(scope="session")
def telegraph_bundle(tmp_path_factory) -> SimpleNamespace:
    """Full telegraph readout bundle, generated once and shared."""
    return _run_bundle(tmp_path_factory, "fig2")


@pytest.fixture(scope="session")
def thermometry_bundle(tmp_path_factory) -> SimpleNamespace:
    """Defect thermometry bundle, generated once and shared."""
    return _run_bundle(tmp_path_factory, "fig3")
