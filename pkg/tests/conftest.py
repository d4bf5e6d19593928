from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from incgnn.graph import read_graph
from incgnn.model import model_from_json

FIXTURES = Path(__file__).parent / "fixtures"
A, B, C, D, E = range(5)

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def five_graph():
    return read_graph(FIXTURES / "five.edges", FIXTURES / "five.feat")


@pytest.fixture
def five_doc() -> dict:
    return json.loads((FIXTURES / "five_sum.json").read_text())


@pytest.fixture
def five_model(five_doc):
    return model_from_json(five_doc)


def golden_rows() -> dict[int, np.ndarray]:
    out = {}
    for line in (FIXTURES / "five_golden.txt").read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        parts = line.split()
        out[int(parts[0])] = np.array([float(x) for x in parts[1:]])
    return out


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
