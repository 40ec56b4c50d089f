"""Shared fixtures: on-disk weight-table cache and acceptance-line reporting.

Weight tables are expensive to build (seconds at 3 nodes per axis, minutes at
7), so tests share one persistent cache under .cache/tables/ at the repo
root.  Missing tables are built once at the 'fast' brute-force preset and
reused across sessions; a fresh checkout's first full run therefore spends
~15 minutes building tables, later runs load them in milliseconds.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from nyvie.cli import table_filename
from nyvie.quadrature import FAST_RESOLUTION
from nyvie.weights import compute_weight_table, load_table, save_table

REPO = Path(__file__).resolve().parents[1]
CACHE_DIR = REPO / ".cache" / "tables"

_MEMO: dict = {}


def cached_table(m: int, delta: float, res=FAST_RESOLUTION):
    """Weight table from the repo cache, building and saving when absent."""
    key = (m, delta, res.ident())
    if key not in _MEMO:
        path = CACHE_DIR / table_filename(m, delta, res.ident())
        if path.exists():
            _MEMO[key] = load_table(path)
        else:
            _MEMO[key] = compute_weight_table(m, delta, res)
            save_table(_MEMO[key], path)
    return _MEMO[key]


@pytest.fixture(scope="session")
def tables():
    """Callable fixture: tables(m, delta [, resolution]) -> WeightTable."""
    return cached_table


# --------------------------------------------------------------------------
# acceptance reporting: one line per criterion, shown in the pytest summary
# whether the criterion passed or failed

ACCEPTANCE_LINES: list = []


def record_acceptance(num: int, name: str, ok: bool, detail: str = "") -> bool:
    tail = f" -- {detail}" if detail else ""
    line = f"ACCEPTANCE {num} ({name}): {'PASS' if ok else 'FAIL'}{tail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
