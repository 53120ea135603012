import os
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE: list[tuple[str, str, str]] = []


class Criterion:
    """Collects sub-checks of one acceptance criterion and records a single line."""

    def __init__(self, ident: str, title: str):
        self.ident = ident
        self.title = title
        self.checks: list[tuple[str, bool]] = []

    def check(self, label: str, ok) -> bool:
        ok = bool(ok)
        self.checks.append((label, ok))
        print(f"  [{'ok' if ok else 'FAIL'}] {label}", flush=True)
        return ok

    def finish(self):
        ok = all(c for _, c in self.checks) and bool(self.checks)
        failed = [lab for lab, c in self.checks if not c]
        detail = "; ".join(lab for lab, _ in self.checks) if ok else "failed: " + "; ".join(failed)
        ACCEPTANCE.append((self.ident, "PASS" if ok else "FAIL", f"{self.title} :: {detail}"))
        print(f"criterion {self.ident}: {'PASS' if ok else 'FAIL'}", flush=True)
        assert ok, "; ".join(failed)


@pytest.fixture
def criterion():
    made = []

    def make(ident, title):
        c = Criterion(ident, title)
        made.append(c)
        return c

    return make


def skip_criterion(ident: str, title: str, reason: str):
    ACCEPTANCE.append((ident, "SKIP", f"{title} :: {reason}"))
    pytest.skip(reason)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for ident, status, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0])):
        tr.write_line(f"{status:4s} criterion {ident:>2s}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def data_dir():
    return DATA


def real_data_dir() -> Path | None:
    d = os.environ.get("NEARUNIT_DATA_DIR")
    if d and Path(d).is_dir():
        return Path(d)
    return None
