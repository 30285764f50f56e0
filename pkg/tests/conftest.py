import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _private_cache(tmp_path, monkeypatch):
    # keep the translation cache out of the user's home directory
    monkeypatch.setenv("QAFORGE_CACHE_DIR", str(tmp_path / "cache"))


@pytest.fixture
def squad100():
    return json.loads((FIXTURES / "squad_en_100.json").read_text("utf-8"))


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, in criterion order."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props and rep.when == "call":
                rows.append((props["criterion"], outcome, props.get("title", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, outcome, title in sorted(rows):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if outcome == 'passed' else 'FAIL'}  {title}")
