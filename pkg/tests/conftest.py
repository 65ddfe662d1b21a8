import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def ingest_dir(tmp_path):
    dest = tmp_path / "ingest"
    shutil.copytree(FIXTURES / "ingest", dest)
    return dest


@pytest.fixture
def synth_config(tmp_path):
    dest = tmp_path / "synth_pipeline.toml"
    shutil.copy(FIXTURES / "synth_pipeline.toml", dest)
    return dest


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        title, parts = RESULTS[n]
        status = "PASS" if all(parts.values()) else "FAIL"
        failed = [name for name, ok in parts.items() if not ok]
        extra = f" (failed: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {n}: {status} - {title}{extra}")
