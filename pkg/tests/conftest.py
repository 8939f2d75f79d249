import os
from pathlib import Path

import pytest

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion checked by this test")


@pytest.fixture
def mnist_dir():
    """Directory with the official MNIST IDX files, from $HFFL_MNIST_DIR."""
    root = os.environ.get("HFFL_MNIST_DIR")
    if not root or not (Path(root) / "t10k-images-idx3-ubyte").is_file():
        pytest.skip("official MNIST files not available (set HFFL_MNIST_DIR)")
    return Path(root)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not report.failed:
        return
    number, text = marker.args
    passed, failed = _CRITERIA.get(number, (text, True))[1], report.failed
    _CRITERIA[number] = (text, passed and not failed and not report.skipped)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        text, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}")
