import pytest

from w2svqa.errors import EncoderNotFoundError
from w2svqa.media import find_encoder


def _has_encoder():
    try:
        find_encoder()
    except EncoderNotFoundError:
        return False
    return True


HAS_ENCODER = _has_encoder()


def pytest_collection_modifyitems(config, items):
    if HAS_ENCODER:
        return
    skip = pytest.mark.skip(reason="no encoder executable (set W2S_ENCODER or install ffmpeg)")
    for item in items:
        if "encoder" in item.keywords:
            item.add_marker(skip)


ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one acceptance line: ``acceptance(number, ok, detail)``."""
    def record(number, ok, detail):
        ACCEPTANCE.append((number, ok, detail))
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
