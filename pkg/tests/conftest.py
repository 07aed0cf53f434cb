import pytest

ACCEPTANCE = {}
N_CRITERIA = 8
COLLECTED = pytest.StashKey[bool]()


@pytest.fixture
def record_criterion():
    """Store one acceptance verdict for the end-of-run summary."""
    def record(number, ok, detail):
        ACCEPTANCE[number] = (bool(ok), detail)
        return ok
    return record


def pytest_collection_modifyitems(config, items):
    config.stash[COLLECTED] = any("test_acceptance" in item.nodeid for item in items)


def pytest_terminal_summary(terminalreporter, config):
    if not config.stash.get(COLLECTED, False):
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        else:
            terminalreporter.write_line(f"criterion {n}: FAIL - not evaluated")
