import time

SESSION_START = time.monotonic()
ACCEPTANCE: dict[int, str] = {}


def pytest_collection_modifyitems(session, config, items):
    # acceptance criteria run last so criterion 7 can time the whole suite
    items.sort(key=lambda item: item.module.__name__ == "test_acceptance")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
