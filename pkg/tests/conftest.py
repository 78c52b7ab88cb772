"""Shared pytest hooks: one PASS/FAIL line per acceptance criterion."""

_RESULTS: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label, title = marker.args
    if call.when == "setup" and call.excinfo is not None:
        _RESULTS[label] = ("FAIL", title)
    elif call.when == "call":
        _RESULTS[label] = ("FAIL" if call.excinfo is not None else "PASS", title)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")

    def key(label):
        head = "".join(ch for ch in label if ch.isdigit())
        return int(head or 0), label

    for label in sorted(_RESULTS, key=key):
        status, title = _RESULTS[label]
        terminalreporter.write_line(f"{status}  [{label}] {title}")
