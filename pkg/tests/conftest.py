import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        # large grading exponents are exercised on purpose
        item.add_marker(pytest.mark.filterwarnings("ignore:gamma=.*exceeds 4/alpha"))


@pytest.fixture
def acceptance(request):
    """``record(criterion, label, ok, detail)`` collects one sub-result for the summary."""
    results = request.config.stash[_RESULTS]

    def record(criterion, label, ok, detail):
        results.setdefault(criterion, []).append((label, bool(ok), detail))
        print(f"criterion {criterion} [{label}]: {'PASS' if ok else 'FAIL'} {detail}")

    return record


def _order(key):
    return (0, int(key)) if str(key).isdigit() else (1, str(key))


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(results, key=_order):
        parts = results[crit]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        failed = [f"{label}: {detail}" for label, ok, detail in parts if not ok]
        note = f"{len(parts) - len(failed)}/{len(parts)} checks"
        if failed:
            note += " | failed: " + "; ".join(failed)
        name = f"criterion {crit}" if str(crit).isdigit() else str(crit)
        terminalreporter.write_line(f"{name:<22} {status}  {note}")
