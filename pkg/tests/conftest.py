import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, aggregated over the tests tagged with it."""
    crit = {}
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) != "call":
                continue
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" not in props:
                continue
            entry = crit.setdefault(props["criterion"], {"ok": True, "notes": []})
            entry["ok"] &= rep.outcome == "passed" or (rep.outcome == "skipped" and hasattr(rep, "wasxfail"))
            if props.get("detail"):
                entry["notes"].append(props["detail"])
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(crit):
        e = crit[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if e['ok'] else 'FAIL'}  {'; '.join(e['notes'])}")
