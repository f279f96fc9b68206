def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance lines after the run, whatever the capture mode."""
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
    passed = sum(" PASS " in line for line in lines.values())
    terminalreporter.write_line(f"{passed}/{len(lines)} criteria passed")
