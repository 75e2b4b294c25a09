def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, gathered from test user_properties."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) != "call":
                continue
            for name, value in rep.user_properties:
                if name == "acceptance":
                    lines.append(value)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, title, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
