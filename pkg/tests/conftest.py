"""Echo the acceptance suite's per-criterion verdict lines after the run,
where output capture no longer hides them."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import CRITERION_LINES
    except ImportError:
        return
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(
            CRITERION_LINES,
            key=lambda s: int(s.split(":")[0].split()[-1]),
        ):
            terminalreporter.write_line(line)
