import os

from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE = {}


def record_acceptance(number, passed, detail, merge=False):
    """Store the outcome of a criterion; ``merge`` joins several sub-checks."""
    if merge and number in ACCEPTANCE:
        prev_ok, prev_detail = ACCEPTANCE[number]
        passed, detail = prev_ok and passed, f"{prev_detail}; {detail}"
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
