"""Collects one PASS/FAIL line per acceptance criterion.

Lines are printed as the tests run (visible with ``-s``) and repeated in the
terminal summary by ``conftest.pytest_terminal_summary``.
"""

LINES = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
    LINES.append(line)
    print(line)
    return ok
