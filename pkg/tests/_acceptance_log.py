"""Shared registry for the acceptance suite's per-criterion verdict lines.

conftest.py replays these in the terminal summary so a plain ``pytest -v``
run always ends with one visible PASS/FAIL line per criterion.
"""

LINES = []


def log(line):
    LINES.append(line)
    print(line)
