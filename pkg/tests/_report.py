"""Collects one pass/fail line per acceptance criterion for the terminal summary."""
LINES = {}


def record(number, title, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    LINES[number] = f"criterion {number:>2} {status}  {title}" + (f"  [{detail}]" if detail else "")
    print(LINES[number])
    return passed
