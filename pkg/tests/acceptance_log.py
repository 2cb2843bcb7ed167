"""Collects one verdict per acceptance criterion for the terminal summary."""

RESULTS = {}


def record(number: int, ok: bool, detail: str) -> bool:
    RESULTS[number] = (ok, detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    return ok


def summary_lines():
    return [
        f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        for n, (ok, detail) in sorted(RESULTS.items())
    ]
