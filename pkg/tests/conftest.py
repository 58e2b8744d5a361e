import numpy as np


def random_correlation(n, rng, strength=1.0):
    A = strength * rng.standard_normal((n, n))
    S = A @ A.T + n * np.eye(n)
    d = np.sqrt(np.diag(S))
    psi = S / np.outer(d, d)
    np.fill_diagonal(psi, 1.0)
    return psi


# acceptance criteria append (label, passed, detail) here; printed at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
