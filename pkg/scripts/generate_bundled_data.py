"""Regenerate the bundled offline snapshot in src/hsvar/datasets.

The files mimic FRED exports (``DATE,VALUE``, monthly or quarterly as on
FRED) but the numbers are synthetic: a sparse VAR(2) with stochastic
volatility on the transformed scale, mapped to plausible units and
integrated back to levels.  Run from the repository root:

    python scripts/generate_bundled_data.py
"""

import datetime as dt
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "hsvar" / "datasets"
SEED = 20101231

# id, frequency, code, mean and sd of the transformed series, starting level
SERIES = [
    ("GS1", "M", "diff", 0.0, 0.6, 3.0),
    ("GDPC96", "Q", "log_diff", 0.0075, 0.008, 2500.0),
    ("GDPDEF", "Q", "log_diff", 0.009, 0.006, 18.0),
    ("PAYEMS", "M", "log_diff", 0.004, 0.005, 53000.0),
    ("UNRATE", "M", "diff", 0.0, 0.3, 5.5),
    ("M1SL", "M", "log_diff", 0.013, 0.01, 140.0),
    ("M2SL", "M", "log_diff", 0.016, 0.008, 290.0),
    ("M1V", "Q", "log_diff", 0.004, 0.01, 3.6),
]

FIRST_QUARTER = (1959, 3)      # one quarter ahead of 1960Q1 is lost to differencing
LAST_QUARTER = (2010, 4)
WARMUP = 100


def sparse_var(n, P, rng):
    while True:
        theta = np.zeros((n, n, P))
        for i in range(n):
            theta[i, i, 0] = rng.uniform(0.3, 0.6)
        mask = rng.uniform(size=theta.shape) < 0.12
        theta += mask * rng.normal(0.0, 0.25, theta.shape) * (theta == 0)
        comp = np.zeros((n * P, n * P))
        comp[:n] = theta.transpose(0, 2, 1).reshape(n, n * P)
        comp[n:, :-n] = np.eye(n * (P - 1))
        if np.abs(np.linalg.eigvals(comp)).max() < 0.9:
            return theta


def simulate(T, rng):
    n, P = len(SERIES), 2
    theta = sparse_var(n, P, rng)
    v = rng.uniform(-0.7, 0.7, n)
    L = np.linalg.cholesky(np.outer(v, v) + np.diag(1.0 - v ** 2))
    y = np.zeros((T + WARMUP + P, n))
    h = np.zeros(n)
    for t in range(P, y.shape[0]):
        h = 0.97 * h + 0.15 * rng.standard_normal(n)
        eps = np.exp(h / 2) * (L @ rng.standard_normal(n))
        y[t] = sum(theta[:, :, k] @ y[t - k - 1] for k in range(P)) + 0.4 * eps
    y = y[WARMUP + P:]
    return (y - y.mean(axis=0)) / y.std(axis=0)


def quarters():
    (y, q), out = FIRST_QUARTER, []
    while (y, q) <= LAST_QUARTER:
        out.append((y, q))
        y, q = (y + 1, 1) if q == 4 else (y, q + 1)
    return out


def main():
    rng = np.random.default_rng(SEED)
    qs = quarters()
    z = simulate(len(qs), rng)
    OUT.mkdir(parents=True, exist_ok=True)
    for col, (sid, freq, code, mu, sd, start) in enumerate(SERIES):
        x = mu + sd * z[:, col]
        if code == "log_diff":
            level = start * np.exp(np.concatenate([[0.0], np.cumsum(x[1:])]))
        else:
            level = start + np.concatenate([[0.0], np.cumsum(x[1:])])
            level += max(0.0, 0.5 - level.min())    # rates stay positive
        lines = ["DATE,VALUE"]
        for (yr, q), v in zip(qs, level):
            if freq == "Q":
                lines.append(f"{dt.date(yr, 3 * q - 2, 1).isoformat()},{v:.3f}")
            else:
                # three months whose quarterly mean is the level, with a little intra-quarter noise
                wiggle = rng.normal(0.0, 0.1 * sd * abs(v) if code == "log_diff" else 0.1 * sd, 3)
                wiggle -= wiggle.mean()
                for m in range(3):
                    lines.append(f"{dt.date(yr, 3 * q - 2 + m, 1).isoformat()},{v + wiggle[m]:.4f}")
        (OUT / f"{sid}.csv").write_text("\n".join(lines) + "\n")
        print(f"wrote {OUT / (sid + '.csv')} ({len(lines) - 1} rows)")


if __name__ == "__main__":
    main()
