import numpy as np
import pytest

from odlglm.batch import Batch
from odlglm.prox import ProxConfig

# fast settings for small well-conditioned test problems
FAST = ProxConfig(learning_rate=0.2, stop_tol=1e-12, max_iter=200_000)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def logistic_batch(rng, n, p, beta=None):
    X = rng.standard_normal((n, p))
    beta = np.zeros(p) if beta is None else beta
    y = (rng.random(n) < 1 / (1 + np.exp(-X @ beta))).astype(float)
    return Batch(X, y)


def gaussian_batch(rng, n, p, beta=None, noise=1.0):
    X = rng.standard_normal((n, p))
    beta = np.zeros(p) if beta is None else beta
    return Batch(X, X @ beta + noise * rng.standard_normal(n))


def cd_lasso(X, y, lam, scale=2.0, sweeps=50_000, tol=1e-15):
    """Cyclic coordinate descent for ``||y - X b||^2 / (scale * n) + lam ||b||_1``."""
    n, p = X.shape
    b = np.zeros(p)
    r = np.array(y, dtype=float)
    col = 2 * (X ** 2).sum(0) / (scale * n)
    for _ in range(sweeps):
        delta = 0.0
        for k in range(p):
            rho = 2 * X[:, k] @ r / (scale * n) + col[k] * b[k]
            new = np.sign(rho) * max(abs(rho) - lam, 0) / col[k]
            r -= X[:, k] * (new - b[k])
            delta = max(delta, abs(new - b[k]))
            b[k] = new
        if delta < tol:
            break
    return b


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list = []


def record_criterion(label: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
