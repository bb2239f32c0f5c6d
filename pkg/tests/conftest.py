import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE: list[str] = []


def random_discrete(rng: np.random.Generator, m: int) -> np.ndarray:
    """Irreducible aperiodic stochastic matrix with a random sparsity pattern.

    A random cyclic permutation guarantees irreducibility and a positive
    diagonal entry guarantees aperiodicity.
    """
    density = rng.uniform(0.05, 1.0)
    w = rng.random((m, m)) * (rng.random((m, m)) < density)
    w *= np.exp(rng.normal(0.0, 1.0, (m, m)))
    perm = rng.permutation(m)
    w[perm, np.roll(perm, 1)] += rng.uniform(0.1, 1.0, m)
    w[0, 0] += rng.uniform(0.1, 1.0)
    return w / w.sum(axis=1, keepdims=True)


def random_generator(rng: np.random.Generator, m: int) -> np.ndarray:
    """Irreducible generator; rates log-normal around one."""
    density = rng.uniform(0.05, 1.0)
    w = (rng.random((m, m)) < density) * np.exp(rng.normal(0.0, 1.0, (m, m)))
    perm = rng.permutation(m)
    w[perm, np.roll(perm, 1)] += rng.uniform(0.1, 1.0, m)
    np.fill_diagonal(w, 0.0)
    np.fill_diagonal(w, -w.sum(axis=1))
    return w


def corpus(kind: str, n: int = 200, seed: int = 20240601):
    """``n`` random chains with sizes spread over ``2..100``."""
    rng = np.random.default_rng(seed)
    sizes = np.concatenate([np.arange(2, 101), rng.integers(2, 101, n)])[:n]
    make = random_discrete if kind == "dtmc" else random_generator
    return [make(rng, int(m)) for m in sizes]


def power_sum_oracle(p: float, n: int = 10**6) -> tuple[float, float]:
    """``sum_{j>=1} j**-p`` as partial sum plus the midpoint of the integral tail bounds.

    Returns the estimate and the half-width of the enclosure.
    """
    partial = math.fsum(np.arange(1, n + 1, dtype=np.float64) ** -p)
    lo = (n + 1.0) ** (1 - p) / (p - 1)
    hi = float(n) ** (1 - p) / (p - 1)
    return partial + 0.5 * (lo + hi), 0.5 * (hi - lo)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line; all lines are printed in the summary."""

    def record(number: int, ok: bool, detail: str) -> None:
        _ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
