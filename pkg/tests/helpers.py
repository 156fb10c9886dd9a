"""Statistical oracles shared by the test modules."""

from __future__ import annotations

import numpy as np
from scipy import stats


def cell_counts(sampler, n: int, samples: int) -> np.ndarray:
    """Sum of adjacency matrices over ``samples`` calls of ``sampler()``."""
    counts = np.zeros(n * n, dtype=np.int64)
    for _ in range(samples):
        g = sampler()
        counts += np.bincount((g.sources - 1) * n + (g.targets - 1), minlength=n * n)
    return counts.reshape(n, n)


def binomial_pvalues(counts, samples: int, probs) -> np.ndarray:
    """Two-sided 1-df chi-square p-values of cell counts against known
    probabilities. Degenerate cells get 1 when they match exactly, else 0."""
    counts = np.asarray(counts, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    out = np.ones(counts.size)
    var = samples * probs * (1 - probs)
    live = var > 0
    z2 = (counts[live] - samples * probs[live]) ** 2 / var[live]
    out[live] = stats.chi2.sf(z2, 1)
    dead = ~live
    out[dead] = np.where(counts[dead] == samples * probs[dead], 1.0, 0.0)
    return out


def two_sample_pvalues(a, b, samples_a: int, samples_b: int) -> np.ndarray:
    """Per-cell p-values of a 2x2 chi-square (pooled proportions) comparing two
    empirical frequency tables."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    pooled = (a + b) / (samples_a + samples_b)
    var = pooled * (1 - pooled) * (1 / samples_a + 1 / samples_b)
    out = np.ones(a.size)
    live = var > 0
    z2 = (a[live] / samples_a - b[live] / samples_b) ** 2 / var[live]
    out[live] = stats.chi2.sf(z2, 1)
    return out


def bonferroni_ok(pvalues, alpha: float = 0.01) -> bool:
    p = np.asarray(pvalues)
    return bool(p.min() >= alpha / p.size)


# One line per acceptance criterion, echoed in the pytest terminal summary.
ACCEPTANCE_LINES: list[str] = []


def report(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return ok
