"""Desk-scale experiment runner.

Each experiment produces one row per (configuration, trial). Everything but
the ``seconds`` columns is a function of the seed: trial ``t`` of
configuration ``c`` draws its attributes and graph from the stream derived
from ``(seed, c, t)``.
"""

from __future__ import annotations

import csv
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ResourceGuardError
from .kronecker import PRESETS
from .magm import MagmModel, expected_magm_edges, naive_magm_sample, quilt_sample, sample_attributes
from .rng import derived_generator
from .speedup import fast_magm_sample
from .stats import largest_scc_fraction

EXPERIMENTS = ("edges-vs-n", "scc-vs-n", "runtime-vs-n", "per-edge-time", "mu-sweep", "rho-max", "d-sweep")
DEFAULT_MUS = tuple(round(0.1 * k, 1) for k in range(1, 10))

_FIELDS = {
    "edges-vs-n": ("experiment", "theta", "sampler", "n", "d", "mu", "trial", "edges", "seconds"),
    "scc-vs-n": ("experiment", "theta", "sampler", "n", "d", "mu", "trial", "edges", "scc_fraction", "seconds"),
    "runtime-vs-n": ("experiment", "theta", "sampler", "n", "d", "mu", "trial", "edges", "seconds"),
    "per-edge-time": ("experiment", "theta", "sampler", "n", "d", "mu", "trial", "edges", "seconds", "seconds_per_edge"),
    "mu-sweep": ("experiment", "theta", "sampler", "n", "d", "mu", "trial", "edges", "seconds"),
    "rho-max": ("experiment", "theta", "sampler", "n", "d", "mu", "trial", "edges", "seconds"),
    "d-sweep": ("experiment", "theta", "sampler", "n", "d", "mu", "trial", "edges", "seconds"),
}
TIMING_FIELDS = ("seconds", "seconds_per_edge")


@dataclass(frozen=True)
class ExperimentSpec:
    """Describes one experiment.

    ``log2_n`` lists graph sizes. ``d-sweep`` uses ``n = 2**log2_n[0]`` and
    the dimensions in ``ds``; ``mu-sweep`` uses ``log2_n[0]`` and ``mus``;
    ``rho-max`` crosses every size with every ``mus`` value. ``sampler`` is
    ``quilt`` or ``fast`` (default: ``fast`` for the two mu experiments,
    ``quilt`` otherwise); ``runtime-vs-n`` always adds naive rows for sizes
    up to ``2**naive_max_log2_n``.
    """

    name: str
    theta: str = "theta1"
    mu: float = 0.5
    log2_n: tuple[int, ...] = tuple(range(8, 15))
    ds: tuple[int, ...] = ()
    mus: tuple[float, ...] = DEFAULT_MUS
    trials: int = 10
    seed: int = 0
    sampler: str | None = None
    naive_max_log2_n: int = 14
    max_log2_n: int = 16
    edge_budget: float = 1e8
    parallel_trials: int = 1

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.name!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.theta not in PRESETS:
            raise ValueError(f"unknown theta preset {self.theta!r}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.log2_n:
            raise ValueError("need at least one graph size")
        if self.name == "d-sweep" and not self.ds:
            raise ValueError("d-sweep needs ds")
        if self.resolved_sampler not in ("quilt", "fast"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.parallel_trials > 1 and self.name not in ("edges-vs-n", "scc-vs-n"):
            raise ValueError("parallel trials are only allowed for experiments without timing")

    @property
    def resolved_sampler(self) -> str:
        if self.sampler is not None:
            return self.sampler
        return "fast" if self.name in ("mu-sweep", "rho-max") else "quilt"

    @property
    def fields(self) -> tuple[str, ...]:
        return _FIELDS[self.name]

    def configurations(self) -> list[tuple[int, int, float]]:
        """``(n, d, mu)`` per configuration, in run order."""
        if self.name == "d-sweep":
            n = 2 ** self.log2_n[0]
            return [(n, d, self.mu) for d in self.ds]
        if self.name == "mu-sweep":
            return [(2 ** self.log2_n[0], self.log2_n[0], mu) for mu in self.mus]
        if self.name == "rho-max":
            return [(2**k, k, mu) for k in self.log2_n for mu in self.mus]
        return [(2**k, k, self.mu) for k in self.log2_n]


def _check_budget(spec: ExperimentSpec, model: MagmModel) -> None:
    if model.n > 2**spec.max_log2_n:
        raise ResourceGuardError(f"n={model.n} exceeds the cap 2**{spec.max_log2_n}")
    expected = expected_magm_edges(model)
    if expected > spec.edge_budget:
        raise ResourceGuardError(
            f"n={model.n}, d={model.d}, mu={model.mus[0]}: {expected:.3g} expected edges exceed budget {spec.edge_budget:.3g}"
        )


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def _trial(spec: ExperimentSpec, config_index: int, n: int, d: int, mu: float, trial: int) -> list[dict]:
    theta = PRESETS[spec.theta]
    model = MagmModel.uniform(theta, mu, n, d)
    rng = derived_generator(spec.seed, config_index, trial)
    attrs = sample_attributes(model, rng)
    graph_rng = derived_generator(spec.seed, config_index, trial, 1)
    sampler = spec.resolved_sampler
    base = {"experiment": spec.name, "theta": spec.theta, "n": n, "d": d, "mu": mu, "trial": trial}
    if sampler == "fast":
        graph, seconds = _timed(lambda: fast_magm_sample(model, attrs, graph_rng))
    else:
        graph, seconds = _timed(lambda: quilt_sample(model, attrs, graph_rng))
    row = dict(base, sampler=sampler, edges=len(graph), seconds=seconds)
    if spec.name == "scc-vs-n":
        row["scc_fraction"] = largest_scc_fraction(graph)
    if spec.name == "per-edge-time":
        row["seconds_per_edge"] = seconds / max(len(graph), 1)
    rows = [row]
    if spec.name == "runtime-vs-n" and n <= 2**spec.naive_max_log2_n:
        naive_rng = derived_generator(spec.seed, config_index, trial, 2)
        graph, seconds = _timed(lambda: naive_magm_sample(model, attrs, naive_rng, max_nodes=2**spec.naive_max_log2_n))
        rows.append(dict(base, sampler="naive", edges=len(graph), seconds=seconds))
    return rows


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Run every configuration and trial serially (or trial-parallel when
    ``parallel_trials > 1`` for the untimed experiments)."""
    theta = PRESETS[spec.theta]
    configs = spec.configurations()
    for n, d, mu in configs:
        _check_budget(spec, MagmModel.uniform(theta, mu, n, d))
    jobs = [(c, n, d, mu, t) for c, (n, d, mu) in enumerate(configs) for t in range(spec.trials)]
    if spec.parallel_trials > 1:
        with ThreadPoolExecutor(max_workers=spec.parallel_trials) as pool:
            chunks = list(pool.map(lambda job: _trial(spec, *job), jobs))
    else:
        chunks = [_trial(spec, *job) for job in jobs]
    return [row for chunk in chunks for row in chunk]


def write_rows(rows: list[dict], fields, dest) -> None:
    writer = csv.DictWriter(dest, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in row.items()})


def median_seconds(rows, **match) -> float:
    """Median ``seconds`` over rows whose columns equal ``match``."""
    times = [r["seconds"] for r in rows if all(r.get(k) == v for k, v in match.items())]
    if not times:
        raise KeyError(f"no rows match {match}")
    return statistics.median(times)


def _clock_resolution() -> float:
    return time.get_clock_info("perf_counter").resolution


def rho_table(rows: list[dict], baseline_mu: float = 0.5) -> dict[int, dict[float, float]]:
    """``{n: {mu: median T(mu) / median T(baseline)}}`` from sweep rows."""
    out: dict[int, dict[float, float]] = {}
    for n in sorted({r["n"] for r in rows}):
        base = median_seconds(rows, n=n, mu=baseline_mu)
        if base <= _clock_resolution():
            raise ZeroDivisionError(f"baseline time {base:g}s at n={n} is below clock resolution")
        mus = sorted({r["mu"] for r in rows if r["n"] == n})
        out[n] = {mu: median_seconds(rows, n=n, mu=mu) / base for mu in mus}
    return out


def rho_max(rows: list[dict], baseline_mu: float = 0.5) -> dict[int, tuple[float, float]]:
    """``{n: (rho_max, argmax mu)}``."""
    out = {}
    for n, ratios in rho_table(rows, baseline_mu).items():
        mu = max(ratios, key=ratios.get)
        out[n] = (ratios[mu], mu)
    return out


def relative_runtime(mu: float, spec: ExperimentSpec, baseline_mu: float = 0.5) -> float:
    """``median T(mu) / median T(baseline_mu)`` under ``spec`` at its first size."""
    sweep = replace(spec, name="mu-sweep", mus=tuple(dict.fromkeys((baseline_mu, mu))))
    rows = run_experiment(sweep)
    return rho_table(rows, baseline_mu)[2 ** spec.log2_n[0]][mu]


def loglog_fit(xs, ys) -> tuple[float, float, float]:
    """Least-squares ``log y = c log x + b``; returns ``(c, b, r_squared)``."""
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    c, b = np.polyfit(lx, ly, 1)
    resid = ly - (c * lx + b)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(c), float(b), r2
