"""Monte Carlo assessment of a candidate open-loop control sequence."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dynamics import simulate
from .errors import DomainError
from .problem import ChanceProblem
from .uncertainty import Unimodality, empirical_unimodality_check, sample_all

CHUNK = 10_000
THREADS_ENV = "RANDCTL_THREADS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class ValidationReport:
    n_samples: int
    seed: int
    joint_satisfaction: float
    joint_satisfied_count: int
    per_row_violation: np.ndarray
    row_index: list[tuple[int, int]]
    analytic_mean: np.ndarray
    sample_mean: np.ndarray
    analytic_std: np.ndarray
    sample_std: np.ndarray
    mean_abs_error: np.ndarray
    std_rel_error: np.ndarray
    unimodality: list[str] = field(default_factory=list)

    def satisfaction_interval(self, level: float = 0.99) -> tuple[float, float]:
        return binomial_interval(self.joint_satisfied_count, self.n_samples, level)

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "seed": self.seed,
            "joint_satisfaction": self.joint_satisfaction,
            "joint_satisfied_count": self.joint_satisfied_count,
            "satisfaction_ci99": list(self.satisfaction_interval()),
            "rows": [
                {
                    "step": k,
                    "row": i,
                    "violation": float(self.per_row_violation[r]),
                    "analytic_mean": float(self.analytic_mean[r]),
                    "sample_mean": float(self.sample_mean[r]),
                    "analytic_std": float(self.analytic_std[r]),
                    "sample_std": float(self.sample_std[r]),
                    "mean_abs_error": float(self.mean_abs_error[r]),
                    "std_rel_error": float(self.std_rel_error[r]),
                    **({"unimodality": self.unimodality[r]} if self.unimodality else {}),
                }
                for r, (k, i) in enumerate(self.row_index)
            ],
        }


def binomial_interval(successes: int, n: int, level: float = 0.99) -> tuple[float, float]:
    """Normal-approximation interval for a proportion, clipped to [0, 1]."""
    p = successes / n
    z = stats.norm.ppf(0.5 + level / 2)
    half = z * math.sqrt(max(p * (1 - p), 0.0) / n)
    return max(0.0, p - half), min(1.0, p + half)


def _chunk_sizes(n_samples: int) -> list[int]:
    sizes = [CHUNK] * (n_samples // CHUNK)
    if n_samples % CHUNK:
        sizes.append(n_samples % CHUNK)
    return sizes


def _sample_std(values: np.ndarray) -> np.ndarray:
    # constant columns give exactly zero rather than rounding noise
    return np.where(np.ptp(values, axis=0) == 0, 0.0, values.std(axis=0, ddof=1))


def sample_row_values(problem: ChanceProblem, U, n_samples: int, seed: int, workers: int | None = None) -> np.ndarray:
    """Realized ``G_ki x(k)`` for every row, shape ``(n_samples, M)``.

    Samples are drawn in fixed-size chunks, each from its own stream spawned
    from ``seed``, so the result does not depend on ``workers``.
    """
    steps, G, _ = problem.polytopes.stacked()
    sizes = _chunk_sizes(n_samples)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(i):
        rng = np.random.default_rng(streams[i])
        Bs = sample_all(problem.uncertainty, rng, sizes[i])
        X = simulate(problem.system, Bs, U)
        return np.einsum("rn,srn->sr", G, X[:, steps - 1, :])

    workers = workers or default_workers()
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    return np.concatenate(parts, axis=0)


def monte_carlo_validate(
    problem: ChanceProblem,
    U,
    n_samples: int = 100_000,
    seed: int = 0,
    workers: int | None = None,
    check_unimodality: bool = False,
) -> ValidationReport:
    if n_samples < 1000:
        raise DomainError("monte_carlo_validate needs at least 1000 samples")
    values = sample_row_values(problem, U, n_samples, seed, workers)
    h = problem.bounds
    # ties count as satisfied
    violated = values > h
    ok = ~violated.any(axis=1)
    count = int(ok.sum())
    a_mean, a_std = problem.row_means(U), problem.row_stds(U)
    s_mean, s_std = values.mean(axis=0), _sample_std(values)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(a_std > 0, np.abs(s_std - a_std) / a_std, np.abs(s_std - a_std))
    verdicts = []
    if check_unimodality:
        verdicts = [empirical_unimodality_check(values[:, r]).value for r in range(values.shape[1])]
    return ValidationReport(
        n_samples=n_samples,
        seed=seed,
        joint_satisfaction=count / n_samples,
        joint_satisfied_count=count,
        per_row_violation=violated.mean(axis=0),
        row_index=problem.polytopes.row_index,
        analytic_mean=a_mean,
        sample_mean=s_mean,
        analytic_std=a_std,
        sample_std=s_std,
        mean_abs_error=np.abs(s_mean - a_mean),
        std_rel_error=rel,
        unimodality=verdicts,
    )


@dataclass(frozen=True)
class RowMoments:
    step: int
    row: int
    analytic_mean: float
    sample_mean: float
    analytic_std: float
    sample_std: float
    mean_se: float
    std_se: float
    flagged: bool


def moment_crosscheck(problem: ChanceProblem, U, n_samples: int = 100_000, seed: int = 0, n_se: float = 4.0, workers: int | None = None) -> list[RowMoments]:
    """Analytic vs sample moments per row; rows off by more than ``n_se`` standard errors are flagged."""
    if n_samples < 10_000:
        raise DomainError("moment_crosscheck needs at least 10^4 samples")
    values = sample_row_values(problem, U, n_samples, seed, workers)
    return compare_moments(values, problem.row_means(U), problem.row_stds(U), problem.polytopes.row_index, n_se)


def compare_moments(values, analytic_mean, analytic_std, row_index, n_se: float = 4.0) -> list[RowMoments]:
    n = values.shape[0]
    s_mean = values.mean(axis=0)
    s_std = _sample_std(values)
    centered = values - s_mean
    m4 = np.mean(centered**4, axis=0)
    out = []
    for r, (k, i) in enumerate(row_index):
        mean_se = s_std[r] / math.sqrt(n)
        if s_std[r] > 0:
            # delta method with the sample kurtosis
            kurt = m4[r] / s_std[r] ** 4
            std_se = s_std[r] * math.sqrt(max(kurt - 1.0, 0.0) / (4.0 * n))
        else:
            std_se = 0.0
        scale = max(1.0, abs(analytic_mean[r]))
        floor = 1e-9 * scale
        flagged = (
            abs(s_mean[r] - analytic_mean[r]) > n_se * mean_se + floor
            or abs(s_std[r] - analytic_std[r]) > n_se * std_se + floor
        )
        out.append(RowMoments(k, i, float(analytic_mean[r]), float(s_mean[r]), float(analytic_std[r]), float(s_std[r]), mean_se, std_se, flagged))
    return out


def unimodality_verdicts(problem: ChanceProblem, U, n_samples: int = 100_000, seed: int = 0) -> list[Unimodality]:
    values = sample_row_values(problem, U, n_samples, seed)
    return [empirical_unimodality_check(values[:, r]) for r in range(values.shape[1])]
