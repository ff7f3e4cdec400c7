"""Random control-matrix models built from per-column scalar multipliers."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import StackedControlMoments
from .errors import DomainError, ShapeError

KINDS = ("gamma", "beta", "gaussian", "deterministic", "mixture")


@dataclass(frozen=True)
class ScalarDistribution:
    """A scalar random multiplier.

    ``params`` holds the parameters in the order of the constructor helpers
    below.  ``mixture`` is an equal-weight Gaussian mixture and exists to
    build deliberately multimodal models.
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown distribution kind {self.kind!r}")
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        if self.kind == "gamma" and not (len(p) == 2 and p[0] > 0 and p[1] > 0):
            raise DomainError("gamma needs shape > 0 and scale > 0")
        if self.kind == "beta" and not (len(p) == 2 and p[0] > 0 and p[1] > 0):
            raise DomainError("beta needs a > 0 and b > 0")
        if self.kind == "gaussian" and not (len(p) == 2 and p[1] >= 0):
            raise DomainError("gaussian needs std >= 0")
        if self.kind == "deterministic" and len(p) != 1:
            raise DomainError("deterministic takes a single value")
        if self.kind == "mixture" and not (len(p) >= 2 and len(p) % 2 == 0 and all(s >= 0 for s in p[1::2])):
            raise DomainError("mixture takes (mean, std) pairs with std >= 0")
        if not all(math.isfinite(v) for v in p):
            raise DomainError("distribution parameters must be finite")

    @classmethod
    def gamma(cls, shape, scale):
        return cls("gamma", (shape, scale))

    @classmethod
    def beta(cls, a, b):
        return cls("beta", (a, b))

    @classmethod
    def gaussian(cls, mean, std):
        return cls("gaussian", (mean, std))

    @classmethod
    def deterministic(cls, value):
        return cls("deterministic", (value,))

    @classmethod
    def mixture(cls, components: Sequence[tuple[float, float]]):
        return cls("mixture", tuple(v for pair in components for v in pair))

    def mean(self) -> float:
        p = self.params
        if self.kind == "gamma":
            return p[0] * p[1]
        if self.kind == "beta":
            return p[0] / (p[0] + p[1])
        if self.kind == "gaussian":
            return p[0]
        if self.kind == "deterministic":
            return p[0]
        return float(np.mean(p[0::2]))

    def variance(self) -> float:
        p = self.params
        if self.kind == "gamma":
            return p[0] * p[1] ** 2
        if self.kind == "beta":
            a, b = p
            return a * b / ((a + b) ** 2 * (a + b + 1))
        if self.kind == "gaussian":
            return p[1] ** 2
        if self.kind == "deterministic":
            return 0.0
        means, stds = np.asarray(p[0::2]), np.asarray(p[1::2])
        return float(np.mean(stds**2 + means**2) - np.mean(means) ** 2)

    def sample(self, rng: np.random.Generator, size=None):
        p = self.params
        if self.kind == "gamma":
            return rng.gamma(p[0], p[1], size)
        if self.kind == "beta":
            return rng.beta(p[0], p[1], size)
        if self.kind == "gaussian":
            return rng.normal(p[0], p[1], size)
        if self.kind == "deterministic":
            return np.full(size, p[0]) if size is not None else p[0]
        means, stds = np.asarray(p[0::2]), np.asarray(p[1::2])
        idx = rng.integers(0, means.size, size)
        return rng.normal(means[idx], stds[idx])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalarDistribution":
        return cls(str(d["kind"]), tuple(d["params"]))


def is_strong_unimodal(dist: ScalarDistribution) -> bool:
    """Sufficient log-concavity test on the distribution family and parameters."""
    if dist.kind in ("gaussian", "deterministic"):
        return True
    if dist.kind == "gamma":
        return dist.params[0] >= 1
    if dist.kind == "beta":
        return dist.params[0] >= 1 and dist.params[1] >= 1
    return False


@dataclass(frozen=True)
class RandomControlMatrixSpec:
    """Control matrix ``B(k) = template(k)`` with column ``c`` scaled by a random multiplier.

    ``multipliers[k][c]`` is the distribution for column ``c`` at step ``k``
    (``None`` means deterministic).  The multiplier only touches the rows where
    ``row_masks[c]`` is true.  All multipliers are mutually independent.
    """

    templates: np.ndarray
    multipliers: tuple[tuple[ScalarDistribution | None, ...], ...]
    row_masks: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.templates, dtype=float)
        if T.ndim != 3:
            raise ShapeError("templates must have shape (N, n, m)")
        N, n, m = T.shape
        masks = np.asarray(self.row_masks, dtype=bool)
        if masks.shape != (m, n):
            raise ShapeError(f"row_masks must have shape {(m, n)}, got {masks.shape}")
        mult = tuple(tuple(col) for col in self.multipliers)
        if len(mult) != N or any(len(col) != m for col in mult):
            raise ShapeError(f"multipliers must be {N} steps x {m} columns")
        object.__setattr__(self, "templates", T)
        object.__setattr__(self, "row_masks", masks)
        object.__setattr__(self, "multipliers", mult)

    @classmethod
    def column_model(cls, template, dist: ScalarDistribution | None, horizon: int, row_mask=None):
        """Same template and multiplier law for every step and column."""
        B = np.asarray(template, dtype=float)
        n, m = B.shape
        if row_mask is None:
            row_mask = np.ones(n, dtype=bool)
        row_mask = np.asarray(row_mask, dtype=bool)
        masks = np.tile(row_mask, (m, 1)) if row_mask.ndim == 1 else row_mask
        return cls(
            templates=np.broadcast_to(B, (horizon, n, m)).copy(),
            multipliers=tuple((dist,) * m for _ in range(horizon)),
            row_masks=masks,
        )

    @property
    def horizon(self) -> int:
        return self.templates.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.templates.shape[1:]

    def with_multiplier(self, k: int, c: int, dist: ScalarDistribution | None) -> "RandomControlMatrixSpec":
        mult = [list(col) for col in self.multipliers]
        mult[k][c] = dist
        return RandomControlMatrixSpec(self.templates, tuple(tuple(col) for col in mult), self.row_masks)

    def distributions(self):
        return {d for col in self.multipliers for d in col if d is not None}


def _check_k(spec: RandomControlMatrixSpec, k: int) -> int:
    if not 0 <= int(k) < spec.horizon:
        raise DomainError(f"control step {k} outside 0..{spec.horizon - 1}")
    return int(k)


def moments(spec: RandomControlMatrixSpec, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean of ``B(k)`` and covariance of its column-stacked entries."""
    k = _check_k(spec, k)
    T = spec.templates[k]
    n, m = T.shape
    mean = T.copy()
    cov = np.zeros((n * m, n * m))
    for c, dist in enumerate(spec.multipliers[k]):
        if dist is None:
            continue
        mask = spec.row_masks[c]
        mean[mask, c] = T[mask, c] * dist.mean()
        v = np.where(mask, T[:, c], 0.0)
        cov[c * n:(c + 1) * n, c * n:(c + 1) * n] = dist.variance() * np.outer(v, v)
    return mean, cov


def stacked_moments(spec: RandomControlMatrixSpec) -> StackedControlMoments:
    pairs = [moments(spec, k) for k in range(spec.horizon)]
    return StackedControlMoments(
        per_step_mean=np.stack([p[0] for p in pairs]),
        per_step_vec_covariance=np.stack([p[1] for p in pairs]),
    )


def sample(spec: RandomControlMatrixSpec, k: int, rng: np.random.Generator) -> np.ndarray:
    k = _check_k(spec, k)
    B = spec.templates[k].copy()
    for c, dist in enumerate(spec.multipliers[k]):
        if dist is None:
            continue
        mask = spec.row_masks[c]
        B[mask, c] *= dist.sample(rng)
    return B


def sample_all(spec: RandomControlMatrixSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent realizations of every ``B(k)``, shape ``(size, N, n, m)``."""
    out = np.broadcast_to(spec.templates, (size,) + spec.templates.shape).copy()
    for k in range(spec.horizon):
        for c, dist in enumerate(spec.multipliers[k]):
            if dist is None or dist.kind == "deterministic" and dist.params[0] == 1.0:
                continue
            mask = spec.row_masks[c]
            out[:, k, mask, c] *= np.asarray(dist.sample(rng, size))[:, None]
    return out


class Unimodality(str, enum.Enum):
    UNIMODAL = "unimodal"
    NOT_UNIMODAL = "not_unimodal"
    INCONCLUSIVE = "inconclusive"


MIN_UNIMODALITY_SAMPLES = 10_000


def empirical_unimodality_check(samples, tolerance: float | None = None) -> Unimodality:
    """Decide unimodality from the shape of the empirical CDF.

    The ECDF is evaluated on ``ceil(sqrt(n))`` equal bins over the sample range,
    padded by zero mass on both sides.  Second differences taken at a lag of
    ``bins // 16`` act as the smoothing step.  Differences with magnitude below
    ``tolerance`` (default ``3 / sqrt(n)``) are ignored and sign runs shorter
    than half the lag are discarded as noise.  A single convex-to-concave switch
    means unimodal; any concave-to-convex switch between robust runs means not.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < MIN_UNIMODALITY_SAMPLES:
        raise DomainError(f"need at least {MIN_UNIMODALITY_SAMPLES} samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise DomainError("samples must be finite")
    if tolerance is None:
        tolerance = 3.0 / math.sqrt(n)
    lo, hi = x[0], x[-1]
    if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
        # a point mass is unimodal
        return Unimodality.UNIMODAL
    bins = math.ceil(math.sqrt(n))
    lag = max(1, bins // 16)
    width = (hi - lo) / bins
    edges = lo + width * np.arange(-2 * lag, bins + 2 * lag + 1)
    F = np.searchsorted(x, edges, side="right") / n
    d2 = F[2 * lag:] - 2 * F[lag:-lag] + F[:-2 * lag]
    signs = np.where(d2 > tolerance, 1, np.where(d2 < -tolerance, -1, 0))

    min_run = max(2, lag // 2)
    runs = []
    i = 0
    while i < signs.size:
        j = i
        while j < signs.size and signs[j] == signs[i]:
            j += 1
        if signs[i] != 0 and j - i >= min_run:
            if not runs or runs[-1] != signs[i]:
                runs.append(int(signs[i]))
        i = j
    if runs == [1, -1]:
        return Unimodality.UNIMODAL
    if any(a == -1 and b == 1 for a, b in zip(runs, runs[1:])):
        return Unimodality.NOT_UNIMODAL
    return Unimodality.INCONCLUSIVE
