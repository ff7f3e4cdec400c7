"""Polytopic target sets, risk allocation and the concentration-inequality maps.

A half-space chance constraint ``P(g . x(k) > h) <= omega`` is enforced through
the deterministic surrogate ``mean + lam * std <= h``.  The one-sided
Vysochanskij-Petunin bound (unimodal values, ``lam > sqrt(5/3)``) gives
``omega = 4 / (9 (lam^2 + 1))``; Cantelli's bound (any distribution) gives
``omega = 1 / (1 + lam^2)``.  Boole's inequality then splits the joint budget
``alpha`` across rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import DomainError, ShapeError

VP_LAMBDA_FLOOR = math.sqrt(5.0 / 3.0)
METHODS = ("vp", "cantelli")


def vp_risk(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= VP_LAMBDA_FLOOR):
        raise DomainError(f"one-sided VP bound requires lambda > sqrt(5/3), got {lam.min() if lam.ndim else lam}")
    out = 4.0 / (9.0 * (lam**2 + 1.0))
    return float(out) if out.ndim == 0 else out


def cantelli_risk(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("Cantelli bound requires lambda > 0")
    out = 1.0 / (1.0 + lam**2)
    return float(out) if out.ndim == 0 else out


def risk(lam, method: str):
    if method == "vp":
        return vp_risk(lam)
    if method == "cantelli":
        return cantelli_risk(lam)
    raise DomainError(f"unknown method {method!r}")


def lambda_floor(method: str) -> float:
    if method == "vp":
        return VP_LAMBDA_FLOOR
    if method == "cantelli":
        return 0.0
    raise DomainError(f"unknown method {method!r}")


def risk_to_lambda(omega, method: str):
    """Inverse of :func:`risk`."""
    w = np.asarray(omega, dtype=float)
    if method == "vp":
        if np.any((w <= 0) | (w >= 1.0 / 6.0)):
            raise DomainError("VP risk must lie in (0, 1/6)")
        out = np.sqrt(4.0 / (9.0 * w) - 1.0)
    elif method == "cantelli":
        if np.any((w <= 0) | (w >= 1.0)):
            raise DomainError("Cantelli risk must lie in (0, 1)")
        out = np.sqrt(1.0 / w - 1.0)
    else:
        raise DomainError(f"unknown method {method!r}")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PolytopeSequence:
    """Target sets ``{x : G_k x <= h_k}`` for ``k = 1..N``.

    Rows are addressed by a flat id in step-major order; ``row_index`` maps the
    flat id back to ``(k, i)``.
    """

    G: tuple[np.ndarray, ...]
    h: tuple[np.ndarray, ...]

    def __post_init__(self):
        G = tuple(np.atleast_2d(np.asarray(g, dtype=float)) for g in self.G)
        h = tuple(np.asarray(v, dtype=float).ravel() for v in self.h)
        if len(G) != len(h) or not G:
            raise ShapeError("need one (G_k, h_k) pair per step")
        n = G[0].shape[1]
        for k, (g, v) in enumerate(zip(G, h), start=1):
            if g.shape[1] != n:
                raise ShapeError(f"G_{k} has {g.shape[1]} columns, expected {n}")
            if g.shape[0] != v.size:
                raise ShapeError(f"G_{k} has {g.shape[0]} rows but h_{k} has {v.size} entries")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)

    @property
    def horizon(self) -> int:
        return len(self.G)

    @property
    def state_dim(self) -> int:
        return self.G[0].shape[1]

    @property
    def row_counts(self) -> list[int]:
        return [g.shape[0] for g in self.G]

    @property
    def total_rows(self) -> int:
        return sum(self.row_counts)

    @property
    def row_index(self) -> list[tuple[int, int]]:
        return [(k, i) for k, q in enumerate(self.row_counts, start=1) for i in range(q)]

    def row(self, flat: int) -> tuple[int, np.ndarray, float]:
        k, i = self.row_index[flat]
        return k, self.G[k - 1][i], float(self.h[k - 1][i])

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All rows as ``(steps, G_rows, h)`` arrays."""
        steps = np.array([k for k, _ in self.row_index])
        return steps, np.vstack(self.G), np.concatenate(self.h)

    def is_nonempty(self, k: int) -> bool:
        g, v = self.G[k - 1], self.h[k - 1]
        res = linprog(np.zeros(g.shape[1]), A_ub=g, b_ub=v, bounds=[(None, None)] * g.shape[1], method="highs")
        return res.status == 0

    def check_nonempty(self) -> None:
        for k in range(1, self.horizon + 1):
            if not self.is_nonempty(k):
                raise DomainError(f"target set at step {k} is empty")


@dataclass(frozen=True)
class RiskAllocation:
    """Per-row multipliers ``lambda`` (flat row order) under a joint budget ``alpha``."""

    lambdas: np.ndarray
    alpha: float
    method: str

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float).ravel()
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if np.any(lam <= lambda_floor(self.method)):
            raise DomainError(f"all lambdas must exceed {lambda_floor(self.method):.6f} for {self.method}")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def risks(self) -> np.ndarray:
        return np.atleast_1d(risk(self.lambdas, self.method))

    def within_budget(self, rtol: float = 1e-12) -> bool:
        return total_risk(self) <= self.alpha * (1 + rtol)


def total_risk(alloc: RiskAllocation) -> float:
    return float(np.sum(alloc.risks))


def check_alpha(alpha: float, method: str) -> None:
    upper = 1.0 / 6.0 if method == "vp" else 1.0
    if not 0 < alpha < upper:
        raise DomainError(f"alpha must lie in (0, {upper:.6g}) for {method}, got {alpha}")


def uniform_allocation(polytopes: PolytopeSequence, alpha: float, method: str) -> RiskAllocation:
    check_alpha(alpha, method)
    M = polytopes.total_rows
    lam = risk_to_lambda(alpha / M, method)
    return RiskAllocation(np.full(M, lam), alpha, method)


@dataclass(frozen=True)
class ConeConstraint:
    """``a @ U + b + scale * ||norm_map @ U|| <= bound`` for one half-space row."""

    step: int
    row: int
    affine: np.ndarray
    offset: float
    scale: float
    norm_map: np.ndarray
    bound: float

    def mean(self, U) -> float:
        return float(self.affine @ np.ravel(U) + self.offset)

    def std(self, U) -> float:
        return float(np.linalg.norm(self.norm_map @ np.ravel(U)))

    def lhs(self, U) -> float:
        return self.mean(U) + self.scale * self.std(U)

    def slack(self, U) -> float:
        return self.bound - self.lhs(U)

    def is_satisfied(self, U, tol: float = 0.0) -> bool:
        return self.slack(U) >= -tol


def build_cone_row(k: int, i: int, lam: float, gradient_data, bound: float) -> ConeConstraint:
    a, b, M = gradient_data
    a = np.asarray(a, dtype=float)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != a.size:
        raise ShapeError("norm map and affine part disagree on the number of inputs")
    return ConeConstraint(int(k), int(i), a, float(b), float(lam), M, float(bound))


def build_cone_rows(polytopes: PolytopeSequence, allocation: RiskAllocation, gradient_data: Sequence) -> list[ConeConstraint]:
    """One cone row per flat constraint row; ``gradient_data`` is in flat order."""
    if len(gradient_data) != polytopes.total_rows or allocation.lambdas.size != polytopes.total_rows:
        raise ShapeError("allocation / gradient data do not match the number of rows")
    rows = []
    for flat, (k, i) in enumerate(polytopes.row_index):
        rows.append(build_cone_row(k, i, allocation.lambdas[flat], gradient_data[flat], float(polytopes.h[k - 1][i])))
    return rows
