"""The full open-loop chance-constrained control problem."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .constraints import METHODS, PolytopeSequence, check_alpha
from .dynamics import LinearSystem, StackedControlMoments, constraint_gradient_data
from .errors import DomainError, ShapeError
from .uncertainty import RandomControlMatrixSpec, stacked_moments


@dataclass(frozen=True)
class ChanceProblem:
    """Minimize ``U^T U`` over a box subject to a joint chance constraint.

    ``input_lower`` / ``input_upper`` are per-input bounds of the admissible
    set and apply at every step.
    """

    system: LinearSystem
    uncertainty: RandomControlMatrixSpec
    polytopes: PolytopeSequence
    alpha: float
    input_lower: np.ndarray
    input_upper: np.ndarray
    method: str = "vp"
    name: str = "custom"
    seed: int = 0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        s, u, p = self.system, self.uncertainty, self.polytopes
        if u.horizon != s.horizon or p.horizon != s.horizon:
            raise ShapeError("system, uncertainty and polytopes disagree on the horizon")
        if u.shape != (s.state_dim, s.input_dim):
            raise ShapeError(f"control matrices are {u.shape}, expected {(s.state_dim, s.input_dim)}")
        if p.state_dim != s.state_dim:
            raise ShapeError("polytope rows do not match the state dimension")
        lo = np.broadcast_to(np.asarray(self.input_lower, dtype=float), (s.input_dim,)).copy()
        hi = np.broadcast_to(np.asarray(self.input_upper, dtype=float), (s.input_dim,)).copy()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo <= hi)):
            raise DomainError("input bounds must be finite with lower <= upper")
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        check_alpha(self.alpha, "cantelli")
        object.__setattr__(self, "input_lower", lo)
        object.__setattr__(self, "input_upper", hi)
        object.__setattr__(self, "alpha", float(self.alpha))

    def with_(self, **changes) -> "ChanceProblem":
        return replace(self, **changes)

    @property
    def n_inputs(self) -> int:
        return self.system.horizon * self.system.input_dim

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        N = self.system.horizon
        return np.tile(self.input_lower, N), np.tile(self.input_upper, N)

    @cached_property
    def moments(self) -> StackedControlMoments:
        return stacked_moments(self.uncertainty)

    @cached_property
    def gradient_data(self) -> list:
        """``(a, b, M)`` per flat constraint row."""
        out = []
        for flat in range(self.polytopes.total_rows):
            k, g, _ = self.polytopes.row(flat)
            out.append(constraint_gradient_data(self.system, self.moments, g, k))
        return out

    @cached_property
    def bounds(self) -> np.ndarray:
        return self.polytopes.stacked()[2]

    def row_means(self, U) -> np.ndarray:
        U = np.ravel(U)
        return np.array([a @ U + b for a, b, _ in self.gradient_data])

    def row_stds(self, U) -> np.ndarray:
        U = np.ravel(U)
        return np.array([np.linalg.norm(M @ U) for _, _, M in self.gradient_data])

    def cost(self, U) -> float:
        U = np.ravel(U)
        return float(U @ U)
