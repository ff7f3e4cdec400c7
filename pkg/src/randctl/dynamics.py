"""Stacked affine dynamics and exact half-space moments.

For the system ``x(k+1) = A x(k) + B(k) u(k)`` with a random control matrix,
the state at step ``k`` is

    x(k) = A^k x(0) + sum_{j<k} A^(k-1-j) B(j) u(j),

so any half-space value ``g . x(k)`` is affine in the entries of the random
matrices.  Its mean is affine in ``U`` and its standard deviation is a norm of
a linear map of ``U``.  Everything here is evaluated blockwise per step; the
dense Kronecker form is only used by the test-suite as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, NumericError, ShapeError

PSD_RTOL = 1e-10


@dataclass(frozen=True)
class LinearSystem:
    """Deterministic part of the dynamics: ``A``, dimensions, horizon and ``x(0)``."""

    state_matrix: np.ndarray
    input_dim: int
    horizon: int
    initial_state: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.state_matrix, dtype=float)
        x0 = np.asarray(self.initial_state, dtype=float).ravel()
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ShapeError(f"state_matrix must be square, got shape {A.shape}")
        if x0.shape != (A.shape[0],):
            raise ShapeError(f"initial_state has length {x0.size}, expected {A.shape[0]}")
        if int(self.horizon) < 1:
            raise DomainError("horizon must be >= 1")
        if int(self.input_dim) < 1:
            raise DomainError("input_dim must be >= 1")
        object.__setattr__(self, "state_matrix", A)
        object.__setattr__(self, "initial_state", x0)
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "input_dim", int(self.input_dim))

    @property
    def state_dim(self) -> int:
        return self.state_matrix.shape[0]

    @cached_property
    def powers(self) -> np.ndarray:
        """``A^j`` for ``j = 0..N``, shape ``(N+1, n, n)``."""
        n, N = self.state_dim, self.horizon
        out = np.empty((N + 1, n, n))
        out[0] = np.eye(n)
        for j in range(1, N + 1):
            out[j] = self.state_matrix @ out[j - 1]
        return out

    def free_response(self, k: int) -> np.ndarray:
        return self.powers[k] @ self.initial_state


@dataclass(frozen=True)
class StackedRowMap:
    """Block row ``[A^(k-1), ..., A, I, 0, ..., 0]`` mapping stacked per-step inputs to ``x(k)``."""

    step_index: int
    blocks: tuple[np.ndarray, ...]

    def matrix(self) -> np.ndarray:
        return np.hstack(self.blocks)


@dataclass(frozen=True)
class StackedControlMoments:
    """Per-step mean and column-stacked covariance of the random control matrices.

    ``per_step_vec_covariance[j]`` is the covariance of ``vec(B(j))`` where
    ``vec`` stacks columns, so entry ``(r, c)`` of ``B(j)`` sits at index
    ``c * n + r``.  Steps are independent of each other.
    """

    per_step_mean: np.ndarray
    per_step_vec_covariance: np.ndarray
    cross_step_independent: bool = field(default=True)

    def __post_init__(self):
        mean = np.asarray(self.per_step_mean, dtype=float)
        cov = np.asarray(self.per_step_vec_covariance, dtype=float)
        if mean.ndim != 3:
            raise ShapeError("per_step_mean must have shape (N, n, m)")
        N, n, m = mean.shape
        if cov.shape != (N, n * m, n * m):
            raise ShapeError(f"per_step_vec_covariance must have shape {(N, n * m, n * m)}, got {cov.shape}")
        if not self.cross_step_independent:
            raise DomainError("only cross-step independent control noise is supported")
        object.__setattr__(self, "per_step_mean", mean)
        object.__setattr__(self, "per_step_vec_covariance", cov)

    @property
    def horizon(self) -> int:
        return self.per_step_mean.shape[0]

    @cached_property
    def sqrt_covariance(self) -> np.ndarray:
        return np.stack([psd_sqrt(S) for S in self.per_step_vec_covariance])


def psd_sqrt(S: np.ndarray, rtol: float = PSD_RTOL) -> np.ndarray:
    """Symmetric square root of a PSD matrix; negative eigenvalues within ``rtol`` are clamped."""
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    scale = max(float(np.max(np.abs(w))) if w.size else 0.0, 0.0)
    if scale == 0.0:
        return np.zeros_like(S)
    if w.min() < -rtol * scale:
        raise NumericError(f"covariance is not PSD (min eigenvalue {w.min():.3e})")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _check_step(system: LinearSystem, k: int) -> int:
    k = int(k)
    if not 1 <= k <= system.horizon:
        raise DomainError(f"step index {k} outside 1..{system.horizon}")
    return k


def _check_compatible(system: LinearSystem, moments: StackedControlMoments) -> None:
    N, n, m = moments.per_step_mean.shape
    if (N, n, m) != (system.horizon, system.state_dim, system.input_dim):
        raise ShapeError(
            f"moments have shape (N, n, m) = {(N, n, m)}, system has "
            f"{(system.horizon, system.state_dim, system.input_dim)}"
        )


def _split_inputs(system: LinearSystem, U: np.ndarray) -> np.ndarray:
    U = np.asarray(U, dtype=float).ravel()
    if U.size != system.horizon * system.input_dim:
        raise ShapeError(f"U has length {U.size}, expected {system.horizon * system.input_dim}")
    return U.reshape(system.horizon, system.input_dim)


def _row(system: LinearSystem, G_row) -> np.ndarray:
    g = np.asarray(G_row, dtype=float).ravel()
    if g.size != system.state_dim:
        raise ShapeError(f"G_row has length {g.size}, expected {system.state_dim}")
    return g


def stacked_row_map(system: LinearSystem, k: int) -> StackedRowMap:
    k = _check_step(system, k)
    n, N = system.state_dim, system.horizon
    blocks = [system.powers[k - 1 - j] for j in range(k)]
    blocks += [np.zeros((n, n)) for _ in range(N - k)]
    return StackedRowMap(step_index=k, blocks=tuple(blocks))


def _propagated_rows(system: LinearSystem, g: np.ndarray, k: int) -> np.ndarray:
    # w_j = g A^(k-1-j), j = 0..k-1
    return np.stack([g @ system.powers[k - 1 - j] for j in range(k)])


def halfspace_mean(system, moments, G_row, k, U) -> float:
    _check_compatible(system, moments)
    k = _check_step(system, k)
    g = _row(system, G_row)
    u = _split_inputs(system, U)
    w = _propagated_rows(system, g, k)
    value = g @ system.free_response(k)
    for j in range(k):
        value += w[j] @ moments.per_step_mean[j] @ u[j]
    return float(value)


def halfspace_std(system, moments, G_row, k, U) -> float:
    _check_compatible(system, moments)
    k = _check_step(system, k)
    g = _row(system, G_row)
    u = _split_inputs(system, U)
    w = _propagated_rows(system, g, k)
    var = 0.0
    for j in range(k):
        S = moments.per_step_vec_covariance[j]
        ev = np.linalg.eigvalsh(0.5 * (S + S.T))
        if ev.size and ev.min() < -PSD_RTOL * max(abs(ev).max(), 0.0):
            raise NumericError(f"covariance of step {j} is not PSD")
        z = np.kron(u[j], w[j])
        var += z @ S @ z
    return float(np.sqrt(max(var, 0.0)))


def constraint_gradient_data(system, moments, G_row, k):
    """Coefficients ``(a, b, M)`` with ``mean = a @ U + b`` and ``std = ||M @ U||``.

    ``M`` has one ``(n*m) x (N*m)`` row block per step ``j < k``.
    """
    _check_compatible(system, moments)
    k = _check_step(system, k)
    g = _row(system, G_row)
    n, m, N = system.state_dim, system.input_dim, system.horizon
    w = _propagated_rows(system, g, k)
    a = np.zeros(N * m)
    M = np.zeros((k * n * m, N * m))
    eye_m = np.eye(m)
    for j in range(k):
        a[j * m:(j + 1) * m] = w[j] @ moments.per_step_mean[j]
        # kron(u, w) = (I_m kron w^T) u
        M[j * n * m:(j + 1) * n * m, j * m:(j + 1) * m] = moments.sqrt_covariance[j] @ np.kron(eye_m, w[j][:, None])
    b = float(g @ system.free_response(k))
    return a, b, M


def simulate(system: LinearSystem, control_matrices: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Propagate the dynamics for a batch of realized control matrices.

    ``control_matrices`` has shape ``(S, N, n, m)`` (or ``(N, n, m)``); returns
    states ``x(1..N)`` with shape ``(S, N, n)``.
    """
    Bs = np.asarray(control_matrices, dtype=float)
    single = Bs.ndim == 3
    if single:
        Bs = Bs[None]
    u = _split_inputs(system, U)
    S = Bs.shape[0]
    x = np.broadcast_to(system.initial_state, (S, system.state_dim)).copy()
    out = np.empty((S, system.horizon, system.state_dim))
    A_T = system.state_matrix.T
    for k in range(system.horizon):
        x = x @ A_T + np.einsum("snm,m->sn", Bs[:, k], u[k])
        out[:, k] = x
    return out[0] if single else out


def mean_trajectory(system: LinearSystem, moments: StackedControlMoments, U: np.ndarray) -> np.ndarray:
    """``E[x(k)]`` for ``k = 0..N``, shape ``(N+1, n)``."""
    u = _split_inputs(system, U)
    out = np.empty((system.horizon + 1, system.state_dim))
    out[0] = system.initial_state
    for k in range(system.horizon):
        out[k + 1] = system.state_matrix @ out[k] + moments.per_step_mean[k] @ u[k]
    return out
