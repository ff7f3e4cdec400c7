"""Built-in spacecraft rendezvous problems on Clohessy-Wiltshire relative dynamics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constraints import PolytopeSequence
from .dynamics import LinearSystem
from .errors import DomainError
from .problem import ChanceProblem
from .uncertainty import RandomControlMatrixSpec, ScalarDistribution

EARTH_MU = 398600.4418  # km^3 / s^2
# deputy just outside the line-of-sight cone, drifting towards it
DEFAULT_INITIAL_STATE = (8.5, -10.5, 0.0, 0.0, 0.02, 0.0)


@dataclass(frozen=True)
class CWHParameters:
    orbital_radius: float = 42164.0
    gravitational_parameter: float = EARTH_MU
    spacecraft_mass: float = 1.0
    sampling_time: float = 60.0
    horizon: int = 5

    def __post_init__(self):
        if min(self.orbital_radius, self.gravitational_parameter, self.spacecraft_mass) <= 0:
            raise DomainError("CWH parameters must be positive")
        if self.sampling_time < 0 or self.horizon < 1:
            raise DomainError("sampling_time must be >= 0 and horizon >= 1")

    @property
    def orbital_rate(self) -> float:
        return math.sqrt(self.gravitational_parameter / self.orbital_radius**3)

    def to_dict(self) -> dict:
        return {
            "orbital_radius": self.orbital_radius,
            "gravitational_parameter": self.gravitational_parameter,
            "spacecraft_mass": self.spacecraft_mass,
            "sampling_time": self.sampling_time,
            "horizon": self.horizon,
        }


def cwh_state_transition(w: float, t: float) -> np.ndarray:
    """Closed-form CW transition matrix for state ``[x, y, z, vx, vy, vz]``."""
    s, c = math.sin(w * t), math.cos(w * t)
    # limits as w -> 0 keep the matrix finite
    s_w = s / w if w * t != 0 else t
    one_c_w = (1 - c) / w if w * t != 0 else 0.0
    return np.array([
        [4 - 3 * c, 0, 0, s_w, 2 * one_c_w, 0],
        [6 * (s - w * t), 1, 0, -2 * one_c_w, 4 * s_w - 3 * t, 0],
        [0, 0, c, 0, 0, s_w],
        [3 * w * s, 0, 0, c, 2 * s, 0],
        [-6 * w * (1 - c), 0, 0, -2 * s, 4 * c - 3, 0],
        [0, 0, -w * s, 0, 0, c],
    ])


def cwh_discretize(params: CWHParameters = CWHParameters(), initial_state=DEFAULT_INITIAL_STATE):
    """Discrete CW dynamics with impulsive inputs applied at the start of each interval.

    An impulse ``u`` changes the velocity by ``u / m_c`` and then coasts for one
    sampling period, so ``B = Phi[:, 3:] / m_c``.
    """
    A = cwh_state_transition(params.orbital_rate, params.sampling_time)
    B = A[:, 3:] / params.spacecraft_mass
    system = LinearSystem(A, input_dim=3, horizon=params.horizon, initial_state=np.asarray(initial_state, dtype=float))
    return system, B


def line_of_sight_polytope(apex_bound: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
    G = np.array([
        [-1, 0, 1, 0, 0, 0],
        [-1, 1, 0, 0, 0, 0],
        [-1, 0, -1, 0, 0, 0],
        [-1, -1, 0, 0, 0, 0],
        [1, 0, 0, 0, 0, 0],
    ], dtype=float)
    h = np.array([0, 0, 0, 0, apex_bound], dtype=float)
    return G, h


def terminal_polytope() -> tuple[np.ndarray, np.ndarray]:
    G = np.kron(np.eye(6), np.array([[1.0], [-1.0]]))
    h = np.concatenate([[2.0, 0.0], 0.5 * np.ones(4), 0.1 * np.ones(6)])
    return G, h


def rendezvous_polytopes(horizon: int) -> PolytopeSequence:
    los, term = line_of_sight_polytope(), terminal_polytope()
    pairs = [los] * (horizon - 1) + [term]
    return PolytopeSequence(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))


POSITION_ROWS = np.array([True, True, True, False, False, False])


def _case(name, dist, row_mask, params, initial_state, alpha, method):
    system, B = cwh_discretize(params, initial_state)
    spec = RandomControlMatrixSpec.column_model(B, dist, params.horizon, row_mask)
    return ChanceProblem(
        system=system,
        uncertainty=spec,
        polytopes=rendezvous_polytopes(params.horizon),
        alpha=alpha,
        input_lower=-0.1 * np.ones(3),
        input_upper=0.1 * np.ones(3),
        method=method,
        name=name,
        metadata={"cwh": params.to_dict()},
    )


def gamma_case(params: CWHParameters = CWHParameters(), initial_state=DEFAULT_INITIAL_STATE, alpha: float = 0.15, method: str = "vp") -> ChanceProblem:
    """Impulse-timing errors: Gamma(1e3, 1e-3) multipliers on the position rows only."""
    return _case("cwh-gamma", ScalarDistribution.gamma(1e3, 1e-3), POSITION_ROWS, params, initial_state, alpha, method)


def beta_case(params: CWHParameters = CWHParameters(), initial_state=DEFAULT_INITIAL_STATE, alpha: float = 0.15, method: str = "vp") -> ChanceProblem:
    """Under-performing actuators: Beta(152, 8) multipliers on every row."""
    return _case("cwh-beta", ScalarDistribution.beta(152, 8), None, params, initial_state, alpha, method)


BUILTINS = {"cwh-gamma": gamma_case, "cwh-beta": beta_case}


def builtin(name: str) -> ChanceProblem:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise DomainError(f"unknown built-in problem {name!r}; choose from {sorted(BUILTINS)}") from None
