import numpy as np
import pytest

from randctl.constraints import PolytopeSequence, risk_to_lambda
from randctl.dynamics import LinearSystem
from randctl.problem import ChanceProblem
from randctl.scenarios import beta_case, gamma_case
from randctl.solver import acs_solve, scenario_solve
from randctl.uncertainty import RandomControlMatrixSpec, ScalarDistribution

ACCEPTANCE_LINES: list[str] = []


def record(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_distribution(rng, allow_none=True):
    choice = rng.integers(0, 5 if allow_none else 4)
    if choice == 0:
        shape = rng.uniform(2, 60)
        return ScalarDistribution.gamma(shape, 1 / shape)
    if choice == 1:
        a = rng.uniform(20, 200)
        return ScalarDistribution.beta(a, rng.uniform(2, 20))
    if choice == 2:
        return ScalarDistribution.gaussian(1.0, rng.uniform(0.02, 0.2))
    if choice == 3:
        return ScalarDistribution.deterministic(rng.uniform(0.8, 1.2))
    return None


def random_spec(rng, n, m, N):
    templates = rng.normal(size=(N, n, m))
    multipliers = tuple(tuple(random_distribution(rng) for _ in range(m)) for _ in range(N))
    masks = rng.random((m, n)) < 0.7
    return RandomControlMatrixSpec(templates, multipliers, masks)


def random_instance(rng, n=None, m=None, N=None, rows_per_step=2):
    """Small random system, uncertainty model and polytope rows (bounds arbitrary)."""
    n = n or int(rng.integers(1, 4))
    m = m or int(rng.integers(1, 3))
    N = N or int(rng.integers(1, 5))
    A = np.eye(n) + 0.3 * rng.normal(size=(n, n))
    system = LinearSystem(A, m, N, rng.normal(size=n))
    spec = random_spec(rng, n, m, N)
    G = tuple(rng.normal(size=(rows_per_step, n)) for _ in range(N))
    h = tuple(np.full(rows_per_step, 1e3) for _ in range(N))
    return system, spec, PolytopeSequence(G, h)


def feasible_random_problem(rng, method="vp"):
    """Box-shaped sets around the mean trajectory of a reference input, wide enough for it under a uniform allocation.

    Multipliers are log-concave so every row is unimodal.
    """
    n = int(rng.integers(2, 4))
    m = int(rng.integers(1, 3))
    N = int(rng.integers(2, 5))
    alpha = float(rng.uniform(0.05, 0.15))
    A = np.eye(n) + 0.2 * rng.normal(size=(n, n))
    system = LinearSystem(A, m, N, rng.normal(size=n))
    templates = rng.normal(size=(N, n, m))
    multipliers = tuple(tuple(random_distribution(rng, allow_none=False) for _ in range(m)) for _ in range(N))
    spec = RandomControlMatrixSpec(templates, multipliers, np.ones((m, n), dtype=bool))
    G = tuple(np.vstack([np.eye(n), -np.eye(n)]) for _ in range(N))
    placeholder = PolytopeSequence(G, tuple(np.full(2 * n, 1e6) for _ in range(N)))
    lo, hi = -np.ones(m), np.ones(m)
    probe = ChanceProblem(system, spec, placeholder, alpha, lo, hi, method=method)
    U_ref = rng.uniform(-0.8, 0.8, size=N * m)
    lam = float(risk_to_lambda(alpha / placeholder.total_rows, method))
    mean, std = probe.row_means(U_ref), probe.row_stds(U_ref)
    margin = lam * std + rng.uniform(0.05, 0.3, size=mean.size)
    h_flat = mean + margin
    h = tuple(h_flat[k * 2 * n:(k + 1) * 2 * n] for k in range(N))
    return probe.with_(polytopes=PolytopeSequence(G, h))


@pytest.fixture(scope="session")
def gamma_problem():
    return gamma_case()


@pytest.fixture(scope="session")
def beta_problem():
    return beta_case()


@pytest.fixture(scope="session")
def gamma_vp(gamma_problem):
    return acs_solve(gamma_problem, method="vp")


@pytest.fixture(scope="session")
def gamma_cantelli(gamma_problem):
    return acs_solve(gamma_problem, method="cantelli")


@pytest.fixture(scope="session")
def beta_vp(beta_problem):
    return acs_solve(beta_problem, method="vp")


@pytest.fixture(scope="session")
def beta_scenario(beta_problem):
    return scenario_solve(beta_problem, 1e-8, np.random.default_rng(beta_problem.seed))
