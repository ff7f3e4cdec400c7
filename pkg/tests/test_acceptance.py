"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are collected into an ``acceptance`` section of the pytest terminal
summary.  Run alone with ``pytest tests/test_acceptance.py``.
"""

import json
import math
import time

import numpy as np

from conftest import feasible_random_problem, random_instance, record
from oracles import dense_variance, monte_carlo_rows
from randctl.cli import main
from randctl.constraints import VP_LAMBDA_FLOOR, cantelli_risk, risk_to_lambda, vp_risk
from randctl.dynamics import LinearSystem, halfspace_mean, halfspace_std
from randctl.constraints import PolytopeSequence
from randctl.problem import ChanceProblem
from randctl.solver import ACSConfig, acs_solve, scenario_sample_count
from randctl.uncertainty import RandomControlMatrixSpec, ScalarDistribution, Unimodality, empirical_unimodality_check, stacked_moments
from randctl.validation import monte_carlo_validate, sample_row_values

REFERENCE_COST = {"vp": 1.030e-3, "cantelli": 1.282e-3}
SAMPLES = 100_000
SOLVED: list = []


def _verdict(n, title, ok, detail):
    record(f"[{'PASS' if ok else 'FAIL'}] {n} {title}: {detail}")
    assert ok, detail


def test_1_bound_dominance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    lam = rng.uniform(VP_LAMBDA_FLOOR, 100.0, 10_000)
    lam = lam[lam > VP_LAMBDA_FLOOR]
    vp, ca = vp_risk(lam), cantelli_risk(lam)
    dom = float(np.max(np.abs(vp - 4.0 / 9.0 * ca)))
    rt_vp = float(np.max(np.abs(risk_to_lambda(vp, "vp") - lam) / lam))
    rt_ca = float(np.max(np.abs(risk_to_lambda(ca, "cantelli") - lam) / lam))
    elapsed = time.perf_counter() - t0
    ok = dom <= 1e-14 and rt_vp <= 1e-12 and rt_ca <= 1e-12 and elapsed < 1.0
    _verdict(1, "bound dominance", ok, f"max|vp - 4/9 cantelli| = {dom:.1e}, round trip rel err vp {rt_vp:.1e} / cantelli {rt_ca:.1e}, {elapsed:.3f} s")


def _std_se(x):
    n = x.size
    s = x.std(ddof=1)
    if s == 0:
        return 0.0
    kurt = np.mean((x - x.mean()) ** 4) / s**4
    return s * math.sqrt(max(kurt - 1.0, 0.0) / (4 * n))


def test_2_moment_engine_vs_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_dense, worst_z, rows = 0.0, 0.0, 0
    for _ in range(50):
        system, spec, polys = random_instance(rng)
        mom = stacked_moments(spec)
        U = rng.uniform(-1, 1, system.horizon * system.input_dim)
        steps, G, _ = polys.stacked()
        vals = monte_carlo_rows(system, spec, G, steps, U, SAMPLES, rng)
        for r, (g, k) in enumerate(zip(G, steps)):
            std = halfspace_std(system, mom, g, k, U)
            ref = math.sqrt(dense_variance(system, spec, g, k, U))
            if ref > 0:
                worst_dense = max(worst_dense, abs(std - ref) / ref)
            else:
                worst_dense = max(worst_dense, std)
            x = vals[:, r]
            mean = halfspace_mean(system, mom, g, k, U)
            se_mean = x.std(ddof=1) / math.sqrt(SAMPLES)
            se_std = _std_se(x)
            floor = 1e-9 * max(1.0, abs(mean))
            z_mean = abs(x.mean() - mean) / (se_mean + floor / 4)
            z_std = abs(x.std(ddof=1) - std) / (se_std + floor / 4)
            worst_z = max(worst_z, z_mean, z_std)
            rows += 1
    elapsed = time.perf_counter() - t0
    ok = worst_dense <= 1e-10 and worst_z <= 4.0 and elapsed < 120
    _verdict(2, "moment engine vs oracles", ok, f"{rows} rows, max rel dev from dense form {worst_dense:.1e}, max Monte Carlo deviation {worst_z:.2f} SE, {elapsed:.1f} s")


def test_3_gamma_case(gamma_problem, gamma_vp, gamma_cantelli):
    t0 = time.perf_counter()
    SOLVED.extend([gamma_vp, gamma_cantelli])
    sat_vp = monte_carlo_validate(gamma_problem, gamma_vp.U_star, SAMPLES, seed=0).joint_satisfaction
    sat_ca = monte_carlo_validate(gamma_problem, gamma_cantelli.U_star, SAMPLES, seed=0).joint_satisfaction
    ratio = gamma_vp.cost / gamma_cantelli.cost
    dev = {m: s.cost / REFERENCE_COST[m] - 1 for m, s in (("vp", gamma_vp), ("cantelli", gamma_cantelli))}
    elapsed = time.perf_counter() - t0
    ok = (
        0.72 <= ratio <= 0.88
        and sat_vp >= 0.995 and sat_ca >= 0.85
        and gamma_vp.iterations <= 5 and gamma_cantelli.iterations <= 5
        and all(abs(d) <= 0.25 for d in dev.values())
        and elapsed < 300
    )
    _verdict(3, "gamma case", ok,
             f"cost vp {gamma_vp.cost:.4e} ({dev['vp']:+.1%}) cantelli {gamma_cantelli.cost:.4e} ({dev['cantelli']:+.1%}), "
             f"ratio {ratio:.3f}, satisfaction {sat_vp:.4f}/{sat_ca:.4f}, iterations {gamma_vp.iterations}/{gamma_cantelli.iterations}")


def test_4_beta_case(beta_problem, beta_vp, beta_scenario):
    t0 = time.perf_counter()
    SOLVED.append(beta_vp)
    sat_vp = monte_carlo_validate(beta_problem, beta_vp.U_star, SAMPLES, seed=0).joint_satisfaction
    sat_sc = monte_carlo_validate(beta_problem, beta_scenario.U_star, SAMPLES, seed=0).joint_satisfaction
    n_s = scenario_sample_count(0.15, 1e-8, 3, 5)
    elapsed = time.perf_counter() - t0
    ok = (
        sat_vp >= 0.99
        and 0.85 <= sat_sc <= sat_vp + 0.01
        and beta_scenario.cost <= beta_vp.cost
        and n_s == 446 and beta_scenario.n_scenarios == 446
        and elapsed < 600
    )
    _verdict(4, "beta case", ok,
             f"cost vp {beta_vp.cost:.4e} scenario {beta_scenario.cost:.4e}, satisfaction {sat_vp:.4f}/{sat_sc:.4f}, N_s {n_s}")


def test_5_vp_conservatism_on_random_problems():
    rng = np.random.default_rng(5)
    worst = (math.inf, None)
    for i in range(10):
        p = feasible_random_problem(rng)
        sol = acs_solve(p, ACSConfig(max_iterations=8))
        assert sol.feasible, f"instance {i} infeasible"
        SOLVED.append(sol)
        rep = monte_carlo_validate(p, sol.U_star, SAMPLES, seed=i)
        lo, _ = rep.satisfaction_interval(0.99)
        margin = lo - (1 - p.alpha)
        if margin < worst[0]:
            worst = (margin, f"satisfaction {rep.joint_satisfaction:.4f} (99% CI low {lo:.4f}) vs 1 - alpha = {1 - p.alpha:.4f}")
    _verdict(5, "VP conservatism", worst[0] >= 0, f"10 instances, tightest: {worst[1]}")


def test_6_acs_monotonicity(gamma_vp, gamma_cantelli, beta_vp):
    rng = np.random.default_rng(6)
    histories = [s.cost_history for s in SOLVED + [gamma_vp, gamma_cantelli, beta_vp]]
    for _ in range(10):
        histories.append(acs_solve(feasible_random_problem(rng), ACSConfig(max_iterations=8)).cost_history)
    worst = max((float(np.max(np.diff(h))) for h in histories if len(h) > 1), default=-math.inf)
    _verdict(6, "ACS monotonicity", worst <= 1e-9, f"{len(histories)} runs, largest cost increase {worst:.2e}")


def _bimodal_problem():
    spec = RandomControlMatrixSpec(np.ones((1, 1, 1)), ((ScalarDistribution.mixture([(0.8, 0.02), (1.2, 0.02)]),),), np.ones((1, 1), bool))
    polys = PolytopeSequence((np.array([[-1.0]]),), (np.array([-0.1]),))
    return ChanceProblem(LinearSystem(np.eye(1), 1, 1, np.zeros(1)), spec, polys, 0.15, [-1.0], [1.0], method="cantelli")


def test_7_unimodality(gamma_problem, gamma_vp, beta_problem, beta_vp):
    verdicts = {}
    for name, p, sol in (("gamma", gamma_problem, gamma_vp), ("beta", beta_problem, beta_vp)):
        vals = sample_row_values(p, sol.U_star, SAMPLES, seed=7)
        verdicts[name] = [empirical_unimodality_check(vals[:, r]) for r in range(vals.shape[1])]
    p = _bimodal_problem()
    sol = acs_solve(p)
    assert sol.feasible
    bimodal = empirical_unimodality_check(sample_row_values(p, sol.U_star, SAMPLES, seed=7)[:, 0])
    counts = {k: sum(v is Unimodality.UNIMODAL for v in vs) for k, vs in verdicts.items()}
    ok = counts == {"gamma": 32, "beta": 32} and bimodal is Unimodality.NOT_UNIMODAL
    _verdict(7, "unimodality check", ok, f"unimodal rows gamma {counts['gamma']}/32, beta {counts['beta']}/32; mixture control -> {bimodal.value}")


def test_8_compare_determinism(tmp_path):
    runs = []
    for i in range(2):
        d = tmp_path / f"run{i}"
        code = main(["compare", "cwh-beta", "--methods", "vp,cantelli,scenario", "--samples", str(SAMPLES), "--seed", "8", "--out-dir", str(d), "--no-plot"])
        assert code == 0
        runs.append(json.loads((d / "comparison.json").read_text())["methods"])
    counts_equal = [a["satisfied_count"] for a in runs[0]] == [b["satisfied_count"] for b in runs[1]]
    status_equal = [a["status"] for a in runs[0]] == [b["status"] for b in runs[1]]
    costs = [(a["cost"], b["cost"]) for a, b in zip(*runs) if a["cost"] is not None and b["cost"] is not None]
    same_feasible = all((a["cost"] is None) == (b["cost"] is None) for a, b in zip(*runs))
    cost_dev = max(abs(a - b) for a, b in costs)
    ok = counts_equal and status_equal and same_feasible and cost_dev <= 1e-12
    summary = ", ".join(f"{a['method']} {a['status']} {a['satisfied_count']}" for a in runs[0])
    _verdict(8, "compare determinism", ok, f"{summary}; identical counts {counts_equal}, max cost difference {cost_dev:.1e}")
