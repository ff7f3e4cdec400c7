import json
import textwrap

import numpy as np
import pytest

from randctl import io
from randctl.cli import main
from randctl.errors import ProblemFileError, ShapeError
from randctl.scenarios import gamma_case
from randctl.solver import acs_solve

TOY = textwrap.dedent(
    """\
    name: toy
    system:
      A: [[1.0, 1.0], [0.0, 1.0]]
      n: 2
      m: 1
      N: 2
      x0: [0.0, 0.0]
    uncertainty:
      template: [[0.5], [1.0]]
      columns:
        - distribution: {kind: gamma, params: [100.0, 0.01]}
          rows: all
    constraints:
      - step: 1
        G: [[1.0, 0.0]]
        h: [1.0]
      - step: 2
        G: [[-1.0, 0.0], [1.0, 0.0]]
        h: [-0.5, 2.0]
    risk: {alpha: 0.1, method: vp}
    cost: {type: quadratic}
    input_bounds: {lower: [-1.0], upper: [1.0]}
    solver: {max_iterations: 10}
    seed: 3
    """
)

DETERMINISTIC = TOY.replace("{kind: gamma, params: [100.0, 0.01]}", "{kind: deterministic, params: [1.0]}")


@pytest.fixture
def toy_file(tmp_path):
    path = tmp_path / "toy.yaml"
    path.write_text(TOY)
    return path


def test_parse_toy(toy_file):
    p = io.load_problem(str(toy_file))
    assert p.name == "toy" and p.seed == 3 and p.alpha == 0.1
    assert p.polytopes.row_counts == [1, 2]
    assert p.uncertainty.multipliers[1][0].kind == "gamma"
    assert io.acs_config_of(p).max_iterations == 10


def _line_of(text, needle):
    return next(i + 1 for i, line in enumerate(text.splitlines()) if needle in line)


@pytest.mark.parametrize("old,new,anchor", [
    ("G: [[-1.0, 0.0], [1.0, 0.0]]", "G: [[-1.0, 0.0, 3.0], [1.0, 0.0, 1.0]]", "G: [[-1.0"),
    ("h: [-0.5, 2.0]", "h: [-0.5]", "h: [-0.5"),
    ("x0: [0.0, 0.0]", "x0: [0.0, 0.0, 1.0]", "x0:"),
    ("method: vp", "method: chebyshev", "risk:"),
    ("{kind: gamma, params: [100.0, 0.01]}", "{kind: gamma, params: [-1.0, 0.01]}", "distribution:"),
])
def test_errors_point_at_the_offending_line(tmp_path, old, new, anchor):
    text = TOY.replace(old, new)
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(ProblemFileError) as exc:
        io.load_problem(str(path))
    assert exc.value.line == _line_of(text, anchor)
    assert f"line {exc.value.line}" in str(exc.value)


def test_missing_section_and_syntax_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(TOY.replace("risk: {alpha: 0.1, method: vp}\n", ""))
    with pytest.raises(ProblemFileError, match="alpha|risk"):
        io.load_problem(str(path))
    path.write_text("system: [1, 2\n")
    with pytest.raises(ProblemFileError) as exc:
        io.load_problem(str(path))
    assert exc.value.line is not None
    with pytest.raises(ProblemFileError):
        io.load_problem("no-such-problem")


def test_builtin_round_trip(tmp_path):
    p = gamma_case()
    path = io.save_problem(p, tmp_path / "g.json")
    q = io.load_problem(str(path))
    assert np.array_equal(q.system.state_matrix, p.system.state_matrix)
    assert np.array_equal(q.uncertainty.templates, p.uncertainty.templates)
    assert q.uncertainty.multipliers == p.uncertainty.multipliers
    assert np.array_equal(q.uncertainty.row_masks, p.uncertainty.row_masks)
    assert abs(acs_solve(q).cost - acs_solve(p).cost) <= 1e-9


def test_cwh_parameter_section(tmp_path):
    text = textwrap.dedent(
        """\
        system:
          cwh: {orbital_radius: 42164.0, sampling_time: 60.0, spacecraft_mass: 1.0}
          m: 3
          N: 1
          x0: [1, 0, 0, 0, 0, 0]
        uncertainty:
          columns:
            - distribution: {kind: beta, params: [152, 8]}
            - distribution: {kind: beta, params: [152, 8]}
            - distribution: {kind: beta, params: [152, 8]}
        constraints:
          - G: [[1, 0, 0, 0, 0, 0]]
            h: [5.0]
        risk: {alpha: 0.1}
        input_bounds: {lower: [-0.1, -0.1, -0.1], upper: [0.1, 0.1, 0.1]}
        """
    )
    path = tmp_path / "cwh.yaml"
    path.write_text(text)
    p = io.load_problem(str(path))
    assert p.uncertainty.templates[0, 0, 0] == pytest.approx(59.9998, abs=1e-4)
    assert p.metadata["cwh"]["sampling_time"] == 60.0


def test_solve_validate_cycle(tmp_path, toy_file, capsys):
    out = tmp_path / "r.json"
    assert main(["solve", str(toy_file), "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["schema"] == io.RESULT_SCHEMA
    for key in ("U", "lambda", "cost", "iterations", "solve_time_s", "status", "seed", "config"):
        assert key in data
    assert data["seed"] == 3 and data["config"]["max_iterations"] == 10
    report = tmp_path / "v.json"
    assert main(["validate", str(toy_file), str(out), "--samples", "20000", "--out", str(report)]) == 0
    rep = json.loads(report.read_text())
    assert rep["joint_satisfaction"] >= 0.9 and rep["n_samples"] == 20000


def test_solve_is_reproducible_apart_from_wall_time(tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"r{i}.json"
        assert main(["solve", "cwh-beta", "--method", "scenario", "--seed", "7", "--out", str(path)]) == 0
        d = json.loads(path.read_text())
        d.pop("solve_time_s")
        outs.append(d)
    assert outs[0] == outs[1]
    assert outs[0]["n_scenarios"] == 446


def test_infeasible_solve_exit_code(tmp_path):
    path = tmp_path / "inf.yaml"
    path.write_text(TOY.replace("h: [-0.5, 2.0]", "h: [-50.0, 100.0]"))
    out = tmp_path / "r.json"
    assert main(["solve", str(path), "--out", str(out)]) == 2
    assert json.loads(out.read_text())["status"] == "infeasible"


def test_parse_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(TOY.replace("h: [-0.5, 2.0]", "h: [-0.5]"))
    assert main(["solve", str(path)]) == 1
    assert "line" in capsys.readouterr().err


def test_validate_violating_input_exits_3(tmp_path):
    p = gamma_case()
    sol = acs_solve(p)
    sol.U_star = np.full(p.n_inputs, 0.1)
    out = io.write_json(io.solution_to_dict(sol, p, seed=0), tmp_path / "max.json")
    assert main(["validate", "cwh-gamma", str(out), "--samples", "10000", "--out", str(tmp_path / "v.json")]) == 3


def test_validate_deterministic_toy_is_exactly_satisfied(tmp_path):
    path = tmp_path / "det.yaml"
    path.write_text(DETERMINISTIC)
    out = tmp_path / "r.json"
    assert main(["solve", str(path), "--out", str(out)]) == 0
    rep = tmp_path / "v.json"
    assert main(["validate", str(path), str(out), "--samples", "10000", "--out", str(rep)]) == 0
    assert json.loads(rep.read_text())["joint_satisfaction"] == 1.0


def test_validate_dimension_mismatch_exits_1(tmp_path, toy_file):
    out = tmp_path / "r.json"
    assert main(["solve", str(toy_file), "--out", str(out)]) == 0
    assert main(["validate", "cwh-gamma", str(out)]) == 1
    with pytest.raises(ShapeError):
        io.read_solution(out, gamma_case())


def test_compare_outputs(tmp_path):
    d = tmp_path / "cmp"
    assert main(["compare", "cwh-gamma", "--methods", "vp,cantelli", "--samples", "10000", "--out-dir", str(d)]) == 0
    summary = json.loads((d / "comparison.json").read_text())
    costs = {r["method"]: r["cost"] for r in summary["methods"]}
    assert 0.72 <= costs["vp"] / costs["cantelli"] <= 0.88
    header = (d / "comparison.csv").read_text().splitlines()[0]
    assert header.startswith("method,status,cost,solve_time_s,iterations")
    traj = (d / "trajectory_vp.csv").read_text().splitlines()
    assert traj[0] == "k,t_s,x0,x1,x2,x3,x4,x5" and len(traj) == 7
    assert (d / "trajectories.png").stat().st_size > 0


def test_compare_marks_infeasible_method_and_exits_0(tmp_path):
    path = tmp_path / "inf.yaml"
    path.write_text(TOY.replace("h: [-0.5, 2.0]", "h: [-50.0, 100.0]"))
    d = tmp_path / "cmp"
    assert main(["compare", str(path), "--methods", "vp", "--samples", "1000", "--out-dir", str(d), "--no-plot"]) == 0
    row = json.loads((d / "comparison.json").read_text())["methods"][0]
    assert row["status"] == "infeasible" and row["cost"] is None
    assert "infeasible" in (d / "comparison.csv").read_text()


@pytest.mark.parametrize("methods", ["", " , ", "vp,newton"])
def test_compare_bad_methods_exit_1(methods, tmp_path):
    assert main(["compare", "cwh-gamma", "--methods", methods, "--out-dir", str(tmp_path)]) == 1


def test_usage_errors_exit_1():
    assert main([]) == 1
    assert main(["solve", "cwh-gamma", "--method", "bogus"]) == 1


def test_export_command(tmp_path):
    out = tmp_path / "beta.json"
    assert main(["export", "cwh-beta", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["schema"] == io.PROBLEM_SCHEMA
    assert io.load_problem(str(out)).polytopes.total_rows == 32


def test_thread_count_does_not_change_results(monkeypatch):
    from randctl.validation import sample_row_values

    p = gamma_case()
    U = acs_solve(p).U_star
    a = sample_row_values(p, U, 25_000, 11, workers=1)
    monkeypatch.setenv("RANDCTL_THREADS", "4")
    b = sample_row_values(p, U, 25_000, 11)
    assert np.array_equal(a, b)
