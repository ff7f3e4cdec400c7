"""Problem files, result files and report files.

Problem files are YAML or JSON (JSON is read through the YAML parser so that
errors can point at a source line).  Results and reports are written as JSON
with a ``schema`` field; trajectory series are written as CSV.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np
import yaml

from .constraints import METHODS, PolytopeSequence
from .dynamics import LinearSystem
from .errors import DomainError, ProblemFileError, ShapeError
from .problem import ChanceProblem
from .scenarios import BUILTINS, CWHParameters, cwh_state_transition
from .solver import ACSConfig, Solution
from .uncertainty import RandomControlMatrixSpec, ScalarDistribution

PROBLEM_SCHEMA = "randctl/problem-1"
RESULT_SCHEMA = "randctl/result-1"
REPORT_SCHEMA = "randctl/validation-1"
COMPARE_SCHEMA = "randctl/compare-1"


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 does not treat JSON exponents such as 1e-08 as floats
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


class _Doc:
    """Parsed document plus the source line of every node, keyed by path."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines: dict[tuple, int] = {}
        self._loader = _Loader("")
        try:
            node = yaml.compose(text, Loader=_Loader)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ProblemFileError(f"syntax error: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None, source) from None
        if node is None:
            raise ProblemFileError("empty document", 1, source)
        self.data = self._build(node, ())

    def _build(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                out[k.value] = self._build(v, path + (k.value,))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._build(v, path + (i,)) for i, v in enumerate(node.value)]
        return self._loader.construct_object(node, deep=True)

    def line(self, path) -> int | None:
        path = tuple(path)
        while path not in self.lines and path:
            path = path[:-1]
        return self.lines.get(path)

    def fail(self, path, message):
        raise ProblemFileError(f"{'.'.join(map(str, path)) or '<root>'}: {message}", self.line(path), self.source)

    def get(self, path, required=True, default=None):
        cur = self.data
        for key in path:
            if isinstance(cur, dict) and key in cur:
                cur = cur[key]
            elif isinstance(cur, list) and isinstance(key, int) and key < len(cur):
                cur = cur[key]
            else:
                if required:
                    self.fail(path[:-1], f"missing required field {key!r}")
                return default
        return cur

    def array(self, path, ndim=None, required=True):
        value = self.get(path, required)
        if value is None:
            return None
        try:
            arr = np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            self.fail(path, "expected a numeric array")
        if ndim is not None and arr.ndim != ndim:
            self.fail(path, f"expected a {ndim}-dimensional array, got shape {arr.shape}")
        return arr


def _distribution(doc: _Doc, path) -> ScalarDistribution | None:
    d = doc.get(path, required=False)
    if d is None:
        return None
    if not isinstance(d, dict) or "kind" not in d:
        doc.fail(path, "distribution must be a mapping with 'kind' and 'params'")
    try:
        return ScalarDistribution(str(d["kind"]), tuple(d.get("params", ())))
    except (DomainError, TypeError, ValueError) as exc:
        doc.fail(path, str(exc))


def problem_from_text(text: str, source: str = "<string>") -> ChanceProblem:
    doc = _Doc(text, source)
    if not isinstance(doc.data, dict):
        doc.fail((), "top level must be a mapping")

    # system
    sysd = doc.get(("system",))
    N = int(doc.get(("system", "N")))
    m = int(doc.get(("system", "m")))
    x0 = doc.array(("system", "x0"), ndim=1)
    cwh = None
    if "cwh" in sysd:
        try:
            cwh = CWHParameters(**{**doc.get(("system", "cwh")), "horizon": N})
        except (TypeError, DomainError) as exc:
            doc.fail(("system", "cwh"), str(exc))
        A = cwh_state_transition(cwh.orbital_rate, cwh.sampling_time)
    else:
        A = doc.array(("system", "A"), ndim=2)
    n = int(doc.get(("system", "n"), required=False, default=A.shape[0]))
    if A.shape != (n, n):
        doc.fail(("system", "A"), f"state matrix must be {n}x{n}, got {A.shape}")
    if x0.size != n:
        doc.fail(("system", "x0"), f"x0 has {x0.size} entries, expected n = {n}")
    try:
        system = LinearSystem(A, m, N, x0)
    except (DomainError, ShapeError) as exc:
        doc.fail(("system",), str(exc))

    # uncertainty
    unc = ("uncertainty",)
    if doc.get(unc + ("templates",), required=False) is not None:
        templates = doc.array(unc + ("templates",), ndim=3)
    elif cwh is not None and doc.get(unc + ("template",), required=False) is None:
        # impulsive CW input matrix
        templates = np.broadcast_to(A[:, 3:] / cwh.spacecraft_mass, (N, n, m)).copy()
    else:
        T = doc.array(unc + ("template",), ndim=2)
        templates = np.broadcast_to(T, (N,) + T.shape).copy()
    if templates.shape != (N, n, m):
        doc.fail(unc, f"control templates must have shape {(N, n, m)}, got {templates.shape}")
    masks = np.ones((m, n), dtype=bool)
    if doc.get(unc + ("multipliers",), required=False) is not None:
        mult_raw = doc.get(unc + ("multipliers",))
        if len(mult_raw) != N:
            doc.fail(unc + ("multipliers",), f"expected {N} steps, got {len(mult_raw)}")
        multipliers = []
        for k, col in enumerate(mult_raw):
            if len(col) != m:
                doc.fail(unc + ("multipliers", k), f"expected {m} columns, got {len(col)}")
            multipliers.append(tuple(_distribution(doc, unc + ("multipliers", k, c)) for c in range(m)))
        rm = doc.get(unc + ("row_masks",), required=False)
        if rm is not None:
            masks = np.asarray(rm, dtype=bool)
            if masks.shape != (m, n):
                doc.fail(unc + ("row_masks",), f"row_masks must have shape {(m, n)}")
    else:
        cols = doc.get(unc + ("columns",))
        if len(cols) != m:
            doc.fail(unc + ("columns",), f"expected {m} column entries, got {len(cols)}")
        per_col = []
        for c, entry in enumerate(cols):
            path = unc + ("columns", c)
            per_col.append(_distribution(doc, path + ("distribution",)))
            rows = entry.get("rows", "all") if isinstance(entry, dict) else "all"
            if rows != "all":
                idx = np.asarray(rows, dtype=int)
                if idx.size and (idx.min() < 0 or idx.max() >= n):
                    doc.fail(path + ("rows",), f"row indices must lie in 0..{n - 1}")
                masks[c] = False
                masks[c, idx] = True
        multipliers = [tuple(per_col) for _ in range(N)]
    spec = RandomControlMatrixSpec(templates, tuple(multipliers), masks)

    # constraints
    cons = doc.get(("constraints",))
    if not isinstance(cons, list) or len(cons) != N:
        doc.fail(("constraints",), f"expected one entry per step (N = {N})")
    Gs, hs = [], []
    for k, _ in enumerate(cons):
        path = ("constraints", k)
        step = int(doc.get(path + ("step",), required=False, default=k + 1))
        if step != k + 1:
            doc.fail(path + ("step",), f"constraints must be listed for steps 1..N in order (got {step})")
        G = doc.array(path + ("G",), ndim=2)
        h = doc.array(path + ("h",), ndim=1)
        if G.shape[1] != n:
            doc.fail(path + ("G",), f"G has {G.shape[1]} columns, expected n = {n}")
        if G.shape[0] != h.size:
            doc.fail(path + ("h",), f"h has {h.size} entries but G has {G.shape[0]} rows")
        Gs.append(G)
        hs.append(h)
    polytopes = PolytopeSequence(tuple(Gs), tuple(hs))

    alpha = float(doc.get(("risk", "alpha")))
    method = str(doc.get(("risk", "method"), required=False, default="vp"))
    if method not in METHODS:
        doc.fail(("risk", "method"), f"method must be one of {METHODS}")
    ctype = doc.get(("cost", "type"), required=False, default="quadratic")
    if ctype != "quadratic":
        doc.fail(("cost", "type"), "only the quadratic cost U^T U is supported")
    lower = doc.array(("input_bounds", "lower"), ndim=1)
    upper = doc.array(("input_bounds", "upper"), ndim=1)
    if lower.size != m or upper.size != m:
        doc.fail(("input_bounds",), f"input bounds must have m = {m} entries")
    solver = doc.get(("solver",), required=False, default={}) or {}
    try:
        config = ACSConfig(**solver)
    except (TypeError, DomainError) as exc:
        doc.fail(("solver",), str(exc))
    seed = int(doc.get(("seed",), required=False, default=0))
    try:
        problem = ChanceProblem(
            system, spec, polytopes, alpha, lower, upper, method=method,
            name=str(doc.get(("name",), required=False, default=Path(source).stem)),
            seed=seed,
            metadata={"acs": config.to_dict(), **({"cwh": cwh.to_dict()} if cwh else {})},
        )
    except (DomainError, ShapeError) as exc:
        doc.fail((), str(exc))
    return problem


def load_problem(ref: str) -> ChanceProblem:
    """A built-in name (``cwh-gamma``, ``cwh-beta``) or a path to a problem file."""
    if ref in BUILTINS:
        return BUILTINS[ref]()
    path = Path(ref)
    if not path.exists():
        raise ProblemFileError(f"no built-in problem or file named {ref!r}")
    return problem_from_text(path.read_text(), str(path))


def acs_config_of(problem: ChanceProblem) -> ACSConfig:
    return ACSConfig(**problem.metadata.get("acs", {}))


def problem_to_dict(problem: ChanceProblem, config: ACSConfig | None = None) -> dict:
    s, u = problem.system, problem.uncertainty
    config = config or acs_config_of(problem)
    return {
        "schema": PROBLEM_SCHEMA,
        "name": problem.name,
        "system": {"A": s.state_matrix.tolist(), "n": s.state_dim, "m": s.input_dim, "N": s.horizon, "x0": s.initial_state.tolist()},
        "uncertainty": {
            "templates": u.templates.tolist(),
            "row_masks": u.row_masks.tolist(),
            "multipliers": [[d.to_dict() if d is not None else None for d in col] for col in u.multipliers],
        },
        "constraints": [{"step": k + 1, "G": G.tolist(), "h": h.tolist()} for k, (G, h) in enumerate(zip(problem.polytopes.G, problem.polytopes.h))],
        "risk": {"alpha": problem.alpha, "method": problem.method},
        "cost": {"type": "quadratic"},
        "input_bounds": {"lower": problem.input_lower.tolist(), "upper": problem.input_upper.tolist()},
        "solver": config.to_dict(),
        "seed": problem.seed,
    }


def save_problem(problem: ChanceProblem, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(problem_to_dict(problem), indent=2) + "\n")
    return path


def solution_to_dict(solution: Solution, problem: ChanceProblem, *, seed: int, config: ACSConfig | None = None, delta: float | None = None) -> dict:
    s = problem.system
    U = solution.U_star
    alloc = solution.allocation
    return {
        "schema": RESULT_SCHEMA,
        "problem": problem.name,
        "method": solution.method,
        "status": solution.status,
        "dims": {"n": s.state_dim, "m": s.input_dim, "N": s.horizon},
        "U": U.tolist() if U is not None else None,
        "u_steps": U.reshape(s.horizon, s.input_dim).tolist() if U is not None else None,
        "lambda": alloc.lambdas.tolist() if alloc is not None else None,
        "alpha": problem.alpha,
        "total_risk": float(np.sum(alloc.risks)) if alloc is not None else None,
        "cost": solution.cost if np.isfinite(solution.cost) else None,
        "iterations": solution.iterations,
        "cost_history": list(solution.cost_history),
        "per_row_slack": np.asarray(solution.per_row_slack).tolist(),
        "violated_rows": [list(r) for r in solution.violated_rows],
        "n_scenarios": solution.n_scenarios,
        "delta": delta,
        "seed": seed,
        "config": (config or acs_config_of(problem)).to_dict(),
        "solve_time_s": solution.solve_time,
    }


def write_json(data: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n")
    return path


def read_solution(path, problem: ChanceProblem) -> np.ndarray:
    """Control sequence from a result file, checked against the problem dimensions."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc.msg}", exc.lineno, str(path)) from None
    if data.get("schema") != RESULT_SCHEMA:
        raise ProblemFileError(f"unexpected schema {data.get('schema')!r}", None, str(path))
    if data.get("U") is None:
        raise ProblemFileError("result holds no control sequence (infeasible solve?)", None, str(path))
    U = np.asarray(data["U"], dtype=float)
    if U.shape != (problem.n_inputs,):
        raise ShapeError(f"solution has {U.size} inputs, problem {problem.name!r} needs {problem.n_inputs}")
    return U


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def write_trajectory_csv(path, mean_states: np.ndarray, sampling_time: float | None = None) -> Path:
    n = mean_states.shape[1]
    header = ["k"] + (["t_s"] if sampling_time else []) + [f"x{i}" for i in range(n)]
    rows = []
    for k, x in enumerate(mean_states):
        rows.append([k] + ([k * sampling_time] if sampling_time else []) + [repr(float(v)) for v in x])
    return write_csv(path, header, rows)
