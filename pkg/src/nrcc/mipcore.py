"""Thin MILP layer: model container, solve dispatch, MPS round trips.

All optimization in this package goes through :class:`MilpModel` and
:func:`solve`.  The default backend is the HiGHS solver shipped inside
``scipy.optimize.milp``; external command-line solvers (``highs``, ``cbc``)
are reachable through a fixed-form MPS file plus a solution-file parser, so
swapping solvers never touches model-building code.  The ``NRCC_SOLVER``
environment variable overrides any configured backend.
"""

from __future__ import annotations

import math
import os
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp

INF = math.inf

# solution statuses
OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
TIME_LIMIT = "time_limit"
ERROR = "error"

# max |x - round(x)| tolerated on integer variables in an accepted solution
INTEGRALITY_TOL = 1e-6

_SENSES = ("<=", ">=", "==")


class ModelError(ValueError):
    """Malformed model: bad ids, duplicate names, missing objective."""


class SolverError(RuntimeError):
    """Backend failed: missing binary, unparseable output, crash."""


@dataclass(frozen=True)
class SolverOptions:
    """Knobs shared by every backend.

    ``backend`` is one of ``auto`` (env var, then scipy), ``scipy``,
    ``highs-cli`` or ``cbc-cli``.  ``threads=0`` leaves the solver default.
    """

    backend: str = "auto"
    time_limit_s: float = 600.0
    mip_gap: float = 1e-6
    threads: int = 0

    def resolve_backend(self) -> str:
        env = os.environ.get("NRCC_SOLVER", "").strip()
        if env:
            return env
        if self.backend and self.backend != "auto":
            return self.backend
        return "scipy"


@dataclass(frozen=True)
class Solution:
    """Result of one solve.

    ``values`` is present iff the backend produced an incumbent (always for
    ``optimal``, sometimes for ``time_limit``).  ``objective`` is in the
    model's own sense (no sign flip for maximization).
    """

    status: str
    objective: float | None
    values: np.ndarray | None
    gap: float | None
    wall_time_s: float
    backend: str
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def value(self, var_id: int) -> float:
        if self.values is None:
            raise SolverError(f"no incumbent in status {self.status!r}")
        return float(self.values[var_id])

    def value_array(self, var_ids) -> np.ndarray:
        if self.values is None:
            raise SolverError(f"no incumbent in status {self.status!r}")
        return self.values[np.asarray(var_ids, dtype=int)]


class MilpModel:
    """In-memory MILP: bounded variables, linear rows, one linear objective.

    Variables and rows are referred to by integer ids returned from
    :meth:`add_var` / :meth:`add_constr`.  Names must be unique; they only
    matter for diagnostics and MPS comments.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self._var_name_set: set[str] = set()
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []
        self.row_names: list[str] = []
        self._row_name_set: set[str] = set()
        self.row_vars: list[list[int]] = []
        self.row_coefs: list[list[float]] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.obj: dict[int, float] = {}
        self.obj_sense: str = "min"
        self._has_objective = False

    # ---- building ----

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_constrs(self) -> int:
        return len(self.row_names)

    def add_var(
        self,
        name: str,
        lb: float = 0.0,
        ub: float = INF,
        integer: bool = False,
    ) -> int:
        if name in self._var_name_set:
            raise ModelError(f"duplicate variable name {name!r}")
        if math.isnan(lb) or math.isnan(ub) or lb > ub:
            raise ModelError(f"bad bounds [{lb}, {ub}] for {name!r}")
        self._var_name_set.add(name)
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.integer.append(bool(integer))
        return self.num_vars - 1

    def add_binary(self, name: str) -> int:
        return self.add_var(name, 0.0, 1.0, integer=True)

    def _check_terms(self, terms) -> tuple[list[int], list[float]]:
        merged: dict[int, float] = {}
        items = terms.items() if isinstance(terms, dict) else terms
        for var_id, coef in items:
            if not 0 <= var_id < self.num_vars:
                raise ModelError(f"unknown variable id {var_id}")
            if math.isnan(coef) or math.isinf(coef):
                raise ModelError(f"non-finite coefficient on var {var_id}")
            merged[var_id] = merged.get(var_id, 0.0) + float(coef)
        return list(merged.keys()), list(merged.values())

    def add_constr(self, terms, sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in _SENSES:
            raise ModelError(f"sense must be one of {_SENSES}, got {sense!r}")
        if math.isnan(rhs) or math.isinf(rhs):
            raise ModelError(f"non-finite rhs {rhs}")
        var_ids, coefs = self._check_terms(terms)
        if name is None:
            name = f"r{self.num_constrs}"
        if name in self._row_name_set:
            raise ModelError(f"duplicate constraint name {name!r}")
        self._row_name_set.add(name)
        self.row_names.append(name)
        self.row_vars.append(var_ids)
        self.row_coefs.append(coefs)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        return self.num_constrs - 1

    def set_objective(self, terms, sense: str = "min") -> None:
        if sense not in ("min", "max"):
            raise ModelError(f"objective sense must be min or max, got {sense!r}")
        var_ids, coefs = self._check_terms(terms)
        self.obj = dict(zip(var_ids, coefs))
        self.obj_sense = sense
        self._has_objective = True

    @property
    def has_objective(self) -> bool:
        return self._has_objective

    def set_var_bounds(self, var_id: int, lb: float, ub: float) -> None:
        if not 0 <= var_id < self.num_vars:
            raise ModelError(f"unknown variable id {var_id}")
        if math.isnan(lb) or math.isnan(ub) or lb > ub:
            raise ModelError(f"bad bounds [{lb}, {ub}]")
        self.lb[var_id] = float(lb)
        self.ub[var_id] = float(ub)

    def fix_var(self, var_id: int, value: float) -> None:
        self.set_var_bounds(var_id, value, value)

    def var_bounds(self, var_id: int) -> tuple[float, float]:
        return self.lb[var_id], self.ub[var_id]

    def pop_constrs(self, n: int) -> None:
        """Remove the last ``n`` rows (used to retract temporary pins)."""
        if not 0 <= n <= self.num_constrs:
            raise ModelError(f"cannot pop {n} of {self.num_constrs} rows")
        for _ in range(n):
            self._row_name_set.discard(self.row_names.pop())
            self.row_vars.pop()
            self.row_coefs.pop()
            self.senses.pop()
            self.rhs.pop()

    def integer_var_ids(self) -> list[int]:
        return [i for i, f in enumerate(self.integer) if f]

    def objective_value(self, values: np.ndarray) -> float:
        return float(sum(c * values[i] for i, c in self.obj.items()))

    def constraint_residuals(self, values: np.ndarray) -> np.ndarray:
        """Signed violation per row: positive means the row is violated."""
        out = np.zeros(self.num_constrs)
        for j in range(self.num_constrs):
            lhs = float(
                sum(c * values[i] for i, c in zip(self.row_vars[j], self.row_coefs[j]))
            )
            if self.senses[j] == "<=":
                out[j] = lhs - self.rhs[j]
            elif self.senses[j] == ">=":
                out[j] = self.rhs[j] - lhs
            else:
                out[j] = abs(lhs - self.rhs[j])
        return out


# ---- solve dispatch ----


def solve(model: MilpModel, options: SolverOptions | None = None, relaxed: bool = False) -> Solution:
    """Solve ``model`` with the resolved backend.

    ``relaxed=True`` drops integrality (LP relaxation) without mutating the
    model.  Raises :class:`ModelError` for models with no objective and
    :class:`SolverError` when the backend cannot run or an accepted solution
    violates integrality beyond :data:`INTEGRALITY_TOL`.
    """
    if options is None:
        options = SolverOptions()
    if not model.has_objective:
        raise ModelError("model has no objective")
    if model.num_vars == 0:
        raise ModelError("model has no variables")
    backend = options.resolve_backend()
    if backend == "scipy":
        sol = _solve_scipy(model, options, relaxed)
    elif backend in ("highs-cli", "cbc-cli"):
        sol = _solve_cli(model, options, relaxed, backend)
    else:
        raise SolverError(f"unknown solver backend {backend!r}")
    _check_integrality(model, sol, relaxed)
    return sol


def _check_integrality(model: MilpModel, sol: Solution, relaxed: bool) -> None:
    if relaxed or sol.values is None or sol.status != OPTIMAL:
        return
    for i in model.integer_var_ids():
        x = sol.values[i]
        if abs(x - round(x)) > INTEGRALITY_TOL:
            raise SolverError(
                f"integer variable {model.var_names[i]!r} = {x} breaks integrality"
            )


def _constraint_arrays(model: MilpModel):
    rows, cols, data = [], [], []
    for j, (vids, coefs) in enumerate(zip(model.row_vars, model.row_coefs)):
        rows.extend([j] * len(vids))
        cols.extend(vids)
        data.extend(coefs)
    a = sp.csc_matrix(
        (data, (rows, cols)), shape=(model.num_constrs, model.num_vars)
    )
    lo = np.full(model.num_constrs, -INF)
    hi = np.full(model.num_constrs, INF)
    rhs = np.asarray(model.rhs)
    for j, sense in enumerate(model.senses):
        if sense in ("<=", "=="):
            hi[j] = rhs[j]
        if sense in (">=", "=="):
            lo[j] = rhs[j]
    return a, lo, hi


def _solve_scipy(model: MilpModel, options: SolverOptions, relaxed: bool) -> Solution:
    n = model.num_vars
    sign = 1.0 if model.obj_sense == "min" else -1.0
    c = np.zeros(n)
    for i, coef in model.obj.items():
        c[i] = sign * coef
    if relaxed:
        integrality = np.zeros(n)
    else:
        integrality = np.asarray(model.integer, dtype=float)
    constraints = None
    if model.num_constrs:
        a, lo, hi = _constraint_arrays(model)
        constraints = LinearConstraint(a, lo, hi)
    bounds = Bounds(np.asarray(model.lb), np.asarray(model.ub))
    milp_options = {
        "disp": False,
        "presolve": True,
        "time_limit": options.time_limit_s,
        "mip_rel_gap": options.mip_gap,
    }
    t0 = time.perf_counter()
    res = milp(
        c=c,
        constraints=constraints,
        integrality=integrality,
        bounds=bounds,
        options=milp_options,
    )
    wall = time.perf_counter() - t0

    # scipy/HiGHS status codes: 0 optimal, 1 iteration or time limit,
    # 2 infeasible, 3 unbounded, 4 other
    values = np.asarray(res.x, dtype=float) if res.x is not None else None
    objective = sign * float(res.fun) if res.fun is not None else None
    gap = getattr(res, "mip_gap", None)
    gap = float(gap) if gap is not None else None
    if res.status == 0:
        status = OPTIMAL
    elif res.status == 1:
        status = TIME_LIMIT
    elif res.status == 2:
        status, values, objective = INFEASIBLE, None, None
    elif res.status == 3:
        status, values, objective = UNBOUNDED, None, None
    else:
        status, values, objective = ERROR, None, None
    return Solution(
        status=status,
        objective=objective,
        values=values,
        gap=gap,
        wall_time_s=wall,
        backend="scipy",
        message=str(res.message),
    )


# ---- MPS export / import ----


def _fmt(value: float) -> str:
    # repr() is the shortest string that round-trips the float exactly
    return repr(float(value))


def export_mps(model: MilpModel, path: str) -> dict[str, str]:
    """Write fixed-form MPS.  Returns {generated name: original name}.

    Generated names (``C0000001``/``R0000001``) keep the 8-character limit of
    fixed-form MPS; the original names are preserved in comment lines.
    Numeric fields use shortest-round-trip formatting, so a re-import
    reproduces coefficients bit-exactly.
    """
    if model.num_vars == 0:
        raise ModelError("cannot export an empty model")
    if not model.has_objective:
        raise ModelError("cannot export a model with no objective")

    col_name = {i: f"C{i + 1:07d}" for i in range(model.num_vars)}
    row_name = {j: f"R{j + 1:07d}" for j in range(model.num_constrs)}
    name_map = {"OBJ": "<objective>"}
    sense_tag = {"<=": "L", ">=": "G", "==": "E"}

    # column-major coefficient lists: MPS requires each column contiguous
    by_col: list[list[tuple[str, float]]] = [[] for _ in range(model.num_vars)]
    for i, coef in model.obj.items():
        by_col[i].append(("OBJ", coef))
    for j, (vids, coefs) in enumerate(zip(model.row_vars, model.row_coefs)):
        for i, coef in zip(vids, coefs):
            by_col[i].append((row_name[j], coef))

    lines: list[str] = []
    lines.append(f"* fixed-form MPS export of model {model.name!r}")
    lines.append("* generated-to-original name map:")
    for i in range(model.num_vars):
        name_map[col_name[i]] = model.var_names[i]
        lines.append(f"*   {col_name[i]} = {model.var_names[i]}")
    for j in range(model.num_constrs):
        name_map[row_name[j]] = model.row_names[j]
        lines.append(f"*   {row_name[j]} = {model.row_names[j]}")
    lines.append(f"NAME          {model.name[:60]}")
    if model.obj_sense == "max":
        lines.append("OBJSENSE")
        lines.append("    MAXIMIZE")
    lines.append("ROWS")
    lines.append(" N  OBJ")
    for j in range(model.num_constrs):
        lines.append(f" {sense_tag[model.senses[j]]}  {row_name[j]}")
    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for i in range(model.num_vars):
        if model.integer[i] != in_int:
            tag = "'INTORG'" if model.integer[i] else "'INTEND'"
            lines.append(f"    M{marker:07d}  'MARKER'                 {tag}")
            marker += 1
            in_int = model.integer[i]
        entries = by_col[i] or [("OBJ", 0.0)]  # keep empty columns visible
        for row, coef in entries:
            lines.append(f"    {col_name[i]:<10}{row:<10}{_fmt(coef)}")
    if in_int:
        lines.append(f"    M{marker:07d}  'MARKER'                 'INTEND'")
    lines.append("RHS")
    for j in range(model.num_constrs):
        if model.rhs[j] != 0.0:
            lines.append(f"    RHS       {row_name[j]:<10}{_fmt(model.rhs[j])}")
    lines.append("BOUNDS")
    for i in range(model.num_vars):
        lb, ub, name = model.lb[i], model.ub[i], col_name[i]
        default = lb == 0.0 and ub == INF and not model.integer[i]
        if default:
            continue
        if lb == ub:
            lines.append(f" FX BND       {name:<10}{_fmt(lb)}")
            continue
        if lb == -INF and ub == INF:
            lines.append(f" FR BND       {name}")
            continue
        if lb == -INF:
            lines.append(f" MI BND       {name}")
        else:
            lines.append(f" LO BND       {name:<10}{_fmt(lb)}")
        if ub == INF:
            lines.append(f" PL BND       {name}")
        else:
            lines.append(f" UP BND       {name:<10}{_fmt(ub)}")
    lines.append("ENDATA")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return name_map


def import_mps(path: str) -> MilpModel:
    """Parse an MPS file written by :func:`export_mps` or a solver.

    Handles OBJSENSE, INTORG/INTEND markers, one or two coefficient pairs per
    COLUMNS/RHS line and the UP/LO/FX/FR/MI/PL/BV/UI/LI bound codes.  RANGES
    sections are rejected.
    """
    model_name = "imported"
    section = None
    obj_sense = "min"
    obj_row: str | None = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    col_order: list[str] = []
    col_set: set[str] = set()
    col_integer: dict[str, bool] = {}
    col_entries: dict[str, list[tuple[str, float]]] = {}
    rhs_map: dict[str, float] = {}
    bounds_map: dict[str, list[float]] = {}
    explicit_lb: set[str] = set()
    in_int = False

    def touch_col(name: str) -> None:
        if name not in col_set:
            col_set.add(name)
            col_order.append(name)
            col_integer[name] = in_int
            col_entries[name] = []

    with open(path) as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("*"):
                continue
            if not line[0].isspace():
                tokens = line.split()
                section = tokens[0].upper()
                if section == "NAME" and len(tokens) > 1:
                    model_name = tokens[1]
                if section == "OBJSENSE" and len(tokens) > 1:
                    obj_sense = "max" if tokens[1].upper().startswith("MAX") else "min"
                if section == "RANGES":
                    raise ModelError("RANGES sections are not supported")
                if section == "ENDATA":
                    break
                continue
            tokens = line.split()
            if section == "OBJSENSE":
                obj_sense = "max" if tokens[0].upper().startswith("MAX") else "min"
            elif section == "ROWS":
                tag, name = tokens[0].upper(), tokens[1]
                if tag == "N":
                    if obj_row is None:
                        obj_row = name
                elif tag in ("L", "G", "E"):
                    row_sense[name] = {"L": "<=", "G": ">=", "E": "=="}[tag]
                    row_order.append(name)
                else:
                    raise ModelError(f"unknown row tag {tag!r}")
            elif section == "COLUMNS":
                if len(tokens) >= 3 and tokens[1] == "'MARKER'":
                    in_int = tokens[2] == "'INTORG'"
                    continue
                if "'MARKER'" in tokens:
                    in_int = "'INTORG'" in tokens
                    continue
                col = tokens[0]
                touch_col(col)
                for k in range(1, len(tokens) - 1, 2):
                    col_entries[col].append((tokens[k], float(tokens[k + 1])))
            elif section == "RHS":
                for k in range(1, len(tokens) - 1, 2):
                    rhs_map[tokens[k]] = float(tokens[k + 1])
            elif section == "BOUNDS":
                code = tokens[0].upper()
                col = tokens[2]
                touch_col(col)
                lb, ub = bounds_map.setdefault(col, [0.0, INF])
                if code == "UP":
                    ub = float(tokens[3])
                    # classic MPS quirk: UP with a negative bound and no
                    # explicit lower bound drops the lower bound to -inf
                    if ub < 0 and col not in explicit_lb:
                        lb = -INF
                elif code == "LO":
                    lb = float(tokens[3])
                    explicit_lb.add(col)
                elif code == "FX":
                    lb = ub = float(tokens[3])
                    explicit_lb.add(col)
                elif code == "FR":
                    lb, ub = -INF, INF
                elif code == "MI":
                    lb = -INF
                elif code == "PL":
                    ub = INF
                elif code == "BV":
                    lb, ub = 0.0, 1.0
                    col_integer[col] = True
                elif code == "UI":
                    ub = float(tokens[3])
                    col_integer[col] = True
                elif code == "LI":
                    lb = float(tokens[3])
                    explicit_lb.add(col)
                    col_integer[col] = True
                else:
                    raise ModelError(f"unknown bound code {code!r}")
                bounds_map[col] = [lb, ub]
            elif section in (None, "NAME", "ENDATA"):
                continue
            else:
                raise ModelError(f"unknown MPS section {section!r}")

    if obj_row is None:
        raise ModelError("MPS file has no objective (N) row")

    model = MilpModel(model_name)
    col_id: dict[str, int] = {}
    for name in col_order:
        lb, ub = bounds_map.get(name, [0.0, INF])
        col_id[name] = model.add_var(name, lb, ub, integer=col_integer[name])
    row_terms: dict[str, list[tuple[int, float]]] = {name: [] for name in row_order}
    obj_terms: list[tuple[int, float]] = []
    for name in col_order:
        for row, coef in col_entries[name]:
            if row == obj_row:
                if coef != 0.0:
                    obj_terms.append((col_id[name], coef))
            elif row in row_terms:
                row_terms[row].append((col_id[name], coef))
            else:
                raise ModelError(f"coefficient for unknown row {row!r}")
    for name in row_order:
        model.add_constr(row_terms[name], row_sense[name], rhs_map.get(name, 0.0), name)
    model.set_objective(obj_terms, obj_sense)
    return model


# ---- external CLI backends ----


def _solve_cli(model: MilpModel, options: SolverOptions, relaxed: bool, backend: str) -> Solution:
    exe_name = {"highs-cli": "highs", "cbc-cli": "cbc"}[backend]
    exe = shutil.which(exe_name)
    if exe is None:
        raise SolverError(f"solver binary {exe_name!r} not found on PATH")
    work = model
    if relaxed:
        work = _relaxed_copy(model)
    with tempfile.TemporaryDirectory(prefix="nrcc_mps_") as tmp:
        mps_path = os.path.join(tmp, "model.mps")
        sol_path = os.path.join(tmp, "model.sol")
        export_mps(work, mps_path)
        var_of = {f"C{i + 1:07d}": i for i in range(work.num_vars)}
        if backend == "highs-cli":
            opt_path = os.path.join(tmp, "highs.opt")
            with open(opt_path, "w") as fh:
                fh.write(f"time_limit = {options.time_limit_s}\n")
                fh.write(f"mip_rel_gap = {options.mip_gap}\n")
                if options.threads:
                    fh.write(f"threads = {options.threads}\n")
            cmd = [exe, "--solution_file", sol_path, "--options_file", opt_path, mps_path]
        else:
            cmd = [exe, mps_path, "-seconds", str(options.time_limit_s),
                   "-ratioGap", str(options.mip_gap)]
            if work.obj_sense == "max":
                cmd += ["-direction", "maximize"]
            cmd += ["-printingOptions", "all", "solve", "-solution", sol_path]
        t0 = time.perf_counter()
        try:
            proc = subprocess.run(
                cmd, capture_output=True, text=True,
                timeout=options.time_limit_s + 60.0,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise SolverError(f"{exe_name} failed to run: {exc}") from exc
        wall = time.perf_counter() - t0
        if backend == "highs-cli":
            status, raw_values = parse_highs_solution(
                open(sol_path).read() if os.path.exists(sol_path) else "",
                proc.stdout,
            )
        else:
            status, raw_values = parse_cbc_solution(
                open(sol_path).read() if os.path.exists(sol_path) else ""
            )
    values = None
    objective = None
    if raw_values is not None:
        values = np.zeros(work.num_vars)
        for gen, val in raw_values.items():
            if gen in var_of:
                values[var_of[gen]] = val
        objective = work.objective_value(values)
    return Solution(
        status=status,
        objective=objective,
        values=values,
        gap=None,
        wall_time_s=wall,
        backend=backend,
        message=f"{exe_name} exit code {proc.returncode}",
    )


def _relaxed_copy(model: MilpModel) -> MilpModel:
    out = MilpModel(model.name)
    for i in range(model.num_vars):
        out.add_var(model.var_names[i], model.lb[i], model.ub[i], integer=False)
    for j in range(model.num_constrs):
        out.add_constr(
            list(zip(model.row_vars[j], model.row_coefs[j])),
            model.senses[j], model.rhs[j], model.row_names[j],
        )
    out.set_objective(dict(model.obj), model.obj_sense)
    return out


_HIGHS_STATUS = {
    "optimal": OPTIMAL,
    "infeasible": INFEASIBLE,
    "unbounded": UNBOUNDED,
    "time limit reached": TIME_LIMIT,
}


def parse_highs_solution(sol_text: str, stdout: str = "") -> tuple[str, dict[str, float] | None]:
    """Parse a HiGHS ``--solution_file`` dump (raw style).

    Returns (status, {column name: value} or None).  Status falls back to
    scanning stdout's ``Model   status`` line when the file is missing.
    """
    status = None
    values: dict[str, float] | None = None
    lines = sol_text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line == "Model status":
            i += 1
            while i < len(lines) and not lines[i].strip():
                i += 1
            if i < len(lines):
                status = _HIGHS_STATUS.get(lines[i].strip().lower(), None)
        elif line.startswith("# Columns"):
            n = int(line.split()[-1])
            values = {}
            for k in range(1, n + 1):
                name, val = lines[i + k].split()[:2]
                values[name] = float(val)
            i += n
        elif line.startswith("# Rows"):
            break
        i += 1
    if status is None:
        for line in stdout.splitlines():
            if "status" in line.lower() and ":" in line:
                tail = line.split(":", 1)[1].strip().lower()
                status = _HIGHS_STATUS.get(tail)
                if status:
                    break
    if status is None:
        status = ERROR
    if status != OPTIMAL and status != TIME_LIMIT:
        values = None
    return status, values


def parse_cbc_solution(sol_text: str) -> tuple[str, dict[str, float] | None]:
    """Parse a CBC ``-solution`` file: status header line, then value rows."""
    lines = [ln for ln in sol_text.splitlines() if ln.strip()]
    if not lines:
        return ERROR, None
    header = lines[0].lower()
    if "optimal" in header:
        status = OPTIMAL
    elif "infeasible" in header:
        status = INFEASIBLE
    elif "unbounded" in header:
        status = UNBOUNDED
    elif "stopped" in header:
        status = TIME_LIMIT
    else:
        status = ERROR
    if status not in (OPTIMAL, TIME_LIMIT):
        return status, None
    values: dict[str, float] = {}
    for line in lines[1:]:
        tokens = line.split()
        if len(tokens) >= 3 and tokens[0].lstrip("*").isdigit():
            values[tokens[1]] = float(tokens[2])
    return status, values
