"""Flexibility product models over one feeder.

The pipeline per budget tier k (relative budget Gamma_0 + delta_gamma_k):

* **baseline** (:func:`solve_model1`): least-cost plan minimizing annualized
  investment plus expected energy-not-served; its cost anchors the budget
  schedule and its substation profile p-bar is the baseline every later
  product references.
* **caps** (:func:`solve_model2`): tightest import/export caps
  (lambda_D, lambda_R) buyable within the tier budget, scored against the
  expected-scenario reference peaks with a lexicographic tie-break.
* **envelope** (:func:`solve_model3`): widest service-window range/energy
  envelope (R, E = theta R) deliverable within budget while honoring the
  tier caps outside the window, for every stress pattern and scenario.
* **governance** (:func:`solve_model4`): smallest rebound band eta that a
  re-planned system needs to honor the published envelope, under three
  variants of where the band applies.

Direction rule: a window direction with theta == 0 sells no energy, so its
range is fixed at zero rather than left free.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import mipcore
from .mipcore import INF, MilpModel, SolverOptions, Solution
from .netmodel import Case, ResolvedWindow, ServiceWindowSpec, resolve_window
from .opfeas import (
    CallTrajectory,
    CaseIndex,
    InvestmentVars,
    add_investment_vars,
    apply_baseline_pin,
    apply_deviation_band,
    apply_peak_caps,
    apply_service_coupling_ranges,
    build_index,
    build_operational_block,
    investment_cost_terms,
)

# slack added to tier budget right-hand sides so a baseline cost returned a
# hair below its true optimum can never make tier 0 infeasible
BUDGET_EPS_REL = 1e-7
# pin tolerance between lexicographic stages
LEX_EPS_REL = 1e-8

PATTERN_KINDS = ("base", "sust", "start", "end")


class StageError(RuntimeError):
    """A model stage did not reach a usable solution."""

    def __init__(self, stage: str, status: str, message: str = ""):
        self.stage = stage
        self.status = status
        super().__init__(f"{stage}: solver status {status!r} {message}".rstrip())


# ---- call sets and stress patterns ----


@dataclass(frozen=True)
class CallSetParams:
    """Published envelope of one window: per-direction range and energy."""

    r_down_kw: float
    r_up_kw: float
    e_down_kwh: float
    e_up_kwh: float

    @classmethod
    def from_ratings(
        cls, window: ServiceWindowSpec, r_down_kw: float, r_up_kw: float
    ) -> "CallSetParams":
        return cls(
            r_down_kw=r_down_kw,
            r_up_kw=r_up_kw,
            e_down_kwh=window.theta_down_h * r_down_kw,
            e_up_kwh=window.theta_up_h * r_up_kw,
        )


def call_admissible(
    params: CallSetParams, call: CallTrajectory, dt_hours: float, tol: float = 1e-9
) -> bool:
    """True iff the call lies in the window's admissible set."""
    for xi, r, e in (
        (call.xi_down_kw, params.r_down_kw, params.e_down_kwh),
        (call.xi_up_kw, params.r_up_kw, params.e_up_kwh),
    ):
        xi = np.asarray(xi, dtype=float)
        if xi.size and (xi.min() < -tol or xi.max() > r + tol):
            return False
        if float(xi.sum()) * dt_hours > e + tol:
            return False
    return True


def pattern_coefficients(
    theta_h: float, h: int, dt_hours: float
) -> list[tuple[str, np.ndarray]]:
    """Per-direction stress patterns as coefficients of R, duplicates removed.

    Closed forms over the h service steps: base is zero; sustained delivers
    theta/(h*dt) of R every step; front/back-loaded deliver R on the first
    and last floor(theta/dt) steps.  theta is clamped to the window length
    (with a warning) so the sustained pattern never exceeds R.
    """
    if theta_h <= 0.0:
        return [("base", np.zeros(h))]
    theta_eff = theta_h
    if theta_h > h * dt_hours:
        theta_eff = h * dt_hours
        warnings.warn(
            f"theta = {theta_h} h exceeds the window length {h * dt_hours} h; "
            f"clamped to {theta_eff} h",
            RuntimeWarning,
            stacklevel=2,
        )
    out: list[tuple[str, np.ndarray]] = [("base", np.zeros(h))]
    sust = np.full(h, theta_eff / (h * dt_hours))
    tau = int(math.floor(theta_eff / dt_hours + 1e-9))
    start = np.zeros(h)
    start[:tau] = 1.0
    end = np.zeros(h)
    end[h - tau:] = 1.0
    seen = {out[0][1].tobytes()}
    for kind, coef in (("sust", sust), ("start", start), ("end", end)):
        key = coef.tobytes()
        if key not in seen:
            seen.add(key)
            out.append((kind, coef))
    return out


def pattern_pairs(
    window: ServiceWindowSpec, dt_hours: float
) -> list[tuple[str, np.ndarray, str, np.ndarray]]:
    """Cross product of per-direction pattern coefficients, in fixed order."""
    h = len(window.service_steps)
    downs = pattern_coefficients(window.theta_down_h, h, dt_hours)
    ups = pattern_coefficients(window.theta_up_h, h, dt_hours)
    return [(kd, cd, ku, cu) for (kd, cd), (ku, cu) in itertools.product(downs, ups)]


@dataclass(frozen=True)
class StressPattern:
    """One realized screening call (kW trajectories over the window steps)."""

    kind_down: str
    kind_up: str
    xi_down_kw: np.ndarray
    xi_up_kw: np.ndarray

    def call(self, window_id: str) -> CallTrajectory:
        return CallTrajectory(window_id, self.xi_down_kw, self.xi_up_kw)


def gen_stress_patterns(
    window: ServiceWindowSpec, r_down_kw: float, r_up_kw: float, dt_hours: float
) -> list[StressPattern]:
    """Realized screening calls for the given ratings, duplicates removed.

    Realization can collapse patterns (any rating of zero folds everything
    onto the base call), so the count depends on the ratings; the
    coefficient-level enumeration in :func:`pattern_pairs` does not.
    """
    out: list[StressPattern] = []
    seen = set()
    for kd, cd, ku, cu in pattern_pairs(window, dt_hours):
        xi_d = cd * r_down_kw
        xi_u = cu * r_up_kw
        key = (xi_d.tobytes(), xi_u.tobytes())
        if key in seen:
            continue
        seen.add(key)
        out.append(StressPattern(kd, ku, xi_d, xi_u))
    return out


# ---- shared result pieces ----


@dataclass(frozen=True)
class InvestmentDecision:
    id: str
    kind: str
    built: bool
    size_kw: float


def _round_binary(x: float) -> int:
    return int(round(x))


def extract_investments(
    sol: Solution, idx: CaseIndex, invest: InvestmentVars
) -> list[InvestmentDecision]:
    out = []
    for cand in idx.case.network.candidates:
        built = _round_binary(sol.value(invest.u[cand.id])) == 1
        if cand.kind == "storage":
            size = sol.value(invest.v[cand.id]) * idx.base if built else 0.0
            size = min(max(size, 0.0), cand.p_max_kw)
        elif cand.kind == "line_upgrade":
            size = cand.delta_s_max_kva if built else 0.0
        else:
            size = 0.0
        out.append(InvestmentDecision(cand.id, cand.kind, built, size))
    return out


def investment_cost(decisions: list[InvestmentDecision], idx: CaseIndex) -> float:
    cost = 0.0
    by_id = {c.id: c for c in idx.case.network.candidates}
    for d in decisions:
        if d.built:
            cand = by_id[d.id]
            cost += cand.fixed_cost
            if cand.kind == "storage":
                cost += cand.variable_cost * d.size_kw
    return cost


def _expected_shed_kwh(
    sol: Solution, idx: CaseIndex, blocks: dict, dt_hours: float
) -> float:
    total = 0.0
    for sid, block in blocks.items():
        total += idx.weights[sid] * block.shed_kwh(sol, idx.base, dt_hours)
    return total


def _profiles_kw(sol: Solution, idx: CaseIndex, blocks: dict) -> dict:
    return {
        "/".join(key) if isinstance(key, tuple) else key:
            [float(x) for x in block.psub_kw(sol, idx.base)]
        for key, block in blocks.items()
    }


def _check_status(sol: Solution, stage: str) -> str:
    if sol.status == mipcore.OPTIMAL:
        return sol.status
    if sol.status == mipcore.TIME_LIMIT and sol.values is not None:
        return sol.status
    raise StageError(stage, sol.status, sol.message)


# ---- Model 1: least-cost baseline plan ----


@dataclass(frozen=True)
class Model1Result:
    gamma0: float
    objective: float
    investments: list[InvestmentDecision]
    baselines_kw: dict
    expected_shed_kwh: float
    status: str
    wall_time_s: float


@dataclass(frozen=True)
class Model1Handles:
    invest: InvestmentVars
    blocks: dict


def build_model1(idx: CaseIndex) -> tuple[MilpModel, Model1Handles]:
    case = idx.case
    model = MilpModel("baseline-plan")
    invest = add_investment_vars(model, idx)
    blocks = {
        s.id: build_operational_block(model, idx, s.id, invest, f"m1.s{i}")
        for i, s in enumerate(case.scenarios.scenarios)
    }
    terms = list(investment_cost_terms(idx, invest))
    shed_scale = case.budget.voll * idx.base * idx.grid.dt_hours
    for sid, block in blocks.items():
        w = idx.weights[sid]
        terms += [(int(var), shed_scale * w) for var in block.shed_var_ids()]
    model.set_objective(terms, "min")
    return model, Model1Handles(invest=invest, blocks=blocks)


def solve_model1(
    case: Case, options: SolverOptions | None = None, idx: CaseIndex | None = None
) -> Model1Result:
    idx = idx or build_index(case)
    options = options or case.solver
    model, h = build_model1(idx)
    sol = mipcore.solve(model, options)
    status = _check_status(sol, "baseline")
    investments = extract_investments(sol, idx, h.invest)
    shed_kwh = _expected_shed_kwh(sol, idx, h.blocks, idx.grid.dt_hours)
    gamma0 = investment_cost(investments, idx) + case.budget.voll * shed_kwh
    baselines = {
        sid: block.psub_kw(sol, idx.base) for sid, block in h.blocks.items()
    }
    return Model1Result(
        gamma0=gamma0,
        objective=sol.objective,
        investments=investments,
        baselines_kw=baselines,
        expected_shed_kwh=shed_kwh,
        status=status,
        wall_time_s=sol.wall_time_s,
    )


@dataclass(frozen=True)
class ExpectedPeaks:
    lambda_d_kw: float
    lambda_r_kw: float
    cost: float
    status: str
    wall_time_s: float


def expected_peaks(
    case: Case, options: SolverOptions | None = None, idx: CaseIndex | None = None
) -> ExpectedPeaks:
    """Reference peaks: a fresh deterministic plan on the expected scenario.

    Only the substation peaks of that plan are kept; its investments are
    discarded.
    """
    idx = idx or build_index(case)
    options = options or case.solver
    model = MilpModel("expected-plan")
    invest = add_investment_vars(model, idx)
    block = build_operational_block(model, idx, "expected", invest, "mexp")
    terms = list(investment_cost_terms(idx, invest))
    shed_scale = case.budget.voll * idx.base * idx.grid.dt_hours
    terms += [(int(var), shed_scale) for var in block.shed_var_ids()]
    model.set_objective(terms, "min")
    sol = mipcore.solve(model, options)
    status = _check_status(sol, "expected-peaks")
    ps = block.psub_kw(sol, idx.base)
    return ExpectedPeaks(
        lambda_d_kw=max(float(ps.max()), 0.0),
        lambda_r_kw=max(float(-ps.min()), 0.0),
        cost=sol.objective,
        status=status,
        wall_time_s=sol.wall_time_s,
    )


# ---- Model 2: atemporal peak caps (P0) ----


@dataclass(frozen=True)
class P0Result:
    delta_gamma: float
    lambda_d_kw: float
    lambda_r_kw: float
    objective_kw: float
    investments: list[InvestmentDecision]
    fdn_cost: float
    expected_shed_kwh: float
    status: str
    wall_time_s: float


@dataclass(frozen=True)
class Model2Handles:
    invest: InvestmentVars
    blocks: dict
    lam_d: int
    lam_r: int
    a_d: int
    a_r: int
    obj_terms: list


def _budget_row(
    model: MilpModel,
    idx: CaseIndex,
    invest: InvestmentVars,
    shed_blocks,
    budget_abs: float,
) -> None:
    # shed_blocks: iterable of (scenario id, block) whose shed is billed
    terms = list(investment_cost_terms(idx, invest))
    shed_scale = idx.case.budget.voll * idx.base * idx.grid.dt_hours
    for sid, block in shed_blocks:
        w = idx.weights[sid]
        terms += [(int(var), shed_scale * w) for var in block.shed_var_ids()]
    eps = BUDGET_EPS_REL * max(1.0, abs(budget_abs))
    model.add_constr(terms, "<=", budget_abs + eps, "budget")


def build_model2(
    idx: CaseIndex,
    budget_abs: float,
    lambda_exp_d_kw: float,
    lambda_exp_r_kw: float,
) -> tuple[MilpModel, Model2Handles]:
    case = idx.case
    model = MilpModel("peak-caps")
    invest = add_investment_vars(model, idx)
    blocks = {
        s.id: build_operational_block(model, idx, s.id, invest, f"m2.s{i}")
        for i, s in enumerate(case.scenarios.scenarios)
    }
    lam_d = model.add_var("lambda_d", 0.0, INF)
    lam_r = model.add_var("lambda_r", 0.0, INF)
    a_d = model.add_var("excess_d", 0.0, INF)
    a_r = model.add_var("excess_r", 0.0, INF)
    for sid, block in blocks.items():
        for t in range(idx.grid.total_steps):
            model.add_constr(
                {block.psub[t]: 1.0, lam_d: -1.0}, "<=", 0.0, f"{block.block_id}.ld[{t}]"
            )
            model.add_constr(
                {block.psub[t]: -1.0, lam_r: -1.0}, "<=", 0.0, f"{block.block_id}.lr[{t}]"
            )
    model.add_constr({lam_d: 1.0, a_d: -1.0}, "<=", lambda_exp_d_kw / idx.base, "exd")
    model.add_constr({lam_r: 1.0, a_r: -1.0}, "<=", lambda_exp_r_kw / idx.base, "exr")
    _budget_row(model, idx, invest, blocks.items(), budget_abs)
    w = case.budget.w_peak
    obj_terms = [(a_d, w), (a_r, 1.0 - w)]
    model.set_objective(obj_terms, "min")
    return model, Model2Handles(
        invest=invest, blocks=blocks, lam_d=lam_d, lam_r=lam_r,
        a_d=a_d, a_r=a_r, obj_terms=obj_terms,
    )


def lexicographic_stages(h: Model2Handles) -> list[list[tuple[int, float]]]:
    """Objective term lists for the three tie-break stages, in order."""
    return [list(h.obj_terms), [(h.lam_d, 1.0)], [(h.lam_r, 1.0)]]


def solve_model2(
    case: Case,
    delta_gamma: float,
    gamma0: float,
    peaks: ExpectedPeaks,
    options: SolverOptions | None = None,
    idx: CaseIndex | None = None,
) -> P0Result:
    """Three sequential solves: primary score, then lambda_D, then lambda_R."""
    idx = idx or build_index(case)
    options = options or case.solver
    model, h = build_model2(idx, gamma0 + delta_gamma, peaks.lambda_d_kw, peaks.lambda_r_kw)
    stages = lexicographic_stages(h)
    wall = 0.0
    sol = None
    for i, terms in enumerate(stages):
        model.set_objective(terms, "min")
        sol = mipcore.solve(model, options)
        wall += sol.wall_time_s
        _check_status(sol, f"caps-stage-{i + 1}")
        if i < len(stages) - 1:
            eps = LEX_EPS_REL * max(1.0, abs(sol.objective))
            model.add_constr(terms, "<=", sol.objective + eps, f"lex{i + 1}")
    lam_d_kw = sol.value(h.lam_d) * idx.base
    lam_r_kw = sol.value(h.lam_r) * idx.base
    w = case.budget.w_peak
    objective_kw = w * max(lam_d_kw - peaks.lambda_d_kw, 0.0) + (1.0 - w) * max(
        lam_r_kw - peaks.lambda_r_kw, 0.0
    )
    investments = extract_investments(sol, idx, h.invest)
    shed_kwh = _expected_shed_kwh(sol, idx, h.blocks, idx.grid.dt_hours)
    return P0Result(
        delta_gamma=delta_gamma,
        lambda_d_kw=lam_d_kw,
        lambda_r_kw=lam_r_kw,
        objective_kw=objective_kw,
        investments=investments,
        fdn_cost=investment_cost(investments, idx) + case.budget.voll * shed_kwh,
        expected_shed_kwh=shed_kwh,
        status=sol.status,
        wall_time_s=wall,
    )


# ---- Models 3 and 4 share the block layout ----


@dataclass(frozen=True)
class ServiceModelHandles:
    invest: InvestmentVars
    r_down: dict
    r_up: dict
    e_down: dict
    e_up: dict
    blocks: dict          # (window id, scenario id, kind_down, kind_up) -> block
    base_blocks: dict     # (window id, scenario id) -> block
    eta: int | None = None


def _build_service_blocks(
    model: MilpModel,
    idx: CaseIndex,
    invest: InvestmentVars,
    baselines_kw: dict,
    windows: list[ResolvedWindow],
) -> tuple[dict, dict, dict]:
    """Blocks per (window, scenario, pattern pair) plus range variables."""
    case = idx.case
    dt = idx.grid.dt_hours
    r_down, r_up, e_down, e_up = {}, {}, {}, {}
    for rw in windows:
        w = rw.spec
        cap_pu = w.r_cap_kw / idx.base if math.isfinite(w.r_cap_kw) else INF
        r_down[w.id] = model.add_var(
            f"rdn[{w.id}]", 0.0, cap_pu if w.theta_down_h > 0 else 0.0
        )
        r_up[w.id] = model.add_var(
            f"rup[{w.id}]", 0.0, cap_pu if w.theta_up_h > 0 else 0.0
        )
        e_down[w.id] = model.add_var(f"edn[{w.id}]", 0.0, INF)
        e_up[w.id] = model.add_var(f"eup[{w.id}]", 0.0, INF)
        model.add_constr(
            {e_down[w.id]: 1.0, r_down[w.id]: -w.theta_down_h}, "==", 0.0,
            f"etie_dn[{w.id}]",
        )
        model.add_constr(
            {e_up[w.id]: 1.0, r_up[w.id]: -w.theta_up_h}, "==", 0.0,
            f"etie_up[{w.id}]",
        )

    blocks, base_blocks = {}, {}
    for wi, rw in enumerate(windows):
        w = rw.spec
        pairs = pattern_pairs(w, dt)
        for si, scen in enumerate(case.scenarios.scenarios):
            baseline = baselines_kw[scen.id]
            for pi, (kd, cd, ku, cu) in enumerate(pairs):
                is_base = kd == "base" and ku == "base"
                block = build_operational_block(
                    model, idx, scen.id,
                    invest, f"w{wi}s{si}p{pi}",
                    allow_shed=is_base,
                )
                apply_service_coupling_ranges(
                    model, block, idx, baseline, rw,
                    cd, r_down[w.id], cu, r_up[w.id],
                )
                blocks[(w.id, scen.id, kd, ku)] = block
                if is_base:
                    base_blocks[(w.id, scen.id)] = block
    return blocks, base_blocks, {
        "r_down": r_down, "r_up": r_up, "e_down": e_down, "e_up": e_up,
    }


def _billing_blocks(base_blocks: dict, windows: list[ResolvedWindow]):
    """One no-call block per scenario whose shed enters the budget row.

    Base blocks of different windows pin the same steps, so any window's
    copy carries the no-call day; the first window's is billed to avoid
    counting the same unserved energy once per window.
    """
    first = windows[0].spec.id
    return [(sid, blk) for (wid, sid), blk in base_blocks.items() if wid == first]


def _other_service_steps(windows: list[ResolvedWindow], skip: str) -> set[int]:
    out: set[int] = set()
    for rw in windows:
        if rw.spec.id != skip:
            out.update(rw.service_steps())
    return out


def build_model3(
    idx: CaseIndex,
    budget_abs: float,
    lambda_d_kw: float,
    lambda_r_kw: float,
    baselines_kw: dict,
) -> tuple[MilpModel, ServiceModelHandles]:
    """Envelope sizing: widest weighted ranges deliverable within budget.

    Per block, p_sub is pinned to baseline minus the pattern call on the
    window's own service steps, pinned to plain baseline on other windows'
    service steps, and capped by the tier's (lambda_D, lambda_R) elsewhere.
    Only base-pattern blocks may shed, and only their shed is billed.
    """
    case = idx.case
    model = MilpModel("envelope")
    invest = add_investment_vars(model, idx)
    windows = [resolve_window(w, idx.grid) for w in case.windows]
    blocks, base_blocks, rvars = _build_service_blocks(
        model, idx, invest, baselines_kw, windows
    )

    all_steps = range(idx.grid.total_steps)
    for rw in windows:
        w = rw.spec
        own = set(rw.service_steps())
        others = _other_service_steps(windows, w.id)
        cap_steps = [t for t in all_steps if t not in own and t not in others]
        for (wid, sid, kd, ku), block in blocks.items():
            if wid != w.id:
                continue
            baseline = baselines_kw[sid]
            if others:
                apply_baseline_pin(model, block, idx, baseline, sorted(others))
            apply_peak_caps(model, block, idx, lambda_d_kw, lambda_r_kw, cap_steps)

    _budget_row(model, idx, invest, _billing_blocks(base_blocks, windows), budget_abs)
    terms = []
    for rw in windows:
        w = rw.spec
        terms.append((rvars["r_down"][w.id], w.rho * w.beta_down))
        terms.append((rvars["r_up"][w.id], w.rho * w.beta_up))
    model.set_objective(terms, "max")
    return model, ServiceModelHandles(
        invest=invest,
        r_down=rvars["r_down"], r_up=rvars["r_up"],
        e_down=rvars["e_down"], e_up=rvars["e_up"],
        blocks=blocks, base_blocks=base_blocks,
    )


@dataclass(frozen=True)
class WindowEnvelope:
    window_id: str
    r_down_kw: float
    r_up_kw: float
    e_down_kwh: float
    e_up_kwh: float

    def params(self) -> CallSetParams:
        return CallSetParams(
            self.r_down_kw, self.r_up_kw, self.e_down_kwh, self.e_up_kwh
        )


@dataclass(frozen=True)
class P1Result:
    delta_gamma: float
    windows: list[WindowEnvelope]
    objective_kw: float
    investments: list[InvestmentDecision]
    lambda_d_kw: float
    lambda_r_kw: float
    profiles_kw: dict
    baselines_kw: dict = field(repr=False, default=None)
    status: str = "optimal"
    wall_time_s: float = 0.0

    def envelope(self, window_id: str) -> WindowEnvelope:
        for env in self.windows:
            if env.window_id == window_id:
                return env
        raise KeyError(window_id)


def solve_model3(
    case: Case,
    delta_gamma: float,
    gamma0: float,
    p0: P0Result,
    m1: Model1Result,
    options: SolverOptions | None = None,
    idx: CaseIndex | None = None,
) -> P1Result:
    idx = idx or build_index(case)
    options = options or case.solver
    if not case.windows:
        raise StageError("envelope", "skipped", "case has no service windows")
    model, h = build_model3(
        idx, gamma0 + delta_gamma, p0.lambda_d_kw, p0.lambda_r_kw, m1.baselines_kw
    )
    sol = mipcore.solve(model, options)
    status = _check_status(sol, "envelope")
    envelopes = []
    for w in case.windows:
        r_dn = sol.value(h.r_down[w.id]) * idx.base
        r_up = sol.value(h.r_up[w.id]) * idx.base
        r_dn = max(r_dn, 0.0)
        r_up = max(r_up, 0.0)
        envelopes.append(WindowEnvelope(
            window_id=w.id,
            r_down_kw=r_dn,
            r_up_kw=r_up,
            e_down_kwh=w.theta_down_h * r_dn,
            e_up_kwh=w.theta_up_h * r_up,
        ))
    objective_kw = sum(
        w.rho * (w.beta_down * env.r_down_kw + w.beta_up * env.r_up_kw)
        for w, env in zip(case.windows, envelopes)
    )
    return P1Result(
        delta_gamma=delta_gamma,
        windows=envelopes,
        objective_kw=objective_kw,
        investments=extract_investments(sol, idx, h.invest),
        lambda_d_kw=p0.lambda_d_kw,
        lambda_r_kw=p0.lambda_r_kw,
        profiles_kw=_profiles_kw(sol, idx, h.blocks),
        baselines_kw=m1.baselines_kw,
        status=status,
        wall_time_s=sol.wall_time_s,
    )


# ---- Model 4: rebound governance (P2) ----

VARIANTS = ("a", "b", "c")


@dataclass(frozen=True)
class P2Result:
    delta_gamma: float
    variant: str
    eta_kw: float
    windows: list[WindowEnvelope]
    investments: list[InvestmentDecision]
    floors: dict
    profiles_kw: dict
    status: str
    wall_time_s: float


def _governance_steps(
    rw: ResolvedWindow, variant: str, total_steps: int, others: set[int]
) -> tuple[list[int], list[int], list[int]]:
    """(banded, capped, pinned) global steps for one window block."""
    own = set(rw.service_steps())
    if variant == "a":
        banded = set(rw.protected_steps()) - others
        capped = set(range(total_steps)) - own - others - banded
        pinned = others
    elif variant == "b":
        banded = set(rw.rebound_steps()) - others
        capped = set()
        pinned = set(range(total_steps)) - own - banded
    elif variant == "c":
        banded = set(range(total_steps)) - own - others
        capped = set()
        pinned = others
    else:
        raise ValueError(f"unknown governance variant {variant!r}")
    return sorted(banded), sorted(capped), sorted(pinned)


def build_model4(
    idx: CaseIndex,
    budget_abs: float,
    lambda_d_kw: float,
    lambda_r_kw: float,
    baselines_kw: dict,
    floors: dict,
    variant: str,
) -> tuple[MilpModel, ServiceModelHandles]:
    """Governance sizing: min eta honoring the published envelope floors.

    The deviation band replaces the tier caps on the governed steps
    (protected set for variants a/c, rebound set for b); variant b pins
    p_sub to baseline on every step that is neither service nor rebound.
    """
    case = idx.case
    model = MilpModel(f"governance-{variant}")
    invest = add_investment_vars(model, idx)
    windows = [resolve_window(w, idx.grid) for w in case.windows]
    blocks, base_blocks, rvars = _build_service_blocks(
        model, idx, invest, baselines_kw, windows
    )
    eta = model.add_var("eta", 0.0, INF)

    for w in case.windows:
        env = floors[w.id]
        model.set_var_bounds(
            rvars["r_down"][w.id], env.r_down_kw / idx.base,
            model.var_bounds(rvars["r_down"][w.id])[1],
        )
        model.set_var_bounds(
            rvars["r_up"][w.id], env.r_up_kw / idx.base,
            model.var_bounds(rvars["r_up"][w.id])[1],
        )

    total = idx.grid.total_steps
    for rw in windows:
        w = rw.spec
        others = _other_service_steps(windows, w.id)
        banded, capped, pinned = _governance_steps(rw, variant, total, others)
        for (wid, sid, kd, ku), block in blocks.items():
            if wid != w.id:
                continue
            baseline = baselines_kw[sid]
            if banded:
                apply_deviation_band(model, block, idx, baseline, banded, eta)
            if capped:
                apply_peak_caps(model, block, idx, lambda_d_kw, lambda_r_kw, capped)
            if pinned:
                apply_baseline_pin(model, block, idx, baseline, pinned)

    _budget_row(model, idx, invest, _billing_blocks(base_blocks, windows), budget_abs)
    model.set_objective({eta: 1.0}, "min")
    return model, ServiceModelHandles(
        invest=invest,
        r_down=rvars["r_down"], r_up=rvars["r_up"],
        e_down=rvars["e_down"], e_up=rvars["e_up"],
        blocks=blocks, base_blocks=base_blocks, eta=eta,
    )


def solve_model4(
    case: Case,
    delta_gamma: float,
    gamma0: float,
    variant: str,
    p0: P0Result,
    p1: P1Result,
    m1: Model1Result,
    options: SolverOptions | None = None,
    idx: CaseIndex | None = None,
) -> P2Result:
    idx = idx or build_index(case)
    options = options or case.solver
    floors = {env.window_id: env for env in p1.windows}
    model, h = build_model4(
        idx, gamma0 + delta_gamma, p0.lambda_d_kw, p0.lambda_r_kw,
        m1.baselines_kw, floors, variant,
    )
    sol = mipcore.solve(model, options)
    status = _check_status(sol, f"governance-{variant}")
    envelopes = []
    for w in case.windows:
        r_dn = max(sol.value(h.r_down[w.id]) * idx.base, 0.0)
        r_up = max(sol.value(h.r_up[w.id]) * idx.base, 0.0)
        envelopes.append(WindowEnvelope(
            window_id=w.id,
            r_down_kw=r_dn,
            r_up_kw=r_up,
            e_down_kwh=w.theta_down_h * r_dn,
            e_up_kwh=w.theta_up_h * r_up,
        ))
    return P2Result(
        delta_gamma=delta_gamma,
        variant=variant,
        eta_kw=max(sol.value(h.eta), 0.0) * idx.base,
        windows=envelopes,
        investments=extract_investments(sol, idx, h.invest),
        floors={wid: (env.r_down_kw, env.r_up_kw) for wid, env in floors.items()},
        profiles_kw=_profiles_kw(sol, idx, h.blocks),
        status=status,
        wall_time_s=sol.wall_time_s,
    )
