"""Independent checks on published results.

Nothing here trusts the branch-and-bound path.  The enumeration oracle
solves small mixed-integer models by trying every binary assignment and
solving one continuous restriction each; it is the ground truth the test
suite compares the main pipeline against.  The deliverability checks go the
other way: investments are frozen at the published plan and the operating
problem is re-solved for screening patterns and for randomly sampled calls,
reporting any call the network cannot actually serve.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import mipcore, products
from .mipcore import INF, MilpModel, ModelError, Solution, SolverOptions
from .netmodel import Case, ResolvedWindow, resolve_window
from .opfeas import (
    CallTrajectory,
    CaseIndex,
    add_investment_vars,
    build_index,
    build_operational_block,
    investment_cost_terms,
)
from .products import CallSetParams, InvestmentDecision, P1Result, call_admissible

ORACLE_MAX_BINARIES = 20
# violation threshold on elastic slacks and residuals, per unit
RESIDUAL_TOL_PU = 1e-6


# ---- brute-force enumeration oracle ----


def _is_better(sense: str, candidate: float, incumbent: float) -> bool:
    return candidate < incumbent if sense == "min" else candidate > incumbent


def enumerate_milp(model: MilpModel, options: SolverOptions | None = None) -> Solution:
    """Optimum by exhausting binary assignments, one continuous LP each.

    Assignments already narrowed by the caller's bounds are respected, so a
    fixed binary stays fixed.  Ties keep the first assignment in
    lexicographic 0/1 order, which makes the result deterministic.
    """
    options = options or SolverOptions()
    bins = model.integer_var_ids()
    if len(bins) > ORACLE_MAX_BINARIES:
        raise ModelError(
            f"enumeration over {len(bins)} binaries exceeds the "
            f"{ORACLE_MAX_BINARIES}-binary cap"
        )
    choices = []
    saved = {}
    for b in bins:
        lb, ub = model.var_bounds(b)
        saved[b] = (lb, ub)
        choices.append([v for v in (0.0, 1.0) if lb - 1e-9 <= v <= ub + 1e-9])
    best = None
    wall = 0.0
    try:
        for bits in itertools.product(*choices):
            for b, val in zip(bins, bits):
                model.set_var_bounds(b, val, val)
            sol = mipcore.solve(model, options, relaxed=True)
            wall += sol.wall_time_s
            if sol.status != mipcore.OPTIMAL:
                continue
            if best is None or _is_better(model.obj_sense, sol.objective, best.objective):
                best = sol
    finally:
        for b, (lb, ub) in saved.items():
            model.set_var_bounds(b, lb, ub)
    if best is None:
        return Solution(
            status=mipcore.INFEASIBLE, objective=math.nan, values=None,
            gap=math.nan, wall_time_s=wall, backend="enum",
            message="every binary assignment is infeasible",
        )
    return Solution(
        status=best.status, objective=best.objective, values=best.values,
        gap=0.0, wall_time_s=wall, backend="enum", message=best.message,
    )


def enumerate_lex(
    model: MilpModel, stages: list, options: SolverOptions | None = None
) -> Solution:
    """Lexicographic minimum via enumeration, one pass per stage.

    Earlier stage optima are pinned with temporary rows that are retracted
    before returning, so the caller's model is left unchanged.
    """
    added = 0
    best = None
    try:
        for i, terms in enumerate(stages):
            model.set_objective(terms, "min")
            best = enumerate_milp(model, options)
            if best.status != mipcore.OPTIMAL:
                return best
            if i < len(stages) - 1:
                eps = products.LEX_EPS_REL * max(1.0, abs(best.objective))
                model.add_constr(terms, "<=", best.objective + eps, f"olex{i + 1}")
                added += 1
    finally:
        model.pop_constrs(added)
    return best


def _oracle_model1(idx: CaseIndex, options: SolverOptions) -> dict:
    case = idx.case
    model, h = products.build_model1(idx)
    sol = enumerate_milp(model, options)
    if sol.status != mipcore.OPTIMAL:
        raise ModelError(f"oracle baseline: {sol.status}")
    decisions = products.extract_investments(sol, idx, h.invest)
    shed = 0.0
    for sid, block in h.blocks.items():
        shed += idx.weights[sid] * block.shed_kwh(sol, idx.base, idx.grid.dt_hours)
    return {
        "objective": sol.objective,
        "gamma0": products.investment_cost(decisions, idx) + case.budget.voll * shed,
        "baselines_kw": {
            sid: block.psub_kw(sol, idx.base) for sid, block in h.blocks.items()
        },
        "investments": decisions,
    }


def _oracle_peaks(idx: CaseIndex, options: SolverOptions) -> dict:
    case = idx.case
    model = MilpModel("oracle-expected")
    invest = add_investment_vars(model, idx)
    block = build_operational_block(model, idx, "expected", invest, "oexp")
    terms = list(investment_cost_terms(idx, invest))
    scale = case.budget.voll * idx.base * idx.grid.dt_hours
    terms += [(int(v), scale) for v in block.shed_var_ids()]
    model.set_objective(terms, "min")
    sol = enumerate_milp(model, options)
    if sol.status != mipcore.OPTIMAL:
        raise ModelError(f"oracle expected peaks: {sol.status}")
    ps = block.psub_kw(sol, idx.base)
    return {
        "lambda_d_kw": max(float(ps.max()), 0.0),
        "lambda_r_kw": max(float(-ps.min()), 0.0),
    }


def _oracle_model2(idx: CaseIndex, tier: int, context: dict, options: SolverOptions) -> dict:
    case = idx.case
    dg = case.budget.delta_gammas[tier]
    gamma0 = context.get("gamma0")
    if gamma0 is None:
        gamma0 = _oracle_model1(idx, options)["gamma0"]
    peaks = context.get("peaks")
    if peaks is None:
        peaks = _oracle_peaks(idx, options)
    model, h = products.build_model2(
        idx, gamma0 + dg, peaks["lambda_d_kw"], peaks["lambda_r_kw"]
    )
    sol = enumerate_lex(model, products.lexicographic_stages(h), options)
    if sol.status != mipcore.OPTIMAL:
        raise ModelError(f"oracle caps tier {tier}: {sol.status}")
    lam_d = sol.value(h.lam_d) * idx.base
    lam_r = sol.value(h.lam_r) * idx.base
    w = case.budget.w_peak
    return {
        "lambda_d_kw": lam_d,
        "lambda_r_kw": lam_r,
        "objective_kw": w * max(lam_d - peaks["lambda_d_kw"], 0.0)
        + (1.0 - w) * max(lam_r - peaks["lambda_r_kw"], 0.0),
        "gamma0": gamma0,
        "peaks": peaks,
    }


def _oracle_model3(idx: CaseIndex, tier: int, context: dict, options: SolverOptions) -> dict:
    case = idx.case
    dg = case.budget.delta_gammas[tier]
    baselines = context.get("baselines_kw")
    gamma0 = context.get("gamma0")
    if baselines is None or gamma0 is None:
        m1 = _oracle_model1(idx, options)
        baselines = m1["baselines_kw"]
        gamma0 = m1["gamma0"]
    caps = context.get("caps")
    if caps is None:
        caps = _oracle_model2(
            idx, tier, {"gamma0": gamma0, "peaks": context.get("peaks")}, options
        )
    model, h = products.build_model3(
        idx, gamma0 + dg, caps["lambda_d_kw"], caps["lambda_r_kw"], baselines
    )
    sol = enumerate_milp(model, options)
    if sol.status != mipcore.OPTIMAL:
        raise ModelError(f"oracle envelope tier {tier}: {sol.status}")
    windows = {}
    objective_kw = 0.0
    for w in case.windows:
        r_dn = max(sol.value(h.r_down[w.id]), 0.0) * idx.base
        r_up = max(sol.value(h.r_up[w.id]), 0.0) * idx.base
        windows[w.id] = (r_dn, r_up)
        objective_kw += w.rho * (w.beta_down * r_dn + w.beta_up * r_up)
    return {
        "objective_kw": objective_kw,
        "windows": windows,
        "gamma0": gamma0,
        "caps": caps,
        "baselines_kw": baselines,
    }


def _oracle_model4(
    idx: CaseIndex, tier: int, variant: str, context: dict, options: SolverOptions
) -> dict:
    case = idx.case
    dg = case.budget.delta_gammas[tier]
    env = context.get("envelope")
    if env is None:
        env = _oracle_model3(idx, tier, context, options)
    spec_by_id = {w.id: w for w in case.windows}
    floors = {}
    for wid, (r_dn, r_up) in env["windows"].items():
        spec = spec_by_id[wid]
        floors[wid] = products.WindowEnvelope(
            window_id=wid, r_down_kw=r_dn, r_up_kw=r_up,
            e_down_kwh=spec.theta_down_h * r_dn, e_up_kwh=spec.theta_up_h * r_up,
        )
    model, h = products.build_model4(
        idx, env["gamma0"] + dg,
        env["caps"]["lambda_d_kw"], env["caps"]["lambda_r_kw"],
        env["baselines_kw"], floors, variant,
    )
    sol = enumerate_milp(model, options)
    if sol.status != mipcore.OPTIMAL:
        raise ModelError(f"oracle governance-{variant} tier {tier}: {sol.status}")
    return {"eta_kw": max(sol.value(h.eta), 0.0) * idx.base, "envelope": env}


def enumerate_oracle(
    case: Case,
    model_id: str,
    tier: int = 0,
    variant: str = "a",
    context: dict | None = None,
    options: SolverOptions | None = None,
    idx: CaseIndex | None = None,
) -> dict:
    """Ground-truth optimum of one pipeline stage by binary enumeration.

    ``context`` may carry upstream oracle outputs (``gamma0``, ``peaks``,
    ``baselines_kw``, ``caps``, ``envelope``) to avoid recomputing the
    chain; anything missing is recomputed by enumeration, never by the
    main solve path.
    """
    idx = idx or build_index(case)
    options = options or case.solver
    context = dict(context or {})
    if model_id == "model1":
        return _oracle_model1(idx, options)
    if model_id == "expected_peaks":
        return _oracle_peaks(idx, options)
    if model_id == "model2":
        return _oracle_model2(idx, tier, context, options)
    if model_id == "model3":
        return _oracle_model3(idx, tier, context, options)
    if model_id == "model4":
        return _oracle_model4(idx, tier, variant, context, options)
    raise ValueError(f"unknown model id {model_id!r}")


# ---- screening re-solve with the plan frozen ----


def _fix_plan(model: MilpModel, idx: CaseIndex, invest, decisions) -> None:
    by_id = {d.id: d for d in decisions}
    for cand in idx.case.network.candidates:
        d = by_id[cand.id]
        model.fix_var(invest.u[cand.id], 1.0 if d.built else 0.0)
        if cand.id in invest.v:
            model.fix_var(invest.v[cand.id], d.size_kw / idx.base if d.built else 0.0)


def screening_resolve(
    case: Case,
    tier_result: P1Result,
    options: SolverOptions | None = None,
    idx: CaseIndex | None = None,
) -> dict:
    """Re-solve every screening block with the envelope plan frozen.

    Blocks are enumerated at the coefficient level (pattern kinds times
    scenarios), so the count per window does not collapse when a published
    rating is zero.  Shedding is allowed and minimized; any shed on any
    block means the plan cannot serve that screening call.
    """
    idx = idx or build_index(case)
    options = options or case.solver
    model = MilpModel("screening-resolve")
    invest = add_investment_vars(model, idx)
    _fix_plan(model, idx, invest, tier_result.investments)
    windows = [resolve_window(w, idx.grid) for w in case.windows]
    blocks = {}
    terms = []
    for wi, rw in enumerate(windows):
        w = rw.spec
        env = tier_result.envelope(w.id)
        own = set(rw.service_steps())
        others = sorted(
            set().union(*(set(r.service_steps()) for r in windows if r is not rw))
            if len(windows) > 1 else set()
        )
        cap_steps = [
            t for t in range(idx.grid.total_steps)
            if t not in own and t not in set(others)
        ]
        pairs = products.pattern_pairs(w, idx.grid.dt_hours)
        for si, scen in enumerate(case.scenarios.scenarios):
            baseline = tier_result.baselines_kw[scen.id]
            for pi, (kd, cd, ku, cu) in enumerate(pairs):
                block = build_operational_block(
                    model, idx, scen.id, invest, f"r{wi}s{si}p{pi}", allow_shed=True
                )
                call = CallTrajectory(
                    w.id, cd * env.r_down_kw, cu * env.r_up_kw
                )
                for day_steps in rw.service_by_day:
                    for i, t in enumerate(day_steps):
                        target = (
                            baseline[t] - call.xi_down_kw[i] + call.xi_up_kw[i]
                        ) / idx.base
                        model.add_constr(
                            {block.psub[t]: 1.0}, "==", target,
                            f"{block.block_id}.svc[{t}]",
                        )
                for t in others:
                    model.add_constr(
                        {block.psub[t]: 1.0}, "==", baseline[t] / idx.base,
                        f"{block.block_id}.pin[{t}]",
                    )
                ld = tier_result.lambda_d_kw / idx.base
                lr = tier_result.lambda_r_kw / idx.base
                for t in cap_steps:
                    model.add_constr(
                        {block.psub[t]: 1.0}, "<=", ld, f"{block.block_id}.cd[{t}]"
                    )
                    model.add_constr(
                        {block.psub[t]: -1.0}, "<=", lr, f"{block.block_id}.cr[{t}]"
                    )
                blocks[(w.id, scen.id, kd, ku)] = block
                terms += [(int(v), 1.0) for v in block.shed_var_ids()]
    model.set_objective(terms, "min")
    sol = mipcore.solve(model, options, relaxed=True)
    if sol.status != mipcore.OPTIMAL:
        return {
            "blocks": len(blocks), "status": sol.status,
            "worst_shed_pu": math.inf, "worst_residual_pu": math.inf,
        }
    worst_shed = 0.0
    for block in blocks.values():
        ids = block.shed_var_ids()
        if len(ids):
            worst_shed = max(worst_shed, float(sol.value_array(ids).max()))
    residuals = model.constraint_residuals(sol.values)
    return {
        "blocks": len(blocks),
        "status": sol.status,
        "worst_shed_pu": worst_shed,
        "worst_residual_pu": float(residuals.max(initial=0.0)),
    }


# ---- Monte-Carlo deliverability ----


def _sample_box(rng, r_kw: float, e_kwh: float, h: int, dt_hours: float) -> np.ndarray:
    if r_kw <= 0.0:
        return np.zeros(h)
    xi = rng.uniform(0.0, r_kw, h)
    total = float(xi.sum()) * dt_hours
    if total > e_kwh:
        # proportional pull-back onto the energy budget; biased toward the
        # simplex face but cheap and admissible by construction
        xi = xi * (e_kwh / total)
    return xi


def _sample_vertex(rng, r_kw: float, e_kwh: float, h: int, dt_hours: float) -> np.ndarray:
    if r_kw <= 0.0:
        return np.zeros(h)
    tau = int(math.floor(e_kwh / (r_kw * dt_hours) + 1e-9))
    tau = min(tau, h)
    if tau <= 0:
        return np.zeros(h)
    xi = np.zeros(h)
    xi[rng.choice(h, size=tau, replace=False)] = r_kw
    return xi


def sample_calls(
    params: CallSetParams,
    window_id: str,
    h: int,
    dt_hours: float,
    n: int,
    rng: np.random.Generator,
) -> list[CallTrajectory]:
    """n admissible calls: three quarters box-uniform, one quarter vertex."""
    calls = []
    n_vertex = n // 4
    for _ in range(n - n_vertex):
        calls.append(CallTrajectory(
            window_id,
            _sample_box(rng, params.r_down_kw, params.e_down_kwh, h, dt_hours),
            _sample_box(rng, params.r_up_kw, params.e_up_kwh, h, dt_hours),
        ))
    for _ in range(n_vertex):
        calls.append(CallTrajectory(
            window_id,
            _sample_vertex(rng, params.r_down_kw, params.e_down_kwh, h, dt_hours),
            _sample_vertex(rng, params.r_up_kw, params.e_up_kwh, h, dt_hours),
        ))
    return calls


def _call_residual_kw(
    idx: CaseIndex,
    decisions: list[InvestmentDecision],
    baseline_kw: np.ndarray,
    rw: ResolvedWindow,
    other_steps: list[int],
    cap_steps: list[int],
    lambda_d_kw: float,
    lambda_r_kw: float,
    call: CallTrajectory,
    scenario_id: str,
    options: SolverOptions,
) -> float | None:
    """Worst elastic slack (kW) needed to serve one call in one scenario.

    Coupling, pin and cap rows get nonnegative slack variables whose sum is
    minimized; zero means the call is deliverable as published.  Returns
    None when the LP itself fails.
    """
    model = MilpModel("verify-call")
    invest = add_investment_vars(model, idx)
    _fix_plan(model, idx, invest, decisions)
    block = build_operational_block(
        model, idx, scenario_id, invest, "vf", allow_shed=False
    )
    slack_ids = []

    def slack(name):
        v = model.add_var(name, 0.0, INF)
        slack_ids.append(v)
        return v

    for day_steps in rw.service_by_day:
        for i, t in enumerate(day_steps):
            target = (baseline_kw[t] - call.xi_down_kw[i] + call.xi_up_kw[i]) / idx.base
            model.add_constr(
                {block.psub[t]: 1.0, slack(f"su[{t}]"): 1.0, slack(f"sd[{t}]"): -1.0},
                "==", target, f"svc[{t}]",
            )
    for t in other_steps:
        model.add_constr(
            {block.psub[t]: 1.0, slack(f"pu[{t}]"): 1.0, slack(f"pd[{t}]"): -1.0},
            "==", baseline_kw[t] / idx.base, f"pin[{t}]",
        )
    ld = lambda_d_kw / idx.base
    lr = lambda_r_kw / idx.base
    for t in cap_steps:
        model.add_constr(
            {block.psub[t]: 1.0, slack(f"cu[{t}]"): -1.0}, "<=", ld, f"cd[{t}]"
        )
        model.add_constr(
            {block.psub[t]: -1.0, slack(f"cl[{t}]"): -1.0}, "<=", lr, f"cr[{t}]"
        )
    model.set_objective([(v, 1.0) for v in slack_ids], "min")
    sol = mipcore.solve(model, options, relaxed=True)
    if sol.status != mipcore.OPTIMAL:
        return None
    worst = float(sol.value_array(np.array(slack_ids)).max(initial=0.0))
    return worst * idx.base


def verify_envelope(
    case: Case,
    tier_result: P1Result,
    n_samples: int = 100,
    seed: int = 0,
    options: SolverOptions | None = None,
    idx: CaseIndex | None = None,
    tier: int | None = None,
    jobs: int = 1,
) -> list[dict]:
    """Monte-Carlo deliverability test of a published envelope.

    Per window: the screening patterns realized at the published ratings
    are always checked and must pass; n_samples random admissible calls
    follow.  A call counts as one violation if any scenario cannot serve
    it within tolerance.  One report dict per window, with the core keys
    tier/window/n/violations/worst_residual_kw/seed plus screening and
    failure counters.
    """
    idx = idx or build_index(case)
    options = options or case.solver
    windows = [resolve_window(w, idx.grid) for w in case.windows]
    scenario_ids = [s.id for s in case.scenarios.scenarios]
    reports = []
    for rw in windows:
        w = rw.spec
        env = tier_result.envelope(w.id)
        params = env.params()
        h = len(w.service_steps)
        own = set(rw.service_steps())
        others = sorted(
            set().union(*(set(r.service_steps()) for r in windows if r is not rw))
            if len(windows) > 1 else set()
        )
        cap_steps = [
            t for t in range(idx.grid.total_steps)
            if t not in own and t not in set(others)
        ]
        screening = [
            CallTrajectory(w.id, cd * env.r_down_kw, cu * env.r_up_kw)
            for kd, cd, ku, cu in products.pattern_pairs(w, idx.grid.dt_hours)
        ]
        rng = np.random.default_rng(seed)
        sampled = sample_calls(params, w.id, h, idx.grid.dt_hours, n_samples, rng)
        for call in sampled:
            assert call_admissible(params, call, idx.grid.dt_hours), \
                "sampler produced an inadmissible call"

        def check(call):
            worst = 0.0
            for sid in scenario_ids:
                res = _call_residual_kw(
                    idx, tier_result.investments, tier_result.baselines_kw[sid],
                    rw, others, cap_steps,
                    tier_result.lambda_d_kw, tier_result.lambda_r_kw,
                    call, sid, options,
                )
                if res is None:
                    return None
                worst = max(worst, res)
            return worst

        def run(calls):
            if jobs > 1:
                with ThreadPoolExecutor(max_workers=jobs) as pool:
                    return list(pool.map(check, calls))
            return [check(c) for c in calls]

        tol_kw = RESIDUAL_TOL_PU * idx.base
        screen_res = run(screening)
        samp_res = run(sampled)
        failures = sum(1 for r in screen_res + samp_res if r is None)
        screen_viol = sum(1 for r in screen_res if r is not None and r > tol_kw)
        viol = sum(1 for r in samp_res if r is not None and r > tol_kw)
        finite = [r for r in screen_res + samp_res if r is not None]
        screen_finite = [r for r in screen_res if r is not None]
        reports.append({
            "tier": tier if tier is not None else tier_result.delta_gamma,
            "window": w.id,
            "n": n_samples,
            "violations": viol,
            "worst_residual_kw": max(finite, default=math.inf),
            "seed": seed,
            "screening_calls": len(screening),
            "screening_violations": screen_viol,
            "worst_screening_residual_kw": max(screen_finite, default=math.inf),
            "solver_failures": failures,
            "violation_rate": viol / n_samples if n_samples else 0.0,
        })
    return reports


__all__ = [
    "ORACLE_MAX_BINARIES",
    "RESIDUAL_TOL_PU",
    "enumerate_milp",
    "enumerate_lex",
    "enumerate_oracle",
    "screening_resolve",
    "sample_calls",
    "verify_envelope",
]
