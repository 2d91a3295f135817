"""Single-feeder operational blocks.

One *block* is a full copy of the feeder's operating constraints over the
horizon for one scenario: linearized power flow in squared voltages, an
inscribed-octagon thermal limit per line, candidate-gated storage recourse
with cyclic per-day state of charge, optional load shedding at constant
power factor, and the substation import ``p_sub``.  Planning variables
(build binaries ``u``, storage ratings ``v``) are shared across blocks;
everything else is block-local.

All variables are per-unit on ``base_kva``; the public helpers accept and
return kW.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mipcore import INF, MilpModel, Solution
from .netmodel import Case, ResolvedWindow, expected_scenario

# inscribed regular octagon: vertices on the rating circle, so every face
# under-approximates it (max face depth cos(pi/8) ~ 0.076 of the radius)
_OCT_FACES = tuple(
    (math.cos((k + 0.5) * math.pi / 4.0), math.sin((k + 0.5) * math.pi / 4.0))
    for k in range(8)
)
_OCT_RHS = math.cos(math.pi / 8.0)


@dataclass(frozen=True)
class StorageInfo:
    cand_id: str
    bus: int
    p_max_pu: float
    e_max_pu_h: float
    duration_h: float
    eta_charge: float
    eta_discharge: float
    variable_cost_per_pu: float
    fixed_cost: float


@dataclass(frozen=True)
class UpgradeInfo:
    cand_id: str
    line: int
    delta_pu: float
    fixed_cost: float


@dataclass(frozen=True)
class RegulatorInfo:
    cand_id: str
    bus: int
    boost_max_pu2: float
    fixed_cost: float


@dataclass(frozen=True)
class CaseIndex:
    """Per-unit arrays and topology maps derived once from a case."""

    case: Case
    sub: int
    line_from: np.ndarray
    line_to: np.ndarray
    line_child: np.ndarray      # bus position of the downstream endpoint
    r2: np.ndarray              # 2 * r_pu
    x2: np.ndarray
    smax_pu: np.ndarray
    v2_lo: np.ndarray
    v2_hi: np.ndarray
    storages: tuple[StorageInfo, ...]
    upgrades: tuple[UpgradeInfo, ...]
    regulators: tuple[RegulatorInfo, ...]
    loads_p: dict
    loads_q: dict
    shed_ub: dict
    q_ratio: dict
    weights: dict

    @property
    def grid(self):
        return self.case.scenarios.grid

    @property
    def base(self) -> float:
        return self.case.network.base_kva

    @property
    def n_buses(self) -> int:
        return self.case.network.n_buses

    @property
    def n_lines(self) -> int:
        return len(self.case.network.lines)

    def scenario_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.case.scenarios.scenarios)


def build_index(case: Case) -> CaseIndex:
    net = case.network
    base = net.base_kva
    nb = net.n_buses
    lines = net.lines

    line_from = np.array([net.bus_position(l.from_bus) for l in lines], dtype=int)
    line_to = np.array([net.bus_position(l.to_bus) for l in lines], dtype=int)

    # orient the tree away from the substation to find each line's child end
    adjacency: dict[int, list[tuple[int, int]]] = {b: [] for b in range(nb)}
    for j in range(len(lines)):
        adjacency[line_from[j]].append((j, line_to[j]))
        adjacency[line_to[j]].append((j, line_from[j]))
    sub = net.bus_position(net.substation)
    child = np.full(len(lines), -1, dtype=int)
    seen = {sub}
    stack = [sub]
    while stack:
        here = stack.pop()
        for j, other in adjacency[here]:
            if other not in seen:
                child[j] = other
                seen.add(other)
                stack.append(other)

    line_pos = {l.id: j for j, l in enumerate(lines)}
    storages = tuple(
        StorageInfo(
            cand_id=c.id,
            bus=net.bus_position(c.target),
            p_max_pu=c.p_max_kw / base,
            e_max_pu_h=c.duration_h * c.p_max_kw / base,
            duration_h=c.duration_h,
            eta_charge=c.eta_charge,
            eta_discharge=c.eta_discharge,
            variable_cost_per_pu=c.variable_cost * base,
            fixed_cost=c.fixed_cost,
        )
        for c in net.storages()
    )
    upgrades = tuple(
        UpgradeInfo(c.id, line_pos[c.target], c.delta_s_max_kva / base, c.fixed_cost)
        for c in net.upgrades()
    )
    regulators = tuple(
        RegulatorInfo(c.id, net.bus_position(c.target), c.boost_max_pu2, c.fixed_cost)
        for c in net.regulators()
    )

    loads_p, loads_q, shed_ub, q_ratio, weights = {}, {}, {}, {}, {}
    profiles = list(case.scenarios.scenarios)
    profiles.append(expected_scenario(case.scenarios))
    for s in profiles:
        p = s.p_kw / base
        q = s.q_kvar / base
        loads_p[s.id] = p
        loads_q[s.id] = q
        shed_ub[s.id] = np.maximum(p, 0.0)
        ratio = np.zeros_like(p)
        np.divide(q, p, out=ratio, where=p > 0)
        q_ratio[s.id] = ratio
        weights[s.id] = s.weight

    return CaseIndex(
        case=case,
        sub=sub,
        line_from=line_from,
        line_to=line_to,
        line_child=child,
        r2=np.array([2.0 * l.r_pu for l in lines]),
        x2=np.array([2.0 * l.x_pu for l in lines]),
        smax_pu=np.array([l.s_max_kva / base for l in lines]),
        v2_lo=np.array([b.v_min_pu**2 for b in net.buses]),
        v2_hi=np.array([b.v_max_pu**2 for b in net.buses]),
        storages=storages,
        upgrades=upgrades,
        regulators=regulators,
        loads_p=loads_p,
        loads_q=loads_q,
        shed_ub=shed_ub,
        q_ratio=q_ratio,
        weights=weights,
    )


@dataclass(frozen=True)
class InvestmentVars:
    """Planning variable handles shared by all blocks of one model."""

    u: dict          # candidate id -> binary var
    v: dict          # storage candidate id -> rating var (pu)


def add_investment_vars(model: MilpModel, idx: CaseIndex) -> InvestmentVars:
    u: dict[str, int] = {}
    v: dict[str, int] = {}
    for cand in idx.case.network.candidates:
        u[cand.id] = model.add_binary(f"u[{cand.id}]")
    for st in idx.storages:
        v[st.cand_id] = model.add_var(f"vsize[{st.cand_id}]", 0.0, st.p_max_pu)
        # rating only exists when the unit is built
        model.add_constr(
            {v[st.cand_id]: 1.0, u[st.cand_id]: -st.p_max_pu},
            "<=", 0.0, f"gate[{st.cand_id}]",
        )
    return InvestmentVars(u=u, v=v)


def investment_cost_terms(idx: CaseIndex, invest: InvestmentVars) -> list[tuple[int, float]]:
    """Objective terms in dollars: fixed costs on u, variable costs on v."""
    terms = [(invest.u[c.id], c.fixed_cost) for c in idx.case.network.candidates]
    terms += [
        (invest.v[st.cand_id], st.variable_cost_per_pu) for st in idx.storages
    ]
    return terms


@dataclass(frozen=True)
class OperationalBlock:
    """Variable-id arrays for one scenario copy of the feeder."""

    block_id: str
    scenario_id: str
    psub: np.ndarray            # [T]
    qsub: np.ndarray            # [T]
    v2: np.ndarray              # [T, B]
    fp: np.ndarray              # [T, L]
    fq: np.ndarray              # [T, L]
    ch: np.ndarray              # [T, S]
    dis: np.ndarray             # [T, S]
    soc: np.ndarray             # [T, S]
    shed: np.ndarray            # [T, B], -1 where no shed variable exists
    boost: np.ndarray           # [T, R]

    def shed_var_ids(self) -> np.ndarray:
        return self.shed[self.shed >= 0]

    def psub_kw(self, sol: Solution, base: float) -> np.ndarray:
        return sol.value_array(self.psub) * base

    def shed_kwh(self, sol: Solution, base: float, dt_hours: float) -> float:
        ids = self.shed_var_ids()
        if ids.size == 0:
            return 0.0
        return float(sol.value_array(ids).sum()) * base * dt_hours


def build_operational_block(
    model: MilpModel,
    idx: CaseIndex,
    scenario_id: str,
    invest: InvestmentVars,
    block_id: str,
    allow_shed: bool = True,
) -> OperationalBlock:
    """Add one scenario copy of the feeder's operating constraints.

    Rows per step: nodal P/Q balance, one squared-voltage recursion per
    line (with the child bus's regulator boost when present), eight thermal
    faces per line (headroom gated by line-upgrade binaries), and a cyclic
    per-day state-of-charge recursion per storage candidate.
    """
    grid = idx.grid
    T, B, L = grid.total_steps, idx.n_buses, idx.n_lines
    S, R = len(idx.storages), len(idx.regulators)
    p_load = idx.loads_p[scenario_id]
    q_load = idx.loads_q[scenario_id]
    shed_cap = idx.shed_ub[scenario_id]
    ratio = idx.q_ratio[scenario_id]
    bid = block_id

    psub = np.empty(T, dtype=int)
    qsub = np.empty(T, dtype=int)
    v2 = np.empty((T, B), dtype=int)
    fp = np.empty((T, L), dtype=int)
    fq = np.empty((T, L), dtype=int)
    ch = np.empty((T, S), dtype=int)
    dis = np.empty((T, S), dtype=int)
    soc = np.empty((T, S), dtype=int)
    shed = np.full((T, B), -1, dtype=int)
    boost = np.empty((T, R), dtype=int)

    for t in range(T):
        psub[t] = model.add_var(f"{bid}.ps[{t}]", -INF, INF)
        qsub[t] = model.add_var(f"{bid}.qs[{t}]", -INF, INF)
        for b in range(B):
            if b == idx.sub:
                v2[t, b] = model.add_var(f"{bid}.v2[{t},{b}]", 1.0, 1.0)
            else:
                v2[t, b] = model.add_var(
                    f"{bid}.v2[{t},{b}]", idx.v2_lo[b], idx.v2_hi[b]
                )
            if allow_shed and shed_cap[t, b] > 0.0:
                shed[t, b] = model.add_var(f"{bid}.sh[{t},{b}]", 0.0, shed_cap[t, b])
        for j in range(L):
            fp[t, j] = model.add_var(f"{bid}.fp[{t},{j}]", -INF, INF)
            fq[t, j] = model.add_var(f"{bid}.fq[{t},{j}]", -INF, INF)
        for k, st in enumerate(idx.storages):
            ch[t, k] = model.add_var(f"{bid}.ch[{t},{k}]", 0.0, st.p_max_pu)
            dis[t, k] = model.add_var(f"{bid}.di[{t},{k}]", 0.0, st.p_max_pu)
            soc[t, k] = model.add_var(f"{bid}.sc[{t},{k}]", 0.0, st.e_max_pu_h)
        for k, reg in enumerate(idx.regulators):
            boost[t, k] = model.add_var(
                f"{bid}.bo[{t},{k}]", -reg.boost_max_pu2, reg.boost_max_pu2
            )

    reg_at_bus = {reg.bus: k for k, reg in enumerate(idx.regulators)}
    ups_at_line: dict[int, list[UpgradeInfo]] = {}
    for up in idx.upgrades:
        ups_at_line.setdefault(up.line, []).append(up)
    st_at_bus: dict[int, list[int]] = {}
    for k, st in enumerate(idx.storages):
        st_at_bus.setdefault(st.bus, []).append(k)

    dt = grid.dt_hours
    spd = grid.steps_per_day
    for t in range(T):
        # ---- nodal balance ----
        for b in range(B):
            p_terms: list[tuple[int, float]] = []
            q_terms: list[tuple[int, float]] = []
            if b == idx.sub:
                p_terms.append((psub[t], 1.0))
                q_terms.append((qsub[t], 1.0))
            for j in range(L):
                if idx.line_to[j] == b:
                    p_terms.append((fp[t, j], 1.0))
                    q_terms.append((fq[t, j], 1.0))
                elif idx.line_from[j] == b:
                    p_terms.append((fp[t, j], -1.0))
                    q_terms.append((fq[t, j], -1.0))
            for k in st_at_bus.get(b, ()):
                p_terms.append((dis[t, k], 1.0))
                p_terms.append((ch[t, k], -1.0))
            if shed[t, b] >= 0:
                p_terms.append((shed[t, b], 1.0))
                if ratio[t, b] != 0.0:
                    q_terms.append((shed[t, b], ratio[t, b]))
            model.add_constr(p_terms, "==", p_load[t, b], f"{bid}.pb[{t},{b}]")
            model.add_constr(q_terms, "==", q_load[t, b], f"{bid}.qb[{t},{b}]")

        # ---- voltage recursion and thermal faces ----
        for j in range(L):
            a, b2 = int(idx.line_from[j]), int(idx.line_to[j])
            terms = [
                (v2[t, b2], 1.0),
                (v2[t, a], -1.0),
                (fp[t, j], idx.r2[j]),
                (fq[t, j], idx.x2[j]),
            ]
            child = int(idx.line_child[j])
            if child in reg_at_bus:
                sign = -1.0 if child == b2 else 1.0
                terms.append((boost[t, reg_at_bus[child]], sign))
            model.add_constr(terms, "==", 0.0, f"{bid}.vd[{t},{j}]")

            rhs = _OCT_RHS * idx.smax_pu[j]
            for f, (ca, sa) in enumerate(_OCT_FACES):
                face = [(fp[t, j], ca), (fq[t, j], sa)]
                for up in ups_at_line.get(j, ()):
                    face.append((invest.u[up.cand_id], -_OCT_RHS * up.delta_pu))
                model.add_constr(face, "<=", rhs, f"{bid}.th[{t},{j},{f}]")

        # ---- regulator gating: boost collapses to zero unless built ----
        for k, reg in enumerate(idx.regulators):
            uk = invest.u[reg.cand_id]
            model.add_constr(
                {boost[t, k]: 1.0, uk: -reg.boost_max_pu2},
                "<=", 0.0, f"{bid}.ru[{t},{k}]",
            )
            model.add_constr(
                {boost[t, k]: -1.0, uk: -reg.boost_max_pu2},
                "<=", 0.0, f"{bid}.rl[{t},{k}]",
            )

        # ---- storage recourse ----
        day, pos = divmod(t, spd)
        t_prev = day * spd + (pos - 1) % spd
        for k, st in enumerate(idx.storages):
            vk = invest.v[st.cand_id]
            model.add_constr({ch[t, k]: 1.0, vk: -1.0}, "<=", 0.0, f"{bid}.cg[{t},{k}]")
            model.add_constr({dis[t, k]: 1.0, vk: -1.0}, "<=", 0.0, f"{bid}.dg[{t},{k}]")
            model.add_constr(
                {soc[t, k]: 1.0, vk: -st.duration_h}, "<=", 0.0, f"{bid}.sg[{t},{k}]"
            )
            model.add_constr(
                [
                    (soc[t, k], 1.0),
                    (soc[t_prev, k], -1.0),
                    (ch[t, k], -st.eta_charge * dt),
                    (dis[t, k], dt / st.eta_discharge),
                ],
                "==", 0.0, f"{bid}.se[{t},{k}]",
            )

    return OperationalBlock(
        block_id=bid,
        scenario_id=scenario_id,
        psub=psub,
        qsub=qsub,
        v2=v2,
        fp=fp,
        fq=fq,
        ch=ch,
        dis=dis,
        soc=soc,
        shed=shed,
        boost=boost,
    )


# ---- service products seen by the substation ----


@dataclass(frozen=True)
class CallTrajectory:
    """One realized call on a window's day instance (kW per service step)."""

    window_id: str
    xi_down_kw: np.ndarray
    xi_up_kw: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, CallTrajectory):
            return NotImplemented
        return (
            self.window_id == other.window_id
            and np.array_equal(self.xi_down_kw, other.xi_down_kw)
            and np.array_equal(self.xi_up_kw, other.xi_up_kw)
        )

    def __hash__(self):
        return hash((self.window_id, self.xi_down_kw.tobytes(), self.xi_up_kw.tobytes()))


def apply_peak_caps(
    model: MilpModel,
    block: OperationalBlock,
    idx: CaseIndex,
    lambda_d_kw: float,
    lambda_r_kw: float,
    steps,
) -> None:
    """Constant import/export caps on the given global steps."""
    ld = lambda_d_kw / idx.base
    lr = lambda_r_kw / idx.base
    for t in steps:
        model.add_constr({block.psub[t]: 1.0}, "<=", ld, f"{block.block_id}.capd[{t}]")
        model.add_constr({block.psub[t]: -1.0}, "<=", lr, f"{block.block_id}.capr[{t}]")


def apply_service_coupling(
    model: MilpModel,
    block: OperationalBlock,
    idx: CaseIndex,
    baseline_kw: np.ndarray,
    window: ResolvedWindow,
    call: CallTrajectory,
) -> None:
    """Pin ``p_sub`` to baseline minus the realized call on service steps."""
    for day_steps in window.service_by_day:
        for i, t in enumerate(day_steps):
            target = (
                baseline_kw[t] - call.xi_down_kw[i] + call.xi_up_kw[i]
            ) / idx.base
            model.add_constr(
                {block.psub[t]: 1.0}, "==", target, f"{block.block_id}.svc[{t}]"
            )


def apply_service_coupling_ranges(
    model: MilpModel,
    block: OperationalBlock,
    idx: CaseIndex,
    baseline_kw: np.ndarray,
    window: ResolvedWindow,
    coef_down: np.ndarray,
    r_down_var: int,
    coef_up: np.ndarray,
    r_up_var: int,
) -> None:
    """Coupling with the range as a variable: psub + cd*Rd - cu*Ru = pbar."""
    for day_steps in window.service_by_day:
        for i, t in enumerate(day_steps):
            model.add_constr(
                [
                    (block.psub[t], 1.0),
                    (r_down_var, float(coef_down[i])),
                    (r_up_var, -float(coef_up[i])),
                ],
                "==", baseline_kw[t] / idx.base, f"{block.block_id}.svc[{t}]",
            )


def apply_baseline_pin(
    model: MilpModel,
    block: OperationalBlock,
    idx: CaseIndex,
    baseline_kw: np.ndarray,
    steps,
) -> None:
    for t in steps:
        model.add_constr(
            {block.psub[t]: 1.0}, "==", baseline_kw[t] / idx.base,
            f"{block.block_id}.pin[{t}]",
        )


def apply_deviation_band(
    model: MilpModel,
    block: OperationalBlock,
    idx: CaseIndex,
    baseline_kw: np.ndarray,
    steps,
    eta_var: int,
) -> None:
    """|psub - baseline| <= eta on the given steps."""
    for t in steps:
        target = baseline_kw[t] / idx.base
        model.add_constr(
            {block.psub[t]: 1.0, eta_var: -1.0}, "<=", target,
            f"{block.block_id}.bu[{t}]",
        )
        model.add_constr(
            {block.psub[t]: -1.0, eta_var: -1.0}, "<=", -target,
            f"{block.block_id}.bl[{t}]",
        )


def zero_shed_residual_kw(model: MilpModel, sol: Solution, idx: CaseIndex) -> float:
    """Worst constraint violation of a solution, in kW equivalents."""
    residuals = model.constraint_residuals(sol.values)
    return float(residuals.max(initial=0.0)) * idx.base


__all__ = [
    "CaseIndex",
    "InvestmentVars",
    "OperationalBlock",
    "CallTrajectory",
    "build_index",
    "add_investment_vars",
    "investment_cost_terms",
    "build_operational_block",
    "apply_peak_caps",
    "apply_service_coupling",
    "apply_service_coupling_ranges",
    "apply_baseline_pin",
    "apply_deviation_band",
    "zero_shed_residual_kw",
]
