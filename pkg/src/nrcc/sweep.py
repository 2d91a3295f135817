"""Budget sweep: one baseline, then the product ladder per tier.

Per budget increment the order is caps, envelope, then the three
governance variants, each stage consuming the previous stage's published
values.  A tier-local infeasibility is recorded on that tier and the sweep
moves on; only a baseline failure aborts, because nothing downstream is
defined without it.

Every stage writes a JSON artifact under the output directory (baseline
plus one file per tier), keyed by the case fingerprint.  Re-running the
sweep reuses artifacts whose fingerprint still matches, which makes
interrupted sweeps resumable and lets the single-stage CLI commands
compose into the same menu.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import products
from .mipcore import ModelError, SolverError, SolverOptions
from .netmodel import Case
from .opfeas import build_index
from .products import (
    ExpectedPeaks,
    InvestmentDecision,
    Model1Result,
    P0Result,
    P1Result,
    P2Result,
    StageError,
    VARIANTS,
    WindowEnvelope,
)


@dataclass(frozen=True)
class TierOutcome:
    k: int
    delta_gamma: float
    p0: P0Result | None
    p0_error: dict | None
    p1: P1Result | None
    p1_error: dict | None
    p2: dict            # variant -> P2Result
    p2_errors: dict     # variant -> error dict


@dataclass(frozen=True)
class ProductMenu:
    case_name: str
    fingerprint: str
    baseline: Model1Result
    peaks: ExpectedPeaks
    tiers: list[TierOutcome]


# ---- artifact codecs ----


def _invs_to_json(decisions) -> list[dict]:
    return [
        {"id": d.id, "kind": d.kind, "built": d.built, "size_kw": d.size_kw}
        for d in decisions
    ]


def _invs_from_json(rows) -> list[InvestmentDecision]:
    return [InvestmentDecision(**row) for row in rows]


def _baseline_to_json(case: Case, m1: Model1Result, pk: ExpectedPeaks) -> dict:
    return {
        "fingerprint": case.fingerprint,
        "case": case.name,
        "gamma0": m1.gamma0,
        "objective": m1.objective,
        "expected_shed_kwh": m1.expected_shed_kwh,
        "status": m1.status,
        "wall_time_s": m1.wall_time_s,
        "investments": _invs_to_json(m1.investments),
        "baselines_kw": {
            sid: [float(x) for x in prof] for sid, prof in m1.baselines_kw.items()
        },
        "peaks": {
            "lambda_d_kw": pk.lambda_d_kw,
            "lambda_r_kw": pk.lambda_r_kw,
            "cost": pk.cost,
            "status": pk.status,
            "wall_time_s": pk.wall_time_s,
        },
    }


def _baseline_from_json(doc: dict) -> tuple[Model1Result, ExpectedPeaks]:
    m1 = Model1Result(
        gamma0=doc["gamma0"],
        objective=doc["objective"],
        investments=_invs_from_json(doc["investments"]),
        baselines_kw={
            sid: np.asarray(prof, dtype=float)
            for sid, prof in doc["baselines_kw"].items()
        },
        expected_shed_kwh=doc["expected_shed_kwh"],
        status=doc["status"],
        wall_time_s=doc["wall_time_s"],
    )
    p = doc["peaks"]
    return m1, ExpectedPeaks(
        lambda_d_kw=p["lambda_d_kw"], lambda_r_kw=p["lambda_r_kw"],
        cost=p["cost"], status=p["status"], wall_time_s=p["wall_time_s"],
    )


def _p0_to_json(r: P0Result) -> dict:
    return {
        "delta_gamma": r.delta_gamma,
        "lambda_d_kw": r.lambda_d_kw,
        "lambda_r_kw": r.lambda_r_kw,
        "objective_kw": r.objective_kw,
        "investments": _invs_to_json(r.investments),
        "fdn_cost": r.fdn_cost,
        "expected_shed_kwh": r.expected_shed_kwh,
        "status": r.status,
        "wall_time_s": r.wall_time_s,
    }


def _p0_from_json(doc: dict) -> P0Result:
    return P0Result(
        delta_gamma=doc["delta_gamma"],
        lambda_d_kw=doc["lambda_d_kw"],
        lambda_r_kw=doc["lambda_r_kw"],
        objective_kw=doc["objective_kw"],
        investments=_invs_from_json(doc["investments"]),
        fdn_cost=doc["fdn_cost"],
        expected_shed_kwh=doc["expected_shed_kwh"],
        status=doc["status"],
        wall_time_s=doc["wall_time_s"],
    )


def _p1_to_json(r: P1Result) -> dict:
    return {
        "delta_gamma": r.delta_gamma,
        "windows": [
            {
                "window_id": e.window_id,
                "r_down_kw": e.r_down_kw, "r_up_kw": e.r_up_kw,
                "e_down_kwh": e.e_down_kwh, "e_up_kwh": e.e_up_kwh,
            }
            for e in r.windows
        ],
        "objective_kw": r.objective_kw,
        "investments": _invs_to_json(r.investments),
        "lambda_d_kw": r.lambda_d_kw,
        "lambda_r_kw": r.lambda_r_kw,
        "profiles_kw": r.profiles_kw,
        "status": r.status,
        "wall_time_s": r.wall_time_s,
    }


def _p1_from_json(doc: dict, baselines_kw: dict) -> P1Result:
    return P1Result(
        delta_gamma=doc["delta_gamma"],
        windows=[WindowEnvelope(**w) for w in doc["windows"]],
        objective_kw=doc["objective_kw"],
        investments=_invs_from_json(doc["investments"]),
        lambda_d_kw=doc["lambda_d_kw"],
        lambda_r_kw=doc["lambda_r_kw"],
        profiles_kw=doc["profiles_kw"],
        baselines_kw=baselines_kw,
        status=doc["status"],
        wall_time_s=doc["wall_time_s"],
    )


def _p2_to_json(r: P2Result) -> dict:
    return {
        "delta_gamma": r.delta_gamma,
        "variant": r.variant,
        "eta_kw": r.eta_kw,
        "windows": [
            {
                "window_id": e.window_id,
                "r_down_kw": e.r_down_kw, "r_up_kw": e.r_up_kw,
                "e_down_kwh": e.e_down_kwh, "e_up_kwh": e.e_up_kwh,
            }
            for e in r.windows
        ],
        "investments": _invs_to_json(r.investments),
        "floors": {wid: list(fl) for wid, fl in r.floors.items()},
        "profiles_kw": r.profiles_kw,
        "status": r.status,
        "wall_time_s": r.wall_time_s,
    }


def _p2_from_json(doc: dict) -> P2Result:
    return P2Result(
        delta_gamma=doc["delta_gamma"],
        variant=doc["variant"],
        eta_kw=doc["eta_kw"],
        windows=[WindowEnvelope(**w) for w in doc.get("windows", [])],
        investments=_invs_from_json(doc["investments"]),
        floors={wid: tuple(fl) for wid, fl in doc["floors"].items()},
        profiles_kw=doc["profiles_kw"],
        status=doc["status"],
        wall_time_s=doc["wall_time_s"],
    )


# ---- artifact paths and IO ----


def baseline_path(out_dir) -> Path:
    return Path(out_dir) / "baseline.json"


def tier_path(out_dir, k: int) -> Path:
    return Path(out_dir) / "tiers" / f"tier_{k}.json"


def menu_path(out_dir) -> Path:
    return Path(out_dir) / "menu.json"


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _read_json(path: Path) -> dict | None:
    if not path.is_file():
        return None
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None


def load_baseline(case: Case, out_dir) -> tuple[Model1Result, ExpectedPeaks] | None:
    doc = _read_json(baseline_path(out_dir))
    if doc is None or doc.get("fingerprint") != case.fingerprint:
        return None
    return _baseline_from_json(doc)


def save_baseline(case: Case, out_dir, m1: Model1Result, pk: ExpectedPeaks) -> None:
    _write_json(baseline_path(out_dir), _baseline_to_json(case, m1, pk))


def load_tier_doc(case: Case, out_dir, k: int) -> dict | None:
    doc = _read_json(tier_path(out_dir, k))
    if doc is None or doc.get("fingerprint") != case.fingerprint:
        return None
    if doc.get("delta_gamma") != case.budget.delta_gammas[k]:
        return None
    return doc


def new_tier_doc(case: Case, k: int) -> dict:
    return {
        "fingerprint": case.fingerprint,
        "k": k,
        "delta_gamma": case.budget.delta_gammas[k],
        "p0": None,
        "p1": None,
        "p2": {},
    }


def save_tier_doc(out_dir, doc: dict) -> None:
    _write_json(tier_path(out_dir, doc["k"]), doc)


# ---- orchestration ----


def _pmap(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _stage_error(exc) -> dict:
    status = exc.status if isinstance(exc, StageError) else "error"
    return {"status": status, "error": str(exc)}


_STAGE_EXC = (StageError, ModelError, SolverError)


def run_sweep(
    case: Case,
    options: SolverOptions | None = None,
    out_dir=None,
    jobs: int = 1,
    variants=VARIANTS,
) -> ProductMenu:
    """Full product construction across every budget tier in the schedule.

    With out_dir set, stage results found there (matching the case
    fingerprint) are reused instead of re-solved, and fresh results are
    written back.
    """
    idx = build_index(case)
    options = options or case.solver

    cached = load_baseline(case, out_dir) if out_dir else None
    if cached is not None:
        m1, pk = cached
    else:
        m1 = products.solve_model1(case, options, idx=idx)
        pk = products.expected_peaks(case, options, idx=idx)
        if out_dir:
            save_baseline(case, out_dir, m1, pk)

    ks = list(range(len(case.budget.delta_gammas)))
    docs = {
        k: (load_tier_doc(case, out_dir, k) if out_dir else None) or new_tier_doc(case, k)
        for k in ks
    }

    def run_p0(k: int):
        doc = docs[k]
        if doc["p0"] is not None and "error" not in doc["p0"]:
            return _p0_from_json(doc["p0"]), None
        try:
            r = products.solve_model2(
                case, case.budget.delta_gammas[k], m1.gamma0, pk, options, idx=idx
            )
            return r, None
        except _STAGE_EXC as exc:
            return None, _stage_error(exc)

    p0s = _pmap(run_p0, ks, jobs)
    for k, (r, err) in zip(ks, p0s):
        docs[k]["p0"] = _p0_to_json(r) if r is not None else err

    def run_p1(k: int):
        doc = docs[k]
        p0, p0_err = p0s[k]
        if p0 is None:
            return None, {"status": "skipped", "error": "caps stage failed"}
        if doc["p1"] is not None and "error" not in doc["p1"]:
            return _p1_from_json(doc["p1"], m1.baselines_kw), None
        try:
            r = products.solve_model3(
                case, case.budget.delta_gammas[k], m1.gamma0, p0, m1, options, idx=idx
            )
            return r, None
        except _STAGE_EXC as exc:
            return None, _stage_error(exc)

    p1s = _pmap(run_p1, ks, jobs)
    for k, (r, err) in zip(ks, p1s):
        docs[k]["p1"] = _p1_to_json(r) if r is not None else err

    def run_p2(task):
        k, variant = task
        doc = docs[k]
        p0, _ = p0s[k]
        p1, _ = p1s[k]
        if p0 is None or p1 is None:
            return None, {"status": "skipped", "error": "envelope stage failed"}
        stored = doc["p2"].get(variant)
        if stored is not None and "error" not in stored:
            return _p2_from_json(stored), None
        try:
            r = products.solve_model4(
                case, case.budget.delta_gammas[k], m1.gamma0, variant,
                p0, p1, m1, options, idx=idx,
            )
            return r, None
        except _STAGE_EXC as exc:
            return None, _stage_error(exc)

    tasks = [(k, v) for k in ks for v in variants]
    p2s = dict(zip(tasks, _pmap(run_p2, tasks, jobs)))
    for (k, v), (r, err) in p2s.items():
        docs[k]["p2"][v] = _p2_to_json(r) if r is not None else err

    tiers = []
    for k in ks:
        p0, p0_err = p0s[k]
        p1, p1_err = p1s[k]
        p2 = {v: p2s[(k, v)][0] for v in variants if p2s[(k, v)][0] is not None}
        p2_err = {v: p2s[(k, v)][1] for v in variants if p2s[(k, v)][1] is not None}
        tiers.append(TierOutcome(
            k=k, delta_gamma=case.budget.delta_gammas[k],
            p0=p0, p0_error=p0_err, p1=p1, p1_error=p1_err,
            p2=p2, p2_errors=p2_err,
        ))
        if out_dir:
            save_tier_doc(out_dir, docs[k])

    menu = ProductMenu(
        case_name=case.name, fingerprint=case.fingerprint,
        baseline=m1, peaks=pk, tiers=tiers,
    )
    if out_dir:
        emit_menu(menu, menu_path(out_dir))
    return menu


# ---- menu emission ----


def _round(x: float) -> float:
    # published figures: tenth of a watt, keeps the JSON stable across
    # solver noise well below feasibility tolerance
    return round(float(x), 4)


def menu_dict(menu: ProductMenu) -> dict:
    tiers = []
    for t in menu.tiers:
        p0 = (
            {
                "lambda_d": _round(t.p0.lambda_d_kw),
                "lambda_r": _round(t.p0.lambda_r_kw),
                "objective": _round(t.p0.objective_kw),
                "status": t.p0.status,
            }
            if t.p0 is not None
            else {"status": t.p0_error["status"]}
        )
        if t.p1 is not None:
            p1 = {
                "lambda_d": _round(t.p1.lambda_d_kw),
                "lambda_r": _round(t.p1.lambda_r_kw),
                "objective": _round(t.p1.objective_kw),
                "status": t.p1.status,
                "windows": [
                    {
                        "id": e.window_id,
                        "r_down": _round(e.r_down_kw),
                        "r_up": _round(e.r_up_kw),
                        "e_down": _round(e.e_down_kwh),
                        "e_up": _round(e.e_up_kwh),
                    }
                    for e in t.p1.windows
                ],
            }
        else:
            p1 = {"status": t.p1_error["status"], "windows": []}
        p2 = {}
        for v in VARIANTS:
            if v in t.p2:
                p2[v] = {"eta": _round(t.p2[v].eta_kw), "status": t.p2[v].status}
            elif v in t.p2_errors:
                p2[v] = {"status": t.p2_errors[v]["status"]}
        investments = {}
        if t.p0 is not None:
            investments["p0"] = _built_ids(t.p0.investments)
        if t.p1 is not None:
            investments["p1"] = _built_ids(t.p1.investments)
        investments["p2"] = {
            v: _built_ids(r.investments) for v, r in sorted(t.p2.items())
        }
        timing = {"p0": t.p0.wall_time_s if t.p0 else None,
                  "p1": t.p1.wall_time_s if t.p1 else None,
                  "p2": {v: r.wall_time_s for v, r in sorted(t.p2.items())}}
        tiers.append({
            "k": t.k,
            "delta_gamma": t.delta_gamma,
            "p0": p0,
            "p1": p1,
            "p2": p2,
            "investments": investments,
            "wall_time_s": timing,
        })
    return {
        "case": menu.case_name,
        "fingerprint": menu.fingerprint,
        "gamma0": _round(menu.baseline.gamma0),
        "lambda_exp": {
            "d": _round(menu.peaks.lambda_d_kw),
            "r": _round(menu.peaks.lambda_r_kw),
        },
        "tiers": tiers,
    }


def _built_ids(decisions) -> list[dict]:
    return [
        {"id": d.id, "size_kw": _round(d.size_kw)}
        for d in decisions if d.built
    ]


def emit_menu(menu: ProductMenu, path) -> None:
    _write_json(Path(path), menu_dict(menu))


def strip_timing(doc: dict) -> dict:
    """Menu with volatile timing fields removed, for determinism checks."""
    out = json.loads(json.dumps(doc))
    for tier in out.get("tiers", []):
        tier.pop("wall_time_s", None)
    return out


__all__ = [
    "ProductMenu",
    "TierOutcome",
    "run_sweep",
    "emit_menu",
    "menu_dict",
    "strip_timing",
    "baseline_path",
    "tier_path",
    "menu_path",
    "load_baseline",
    "save_baseline",
    "load_tier_doc",
    "new_tier_doc",
    "save_tier_doc",
]
