"""Command-line front end.

Stages write their results as JSON artifacts under the output directory,
so later commands can consume earlier ones and a sweep can resume where it
stopped.  Exit codes: 0 success, 1 usage, 2 data or missing-artifact error,
3 solver error, 4 infeasible stage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import plots, products, sweep as sweepmod, verifier
from .mipcore import ModelError, SolverError, SolverOptions
from .netmodel import Case, CaseError, load_case
from .opfeas import build_index
from .products import StageError, VARIANTS


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the contract here reserves 2 for
    # data errors, so usage problems are remapped to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


class _DataError(Exception):
    pass


def _build_parser() -> _Parser:
    parser = _Parser(prog="nrcc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--case", required=True, metavar="DIR",
                       help="case directory (network.json, scenarios.csv, config)")
        p.add_argument("--out", default="out", metavar="PATH",
                       help="output directory (sweep also accepts a menu.json path)")
        p.add_argument("--solver", default=None,
                       help="solver backend (overrides case config)")
        p.add_argument("--time-limit", type=float, default=None, metavar="SEC")
        p.add_argument("--gap", type=float, default=None,
                       help="relative MIP gap tolerance")
        p.add_argument("--jobs", type=int, default=1, metavar="J",
                       help="parallel workers for sweep and verify")
        return p

    add("baseline", "least-cost plan and reference peaks")
    p0 = add("p0", "peak caps for one budget tier")
    p0.add_argument("--tier", type=int, required=True, metavar="K")
    p1 = add("p1", "service-window envelope for one tier")
    p1.add_argument("--tier", type=int, required=True, metavar="K")
    p2 = add("p2", "rebound governance for one tier")
    p2.add_argument("--tier", type=int, required=True, metavar="K")
    p2.add_argument("--variant", choices=list(VARIANTS), default=None,
                    help="governance variant (default: all three)")
    add("sweep", "full menu across all tiers")
    ver = add("verify", "Monte-Carlo deliverability check of published envelopes")
    ver.add_argument("--tier", type=int, default=None, metavar="K",
                     help="tier to verify (default: every tier with an envelope)")
    ver.add_argument("--samples", type=int, default=100, metavar="N")
    ver.add_argument("--seed", type=int, default=0, metavar="S")
    plot = add("plot", "render menu curves and call profiles as SVG")
    plot.add_argument("--tier", type=int, default=None, metavar="K",
                      help="tier for the profile figure (default: last solved)")
    return parser


def _options(case: Case, args) -> SolverOptions:
    base = case.solver
    return SolverOptions(
        backend=args.solver if args.solver else base.backend,
        time_limit_s=args.time_limit if args.time_limit is not None else base.time_limit_s,
        mip_gap=args.gap if args.gap is not None else base.mip_gap,
        threads=base.threads,
    )


def _out_dirs(args) -> tuple[Path, Path]:
    """(artifact directory, menu path) from --out."""
    out = Path(args.out)
    if out.suffix == ".json":
        return out.parent if str(out.parent) else Path("."), out
    return out, out / "menu.json"


def _check_tier(case: Case, k: int, parser_hint: str) -> None:
    n = len(case.budget.delta_gammas)
    if not 0 <= k < n:
        raise _DataError(f"{parser_hint}: tier {k} out of range (case has {n} tiers)")


def _need_baseline(case: Case, out_dir: Path):
    loaded = sweepmod.load_baseline(case, out_dir)
    if loaded is None:
        raise _DataError(
            f"missing baseline result in {out_dir} (run `nrcc baseline` first)"
        )
    return loaded


def _need_tier_doc(case: Case, out_dir: Path, k: int) -> dict:
    doc = sweepmod.load_tier_doc(case, out_dir, k)
    if doc is None:
        return sweepmod.new_tier_doc(case, k)
    return doc


def _need_stage(doc: dict, stage: str, k: int) -> dict:
    entry = doc.get(stage)
    if not entry or "error" in entry:
        raise _DataError(
            f"missing tier result: {stage} for tier {k} (run `nrcc {stage}` first)"
        )
    return entry


def _cmd_baseline(case, args, out_dir, menu_file) -> int:
    options = _options(case, args)
    idx = build_index(case)
    m1 = products.solve_model1(case, options, idx=idx)
    pk = products.expected_peaks(case, options, idx=idx)
    sweepmod.save_baseline(case, out_dir, m1, pk)
    built = ", ".join(f"{d.id}({d.size_kw:.0f} kW)" if d.kind == "storage" else d.id
                      for d in m1.investments if d.built) or "none"
    print(f"baseline cost {m1.gamma0:.2f}, expected shed {m1.expected_shed_kwh:.3f} kWh")
    print(f"reference peaks: import {pk.lambda_d_kw:.2f} kW, export {pk.lambda_r_kw:.2f} kW")
    print(f"investments: {built}")
    print(f"wrote {sweepmod.baseline_path(out_dir)}")
    return 0


def _cmd_p0(case, args, out_dir, menu_file) -> int:
    _check_tier(case, args.tier, "p0")
    options = _options(case, args)
    m1, pk = _need_baseline(case, out_dir)
    doc = _need_tier_doc(case, out_dir, args.tier)
    r = products.solve_model2(
        case, case.budget.delta_gammas[args.tier], m1.gamma0, pk, options
    )
    doc["p0"] = sweepmod._p0_to_json(r)
    sweepmod.save_tier_doc(out_dir, doc)
    print(f"tier {args.tier}: import cap {r.lambda_d_kw:.2f} kW, "
          f"export cap {r.lambda_r_kw:.2f} kW, score {r.objective_kw:.2f} kW")
    print(f"wrote {sweepmod.tier_path(out_dir, args.tier)}")
    return 0


def _cmd_p1(case, args, out_dir, menu_file) -> int:
    _check_tier(case, args.tier, "p1")
    options = _options(case, args)
    m1, _ = _need_baseline(case, out_dir)
    doc = _need_tier_doc(case, out_dir, args.tier)
    p0 = sweepmod._p0_from_json(_need_stage(doc, "p0", args.tier))
    r = products.solve_model3(
        case, case.budget.delta_gammas[args.tier], m1.gamma0, p0, m1, options
    )
    doc["p1"] = sweepmod._p1_to_json(r)
    sweepmod.save_tier_doc(out_dir, doc)
    for env in r.windows:
        print(f"tier {args.tier} window {env.window_id}: "
              f"down {env.r_down_kw:.2f} kW / {env.e_down_kwh:.2f} kWh, "
              f"up {env.r_up_kw:.2f} kW / {env.e_up_kwh:.2f} kWh")
    print(f"wrote {sweepmod.tier_path(out_dir, args.tier)}")
    return 0


def _cmd_p2(case, args, out_dir, menu_file) -> int:
    _check_tier(case, args.tier, "p2")
    options = _options(case, args)
    m1, _ = _need_baseline(case, out_dir)
    doc = _need_tier_doc(case, out_dir, args.tier)
    p0 = sweepmod._p0_from_json(_need_stage(doc, "p0", args.tier))
    p1 = sweepmod._p1_from_json(_need_stage(doc, "p1", args.tier), m1.baselines_kw)
    variants = [args.variant] if args.variant else list(VARIANTS)
    for variant in variants:
        r = products.solve_model4(
            case, case.budget.delta_gammas[args.tier], m1.gamma0, variant,
            p0, p1, m1, options,
        )
        doc["p2"][variant] = sweepmod._p2_to_json(r)
        print(f"tier {args.tier} variant {variant}: band {r.eta_kw:.3f} kW")
    sweepmod.save_tier_doc(out_dir, doc)
    print(f"wrote {sweepmod.tier_path(out_dir, args.tier)}")
    return 0


def _cmd_sweep(case, args, out_dir, menu_file) -> int:
    options = _options(case, args)
    menu = sweepmod.run_sweep(case, options, out_dir=out_dir, jobs=args.jobs)
    if menu_file != sweepmod.menu_path(out_dir):
        sweepmod.emit_menu(menu, menu_file)
    for t in menu.tiers:
        cap = f"{t.p0.lambda_d_kw:.2f}" if t.p0 else t.p0_error["status"]
        rng = (
            f"{sum(e.r_down_kw for e in t.p1.windows):.2f}"
            if t.p1 else t.p1_error["status"]
        )
        etas = ", ".join(
            f"{v}={t.p2[v].eta_kw:.2f}" if v in t.p2 else f"{v}={t.p2_errors[v]['status']}"
            for v in VARIANTS
        )
        print(f"tier {t.k} (+{t.delta_gamma:.0f}): cap {cap} kW, "
              f"down range {rng} kW, band [{etas}] kW")
    print(f"wrote {menu_file}")
    return 0


def _cmd_verify(case, args, out_dir, menu_file) -> int:
    options = _options(case, args)
    m1, _ = _need_baseline(case, out_dir)
    if args.tier is not None:
        _check_tier(case, args.tier, "verify")
        tiers = [args.tier]
    else:
        tiers = range(len(case.budget.delta_gammas))
    idx = build_index(case)
    ran = 0
    worst = 0.0
    for k in tiers:
        doc = sweepmod.load_tier_doc(case, out_dir, k)
        if doc is None or not doc.get("p1") or "error" in doc["p1"]:
            if args.tier is not None:
                raise _DataError(f"missing tier result: p1 for tier {k}")
            continue
        p1 = sweepmod._p1_from_json(doc["p1"], m1.baselines_kw)
        reports = verifier.verify_envelope(
            case, p1, n_samples=args.samples, seed=args.seed,
            options=options, idx=idx, tier=k, jobs=args.jobs,
        )
        path = out_dir / f"verify_tier_{k}.json"
        path.write_text(json.dumps(reports, indent=2) + "\n")
        for rep in reports:
            ran += 1
            worst = max(worst, rep["worst_residual_kw"])
            print(f"tier {k} window {rep['window']}: "
                  f"{rep['violations']}/{rep['n']} violations "
                  f"(screening {rep['screening_violations']}/{rep['screening_calls']}), "
                  f"worst residual {rep['worst_residual_kw']:.6f} kW")
    if ran == 0:
        raise _DataError("missing tier result: no solved envelopes to verify")
    return 0


def _cmd_plot(case, args, out_dir, menu_file) -> int:
    if not sweepmod.menu_path(out_dir).is_file():
        raise _DataError(f"missing menu in {out_dir} (run `nrcc sweep` first)")
    if args.tier is not None:
        _check_tier(case, args.tier, "plot")
    try:
        paths = plots.write_plots(case, out_dir, tier=args.tier)
    except FileNotFoundError as exc:
        raise _DataError(str(exc)) from exc
    for p in paths:
        print(f"wrote {p}")
    return 0


_COMMANDS = {
    "baseline": _cmd_baseline,
    "p0": _cmd_p0,
    "p1": _cmd_p1,
    "p2": _cmd_p2,
    "sweep": _cmd_sweep,
    "verify": _cmd_verify,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out_dir, menu_file = _out_dirs(args)
    try:
        case = load_case(args.case)
    except (CaseError, OSError) as exc:
        print(f"nrcc: case error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](case, args, out_dir, menu_file)
    except _DataError as exc:
        print(f"nrcc: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"nrcc: {exc}", file=sys.stderr)
        if exc.status == "infeasible":
            return 4
        return 2 if exc.status == "skipped" else 3
    except (ModelError, SolverError) as exc:
        print(f"nrcc: solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
