"""Feeder data model and case I/O.

A *case* is a directory with three files:

* ``network.json``   single-feeder radial network, candidate investments
* ``scenarios.csv``  weighted representative-day load scenarios
* ``config.toml``    objective weights, budget tiers, service windows, solver
  (``config.json`` with the same structure is accepted)

All quantities stay in interface units (kW, kVA, kWh, pu voltage, dollars)
on these objects; per-unit conversion happens inside the constraint
builders.  That keeps serialize/load round trips exact.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mipcore import SolverOptions

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

WEIGHT_TOL = 1e-9


class CaseError(ValueError):
    """Invalid case data.  Carries the offending file and element."""

    def __init__(self, message: str, path: str | None = None, element: str | None = None):
        self.path = path
        self.element = element
        prefix = ""
        if path:
            prefix += f"{path}: "
        if element:
            prefix += f"[{element}] "
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Bus:
    id: str
    v_min_pu: float = 0.9
    v_max_pu: float = 1.1
    is_substation: bool = False


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    r_pu: float
    x_pu: float
    s_max_kva: float


@dataclass(frozen=True)
class CandidateInvestment:
    """One binary build decision.

    ``kind`` selects which extra fields apply:

    * ``line_upgrade``: ``target`` is a line id, ``delta_s_max_kva`` adds
      thermal headroom, cost is ``fixed_cost`` alone.
    * ``storage``: ``target`` is a bus id; the built power rating is a
      continuous variable in [0, ``p_max_kw``] costing ``variable_cost`` per
      kW on top of ``fixed_cost``; energy is ``duration_h`` times the rating.
    * ``voltage_regulator``: ``target`` is a bus id; when built, the bus gets
      an additive squared-voltage boost within +/- ``boost_max_pu2`` each
      step.
    """

    id: str
    kind: str
    target: str
    fixed_cost: float
    variable_cost: float = 0.0
    delta_s_max_kva: float = 0.0
    p_max_kw: float = 0.0
    duration_h: float = 0.0
    eta_charge: float = 1.0
    eta_discharge: float = 1.0
    boost_max_pu2: float = 0.0


KINDS = ("line_upgrade", "storage", "voltage_regulator")


@dataclass(frozen=True)
class NetworkModel:
    base_kva: float
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    candidates: tuple[CandidateInvestment, ...]
    substations: tuple[str, ...]
    _bus_pos: dict = field(init=False, repr=False, compare=False, hash=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_bus_pos", {b.id: i for i, b in enumerate(self.buses)})

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def substation(self) -> str:
        return self.substations[0]

    def bus_position(self, bus_id: str) -> int:
        return self._bus_pos[bus_id]

    def storages(self) -> tuple[CandidateInvestment, ...]:
        return tuple(c for c in self.candidates if c.kind == "storage")

    def upgrades(self) -> tuple[CandidateInvestment, ...]:
        return tuple(c for c in self.candidates if c.kind == "line_upgrade")

    def regulators(self) -> tuple[CandidateInvestment, ...]:
        return tuple(c for c in self.candidates if c.kind == "voltage_regulator")


@dataclass(frozen=True)
class TimeGrid:
    dt_hours: float
    steps_per_day: int
    days: int

    @property
    def total_steps(self) -> int:
        return self.steps_per_day * self.days

    def global_step(self, day: int, step: int) -> int:
        return day * self.steps_per_day + step


@dataclass(frozen=True)
class Scenario:
    """One weighted representative-day profile.

    ``p_kw``/``q_kvar`` are [total_steps, n_buses] arrays in network bus
    order; positive means consumption.
    """

    id: str
    weight: float
    p_kw: np.ndarray
    q_kvar: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.id == other.id
            and self.weight == other.weight
            and np.array_equal(self.p_kw, other.p_kw)
            and np.array_equal(self.q_kvar, other.q_kvar)
        )

    def __hash__(self):
        return hash((self.id, self.weight))


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]
    grid: TimeGrid
    bus_ids: tuple[str, ...]

    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.scenarios])


@dataclass(frozen=True)
class ServiceWindowSpec:
    """A flexibility product window on the representative day.

    Step sets are day-local indices; they are replicated across days of the
    horizon.  ``theta_*_h`` are per-direction energy-to-power ratios (hours);
    ``rho`` weights the window and ``beta_*`` the directions in the envelope
    objective; ``r_cap_kw`` caps the offered range.
    """

    id: str
    service_steps: tuple[int, ...]
    theta_down_h: float
    theta_up_h: float
    rho: float = 1.0
    beta_down: float = 1.0
    beta_up: float = 1.0
    protected_steps: tuple[int, ...] = ()
    rebound_steps: tuple[int, ...] = ()
    r_cap_kw: float = math.inf


@dataclass(frozen=True)
class BudgetSchedule:
    delta_gammas: tuple[float, ...]
    w_peak: float
    voll: float

    @property
    def n_tiers(self) -> int:
        return len(self.delta_gammas)


@dataclass(frozen=True)
class Case:
    name: str
    network: NetworkModel
    scenarios: ScenarioSet
    windows: tuple[ServiceWindowSpec, ...]
    budget: BudgetSchedule
    solver: SolverOptions
    fingerprint: str


# ---- loading ----


def _require(mapping: dict, key: str, path: str, element: str):
    if key not in mapping:
        raise CaseError(f"missing required key {key!r}", path, element)
    return mapping[key]


def _load_network(path: Path) -> NetworkModel:
    p = str(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CaseError(f"cannot read network file: {exc}", p) from exc

    base_kva = float(_require(raw, "base_kva", p, "network"))
    if not base_kva > 0:
        raise CaseError(f"base_kva must be positive, got {base_kva}", p, "network")

    buses = []
    seen = set()
    for entry in _require(raw, "buses", p, "network"):
        bid = str(_require(entry, "id", p, "bus"))
        if bid in seen:
            raise CaseError(f"duplicate bus id {bid!r}", p, f"bus {bid}")
        seen.add(bid)
        bus = Bus(
            id=bid,
            v_min_pu=float(entry.get("v_min_pu", 0.9)),
            v_max_pu=float(entry.get("v_max_pu", 1.1)),
            is_substation=bool(entry.get("is_substation", False)),
        )
        if not bus.v_min_pu < bus.v_max_pu:
            raise CaseError(
                f"v_min_pu {bus.v_min_pu} must be below v_max_pu {bus.v_max_pu}",
                p, f"bus {bid}",
            )
        buses.append(bus)
    if not buses:
        raise CaseError("network has no buses", p, "network")
    bus_ids = {b.id for b in buses}

    lines = []
    seen = set()
    for entry in _require(raw, "lines", p, "network"):
        lid = str(_require(entry, "id", p, "line"))
        if lid in seen:
            raise CaseError(f"duplicate line id {lid!r}", p, f"line {lid}")
        seen.add(lid)
        line = Line(
            id=lid,
            from_bus=str(_require(entry, "from_bus", p, f"line {lid}")),
            to_bus=str(_require(entry, "to_bus", p, f"line {lid}")),
            r_pu=float(_require(entry, "r_pu", p, f"line {lid}")),
            x_pu=float(_require(entry, "x_pu", p, f"line {lid}")),
            s_max_kva=float(_require(entry, "s_max_kva", p, f"line {lid}")),
        )
        for end in (line.from_bus, line.to_bus):
            if end not in bus_ids:
                raise CaseError(f"endpoint {end!r} is not a bus", p, f"line {lid}")
        if line.from_bus == line.to_bus:
            raise CaseError("line endpoints coincide", p, f"line {lid}")
        if line.r_pu < 0 or line.x_pu < 0:
            raise CaseError("line impedance must be nonnegative", p, f"line {lid}")
        if not line.s_max_kva > 0:
            raise CaseError("s_max_kva must be positive", p, f"line {lid}")
        lines.append(line)
    line_ids = {l.id for l in lines}

    subs = tuple(str(s) for s in raw.get(
        "substations", [b.id for b in buses if b.is_substation]
    ))
    if len(subs) != 1:
        raise CaseError(
            f"exactly one substation is required, got {len(subs)}", p, "network"
        )
    if subs[0] not in bus_ids:
        raise CaseError(f"substation {subs[0]!r} is not a bus", p, "network")
    # keep the is_substation flags consistent with the canonical list
    buses = [
        Bus(b.id, b.v_min_pu, b.v_max_pu, b.id in subs) for b in buses
    ]
    for b in buses:
        if b.is_substation and not (b.v_min_pu <= 1.0 <= b.v_max_pu):
            raise CaseError(
                "substation voltage bounds must include 1.0 pu", p, f"bus {b.id}"
            )

    candidates = []
    seen = set()
    for entry in raw.get("candidates", []):
        cid = str(_require(entry, "id", p, "candidate"))
        if cid in seen:
            raise CaseError(f"duplicate candidate id {cid!r}", p, f"candidate {cid}")
        seen.add(cid)
        kind = str(_require(entry, "kind", p, f"candidate {cid}"))
        if kind not in KINDS:
            raise CaseError(f"kind must be one of {KINDS}, got {kind!r}", p, f"candidate {cid}")
        cand = CandidateInvestment(
            id=cid,
            kind=kind,
            target=str(_require(entry, "target", p, f"candidate {cid}")),
            fixed_cost=float(_require(entry, "fixed_cost", p, f"candidate {cid}")),
            variable_cost=float(entry.get("variable_cost", 0.0)),
            delta_s_max_kva=float(entry.get("delta_s_max_kva", 0.0)),
            p_max_kw=float(entry.get("p_max_kw", 0.0)),
            duration_h=float(entry.get("duration_h", 0.0)),
            eta_charge=float(entry.get("eta_charge", 1.0)),
            eta_discharge=float(entry.get("eta_discharge", 1.0)),
            boost_max_pu2=float(entry.get("boost_max_pu2", 0.0)),
        )
        el = f"candidate {cid}"
        if cand.fixed_cost < 0 or cand.variable_cost < 0:
            raise CaseError("costs must be nonnegative", p, el)
        if kind == "line_upgrade":
            if cand.target not in line_ids:
                raise CaseError(f"target line {cand.target!r} not found", p, el)
            if not cand.delta_s_max_kva > 0:
                raise CaseError("delta_s_max_kva must be positive", p, el)
        else:
            if cand.target not in bus_ids:
                raise CaseError(f"target bus {cand.target!r} not found", p, el)
        if kind == "storage":
            if not cand.p_max_kw > 0:
                raise CaseError("p_max_kw must be positive", p, el)
            if not cand.duration_h > 0:
                raise CaseError("duration_h must be positive", p, el)
            for eta in (cand.eta_charge, cand.eta_discharge):
                if not 0.0 < eta <= 1.0:
                    raise CaseError(f"efficiency {eta} outside (0, 1]", p, el)
        if kind == "voltage_regulator" and not cand.boost_max_pu2 > 0:
            raise CaseError("boost_max_pu2 must be positive", p, el)
        candidates.append(cand)

    network = NetworkModel(
        base_kva=base_kva,
        buses=tuple(buses),
        lines=tuple(lines),
        candidates=tuple(candidates),
        substations=subs,
    )
    _check_radial(network, p)
    return network


def _check_radial(network: NetworkModel, path: str) -> None:
    n, m = network.n_buses, len(network.lines)
    if m != n - 1:
        raise CaseError(
            f"non-radial network: {n} buses need {n - 1} lines, got {m}", path, "network"
        )
    adjacency: dict[str, list[str]] = {b.id: [] for b in network.buses}
    for line in network.lines:
        adjacency[line.from_bus].append(line.to_bus)
        adjacency[line.to_bus].append(line.from_bus)
    seen = {network.substation}
    stack = [network.substation]
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    if len(seen) != n:
        missing = sorted(set(b.id for b in network.buses) - seen)
        raise CaseError(
            f"non-radial network: buses {missing} unreachable from the substation",
            path, "network",
        )


def _load_scenarios(path: Path, network: NetworkModel, dt_hours: float) -> ScenarioSet:
    p = str(path)
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"scenario", "weight", "day", "step", "bus", "p_kw", "q_kvar"}
            header = set(reader.fieldnames or ())
            if not required <= header:
                raise CaseError(
                    f"missing columns {sorted(required - header)}", p, "scenarios"
                )
            for idx, row in enumerate(reader, start=2):
                try:
                    rows.append((
                        row["scenario"],
                        float(row["weight"]),
                        int(row["day"]),
                        int(row["step"]),
                        row["bus"],
                        float(row["p_kw"]),
                        float(row["q_kvar"]),
                    ))
                except (TypeError, ValueError) as exc:
                    raise CaseError(f"bad value: {exc}", p, f"line {idx}") from exc
    except OSError as exc:
        raise CaseError(f"cannot read scenario file: {exc}", p) from exc
    if not rows:
        raise CaseError("scenario file has no data rows", p)

    bus_ids = {b.id for b in network.buses}
    days = max(r[2] for r in rows) + 1
    steps = max(r[3] for r in rows) + 1
    if min(r[2] for r in rows) < 0 or min(r[3] for r in rows) < 0:
        raise CaseError("day/step indices must be nonnegative", p)
    grid = TimeGrid(dt_hours=dt_hours, steps_per_day=steps, days=days)

    order: list[str] = []
    weights: dict[str, float] = {}
    touched: dict[str, set[str]] = {}
    p_arr: dict[str, np.ndarray] = {}
    q_arr: dict[str, np.ndarray] = {}
    filled: dict[str, np.ndarray] = {}
    for sid, weight, day, step, bus, pk, qk in rows:
        if bus not in bus_ids:
            raise CaseError(f"unknown bus {bus!r}", p, f"scenario {sid}")
        if sid not in weights:
            order.append(sid)
            weights[sid] = weight
            touched[sid] = set()
            p_arr[sid] = np.zeros((grid.total_steps, network.n_buses))
            q_arr[sid] = np.zeros((grid.total_steps, network.n_buses))
            filled[sid] = np.zeros((grid.total_steps, network.n_buses), dtype=bool)
        elif weights[sid] != weight:
            raise CaseError(
                f"inconsistent weight {weight} (first saw {weights[sid]})",
                p, f"scenario {sid}",
            )
        t = grid.global_step(day, step)
        b = network.bus_position(bus)
        if filled[sid][t, b]:
            raise CaseError(
                f"duplicate row for day {day} step {step} bus {bus!r}",
                p, f"scenario {sid}",
            )
        filled[sid][t, b] = True
        touched[sid].add(bus)
        p_arr[sid][t, b] = pk
        q_arr[sid][t, b] = qk

    # every bus a scenario mentions must cover the whole horizon
    for sid in order:
        for bus in sorted(touched[sid]):
            b = network.bus_position(bus)
            if not filled[sid][:, b].all():
                t_missing = int(np.flatnonzero(~filled[sid][:, b])[0])
                day, step = divmod(t_missing, grid.steps_per_day)
                raise CaseError(
                    f"horizon mismatch: bus {bus!r} missing day {day} step {step}",
                    p, f"scenario {sid}",
                )

    total = sum(weights[sid] for sid in order)
    if abs(total - 1.0) > WEIGHT_TOL:
        raise CaseError(f"scenario weights sum to {total}, expected 1", p)
    for sid in order:
        if not weights[sid] > 0:
            raise CaseError(f"weight must be positive, got {weights[sid]}", p, f"scenario {sid}")

    scenarios = tuple(
        Scenario(id=sid, weight=weights[sid], p_kw=p_arr[sid], q_kvar=q_arr[sid])
        for sid in order
    )
    return ScenarioSet(
        scenarios=scenarios, grid=grid, bus_ids=tuple(b.id for b in network.buses)
    )


def _load_config(path: Path) -> dict:
    p = str(path)
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise CaseError(f"cannot read config: {exc}", p) from exc


def _parse_window(raw: dict, steps_per_day: int, path: str) -> ServiceWindowSpec:
    wid = str(_require(raw, "id", path, "window"))
    el = f"window {wid}"
    spec = ServiceWindowSpec(
        id=wid,
        service_steps=tuple(int(s) for s in _require(raw, "service_steps", path, el)),
        theta_down_h=float(raw.get("theta_down_h", 0.0)),
        theta_up_h=float(raw.get("theta_up_h", 0.0)),
        rho=float(raw.get("rho", 1.0)),
        beta_down=float(raw.get("beta_down", 1.0)),
        beta_up=float(raw.get("beta_up", 1.0)),
        protected_steps=tuple(int(s) for s in raw.get("protected_steps", ())),
        rebound_steps=tuple(int(s) for s in raw.get("rebound_steps", ())),
        r_cap_kw=float(raw.get("r_cap_kw", math.inf)),
    )
    if not spec.service_steps:
        raise CaseError("service_steps must be nonempty", path, el)
    for name, steps in (
        ("service", spec.service_steps),
        ("protected", spec.protected_steps),
        ("rebound", spec.rebound_steps),
    ):
        if len(set(steps)) != len(steps):
            raise CaseError(f"{name} steps contain duplicates", path, el)
        for s in steps:
            if not 0 <= s < steps_per_day:
                raise CaseError(
                    f"{name} step {s} outside the day (0..{steps_per_day - 1})", path, el
                )
    service, protected = set(spec.service_steps), set(spec.protected_steps)
    rebound = set(spec.rebound_steps)
    if service & protected:
        raise CaseError("service and protected steps overlap", path, el)
    if service & rebound:
        raise CaseError("service and rebound steps overlap", path, el)
    if protected & rebound:
        raise CaseError("protected and rebound steps overlap", path, el)
    if spec.theta_down_h < 0 or spec.theta_up_h < 0:
        raise CaseError("theta must be nonnegative", path, el)
    if spec.theta_down_h == 0 and spec.theta_up_h == 0:
        raise CaseError("at least one direction needs theta > 0", path, el)
    if spec.rho < 0 or spec.beta_down < 0 or spec.beta_up < 0:
        raise CaseError("rho/beta weights must be nonnegative", path, el)
    if not spec.r_cap_kw > 0:
        raise CaseError("r_cap_kw must be positive", path, el)
    return spec


def load_case(case_dir: str | Path) -> Case:
    """Load and validate a case directory.

    Raises :class:`CaseError` with file and element context on any
    structural problem (non-radial network, weights not summing to one,
    overlapping window step sets, horizon gaps, ...).
    """
    case_dir = Path(case_dir)
    network_path = case_dir / "network.json"
    scenario_path = case_dir / "scenarios.csv"
    config_path = case_dir / "config.toml"
    if not config_path.exists():
        config_path = case_dir / "config.json"
    for f in (network_path, scenario_path, config_path):
        if not f.exists():
            raise CaseError("file not found", str(f))

    config = _load_config(config_path)
    objective = config.get("objective", {})
    if "voll" not in objective or "dt_hours" not in objective:
        raise CaseError(
            "config needs [objective] with voll and dt_hours", str(config_path)
        )
    dt_hours = float(objective["dt_hours"])
    voll = float(objective["voll"])
    w_peak = float(objective.get("w_peak", 0.5))
    if not dt_hours > 0:
        raise CaseError(f"dt_hours must be positive, got {dt_hours}", str(config_path))
    if not voll > 0:
        raise CaseError(f"voll must be positive, got {voll}", str(config_path))
    if not 0.0 <= w_peak <= 1.0:
        raise CaseError(f"w_peak must lie in [0, 1], got {w_peak}", str(config_path))

    tiers = config.get("tiers", {})
    deltas = tuple(float(d) for d in tiers.get("delta_gamma", ()))
    if not deltas:
        raise CaseError("config needs [tiers] delta_gamma with >= 1 entry", str(config_path))
    if deltas[0] < 0:
        raise CaseError("tier budgets must be nonnegative", str(config_path))
    for a, b in zip(deltas, deltas[1:]):
        if not b > a:
            raise CaseError(
                f"tier budgets must be strictly increasing, got {a} then {b}",
                str(config_path),
            )

    network = _load_network(network_path)
    scenarios = _load_scenarios(scenario_path, network, dt_hours)

    windows = []
    seen = set()
    for raw in config.get("windows", []):
        spec = _parse_window(raw, scenarios.grid.steps_per_day, str(config_path))
        if spec.id in seen:
            raise CaseError(f"duplicate window id {spec.id!r}", str(config_path))
        seen.add(spec.id)
        windows.append(spec)

    solver_cfg = config.get("solver", {})
    solver = SolverOptions(
        backend=str(solver_cfg.get("backend", "auto")),
        time_limit_s=float(solver_cfg.get("time_limit_s", 600.0)),
        mip_gap=float(solver_cfg.get("mip_gap", 1e-6)),
        threads=int(solver_cfg.get("threads", 0)),
    )

    digest = hashlib.sha256()
    for f in (network_path, scenario_path, config_path):
        digest.update(f.read_bytes())
    return Case(
        name=case_dir.name or "case",
        network=network,
        scenarios=scenarios,
        windows=tuple(windows),
        budget=BudgetSchedule(delta_gammas=deltas, w_peak=w_peak, voll=voll),
        solver=solver,
        fingerprint=digest.hexdigest()[:16],
    )


# ---- derived quantities ----


def expected_scenario(scenario_set: ScenarioSet) -> Scenario:
    """Probability-weighted average profile (weight 1, id ``expected``)."""
    w = scenario_set.weights()
    p = sum(wi * s.p_kw for wi, s in zip(w, scenario_set.scenarios))
    q = sum(wi * s.q_kvar for wi, s in zip(w, scenario_set.scenarios))
    return Scenario(id="expected", weight=1.0, p_kw=np.asarray(p), q_kvar=np.asarray(q))


@dataclass(frozen=True)
class ResolvedWindow:
    """A window spec mapped onto the full horizon.

    ``service_by_day[d]`` lists the global steps of day ``d``'s window
    instance in chronological order; likewise for protected/rebound.  ``h``
    is the number of service steps per instance.
    """

    spec: ServiceWindowSpec
    service_by_day: tuple[tuple[int, ...], ...]
    protected_by_day: tuple[tuple[int, ...], ...]
    rebound_by_day: tuple[tuple[int, ...], ...]

    @property
    def h(self) -> int:
        return len(self.service_by_day[0])

    def service_steps(self) -> tuple[int, ...]:
        return tuple(t for day in self.service_by_day for t in day)

    def protected_steps(self) -> tuple[int, ...]:
        return tuple(t for day in self.protected_by_day for t in day)

    def rebound_steps(self) -> tuple[int, ...]:
        return tuple(t for day in self.rebound_by_day for t in day)


def resolve_window(spec: ServiceWindowSpec, grid: TimeGrid) -> ResolvedWindow:
    def per_day(steps: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
        ordered = sorted(steps)
        return tuple(
            tuple(grid.global_step(d, s) for s in ordered) for d in range(grid.days)
        )

    return ResolvedWindow(
        spec=spec,
        service_by_day=per_day(spec.service_steps),
        protected_by_day=per_day(spec.protected_steps),
        rebound_by_day=per_day(spec.rebound_steps),
    )


# ---- serialization ----


def serialize_case(case: Case, out_dir: str | Path) -> None:
    """Write ``network.json``, ``scenarios.csv`` and ``config.json``.

    The config is written as JSON (structurally identical to the TOML form);
    :func:`load_case` accepts either, and a load of the written directory
    reproduces the case exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    network = case.network
    net = {
        "base_kva": network.base_kva,
        "buses": [
            {
                "id": b.id,
                "v_min_pu": b.v_min_pu,
                "v_max_pu": b.v_max_pu,
                "is_substation": b.is_substation,
            }
            for b in network.buses
        ],
        "lines": [
            {
                "id": l.id,
                "from_bus": l.from_bus,
                "to_bus": l.to_bus,
                "r_pu": l.r_pu,
                "x_pu": l.x_pu,
                "s_max_kva": l.s_max_kva,
            }
            for l in network.lines
        ],
        "candidates": [
            {
                "id": c.id,
                "kind": c.kind,
                "target": c.target,
                "fixed_cost": c.fixed_cost,
                "variable_cost": c.variable_cost,
                "delta_s_max_kva": c.delta_s_max_kva,
                "p_max_kw": c.p_max_kw,
                "duration_h": c.duration_h,
                "eta_charge": c.eta_charge,
                "eta_discharge": c.eta_discharge,
                "boost_max_pu2": c.boost_max_pu2,
            }
            for c in network.candidates
        ],
        "substations": list(network.substations),
    }
    (out / "network.json").write_text(json.dumps(net, indent=2) + "\n")

    grid = case.scenarios.grid
    with open(out / "scenarios.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "weight", "day", "step", "bus", "p_kw", "q_kvar"])
        for s in case.scenarios.scenarios:
            for t in range(grid.total_steps):
                day, step = divmod(t, grid.steps_per_day)
                for b, bus in enumerate(case.scenarios.bus_ids):
                    writer.writerow([
                        s.id, repr(s.weight), day, step, bus,
                        repr(float(s.p_kw[t, b])), repr(float(s.q_kvar[t, b])),
                    ])

    config = {
        "objective": {
            "w_peak": case.budget.w_peak,
            "voll": case.budget.voll,
            "dt_hours": grid.dt_hours,
        },
        "tiers": {"delta_gamma": list(case.budget.delta_gammas)},
        "solver": {
            "backend": case.solver.backend,
            "time_limit_s": case.solver.time_limit_s,
            "mip_gap": case.solver.mip_gap,
            "threads": case.solver.threads,
        },
        "windows": [
            {
                "id": w.id,
                "service_steps": list(w.service_steps),
                "theta_down_h": w.theta_down_h,
                "theta_up_h": w.theta_up_h,
                "rho": w.rho,
                "beta_down": w.beta_down,
                "beta_up": w.beta_up,
                "protected_steps": list(w.protected_steps),
                "rebound_steps": list(w.rebound_steps),
                "r_cap_kw": w.r_cap_kw,
            }
            for w in case.windows
        ],
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
