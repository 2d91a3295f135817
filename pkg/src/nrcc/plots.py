"""Standalone SVG charts for a finished sweep.

Two figures: the menu curves (import cap and down range against the budget
increment) and the substation profiles under the sustained down call for
each governance variant, with the service, protected and rebound windows
shaded.  Everything is emitted with fixed-precision formatting so a given
menu always produces byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

from .netmodel import Case

_W, _H = 720, 420
_ML, _MR, _MT, _MB = 64, 64, 40, 56
_SERIES = {
    "cap": "#1f77b4",
    "range": "#d62728",
    "baseline": "#444444",
    "p1": "#1f77b4",
    "a": "#2ca02c",
    "b": "#d62728",
    "c": "#9467bd",
}
_BANDS = {"service": "#1f77b4", "protected": "#2ca02c", "rebound": "#ff7f0e"}


def _fmt(x: float) -> str:
    return f"{x:.2f}"


class _Scale:
    def __init__(self, lo: float, hi: float, a: float, b: float):
        if hi <= lo:
            hi = lo + 1.0
        self.lo, self.hi, self.a, self.b = lo, hi, a, b

    def __call__(self, v: float) -> float:
        return self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)

    def ticks(self, n: int = 5) -> list[float]:
        step = (self.hi - self.lo) / (n - 1)
        return [self.lo + i * step for i in range(n)]


def _pad(lo: float, hi: float, frac: float = 0.08) -> tuple[float, float]:
    span = max(hi - lo, 1e-9)
    padded = lo - frac * span
    if lo >= 0.0:
        padded = max(padded, 0.0)
    return padded, hi + frac * span


def _polyline(pts, color, dash="", width=2.0) -> str:
    path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (
        f'<polyline points="{path}" fill="none" stroke="{color}" '
        f'stroke-width="{width}"{dash_attr} stroke-linejoin="round"/>'
    )


def _text(x, y, s, size=12, anchor="middle", color="#222", rotate=None) -> str:
    t = f' transform="rotate({rotate} {_fmt(x)} {_fmt(y)})"' if rotate else ""
    return (
        f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
        f'text-anchor="{anchor}" fill="{color}" '
        f'font-family="Helvetica, Arial, sans-serif"{t}>{s}</text>'
    )


def _frame(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        _text(_W / 2, 24, title, size=15),
    ]


def _axes(xs: _Scale, ys: _Scale, x_label: str, y_label: str,
          x_fmt=lambda v: f"{v:,.0f}") -> list[str]:
    out = []
    x0, x1 = _ML, _W - _MR
    y0, y1 = _H - _MB, _MT
    for v in ys.ticks():
        y = ys(v)
        out.append(_polyline([(x0, y), (x1, y)], "#dddddd", width=1.0))
        out.append(_text(x0 - 8, y + 4, f"{v:,.0f}", size=11, anchor="end"))
    for v in xs.ticks():
        x = xs(v)
        out.append(_text(x, y0 + 18, x_fmt(v), size=11))
    out.append(_polyline([(x0, y1), (x0, y0), (x1, y0)], "#222222", width=1.2))
    out.append(_text((x0 + x1) / 2, _H - 14, x_label, size=12))
    out.append(_text(18, (y0 + y1) / 2, y_label, size=12, rotate=-90))
    return out


def curves_svg(menu_doc: dict) -> str:
    """Import cap and down range of every tier against its budget increment."""
    tiers = menu_doc["tiers"]
    xs_v = [t["delta_gamma"] for t in tiers]
    caps = [(t["delta_gamma"], t["p0"]["lambda_d"]) for t in tiers if "lambda_d" in t["p0"]]
    rngs = [
        (t["delta_gamma"], sum(w["r_down"] for w in t["p1"]["windows"]))
        for t in tiers if t["p1"].get("windows")
    ]
    ys_v = [v for _, v in caps] + [v for _, v in rngs] + [0.0]
    xlo, xhi = _pad(min(xs_v), max(xs_v))
    ylo, yhi = _pad(min(ys_v), max(ys_v))
    xs = _Scale(xlo, xhi, _ML, _W - _MR)
    ys = _Scale(ylo, yhi, _H - _MB, _MT)

    parts = _frame(f"Product menu: {menu_doc['case']}")
    parts += _axes(xs, ys, "budget increment ($/yr)", "kW")
    for vals, key in ((caps, "cap"), (rngs, "range")):
        if not vals:
            continue
        pts = [(xs(x), ys(y)) for x, y in vals]
        parts.append(_polyline(pts, _SERIES[key]))
        for px, py in pts:
            parts.append(
                f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="3.5" '
                f'fill="{_SERIES[key]}"/>'
            )
    ref = menu_doc["lambda_exp"]["d"]
    parts.append(_polyline(
        [(xs(xs.lo), ys(ref)), (xs(xs.hi), ys(ref))], "#888888", dash="5,4", width=1.2
    ))
    parts.append(_text(_W - _MR - 4, ys(ref) - 6, "reference peak", size=10, anchor="end", color="#666"))
    lx = _ML + 12
    for i, (key, label) in enumerate((("cap", "import cap"), ("range", "down range"))):
        y = _MT + 14 + 16 * i
        parts.append(_polyline([(lx, y), (lx + 22, y)], _SERIES[key]))
        parts.append(_text(lx + 28, y + 4, label, size=11, anchor="start"))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _band(xs: _Scale, steps, color: str) -> list[str]:
    """One translucent rectangle per contiguous run of steps."""
    out = []
    steps = sorted(steps)
    i = 0
    while i < len(steps):
        j = i
        while j + 1 < len(steps) and steps[j + 1] == steps[j] + 1:
            j += 1
        x0 = xs(steps[i] - 0.5)
        x1 = xs(steps[j] + 0.5)
        out.append(
            f'<rect x="{_fmt(x0)}" y="{_MT}" width="{_fmt(x1 - x0)}" '
            f'height="{_H - _MB - _MT}" fill="{color}" opacity="0.12"/>'
        )
        i = j + 1
    return out


def _representative_scenario(baseline_doc: dict) -> str:
    profs = baseline_doc["baselines_kw"]
    return max(profs, key=lambda sid: (max(profs[sid]), sid))


def profiles_svg(case: Case, baseline_doc: dict, tier_doc: dict) -> str:
    """Substation profiles under the sustained down call, one per variant."""
    w = case.windows[0]
    sid = _representative_scenario(baseline_doc)
    baseline = baseline_doc["baselines_kw"][sid]
    total = len(baseline)

    def sust_key(profiles: dict) -> str | None:
        for kd in ("sust", "start", "end", "base"):
            key = f"{w.id}/{sid}/{kd}/base"
            if key in profiles:
                return key
        return None

    series = [("baseline (no call)", "baseline", baseline, "6,4")]
    p1 = tier_doc.get("p1") or {}
    if p1.get("profiles_kw"):
        key = sust_key(p1["profiles_kw"])
        if key:
            series.append(("caps only", "p1", p1["profiles_kw"][key], ""))
    for variant in ("a", "b", "c"):
        p2 = (tier_doc.get("p2") or {}).get(variant) or {}
        if p2.get("profiles_kw"):
            key = sust_key(p2["profiles_kw"])
            if key:
                series.append((f"variant {variant}", variant, p2["profiles_kw"][key], ""))

    ys_v = [v for _, _, prof, _ in series for v in prof] + [0.0]
    ylo, yhi = _pad(min(ys_v), max(ys_v))
    xs = _Scale(-0.5, total - 0.5, _ML, _W - _MR)
    ys = _Scale(ylo, yhi, _H - _MB, _MT)

    parts = _frame(
        f"Sustained down call, tier {tier_doc['k']} "
        f"(budget +{tier_doc['delta_gamma']:,.0f})"
    )
    parts += _band(xs, w.service_steps, _BANDS["service"])
    parts += _band(xs, w.protected_steps, _BANDS["protected"])
    parts += _band(xs, w.rebound_steps, _BANDS["rebound"])
    parts += _axes(xs, ys, "step", "substation net load (kW)",
                   x_fmt=lambda v: f"{v + 0.5:.0f}")
    for label, key, prof, dash in series:
        pts = [(xs(t), ys(v)) for t, v in enumerate(prof)]
        parts.append(_polyline(pts, _SERIES[key], dash=dash, width=1.8))
    lx = _ML + 12
    for i, (label, key, _, dash) in enumerate(series):
        y = _MT + 14 + 15 * i
        parts.append(_polyline([(lx, y), (lx + 22, y)], _SERIES[key], dash=dash, width=1.8))
        parts.append(_text(lx + 28, y + 4, label, size=11, anchor="start"))
    bx = _W - _MR - 150
    for i, (name, color) in enumerate(sorted(_BANDS.items())):
        y = _MT + 10 + 15 * i
        parts.append(
            f'<rect x="{bx}" y="{_fmt(y - 8)}" width="16" height="10" '
            f'fill="{color}" opacity="0.3"/>'
        )
        parts.append(_text(bx + 22, y, f"{name} window", size=10, anchor="start"))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_plots(case: Case, out_dir, tier: int | None = None) -> list[Path]:
    """Render both figures from the artifacts in out_dir; returns the paths."""
    from . import sweep as _sweep

    out_dir = Path(out_dir)
    menu_doc = _read_required(_sweep.menu_path(out_dir), "menu")
    baseline_doc = _read_required(_sweep.baseline_path(out_dir), "baseline")
    if tier is None:
        done = [
            t["k"] for t in menu_doc["tiers"] if t["p1"].get("windows")
        ]
        tier = done[-1] if done else menu_doc["tiers"][-1]["k"]
    tier_doc = _read_required(_sweep.tier_path(out_dir, tier), f"tier {tier}")

    curves = out_dir / "curves.svg"
    curves.write_text(curves_svg(menu_doc))
    profiles = out_dir / "profiles.svg"
    profiles.write_text(profiles_svg(case, baseline_doc, tier_doc))
    return [curves, profiles]


def _read_required(path: Path, what: str) -> dict:
    import json

    if not path.is_file():
        raise FileNotFoundError(f"missing {what} result: {path}")
    return json.loads(path.read_text())
