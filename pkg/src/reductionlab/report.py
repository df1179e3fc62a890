"""Run reports: probability tables, RFC-4180 CSV output, self-contained SVG plots.

Outcome labels are rendered 1-based for humans ("{1}", "{2,3,4}"); the Python
API underneath indexes states from 0.  CSV bytes are a pure function of the
inputs (floats via shortest round-trip repr, CRLF line ends), which is what the
determinism guarantees bite on.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

from .constants import PhysicalConstants
from .montecarlo import RNG_ID, McEstimate, TrialConfig, estimate
from .reduction import (
    cascade_distribution,
    static_probabilities,
    timedep_probabilities,
)
from .scenarios import Scenario

CSV_HEADER = ("scenario", "method", "outcome", "probability", "stderr",
              "expected", "provenance")

METHODS = ("static", "timedep", "cascade", "mc")

NO_EVENT_LABEL = "none"


def outcome_label(states: Sequence[int]) -> str:
    """Render a 0-based surviving set as a 1-based set label."""
    return "{" + ",".join(str(i + 1) for i in sorted(states)) + "}"


@dataclass(frozen=True)
class ReportRow:
    outcome: str
    probability: float
    stderr: Optional[float] = None
    expected: Optional[float] = None
    provenance: str = ""


@dataclass
class RunReport:
    scenario: str
    method: str
    rows: list
    constants: dict
    seed: Optional[int] = None
    n_trials: Optional[int] = None
    rng_id: Optional[str] = None
    wall_clock_s: float = 0.0
    source: Optional[dict] = None    # scenario description, sufficient to re-run

    def __post_init__(self):
        total = sum(r.probability for r in self.rows)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probability rows sum to {total!r}, expected 1")

    def csv_bytes(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow([
                self.scenario,
                self.method,
                row.outcome,
                repr(float(row.probability)),
                "" if row.stderr is None else repr(float(row.stderr)),
                "" if row.expected is None else repr(float(row.expected)),
                row.provenance,
            ])
        return buf.getvalue().encode("utf-8")

    def to_json(self) -> str:
        payload = {
            "scenario": self.scenario,
            "method": self.method,
            "rows": [asdict(r) for r in self.rows],
            "constants": self.constants,
            "seed": self.seed,
            "n_trials": self.n_trials,
            "rng_id": self.rng_id,
            "wall_clock_s": self.wall_clock_s,
            "source": self.source,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def constants_dict(consts: PhysicalConstants) -> dict:
    return {"G": consts.G, "hbar": consts.hbar, "k_boltzmann": consts.k_boltzmann,
            "c_light": consts.c_light, "xi": consts.xi}


def _expected_for(scenario: Scenario, key: tuple):
    if not scenario.expected:
        return None, ""
    hit = scenario.expected.get(tuple(sorted(key)))
    if hit is None:
        return None, ""
    return hit[0], hit[1]


def evaluate_scenario(scenario: Scenario, method: str, consts: PhysicalConstants,
                      seed: int = 0, trials: int = 100_000,
                      wall_clock_s: float = 0.0,
                      source: Optional[dict] = None) -> RunReport:
    """Evaluate one scenario with the chosen method and assemble the report."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    s = scenario.superposition
    rows = []
    seed_used = None
    trials_used = None
    rng_id = None
    if method == "static":
        probs = static_probabilities(s)
        for j, p in enumerate(probs):
            exp, prov = _expected_for(scenario, (j,))
            rows.append(ReportRow(outcome_label((j,)), float(p), None, exp, prov))
    elif method == "timedep":
        result = timedep_probabilities(s, scenario.profiles, consts=consts)
        for j, p in enumerate(result.probabilities):
            exp, prov = _expected_for(scenario, (j,))
            rows.append(ReportRow(outcome_label((j,)), p, None, exp, prov))
        if result.residual > 0:
            rows.append(ReportRow(NO_EVENT_LABEL, result.residual, None, None,
                                  "survival mass at the horizon"))
    elif method == "cascade":
        dist = cascade_distribution(s, scenario.profiles)
        for key in sorted(dist):
            exp, prov = _expected_for(scenario, key)
            rows.append(ReportRow(outcome_label(key), float(dist[key]), None, exp, prov))
    else:
        config = TrialConfig(seed=seed, n_trials=trials)
        est: McEstimate = estimate(s, scenario.profiles, config, consts)
        for key in sorted(est.outcomes):
            p, se = est.outcomes[key]
            exp, prov = _expected_for(scenario, key)
            rows.append(ReportRow(outcome_label(key), p, se, exp, prov))
        if est.n_no_event:
            rows.append(ReportRow(NO_EVENT_LABEL, est.n_no_event / est.n_trials,
                                  None, None, "survived past the horizon"))
        seed_used, trials_used, rng_id = seed, trials, RNG_ID
    return RunReport(scenario.name, method, rows, constants_dict(consts),
                     seed_used, trials_used, rng_id, wall_clock_s, source)


# ---------------------------------------------------------------------------
# minimal self-contained SVG line plot


def svg_line_plot(xs: Sequence[float], ys: Sequence[float], title: str,
                  x_label: str, y_label: str, log_x: bool = False,
                  log_y: bool = False, width: int = 640, height: int = 420) -> str:
    """Single-polyline SVG with axes and tick labels; no external assets."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("need at least two points")

    def tx(v):
        return math.log10(v) if log_x else v

    def ty(v):
        return math.log10(v) if log_y else v

    if log_x and min(xs) <= 0:
        raise ValueError("log x-axis needs positive values")
    if log_y and min(ys) <= 0:
        raise ValueError("log y-axis needs positive values")
    fx = [tx(v) for v in xs]
    fy = [ty(v) for v in ys]
    x0, x1 = min(fx), max(fx)
    y0, y1 = min(fy), max(fy)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    left, right, top, bottom = 70, 20, 40, 50

    def px(v):
        return left + (v - x0) / (x1 - x0) * (width - left - right)

    def py(v):
        return height - bottom - (v - y0) / (y1 - y0) * (height - top - bottom)

    pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(fx, fy))
    ticks = []
    for k in range(5):
        vx = x0 + (x1 - x0) * k / 4
        vy = y0 + (y1 - y0) * k / 4
        lx = 10 ** vx if log_x else vx
        ly = 10 ** vy if log_y else vy
        ticks.append(f'<line x1="{px(vx):.2f}" y1="{height-bottom}" x2="{px(vx):.2f}" '
                     f'y2="{height-bottom+5}" stroke="black"/>')
        ticks.append(f'<text x="{px(vx):.2f}" y="{height-bottom+18}" font-size="10" '
                     f'text-anchor="middle">{lx:.3g}</text>')
        ticks.append(f'<line x1="{left-5}" y1="{py(vy):.2f}" x2="{left}" '
                     f'y2="{py(vy):.2f}" stroke="black"/>')
        ticks.append(f'<text x="{left-8}" y="{py(vy):.2f}" font-size="10" '
                     f'text-anchor="end" dominant-baseline="middle">{ly:.3g}</text>')
    body = "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2}" y="20" font-size="13" text-anchor="middle">{title}</text>',
        f'<line x1="{left}" y1="{height-bottom}" x2="{width-right}" y2="{height-bottom}" '
        'stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height-bottom}" stroke="black"/>',
        *ticks,
        f'<text x="{(left+width-right)/2}" y="{height-12}" font-size="11" '
        f'text-anchor="middle">{x_label}</text>',
        f'<text x="16" y="{(top+height-bottom)/2}" font-size="11" text-anchor="middle" '
        f'transform="rotate(-90 16 {(top+height-bottom)/2})">{y_label}</text>',
        f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>',
        "</svg>",
    ])
    return body


def write_rows_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
