"""Directed trigger races over superpositions and the resulting reduction probabilities.

A superposition of n states carries amplitude weights w_j = |c_j|^2 and a
symmetric coupling matrix E[i][j] (joules).  The race emits directed trigger
events i -> j at rate E[i][j] * w_j / hbar; the first event fired decides the
outcome.  States are indexed from 0.

Arithmetic is generic: feeding ``fractions.Fraction`` weights and couplings
keeps every probability exact, which the brute-force enumeration tests use.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

from .constants import CONSTANTS, PhysicalConstants

ZERO_COUPLING_EPS = 1e-12   # relative to the largest matrix entry


class StableSuperpositionError(RuntimeError):
    """No trigger event can fire; reduction probabilities are undefined."""


class InvalidTriggerError(ValueError):
    """The requested trigger event has zero rate."""


class CouplingMismatchError(ValueError):
    """Couplings disagree with the provided mass distributions."""


@dataclass(frozen=True)
class Superposition:
    weights: tuple
    couplings: tuple

    def __post_init__(self):
        weights = tuple(self.weights)
        couplings = tuple(tuple(row) for row in self.couplings)
        n = len(weights)
        if n < 1:
            raise ValueError("need at least one state")
        if any(w < 0 for w in weights):
            raise ValueError("weights must be >= 0")
        if abs(sum(weights) - 1) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        if len(couplings) != n or any(len(row) != n for row in couplings):
            raise ValueError(f"couplings must be {n}x{n}")
        top = max((abs(e) for row in couplings for e in row), default=0)
        tol = 1e-9 * float(top) if top else 0.0
        for i in range(n):
            if abs(couplings[i][i]) > tol:
                raise ValueError("coupling diagonal must be zero")
            for j in range(i):
                if abs(couplings[i][j] - couplings[j][i]) > tol:
                    raise ValueError("couplings must be symmetric")
                if couplings[i][j] < 0:
                    raise ValueError("couplings must be >= 0")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "couplings", couplings)

    @property
    def n(self) -> int:
        return len(self.weights)

    def zero_threshold(self):
        top = max((e for row in self.couplings for e in row), default=0)
        return ZERO_COUPLING_EPS * float(top)


def _coupled(s: Superposition, i: int, j: int, eps=None) -> bool:
    if eps is None:
        eps = s.zero_threshold()
    return s.couplings[i][j] > eps


# ---------------------------------------------------------------------------
# rates


def trigger_rate_matrix(s: Superposition, consts: PhysicalConstants = CONSTANTS):
    """Directed rates: entry (i, j) is the trigger rate of the decay i -> j, 1/s."""
    return [[s.couplings[i][j] * s.weights[j] / consts.hbar if i != j else 0.0
             for j in range(s.n)] for i in range(s.n)]


def state_decay_rates(s: Superposition, consts: PhysicalConstants = CONSTANTS):
    """Total rate at which each state is triggered away (row sums of the race)."""
    return [sum(s.couplings[i][j] * s.weights[j] for j in range(s.n) if j != i) / consts.hbar
            for i in range(s.n)]


def reduction_rates(s: Superposition, consts: PhysicalConstants = CONSTANTS):
    """Total rate of events leading *towards* each state (column sums)."""
    return [sum(s.couplings[i][j] for i in range(s.n) if i != j) * s.weights[j] / consts.hbar
            for j in range(s.n)]


def static_probabilities(s: Superposition):
    """Reduction probabilities for couplings that share one time dependence.

    p_j is proportional to (sum_i E[i][j]) * w_j; invariant under rescaling the
    coupling matrix.  Raises :class:`StableSuperpositionError` when no event
    can fire.
    """
    masses = [sum(s.couplings[i][j] for i in range(s.n) if i != j) * s.weights[j]
              for j in range(s.n)]
    total = sum(masses)
    if total == 0:
        raise StableSuperpositionError("all trigger rates vanish; the superposition is stable")
    return [m / total for m in masses]


def two_state_lifetime(e_g, consts: PhysicalConstants = CONSTANTS) -> float:
    """Lifetime hbar / E of a two-state superposition; infinite at zero coupling."""
    if e_g < 0:
        raise ValueError("coupling energy must be >= 0")
    if e_g == 0:
        return math.inf
    return consts.hbar / e_g


def decay_rate_via_mean_potential(s: Superposition, dists, cfg=None,
                                  consts: PhysicalConstants = CONSTANTS,
                                  rel_tol: float = 0.05):
    """State decay rates recomputed from the mean-potential energy differences.

    Returns ``(exact, approximate)`` rate vectors: the exact transform uses the
    full energy-difference bracket, the approximate one assumes nearly equal
    gravitational self-energies and doubles the mean-potential term.  The exact
    vector equals :func:`state_decay_rates` within the quadrature tolerance.
    """
    from . import massdist as md
    if cfg is None:
        cfg = md.DEFAULT_CONFIG
    if len(dists) != s.n:
        raise ValueError("need one distribution per state")
    n = s.n
    v = [[0.0] * n for _ in range(n)]     # v[i][j] = int rho_i phi_j
    for i in range(n):
        for j in range(i, n):
            val = md.mutual_potential_integral(dists[i], dists[j], cfg, consts)
            v[i][j] = v[j][i] = val
    for i in range(n):
        for j in range(i + 1, n):
            eg = 0.5 * consts.xi * (2.0 * v[i][j] - v[i][i] - v[j][j])
            ref = s.couplings[i][j]
            scale = max(abs(ref), abs(eg), 1e-300)
            if abs(eg - ref) > rel_tol * scale:
                raise CouplingMismatchError(
                    f"coupling[{i}][{j}]={ref!r} disagrees with the distributions "
                    f"(quadrature gives {eg!r})")
    w = s.weights
    exact = []
    approx = []
    for i in range(n):
        mean_term = sum(w[j] * v[i][j] for j in range(n)) - v[i][i]
        self_term = sum(w[j] * v[i][j] for j in range(n)) - sum(w[j] * v[j][j] for j in range(n))
        exact.append(0.5 * consts.xi * (mean_term + self_term) / consts.hbar)
        approx.append(consts.xi * mean_term / consts.hbar)
    return exact, approx


# ---------------------------------------------------------------------------
# coupling profiles


@dataclass(frozen=True)
class ConstantProfile:
    def factor(self, t: float) -> float:
        return 1.0

    def breakpoints(self):
        return ()

    def linear_piece(self, a: float, b: float):
        return 1.0, 0.0


@dataclass(frozen=True)
class RampProfile:
    """Zero until ``t_on``, linear rise over ``t_rise`` (0 means a hard step), then 1."""

    t_on: float
    t_rise: float = 0.0

    def __post_init__(self):
        if self.t_on < 0 or self.t_rise < 0:
            raise ValueError("ramp times must be >= 0")

    def factor(self, t: float) -> float:
        if t < self.t_on:
            return 0.0
        if self.t_rise == 0.0 or t >= self.t_on + self.t_rise:
            return 1.0
        return (t - self.t_on) / self.t_rise

    def breakpoints(self):
        if self.t_rise == 0.0:
            return (self.t_on,)
        return (self.t_on, self.t_on + self.t_rise)

    def linear_piece(self, a: float, b: float):
        if b <= self.t_on:
            return 0.0, 0.0
        if self.t_rise == 0.0 or a >= self.t_on + self.t_rise:
            return 1.0, 0.0
        return (a - self.t_on) / self.t_rise, 1.0 / self.t_rise


@dataclass(frozen=True)
class TableProfile:
    """Piecewise-linear factor through (time, factor) knots, clamped outside."""

    points: tuple

    def __post_init__(self):
        pts = tuple((float(t), float(f)) for t, f in self.points)
        if len(pts) < 1:
            raise ValueError("table needs at least one knot")
        times = [t for t, _ in pts]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("table times must be strictly increasing")
        if any(not 0.0 <= f <= 1.0 for _, f in pts):
            raise ValueError("table factors must lie in [0, 1]")
        object.__setattr__(self, "points", pts)

    def factor(self, t: float) -> float:
        pts = self.points
        if t <= pts[0][0]:
            return pts[0][1]
        if t >= pts[-1][0]:
            return pts[-1][1]
        for (t0, f0), (t1, f1) in zip(pts, pts[1:]):
            if t0 <= t <= t1:
                return f0 + (f1 - f0) * (t - t0) / (t1 - t0)
        raise AssertionError("unreachable")

    def breakpoints(self):
        return tuple(t for t, _ in self.points)

    def linear_piece(self, a: float, b: float):
        pts = self.points
        if b <= pts[0][0]:
            return pts[0][1], 0.0
        if a >= pts[-1][0]:
            return pts[-1][1], 0.0
        for (t0, f0), (t1, f1) in zip(pts, pts[1:]):
            if t0 <= a and b <= t1:
                slope = (f1 - f0) / (t1 - t0)
                return f0 + slope * (a - t0), slope
        raise ValueError("segment spans a table knot")


@dataclass(frozen=True)
class MixtureProfile:
    """Convex combination of profiles; exact for shared multi-detector ramps."""

    components: tuple   # ((weight, profile), ...)

    def __post_init__(self):
        comps = tuple((float(w), p) for w, p in self.components)
        if not comps or abs(sum(w for w, _ in comps) - 1.0) > 1e-12:
            raise ValueError("component weights must sum to 1")
        object.__setattr__(self, "components", comps)

    def factor(self, t: float) -> float:
        return sum(w * p.factor(t) for w, p in self.components)

    def breakpoints(self):
        out = set()
        for _, p in self.components:
            out.update(p.breakpoints())
        return tuple(sorted(out))

    def linear_piece(self, a: float, b: float):
        f0 = 0.0
        slope = 0.0
        for w, p in self.components:
            pf, ps = p.linear_piece(a, b)
            f0 += w * pf
            slope += w * ps
        return f0, slope


CouplingProfile = (ConstantProfile, RampProfile, TableProfile, MixtureProfile)
CONSTANT = ConstantProfile()


class ProfileSet:
    """Per-pair time-dependence shapes, defaulting to a constant plateau."""

    def __init__(self, default=CONSTANT, overrides: Optional[dict] = None):
        self.default = default
        self.overrides = {}
        for key, prof in (overrides or {}).items():
            i, j = key
            self.overrides[(min(i, j), max(i, j))] = prof

    def for_pair(self, i: int, j: int):
        return self.overrides.get((min(i, j), max(i, j)), self.default)

    def all_constant(self) -> bool:
        profs = [self.default, *self.overrides.values()]
        return all(isinstance(p, ConstantProfile) for p in profs)

    def breakpoints(self, n: int):
        out = set()
        for i in range(n):
            for j in range(i + 1, n):
                out.update(self.for_pair(i, j).breakpoints())
        return sorted(out)


UNIT_PROFILES = ProfileSet()


@dataclass(frozen=True)
class ReductionOutcome:
    surviving: tuple      # ordered original state indices
    new_weights: tuple    # weights over `surviving`, summing to 1
    terminal: bool


@dataclass(frozen=True)
class TimedepResult:
    probabilities: tuple   # per-state reduction probabilities, summing to 1 - residual
    residual: float        # survival mass left at the horizon
    horizon: float
    horizon_warning: bool


# ---------------------------------------------------------------------------
# time-dependent race


def default_horizon(s: Superposition, profiles: ProfileSet, t0: float,
                    consts: PhysicalConstants) -> float:
    plateau_total = sum(s.couplings[i][j] * s.weights[j]
                        for i in range(s.n) for j in range(s.n) if i != j) / consts.hbar
    if plateau_total <= 0:
        raise StableSuperpositionError("all trigger rates vanish; the superposition is stable")
    last = max([t0, *profiles.breakpoints(s.n)])
    return last + 20.0 / plateau_total


def timedep_probabilities(s: Superposition, profiles: ProfileSet = UNIT_PROFILES,
                          t0: float = 0.0, horizon: Optional[float] = None,
                          consts: PhysicalConstants = CONSTANTS,
                          residual_warning: float = 1e-6):
    """Reduction probabilities for per-pair coupling time dependences.

    Integrates survival * reduction-rate over [t0, horizon] with the survival
    exponent accumulated exactly on each piecewise-linear rate segment.
    Returns a :class:`TimedepResult`; probabilities sum to 1 - residual.
    """
    if horizon is None:
        horizon = default_horizon(s, profiles, t0, consts)
    if horizon <= t0:
        raise ValueError("horizon must exceed t0")
    n = s.n
    hbar = consts.hbar
    cuts = [t0] + [b for b in profiles.breakpoints(n) if t0 < b < horizon] + [horizon]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if s.couplings[i][j] > 0]
    probs = [0.0] * n
    survival = 1.0
    for a, b in zip(cuts, cuts[1:]):
        length = b - a
        r0 = [0.0] * n   # rate into state j at segment start
        r1 = [0.0] * n   # slope of that rate
        for i, j in pairs:
            f0, slope = profiles.for_pair(i, j).linear_piece(a, b)
            e = float(s.couplings[i][j])
            r0[j] += e * f0 * float(s.weights[j]) / hbar
            r1[j] += e * slope * float(s.weights[j]) / hbar
            r0[i] += e * f0 * float(s.weights[i]) / hbar
            r1[i] += e * slope * float(s.weights[i]) / hbar
        lam0 = sum(r0)
        lam1 = sum(r1)
        if lam0 == 0.0 and lam1 == 0.0:
            continue
        if lam1 == 0.0:
            # constant total rate: closed form for each exp-linear integral
            decay = math.exp(-lam0 * length)
            g0 = (1.0 - decay) / lam0
            g1 = (1.0 - (1.0 + lam0 * length) * decay) / (lam0 * lam0)
            for j in range(n):
                probs[j] += survival * (r0[j] * g0 + r1[j] * g1)
            survival *= decay
        else:
            contrib = _integrate_quadratic_segment(lam0, lam1, r0, r1, length)
            for j in range(n):
                probs[j] += survival * contrib[j]
            survival *= math.exp(-(lam0 * length + 0.5 * lam1 * length * length))
    residual = survival
    warning = residual > residual_warning
    if warning:
        warnings.warn(f"residual survival {residual:.3e} above {residual_warning:.1e}; "
                      "the horizon may be too short", stacklevel=2)
    return TimedepResult(tuple(probs), residual, horizon, warning)


def _integrate_quadratic_segment(lam0, lam1, r0, r1, length, tol=1e-12, depth=32):
    """Vector of int_0^length exp(-(lam0 t + lam1 t^2/2)) (r0_j + r1_j t) dt."""
    from .quadrature import gauss_legendre

    def quad(a, b, order):
        x, w = gauss_legendre(order)
        t = 0.5 * (b - a) * x + 0.5 * (a + b)
        s = [math.exp(-(lam0 * ti + 0.5 * lam1 * ti * ti)) for ti in t]
        scale = 0.5 * (b - a)
        return [scale * sum(wi * si * (r0j + r1j * ti)
                            for wi, si, ti in zip(w, s, t))
                for r0j, r1j in zip(r0, r1)]

    def refine(a, b, level):
        coarse = quad(a, b, 16)
        fine = quad(a, b, 32)
        err = sum(abs(c - f) for c, f in zip(coarse, fine))
        if err <= tol or level >= depth:
            return fine
        mid = 0.5 * (a + b)
        left = refine(a, mid, level + 1)
        right = refine(mid, b, level + 1)
        return [l + r for l, r in zip(left, right)]

    return refine(0.0, length, 0)


# ---------------------------------------------------------------------------
# outcome rule


def apply_trigger(s: Superposition, i: int, j: int, eps=None) -> ReductionOutcome:
    """Outcome of the trigger event i -> j.

    Every state coupled to the target j (including i) vanishes; the target and
    all states uncoupled from it survive.  Vanished bystanders hand their
    weight to the target; the source splits its weight over the survivors it
    couples to, proportionally to the trigger streams it feeds.
    """
    n = s.n
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise InvalidTriggerError(f"invalid state pair ({i}, {j})")
    if eps is None:
        eps = s.zero_threshold()
    if not s.couplings[i][j] > eps or not s.weights[j] > 0:
        raise InvalidTriggerError(f"trigger {i} -> {j} has zero rate")
    surviving = [j] + [m for m in range(n)
                       if m not in (i, j) and not _coupled(s, m, j, eps)]
    surviving.sort()
    vanished = [k for k in range(n) if k not in surviving]
    new = {m: s.weights[m] for m in surviving}
    for k in vanished:
        if k == i:
            continue
        new[j] = new[j] + s.weights[k]
    fed = [m for m in surviving if _coupled(s, i, m, eps)]
    if fed:
        streams = {m: s.couplings[i][m] * s.weights[m] for m in fed}
        total_stream = sum(streams.values())
        if total_stream > 0:
            for m in fed:
                new[m] = new[m] + s.weights[i] * streams[m] / total_stream
        else:
            new[j] = new[j] + s.weights[i]
    else:
        new[j] = new[j] + s.weights[i]
    total = sum(new.values())
    weights = tuple(new[m] / total for m in surviving)
    terminal = len(surviving) == 1 or all(
        not _coupled(s, a, b, eps)
        for ai, a in enumerate(surviving) for b in surviving[ai + 1:])
    return ReductionOutcome(tuple(surviving), weights, terminal)


def _event_masses(s: Superposition, eps=None):
    """Unnormalised first-event probabilities, keyed by directed pair (i, j)."""
    if eps is None:
        eps = s.zero_threshold()
    events = {}
    for i in range(s.n):
        for j in range(s.n):
            if i == j or not s.couplings[i][j] > eps or not s.weights[j] > 0:
                continue
            events[(i, j)] = s.couplings[i][j] * s.weights[j]
    return events


def outcome_distribution(s: Superposition) -> dict:
    """Map surviving-set -> probability after the first trigger event."""
    events = _event_masses(s)
    total = sum(events.values())
    if total == 0:
        raise StableSuperpositionError("all trigger rates vanish; the superposition is stable")
    dist: dict = {}
    for (i, j), mass in events.items():
        outcome = apply_trigger(s, i, j)
        key = outcome.surviving
        dist[key] = dist.get(key, 0) + mass / total
    return dist


def cascade_distribution(s: Superposition, profiles: Optional[ProfileSet] = None) -> dict:
    """Terminal outcome distribution after recursively re-racing survivors.

    Each stage runs the constant-shape race on the restricted sub-superposition
    (exact whenever all couplings share one time dependence, as in every
    scenario shipped here); a stable sub-superposition counts as terminal.
    """
    if profiles is not None and not profiles.all_constant():
        warnings.warn("cascade expansion races each stage with constant shapes; "
                      "use the Monte Carlo estimator for time-resolved cascades",
                      stacklevel=2)
    out: dict = {}
    _cascade_into(s, tuple(range(s.n)), 1, out)
    return out


def _cascade_into(s: Superposition, labels: tuple, scale, out: dict) -> None:
    events = _event_masses(s)
    total = sum(events.values())
    if total == 0:
        out[labels] = out.get(labels, 0) + scale
        return
    for (i, j), mass in events.items():
        p = scale * (mass / total)
        outcome = apply_trigger(s, i, j)
        sub_labels = tuple(labels[m] for m in outcome.surviving)
        if outcome.terminal:
            out[sub_labels] = out.get(sub_labels, 0) + p
        else:
            sub = Superposition(
                outcome.new_weights,
                tuple(tuple(s.couplings[a][b] for b in outcome.surviving)
                      for a in outcome.surviving))
            _cascade_into(sub, sub_labels, p, out)


# ---------------------------------------------------------------------------
# limiting-weight probe


@dataclass(frozen=True)
class DiscontinuityProbe:
    path: tuple            # ((w3, probabilities), ...) along the shrinking path
    limit: tuple           # 3-state probabilities at the smallest third weight
    two_state: tuple       # direct 2-state probabilities
    discontinuous: bool


def discontinuity_probe(couplings, weights_path=None, base=(0.5, 0.5),
                        epsilons=(1e-3, 1e-6, 1e-9), tol: float = 1e-6) -> DiscontinuityProbe:
    """Compare the third-weight -> 0 limit against the direct two-state race.

    The limit keeps the bystander couplings' pull on states 1 and 2; it matches
    the two-state projection result only when those couplings are symmetric.
    """
    couplings = tuple(tuple(row) for row in couplings)
    if len(couplings) != 3 or any(len(r) != 3 for r in couplings):
        raise ValueError("couplings must be 3x3")
    w1, w2 = base
    if weights_path is None:
        weights_path = [((1 - e) * w1 / (w1 + w2), (1 - e) * w2 / (w1 + w2), e)
                        for e in epsilons]
    path = []
    for w in weights_path:
        probs = static_probabilities(Superposition(tuple(w), couplings))
        path.append((w[2], tuple(probs)))
    limit = path[-1][1]
    pair = Superposition((w1 / (w1 + w2), w2 / (w1 + w2)),
                         ((0.0, couplings[0][1]), (couplings[0][1], 0.0)))
    two_state = tuple(static_probabilities(pair))
    head = limit[0] + limit[1]
    renorm = (limit[0] / head, limit[1] / head)
    discontinuous = abs(renorm[0] - two_state[0]) > tol
    return DiscontinuityProbe(tuple(path), limit, two_state, discontinuous)
