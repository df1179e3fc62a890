"""Reproducible experiment builders: detector networks, the mutation star, sweeps.

Couplings are composed structurally from per-detector contributions: two states
couple with one unit per detector whose mass distribution differs between them.
A network of mass-shifting detectors therefore carries 2x the single-detector
coupling on every pair, while detectors that record without shifting any mass
contribute nothing, leaving a star around the one shifting detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .constants import CONSTANTS, PhysicalConstants
from .reduction import (
    CONSTANT,
    ConstantProfile,
    MixtureProfile,
    ProfileSet,
    RampProfile,
    Superposition,
    timedep_probabilities,
)

DEFAULT_E_PLATEAU = 1.0e-31   # J; outcome ratios are invariant under this scale


@dataclass(frozen=True)
class Scenario:
    name: str
    superposition: Superposition
    profiles: ProfileSet
    expected: Optional[dict] = None   # outcome tuple -> (probability, provenance)
    notes: str = ""

    def __post_init__(self):
        n = self.superposition.n
        for i, j in getattr(self.profiles, "overrides", {}):
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"profile pair ({i}, {j}) outside the {n} states")
        if self.expected:
            for key in self.expected:
                if any(not 0 <= k < n for k in key):
                    raise ValueError(f"expected outcome {key} outside the {n} states")
            total = sum(p for p, _ in self.expected.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError("expected probabilities must sum to 1")


@dataclass(frozen=True)
class DetectorSpec:
    """One photon detector in a split-beam network.

    ``shifts_mass`` marks detectors that displace a rigid mass on detection;
    ``fire_delay``/``rise`` delay that displacement relative to the photon's
    arrival.
    """

    shifts_mass: bool = True
    fire_delay: float = 0.0
    rise: float = 0.0


def _detector_profile(spec: DetectorSpec) -> object:
    if not spec.shifts_mass or (spec.fire_delay == 0.0 and spec.rise == 0.0):
        return CONSTANT
    return RampProfile(spec.fire_delay, spec.rise)


def _combine_profiles(pa, pb) -> object:
    """Average of two switch-on factors (each detector carries half the pair coupling)."""
    if isinstance(pa, ConstantProfile) and isinstance(pb, ConstantProfile):
        return CONSTANT
    return MixtureProfile(((0.5, pa), (0.5, pb)))


def build_detector_network(detectors: Sequence[DetectorSpec], e_single: float,
                           weights: Optional[Sequence[float]] = None,
                           include_null_state: bool = False,
                           name: str = "detector-network") -> Scenario:
    """Network of single-photon detectors, one state per detector.

    State i means the photon fired detector i; the optional null state means no
    detector fired.  Pair couplings add one ``e_single`` per mass-shifting
    detector on which the two states disagree (plateau values; delayed
    detectors enter through ramp profiles).
    """
    n_det = len(detectors)
    if n_det < 1:
        raise ValueError("need at least one detector")
    if e_single <= 0:
        raise ValueError("e_single must be > 0")
    n_full = n_det + 1 if include_null_state else n_det
    if weights is None:
        weights = [1.0 / n_full] * n_full
    weights = list(weights)
    if len(weights) != n_full:
        raise ValueError(f"need {n_full} weights")
    # a zero-amplitude arm is no experiment at all: drop the state entirely
    # rather than keep a mute competitor with undefined limiting behaviour
    keep = [k for k, w in enumerate(weights) if w > 0]
    if len(keep) < 2:
        raise ValueError("need at least two states with nonzero weight")
    detectors = list(detectors)
    weights = [weights[k] for k in keep]
    n = len(keep)

    def detector_for(state: int):
        return detectors[state] if state < n_det else None

    couplings = [[0.0] * n for _ in range(n)]
    overrides = {}
    for pi in range(n):
        for pj in range(pi + 1, n):
            contribs = []
            for state in (keep[pi], keep[pj]):
                det = detector_for(state)
                if det is not None and det.shifts_mass:
                    contribs.append(_detector_profile(det))
            if not contribs:
                continue
            couplings[pi][pj] = couplings[pj][pi] = e_single * len(contribs)
            if len(contribs) == 1:
                prof = contribs[0]
            else:
                prof = _combine_profiles(*contribs)
            if not isinstance(prof, ConstantProfile):
                overrides[(pi, pj)] = prof
    sup = Superposition(tuple(weights), tuple(tuple(r) for r in couplings))
    return Scenario(name, sup, ProfileSet(overrides=overrides))


def build_all_changing(n_detectors: int, e_plateau: float = DEFAULT_E_PLATEAU,
                       profile=None) -> Scenario:
    """Split photon, every detector shifts a mass: all pair couplings 2 e_plateau."""
    if n_detectors < 2:
        raise ValueError("need at least two detectors")
    base = build_detector_network([DetectorSpec()] * n_detectors, e_plateau,
                                  name=f"all-changing-{n_detectors}")
    profiles = ProfileSet(default=profile) if profile is not None else base.profiles
    n = n_detectors
    expected = {(i,): (1.0 / n, "projection postulate (equal couplings)") for i in range(n)}
    return Scenario(base.name, base.superposition, profiles, expected)


def build_one_changing(n_detectors: int, e_plateau: float = DEFAULT_E_PLATEAU,
                       profile=None) -> Scenario:
    """Split photon, only detector 1 shifts a mass; the rest record passively.

    The coupling graph is a star around state 0, and the race sends half of
    all outcomes to state 0 and half to the untouched remainder superposition,
    independent of the detector count.
    """
    if n_detectors < 2:
        raise ValueError("need at least two detectors")
    detectors = [DetectorSpec()] + [DetectorSpec(shifts_mass=False)] * (n_detectors - 1)
    base = build_detector_network(detectors, e_plateau,
                                  name=f"one-changing-{n_detectors}")
    profiles = ProfileSet(default=profile) if profile is not None else base.profiles
    rest = tuple(range(1, n_detectors))
    if n_detectors == 2:
        expected = {(0,): (0.5, "two-state projection rule"),
                    (1,): (0.5, "two-state projection rule")}
    else:
        expected = {(0,): (0.5, "half rule for a single distinguished state"),
                    rest: (0.5, "half rule for a single distinguished state")}
    return Scenario(base.name, base.superposition, profiles, expected)


def build_two_detector_overlap(c1sq: float, c2sq: float,
                               e_plateau: float = DEFAULT_E_PLATEAU) -> Scenario:
    """Particle seen by two detectors at once, plus the not-detected state.

    The detected states differ at both detectors (coupling 2e) while each
    couples to the null state with e; detection-probability ratios stay at the
    projection value but their absolute sum is pulled up.
    """
    c3sq = 1.0 - c1sq - c2sq
    if min(c1sq, c2sq, c3sq) < 0:
        raise ValueError("weights must be a sub-distribution")
    base = build_detector_network([DetectorSpec(), DetectorSpec()], e_plateau,
                                  weights=(c1sq, c2sq, c3sq), include_null_state=True,
                                  name="two-detector-overlap")
    expected = None
    if min(c1sq, c2sq, c3sq) > 0:
        masses = (3.0 * c1sq, 3.0 * c2sq, 2.0 * c3sq)
        total = sum(masses)
        expected = {(i,): (m / total, "column-sum closed form")
                    for i, m in enumerate(masses)}
    return Scenario(base.name, base.superposition, base.profiles, expected)


def build_continuous_medium(n_cells: int, weight_profile: Sequence[float],
                            e_plateau: float = DEFAULT_E_PLATEAU) -> Scenario:
    """Detection by a continuous film, modelled as many small shifting detectors."""
    weights = [float(w) for w in weight_profile]
    if len(weights) != n_cells:
        raise ValueError("need one weight per cell")
    base = build_detector_network([DetectorSpec()] * n_cells, e_plateau,
                                  weights=weights, name=f"continuous-medium-{n_cells}")
    expected = {(i,): (w, "projection postulate (equal couplings)")
                for i, w in enumerate(weights)}
    return Scenario(base.name, base.superposition, base.profiles, expected)


# ---------------------------------------------------------------------------
# mutation star


def star_center_probability(n_other: int, center_weight) -> float:
    """Exact reduction probability onto the hub of a star coupling graph."""
    return n_other * center_weight / (n_other * center_weight + 1 - center_weight)


def star_original_asymptotic(n_mutants: int, c1sq: float) -> float:
    """Large-n probability of reducing back onto the original state."""
    return 1.0 - (1.0 / n_mutants) * (1.0 - c1sq) / c1sq


def star_mutant_asymptotic(c1sq: float) -> float:
    """Large-n probability of reducing onto the one distinguished mutant."""
    return (1.0 - c1sq) / (2.0 - c1sq)


def build_biology_star(n_mutants: int, c1sq: float, center: str = "original",
                       e_plateau: float = DEFAULT_E_PLATEAU) -> Scenario:
    """Cell superposition: one metabolising state coupled to all quiet ones.

    State 0 is the original genome with weight ``c1sq``; states 1..n are
    mutants sharing the rest.  Only the metabolising state moves mass, so the
    coupling graph is a star around it: the original when it can feed, or the
    single viable mutant after the food swap.
    """
    if n_mutants < 1:
        raise ValueError("need at least one mutant")
    if not 0.0 < c1sq < 1.0:
        raise ValueError("c1sq must lie in (0, 1)")
    if center not in ("original", "mutant"):
        raise ValueError("center must be 'original' or 'mutant'")
    n = n_mutants + 1
    hub = 0 if center == "original" else 1
    weights = [c1sq] + [(1.0 - c1sq) / n_mutants] * n_mutants
    couplings = [[0.0] * n for _ in range(n)]
    for k in range(n):
        if k != hub:
            couplings[hub][k] = couplings[k][hub] = e_plateau
    p_hub = star_center_probability(n - 1, weights[hub])
    rest = tuple(k for k in range(n) if k != hub)
    expected = {(hub,): (p_hub, "exact finite-n star formula"),
                rest: (1.0 - p_hub, "exact finite-n star formula")}
    return Scenario(f"mutation-star-{center}",
                    Superposition(tuple(weights), tuple(tuple(r) for r in couplings)),
                    ProfileSet(), expected,
                    notes="large-n asymptotics: original -> 1 - (1/n)(1-c)/c, "
                          "mutant -> (1-c)/(2-c)")


# ---------------------------------------------------------------------------
# delayed-detector lifetime sweep


@dataclass(frozen=True)
class SweepPoint:
    delay: float
    p_first: float


@dataclass(frozen=True)
class DelayedSweepResult:
    points: tuple
    fitted_rate: float        # 1/s
    fitted_lifetime: float    # s
    floor: float              # small-delay limit 1/n
    ceiling: float            # large-delay limit 0.5


def build_delayed_network(n_detectors: int, e_plateau: float, delay: float,
                          rise: float = 0.0) -> Scenario:
    """One prompt shifting detector; the others shift only after ``delay``."""
    detectors = [DetectorSpec()] + \
        [DetectorSpec(fire_delay=delay, rise=rise)] * (n_detectors - 1)
    return build_detector_network(detectors, e_plateau,
                                  name=f"delayed-{n_detectors}@{delay:g}")


def delayed_detector_sweep(n_detectors: int, e_plateau: float, delays: Sequence[float],
                           rise: float = 0.0,
                           consts: PhysicalConstants = CONSTANTS) -> DelayedSweepResult:
    """p(reduce onto the prompt detector) as a function of the shift delay.

    Interpolates between the all-equal race (1/n at zero delay) and the star
    race (1/2 once the superposition has decayed before anyone else moves);
    the knee is fitted with the saturating exponential between the two known
    asymptotes, which extracts the pre-switch decay rate.
    """
    if any(d < 0 for d in delays):
        raise ValueError("delays must be >= 0")
    points = []
    for delay in delays:
        scn = build_delayed_network(n_detectors, e_plateau, delay, rise)
        result = timedep_probabilities(scn.superposition, scn.profiles, consts=consts)
        total = sum(result.probabilities) + result.residual
        points.append(SweepPoint(delay, result.probabilities[0] / (total - result.residual)))
    floor = 1.0 / n_detectors
    ceiling = 0.5
    xs, ys = [], []
    for pt in points:
        gap = ceiling - pt.p_first
        if pt.delay > 0 and gap > 1e-12 * ceiling:
            xs.append(pt.delay)
            ys.append(math.log(gap / (ceiling - floor)))
    if len(xs) >= 2:
        mean_x = sum(xs) / len(xs)
        mean_y = sum(ys) / len(ys)
        slope = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys)) / \
            sum((x - mean_x) ** 2 for x in xs)
        rate = -slope
    elif points and points[-1].delay > 0:
        gap = ceiling - points[-1].p_first
        rate = -math.log(max(gap, 1e-300) / (ceiling - floor)) / points[-1].delay
    else:
        rate = math.nan
    lifetime = 1.0 / rate if rate and rate > 0 else math.inf
    return DelayedSweepResult(tuple(points), rate, lifetime, floor, ceiling)


# ---------------------------------------------------------------------------
# measurement planning


@dataclass(frozen=True)
class TrialPlan:
    n_successful: int
    n_total: int


def required_trials(target_dp: float, quantum_efficiency: float = 1.0) -> TrialPlan:
    """Measurements needed to pin a reduction probability to ``target_dp``.

    The probability accuracy scales as 1.3 / sqrt(N_successful); detector
    efficiency below 1 inflates the raw trial count accordingly.
    """
    if not 0 < target_dp < 1:
        raise ValueError("target_dp must lie in (0, 1)")
    if not 0 < quantum_efficiency <= 1:
        raise ValueError("quantum_efficiency must lie in (0, 1]")
    n_succ = math.ceil((1.3 / target_dp) ** 2)
    return TrialPlan(n_succ, math.ceil(n_succ / quantum_efficiency))


# ---------------------------------------------------------------------------
# registry for the CLI and the cross-oracle tests


def _registry():
    return {
        "all-changing-4": lambda: build_all_changing(4),
        "one-changing-4": lambda: build_one_changing(4),
        "one-changing-8": lambda: build_one_changing(8),
        "two-detector-overlap": lambda: build_two_detector_overlap(1 / 3, 1 / 3),
        "continuous-medium-16": lambda: build_continuous_medium(
            16, [1.0 / 16] * 16),
        "mutation-star-original": lambda: build_biology_star(100, 0.5, "original"),
        "mutation-star-mutant": lambda: build_biology_star(100, 0.5, "mutant"),
    }


SCENARIO_BUILDERS = _registry()


def build_named(name: str, **params) -> Scenario:
    """Build a scenario by CLI-addressable name."""
    factories = {
        "all-changing": lambda: build_all_changing(
            int(params.get("n", 4)), float(params.get("e_plateau", DEFAULT_E_PLATEAU))),
        "one-changing": lambda: build_one_changing(
            int(params.get("n", 4)), float(params.get("e_plateau", DEFAULT_E_PLATEAU))),
        "two-detector-overlap": lambda: build_two_detector_overlap(
            float(params.get("c1sq", 1 / 3)), float(params.get("c2sq", 1 / 3)),
            float(params.get("e_plateau", DEFAULT_E_PLATEAU))),
        "continuous-medium": lambda: build_continuous_medium(
            int(params.get("n", 16)),
            params.get("weights", [1.0 / int(params.get("n", 16))] * int(params.get("n", 16))),
            float(params.get("e_plateau", DEFAULT_E_PLATEAU))),
        "mutation-star": lambda: build_biology_star(
            int(params.get("n", 100)), float(params.get("c1sq", 0.5)),
            str(params.get("center", "original")),
            float(params.get("e_plateau", DEFAULT_E_PLATEAU))),
        "delayed": lambda: build_delayed_network(
            int(params.get("n", 4)), float(params.get("e_plateau", DEFAULT_E_PLATEAU)),
            float(params.get("delay", 0.0)), float(params.get("rise", 0.0))),
    }
    if name not in factories:
        raise KeyError(f"unknown builder {name!r}; available: {sorted(factories)}")
    return factories[name]()
