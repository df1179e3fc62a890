"""Stochastic oracle: the trigger race as competing inhomogeneous Poisson clocks.

Each trial owns a counter-derived random stream (PCG64 seeded from
``SeedSequence([seed, trial_index])``), so estimates are bit-identical for a
fixed seed regardless of execution order or how trials are chunked over
workers.  Event times come from thinning against the plateau-bound total rate,
which stays valid for every profile shape since factors never exceed 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constants import CONSTANTS, PhysicalConstants
from .reduction import (
    ConstantProfile,
    ProfileSet,
    Superposition,
    UNIT_PROFILES,
    apply_trigger,
    default_horizon,
)

RNG_ID = "numpy-pcg64/seedsequence(seed,trial_index)"


@dataclass(frozen=True)
class TrialConfig:
    seed: int
    n_trials: int
    horizon: Optional[float] = None     # None: 20 plateau lifetimes
    thinning_bound_factor: float = 1.0

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.thinning_bound_factor < 1.0:
            raise ValueError("thinning_bound_factor must be >= 1")


@dataclass(frozen=True)
class McEstimate:
    outcomes: dict         # surviving tuple -> (probability, standard error)
    n_trials: int
    n_no_event: int
    rng_id: str = RNG_ID

    def probability(self, key) -> float:
        return self.outcomes.get(tuple(key), (0.0, 0.0))[0]

    def stderr(self, key) -> float:
        return self.outcomes.get(tuple(key), (0.0, 0.0))[1]


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial_index]))


def _directed_rates(s: Superposition, consts: PhysicalConstants):
    pairs = []
    rates = []
    eps = s.zero_threshold()
    for i in range(s.n):
        for j in range(s.n):
            if i == j or not s.couplings[i][j] > eps or not s.weights[j] > 0:
                continue
            pairs.append((i, j))
            rates.append(float(s.couplings[i][j]) * float(s.weights[j]) / consts.hbar)
    return pairs, rates


class _RaceNode:
    """Immutable per-(sub)superposition sampling state, with memoised outcomes."""

    def __init__(self, s: Superposition, profiles: ProfileSet, labels: tuple,
                 consts: PhysicalConstants):
        self.s = s
        self.labels = labels
        self.consts = consts
        self.pairs, self.rates = _directed_rates(s, consts)
        self.total = sum(self.rates)
        self.profs = [profiles.for_pair(i, j) for i, j in self.pairs]
        self.constant = all(isinstance(p, ConstantProfile) for p in self.profs)
        self.profiles = profiles
        self._children: dict = {}

    def child(self, pair_index: int):
        """Race node after the event of ``pair_index`` fired (non-terminal only)."""
        cached = self._children.get(pair_index)
        if cached is not None:
            return cached
        i, j = self.pairs[pair_index]
        outcome = apply_trigger(self.s, i, j)
        labels = tuple(self.labels[m] for m in outcome.surviving)
        if outcome.terminal:
            node = (labels, None)
        else:
            sub = Superposition(
                outcome.new_weights,
                tuple(tuple(self.s.couplings[a][b] for b in outcome.surviving)
                      for a in outcome.surviving))
            remap = {}
            for ai, a in enumerate(outcome.surviving):
                for bi in range(ai + 1, len(outcome.surviving)):
                    remap[(ai, bi)] = self.profiles.for_pair(a, outcome.surviving[bi])
            node = (labels, _RaceNode(sub, ProfileSet(self.profiles.default, remap),
                                      labels, self.consts))
        self._children[pair_index] = node
        return node


def _sample_event(node: _RaceNode, rng, t: float, horizon: float,
                  bound_factor: float, counters: Optional[dict] = None):
    """Thinning sampler on one race node; returns (t, pair_index) or None."""
    if node.total <= 0.0:
        return None
    bound = node.total * bound_factor
    rates = node.rates
    while True:
        t += -math.log(rng.random()) / bound
        if t > horizon:
            return None
        if node.constant:
            inst = rates
            lam = node.total
        else:
            inst = [r * p.factor(t) for r, p in zip(rates, node.profs)]
            lam = sum(inst)
        if counters is not None:
            counters["proposals"] = counters.get("proposals", 0) + 1
        if rng.random() * bound <= lam:
            if counters is not None:
                counters["accepts"] = counters.get("accepts", 0) + 1
            pick = rng.random() * lam
            acc = 0.0
            for k, r in enumerate(inst):
                acc += r
                if pick <= acc:
                    return t, k
            return t, len(inst) - 1


def _run_trial(root: _RaceNode, rng, horizon: float, bound_factor: float) -> tuple:
    node = root
    t = 0.0
    while True:
        event = _sample_event(node, rng, t, horizon, bound_factor)
        if event is None:
            return node.labels
        t, k = event
        labels, child = node.child(k)
        if child is None:
            return labels
        node = child


def sample_first_trigger(s: Superposition, profiles: ProfileSet, t0: float,
                         horizon: float, rng: np.random.Generator,
                         consts: PhysicalConstants = CONSTANTS,
                         bound_factor: float = 1.0, counters: Optional[dict] = None):
    """First trigger event of the race on [t0, horizon], or None if none fires.

    Candidate times arrive at the plateau-bound total rate and are accepted
    with probability (instantaneous rate)/bound; the firing pair is then drawn
    proportionally to the instantaneous per-pair rates.
    """
    node = _RaceNode(s, profiles, tuple(range(s.n)), consts)
    event = _sample_event(node, rng, t0, horizon, bound_factor, counters)
    if event is None:
        return None
    t, k = event
    i, j = node.pairs[k]
    return t, i, j


def run_cascade_trial(s: Superposition, profiles: ProfileSet, config: TrialConfig,
                      trial_index: int,
                      consts: PhysicalConstants = CONSTANTS) -> tuple:
    """One full trial: race, apply the outcome rule, re-race the survivors.

    Returns the terminal surviving set as a tuple of original state indices;
    deterministic in (config.seed, trial_index) alone.
    """
    root = _RaceNode(s, profiles, tuple(range(s.n)), consts)
    horizon = _resolve_horizon(config, root, s, profiles, consts)
    rng = trial_rng(config.seed, trial_index)
    return _run_trial(root, rng, horizon, config.thinning_bound_factor)


def _resolve_horizon(config: TrialConfig, root: _RaceNode, s: Superposition,
                     profiles: ProfileSet, consts: PhysicalConstants) -> float:
    if config.horizon is not None:
        return config.horizon
    if root.total <= 0.0:
        return math.inf   # stable superposition: no event can ever fire
    return default_horizon(s, profiles, 0.0, consts)


def estimate(s: Superposition, profiles: ProfileSet = UNIT_PROFILES,
             config: TrialConfig = TrialConfig(seed=0, n_trials=10_000),
             consts: PhysicalConstants = CONSTANTS) -> McEstimate:
    """Outcome probabilities with binomial standard errors over ``n_trials``.

    A trial that reaches the horizon with events still possible counts as
    'no event' rather than as an outcome; merging per-trial results is a pure
    count, so any partition of the trial index range gives the same estimate.
    """
    root = _RaceNode(s, profiles, tuple(range(s.n)), consts)
    horizon = _resolve_horizon(config, root, s, profiles, consts)
    full = root.labels
    seed_sequence = np.random.SeedSequence
    generator = np.random.default_rng
    counts: dict = {}
    n_no_event = 0
    bound_factor = config.thinning_bound_factor
    for trial in range(config.n_trials):
        rng = generator(seed_sequence([config.seed, trial]))
        result = _run_trial(root, rng, horizon, bound_factor)
        if result == full and s.n > 1:
            n_no_event += 1
        else:
            counts[result] = counts.get(result, 0) + 1
    n = config.n_trials
    outcomes = {key: (c / n, math.sqrt(c / n * (1 - c / n) / n))
                for key, c in counts.items()}
    return McEstimate(outcomes, n, n_no_event)


def merge_counts(results) -> dict:
    """Count-merge helper for chunked execution; associative and order-free."""
    counts: dict = {}
    for r in results:
        counts[r] = counts.get(r, 0) + 1
    return counts
