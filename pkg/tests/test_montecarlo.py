import math
import random
from collections import Counter

import pytest
from scipy import stats

from reductionlab.constants import CONSTANTS
from reductionlab.montecarlo import (
    TrialConfig,
    estimate,
    merge_counts,
    run_cascade_trial,
    sample_first_trigger,
    trial_rng,
)
from reductionlab.reduction import (
    ProfileSet,
    RampProfile,
    Superposition,
    UNIT_PROFILES,
    cascade_distribution,
    static_probabilities,
)
from reductionlab.scenarios import SCENARIO_BUILDERS, build_all_changing, build_one_changing

HBAR = CONSTANTS.hbar


def three_state():
    return Superposition((0.25, 0.25, 0.5),
                         ((0, 2e-31, 1e-31), (2e-31, 0, 1e-31), (1e-31, 1e-31, 0)))


def test_pair_frequencies_match_rate_ratios():
    # competing exponential clocks: the winner is categorical in the rates
    s = three_state()
    rng = trial_rng(123, 0)
    horizon = 1e40
    counts = Counter()
    n = 100_000
    for _ in range(n):
        t, i, j = sample_first_trigger(s, UNIT_PROFILES, 0.0, horizon, rng)
        counts[(i, j)] += 1
    rates = {(i, j): float(s.couplings[i][j]) * s.weights[j] / HBAR
             for i in range(3) for j in range(3) if i != j and s.couplings[i][j] > 0}
    total = sum(rates.values())
    for key, rate in rates.items():
        p = rate / total
        sigma = math.sqrt(p * (1 - p) / n)
        assert abs(counts[key] / n - p) < 4 * sigma


def test_waiting_times_are_exponential():
    s = three_state()
    rng = trial_rng(456, 0)
    total_rate = sum(float(s.couplings[i][j]) * s.weights[j] / HBAR
                     for i in range(3) for j in range(3) if i != j)
    times = []
    for _ in range(20_000):
        t, _, _ = sample_first_trigger(s, UNIT_PROFILES, 0.0, 1e40, rng)
        times.append(t)
    result = stats.kstest(times, "expon", args=(0.0, 1.0 / total_rate))
    assert result.pvalue > 0.01


def test_ramp_profiles_block_events_before_onset():
    e = 1e-28
    t_on = 5 * HBAR / e
    s = Superposition((0.5, 0.5), ((0.0, e), (e, 0.0)))
    profiles = ProfileSet(default=RampProfile(t_on=t_on, t_rise=t_on))
    rng = trial_rng(789, 0)
    for _ in range(2000):
        event = sample_first_trigger(s, profiles, 0.0, t_on * 50, rng)
        if event is not None:
            assert event[0] >= t_on


def test_thinning_acceptance_rate_on_ramp():
    # proposals form a Poisson stream at the bound; acceptance averages the
    # instantaneous rate over the window when sampling continues past events
    e = 1e-28
    s = Superposition((0.5, 0.5), ((0.0, e), (e, 0.0)))
    window = 40 * HBAR / e
    profiles = ProfileSet(default=RampProfile(t_on=0.0, t_rise=window))
    bound_factor = 2.0
    counters = {}
    rng = trial_rng(24, 0)
    for _ in range(400):
        t = 0.0
        while True:
            event = sample_first_trigger(s, profiles, t, window, rng,
                                         bound_factor=bound_factor, counters=counters)
            if event is None:
                break
            t = event[0]
    mean_factor = 0.5       # linear ramp over the whole window
    expected = mean_factor / bound_factor
    ratio = counters["accepts"] / counters["proposals"]
    assert ratio == pytest.approx(expected, rel=0.02)


def test_all_changing_trials_end_in_singletons():
    scn = build_all_changing(4)
    config = TrialConfig(seed=5, n_trials=1)
    for trial in range(300):
        result = run_cascade_trial(scn.superposition, scn.profiles, config, trial)
        assert len(result) == 1


def test_one_changing_trials_end_in_hub_or_remainder():
    scn = build_one_changing(4)
    config = TrialConfig(seed=6, n_trials=1)
    seen = set()
    for trial in range(300):
        result = run_cascade_trial(scn.superposition, scn.profiles, config, trial)
        seen.add(result)
        assert result in ((0,), (1, 2, 3))
    assert seen == {(0,), (1, 2, 3)}


def test_zero_coupling_returns_full_set():
    s = Superposition((0.5, 0.5), ((0.0, 0.0), (0.0, 0.0)))
    result = run_cascade_trial(s, UNIT_PROFILES, TrialConfig(seed=1, n_trials=1), 0)
    assert result == (0, 1)


def test_estimate_deterministic_and_order_free():
    scn = build_one_changing(4)
    config = TrialConfig(seed=7, n_trials=2000)
    first = estimate(scn.superposition, scn.profiles, config)
    second = estimate(scn.superposition, scn.profiles, config)
    assert first == second
    # chunked execution in shuffled order merges to the same counts
    order = list(range(config.n_trials))
    random.Random(0).shuffle(order)
    results = [None] * config.n_trials
    for trial in order:
        results[trial] = run_cascade_trial(scn.superposition, scn.profiles, config, trial)
    counts = merge_counts(results)
    for key, (p, _) in first.outcomes.items():
        assert counts[key] == round(p * config.n_trials)


def test_estimate_matches_half_rule_within_three_sigma():
    scn = build_one_changing(4)
    est = estimate(scn.superposition, scn.profiles, TrialConfig(seed=99, n_trials=20_000))
    p, sigma = est.outcomes[(0,)]
    assert abs(p - 0.5) < 3 * sigma


def test_estimate_matches_projection_weights_within_three_sigma():
    w = (0.4, 0.3, 0.2, 0.1)
    scn = build_all_changing(4)
    s = Superposition(w, scn.superposition.couplings)
    est = estimate(s, scn.profiles, TrialConfig(seed=17, n_trials=20_000))
    for j, wj in enumerate(w):
        p, sigma = est.outcomes[(j,)]
        assert abs(p - wj) < 3 * max(sigma, 1e-6)


def test_estimate_matches_static_three_state():
    s = three_state()
    est = estimate(s, config=TrialConfig(seed=31, n_trials=20_000))
    expected = static_probabilities(s)
    for j in range(3):
        p, sigma = est.outcomes[(j,)]
        assert abs(p - expected[j]) < 3 * sigma


def test_estimate_agrees_with_cascade_on_all_registered_scenarios():
    n_trials = 100_000
    for seed, (name, build) in enumerate(sorted(SCENARIO_BUILDERS.items())):
        scn = build()
        dist = cascade_distribution(scn.superposition, scn.profiles)
        est = estimate(scn.superposition, scn.profiles,
                       TrialConfig(seed=seed, n_trials=n_trials))
        for key, expected in dist.items():
            p = est.probability(key)
            floor = math.sqrt(float(expected) * (1 - float(expected) * 0.999) / n_trials)
            sigma = max(est.stderr(key), floor, 1e-9)
            assert abs(p - float(expected)) < 4 * sigma, (name, key)


def test_estimate_probabilities_and_no_event_sum_to_one():
    scn = build_one_changing(4)
    # short horizon forces a visible no-event fraction
    lifetime = HBAR / scn.superposition.couplings[0][1]
    config = TrialConfig(seed=12, n_trials=5000, horizon=0.5 * lifetime)
    est = estimate(scn.superposition, scn.profiles, config)
    total = sum(p for p, _ in est.outcomes.values()) + est.n_no_event / est.n_trials
    assert total == pytest.approx(1.0, abs=1e-12)
    assert est.n_no_event > 0


def test_trial_config_validation():
    with pytest.raises(ValueError):
        TrialConfig(seed=0, n_trials=0)
    with pytest.raises(ValueError):
        TrialConfig(seed=0, n_trials=1, horizon=-1.0)
    with pytest.raises(ValueError):
        TrialConfig(seed=0, n_trials=1, thinning_bound_factor=0.5)
