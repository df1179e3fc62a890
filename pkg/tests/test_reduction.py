import math
import random
from fractions import Fraction

import pytest

from reductionlab.constants import CONSTANTS
from reductionlab.massdist import Displaced, UniformSphere, QuadratureConfig
from reductionlab.reduction import (
    CouplingMismatchError,
    InvalidTriggerError,
    MixtureProfile,
    ProfileSet,
    RampProfile,
    StableSuperpositionError,
    Superposition,
    TableProfile,
    apply_trigger,
    cascade_distribution,
    decay_rate_via_mean_potential,
    discontinuity_probe,
    outcome_distribution,
    reduction_rates,
    state_decay_rates,
    static_probabilities,
    timedep_probabilities,
    trigger_rate_matrix,
    two_state_lifetime,
)

HBAR = CONSTANTS.hbar


def one_changing(n, e=Fraction(1), weights=None):
    couplings = [[0] * n for _ in range(n)]
    for j in range(1, n):
        couplings[0][j] = couplings[j][0] = e
    return Superposition(tuple(weights or [Fraction(1, n)] * n),
                         tuple(tuple(r) for r in couplings))


def all_changing(n, e=Fraction(1), weights=None):
    couplings = [[0 if i == j else 2 * e for j in range(n)] for i in range(n)]
    return Superposition(tuple(weights or [Fraction(1, n)] * n),
                         tuple(tuple(r) for r in couplings))


from oracles import enumerate_event_tree, random_rational_superposition


# ---------------------------------------------------------------------------
# rates


def test_trigger_matrix_two_state_calibration():
    s = Superposition((0.3, 0.7), ((0.0, 2e-30), (2e-30, 0.0)))
    m = trigger_rate_matrix(s)
    assert m[0][1] == pytest.approx(2e-30 * 0.7 / HBAR)
    assert m[1][0] == pytest.approx(2e-30 * 0.3 / HBAR)
    assert m[0][0] == 0.0 and m[1][1] == 0.0


def test_trigger_matrix_zero_weight_column():
    s = Superposition((0.5, 0.5, 0.0), ((0, 1e-30, 1e-30), (1e-30, 0, 1e-30),
                                        (1e-30, 1e-30, 0)))
    m = trigger_rate_matrix(s)
    assert m[0][2] == 0.0 and m[1][2] == 0.0


def test_trigger_matrix_one_changing_has_six_equal_rates():
    s = one_changing(4, 1e-30, [0.25] * 4)
    m = trigger_rate_matrix(s)
    nonzero = [m[i][j] for i in range(4) for j in range(4) if m[i][j] > 0]
    assert len(nonzero) == 6
    assert all(r == pytest.approx(1e-30 * 0.25 / HBAR) for r in nonzero)


def test_state_decay_rates_are_row_sums():
    s = one_changing(4, 1e-30, [0.25] * 4)
    rates = state_decay_rates(s)
    assert rates[0] == pytest.approx(3 * 1e-30 * 0.25 / HBAR)
    for r in rates[1:]:
        assert r == pytest.approx(1e-30 * 0.25 / HBAR)


def test_state_decay_rates_zero_couplings():
    s = Superposition((0.5, 0.5), ((0.0, 0.0), (0.0, 0.0)))
    assert state_decay_rates(s) == [0.0, 0.0]


def test_two_state_decay_total_is_shared_rate():
    e = 3e-30
    s = Superposition((0.2, 0.8), ((0.0, e), (e, 0.0)))
    rates = state_decay_rates(s)
    assert rates[0] == pytest.approx(e * 0.8 / HBAR)
    assert rates[1] == pytest.approx(e * 0.2 / HBAR)
    assert sum(rates) == pytest.approx(e / HBAR)


def test_reduction_rates_are_column_sums():
    s = one_changing(4, 1e-30, [0.25] * 4)
    rates = reduction_rates(s)
    assert rates[0] == pytest.approx(3 * 1e-30 * 0.25 / HBAR)
    for r in rates[1:]:
        assert r == pytest.approx(1e-30 * 0.25 / HBAR)


def test_reduction_rates_track_weights_for_uniform_matrix():
    w = (0.1, 0.2, 0.3, 0.4)
    s = all_changing(4, 1e-30, w)
    rates = reduction_rates(s)
    for wa, ra in zip(w, rates):
        assert ra / rates[0] == pytest.approx(wa / w[0])


def test_reduction_rates_single_pair():
    s = Superposition((0.5, 0.3, 0.2), ((0, 1e-30, 0), (1e-30, 0, 0), (0, 0, 0)))
    rates = reduction_rates(s)
    assert rates[0] > 0 and rates[1] > 0 and rates[2] == 0.0


def test_row_column_duality():
    rng = random.Random(7)
    for _ in range(20):
        n = rng.randint(2, 8)
        w = [rng.random() for _ in range(n)]
        w = [x / sum(w) for x in w]
        c = [[0.0] * n for _ in range(n)]
        for i in range(n):
            for j in range(i):
                c[i][j] = c[j][i] = rng.random() * 1e-30
        s = Superposition(tuple(w), tuple(tuple(r) for r in c))
        assert sum(reduction_rates(s)) == pytest.approx(sum(state_decay_rates(s)), rel=1e-12)


# ---------------------------------------------------------------------------
# static probabilities


def test_static_equal_couplings_reproduce_weights():
    w = (0.1, 0.25, 0.3, 0.35)
    s = all_changing(4, 1e-29, w)
    assert static_probabilities(s) == pytest.approx(list(w), abs=1e-15)


def test_static_one_changing_four_detectors():
    s = one_changing(4)
    assert static_probabilities(s) == [Fraction(1, 2), Fraction(1, 6),
                                       Fraction(1, 6), Fraction(1, 6)]


def test_static_hand_evaluated_three_state():
    s = Superposition((0.25, 0.25, 0.5),
                      ((0, 2e-30, 1e-30), (2e-30, 0, 1e-30), (1e-30, 1e-30, 0)))
    assert static_probabilities(s) == pytest.approx([0.3, 0.3, 0.4], abs=1e-14)


def test_static_scale_invariance():
    rng = random.Random(99)
    w = [0.2, 0.3, 0.5]
    c = [[0, 3e-31, 1e-31], [3e-31, 0, 2e-31], [1e-31, 2e-31, 0]]
    base = static_probabilities(Superposition(tuple(w), tuple(tuple(r) for r in c)))
    for _ in range(5):
        lam = 10 ** rng.uniform(-6, 6)
        scaled = static_probabilities(Superposition(
            tuple(w), tuple(tuple(e * lam for e in r) for r in c)))
        assert scaled == pytest.approx(base, rel=1e-12)


def test_static_raises_when_stable():
    s = Superposition((0.5, 0.5), ((0.0, 0.0), (0.0, 0.0)))
    with pytest.raises(StableSuperpositionError):
        static_probabilities(s)


def test_two_state_calibration_exact():
    rng = random.Random(3)
    for _ in range(50):
        w1 = rng.random()
        s = Superposition((w1, 1 - w1), ((0.0, 1e-30), (1e-30, 0.0)))
        p = static_probabilities(s)
        assert abs(p[0] - w1) < 1e-15 and abs(p[1] - (1 - w1)) < 1e-15


# ---------------------------------------------------------------------------
# outcome rule


def test_apply_trigger_all_coupled_collapses_to_target():
    s = all_changing(4)
    out = apply_trigger(s, 2, 0)
    assert out.surviving == (0,)
    assert out.new_weights == (Fraction(1),)
    assert out.terminal


def test_apply_trigger_one_changing_away_from_hub():
    s = one_changing(4)
    out = apply_trigger(s, 0, 1)
    assert out.surviving == (1, 2, 3)
    assert out.new_weights == (Fraction(1, 3),) * 3
    assert out.terminal


def test_apply_trigger_one_changing_towards_hub():
    s = one_changing(4)
    out = apply_trigger(s, 1, 0)
    assert out.surviving == (0,)
    assert out.terminal


def test_apply_trigger_rejects_zero_rate():
    s = one_changing(4)
    with pytest.raises(InvalidTriggerError):
        apply_trigger(s, 1, 2)    # uncoupled pair
    with pytest.raises(InvalidTriggerError):
        apply_trigger(s, 0, 0)


def test_outcome_distribution_one_changing():
    s = one_changing(4)
    dist = outcome_distribution(s)
    assert dist == {(0,): Fraction(1, 2), (1, 2, 3): Fraction(1, 2)}


def test_outcome_distribution_all_coupled_is_projection():
    w = (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8), Fraction(1, 8))
    s = all_changing(4, Fraction(1), w)
    dist = outcome_distribution(s)
    assert dist == {(i,): w[i] for i in range(4)}


def test_outcome_distribution_eight_detectors_half_rule():
    s = one_changing(8)
    dist = outcome_distribution(s)
    assert dist[(0,)] == Fraction(1, 2)
    assert dist[tuple(range(1, 8))] == Fraction(1, 2)


def test_outcome_distribution_event_marginals_match_reduction_rates():
    # mass flowing into state j across all outcomes equals its static share
    s = Superposition((0.25, 0.25, 0.5),
                      ((0, 2e-30, 1e-30), (2e-30, 0, 1e-30), (1e-30, 1e-30, 0)))
    p_static = static_probabilities(s)
    total = sum(s.couplings[i][j] * s.weights[j]
                for i in range(3) for j in range(3) if i != j)
    for j in range(3):
        into_j = sum(s.couplings[i][j] * s.weights[j] for i in range(3) if i != j)
        assert into_j / total == pytest.approx(p_static[j], rel=1e-12)


def test_outcome_distribution_raises_when_stable():
    s = Superposition((1.0,), ((0.0,),))
    with pytest.raises(StableSuperpositionError):
        outcome_distribution(s)


# ---------------------------------------------------------------------------
# cascade vs exact enumeration


CASCADE_FIXTURES = [
    # chain: ends couple to the middle only
    ((Fraction(1, 3),) * 3, ((0, 1, 0), (1, 0, 1), (0, 1, 0))),
    # star with four leaves
    ((Fraction(1, 5),) * 5,
     ((0, 1, 1, 1, 1), (1, 0, 0, 0, 0), (1, 0, 0, 0, 0),
      (1, 0, 0, 0, 0), (1, 0, 0, 0, 0))),
    # fully coupled, unequal rational couplings
    ((Fraction(1, 2), Fraction(1, 3), Fraction(1, 6)),
     ((0, Fraction(2), Fraction(1)), (Fraction(2), 0, Fraction(3)),
      (Fraction(1), Fraction(3), 0))),
    # two disjoint coupled pairs: the race freezes the untouched pair
    ((Fraction(1, 4),) * 4,
     ((0, 1, 0, 0), (1, 0, 0, 0), (0, 0, 0, 2), (0, 0, 2, 0))),
    # asymmetric 4-state with a zero-coupled satellite pair
    ((Fraction(2, 7), Fraction(1, 7), Fraction(3, 7), Fraction(1, 7)),
     ((0, Fraction(1, 2), Fraction(5), 0), (Fraction(1, 2), 0, 0, Fraction(2)),
      (Fraction(5), 0, 0, 0), (0, Fraction(2), 0, 0))),
]


@pytest.mark.parametrize("weights,couplings", CASCADE_FIXTURES)
def test_cascade_equals_exact_enumeration(weights, couplings):
    s = Superposition(weights, couplings)
    assert cascade_distribution(s) == enumerate_event_tree(list(weights),
                                                           [list(r) for r in couplings])


def test_cascade_equals_enumeration_on_random_rational_fixtures():
    rng = random.Random(20240812)
    for _ in range(30):
        weights, couplings = random_rational_superposition(rng)
        s = Superposition(tuple(weights), tuple(tuple(r) for r in couplings))
        expected = enumerate_event_tree(weights, couplings)
        assert cascade_distribution(s) == expected


def test_cascade_one_changing_matches_first_event_distribution():
    s = one_changing(4)
    assert cascade_distribution(s) == outcome_distribution(s)


def test_cascade_fully_coupled_terminates_after_one_event():
    s = all_changing(3, Fraction(1))
    assert cascade_distribution(s) == outcome_distribution(s)


def test_cascade_chain_support():
    s = Superposition((Fraction(1, 3),) * 3, ((0, 1, 0), (1, 0, 1), (0, 1, 0)))
    dist = cascade_distribution(s)
    # the middle state swallows the ends or the end pair survives uncoupled
    assert set(dist) == {(1,), (0, 2)}
    assert dist[(1,)] == Fraction(1, 2)
    assert dist[(0, 2)] == Fraction(1, 2)


# ---------------------------------------------------------------------------
# time-dependent race


def test_timedep_constant_profiles_match_static():
    rng = random.Random(5)
    for _ in range(10):
        n = rng.randint(2, 6)
        w = [rng.random() + 0.05 for _ in range(n)]
        w = [x / sum(w) for x in w]
        c = [[0.0] * n for _ in range(n)]
        for i in range(n):
            for j in range(i):
                c[i][j] = c[j][i] = rng.random() * 1e-30
        s = Superposition(tuple(w), tuple(tuple(r) for r in c))
        result = timedep_probabilities(s)
        static = static_probabilities(s)
        fired = sum(result.probabilities)
        assert result.residual < 1e-8
        for p, q in zip(result.probabilities, static):
            assert p / fired == pytest.approx(q, abs=1e-6)


def test_timedep_shared_ramp_matches_static():
    # one common shape for every pair cancels out of the race
    s = Superposition((0.2, 0.3, 0.5),
                      ((0, 2e-30, 1e-30), (2e-30, 0, 3e-30), (1e-30, 3e-30, 0)))
    shape = RampProfile(t_on=1e-5, t_rise=2e-5)
    profiles = ProfileSet(default=shape)
    result = timedep_probabilities(s, profiles)
    static = static_probabilities(s)
    fired = sum(result.probabilities)
    for p, q in zip(result.probabilities, static):
        assert p / fired == pytest.approx(q, abs=1e-6)


def test_timedep_delayed_step_race_closed_form():
    e = 1e-26
    w = (0.5, 0.3, 0.2)
    td = 3 * HBAR / e
    s = Superposition(w, ((0, e, e), (e, 0, 0), (e, 0, 0)))
    profiles = ProfileSet(overrides={(0, 2): RampProfile(t_on=td)})
    result = timedep_probabilities(s, profiles)
    a = e * (w[0] + w[1]) / HBAR
    b = e * (w[0] + w[2]) / HBAR
    decay = math.exp(-a * td)
    p1 = (e * w[1] / HBAR) * ((1 - decay) / a + decay / (a + b))
    p2 = (e * w[2] / HBAR) * decay / (a + b)
    assert result.probabilities[1] == pytest.approx(p1, abs=1e-6)
    assert result.probabilities[2] == pytest.approx(p2, abs=1e-6)
    assert sum(result.probabilities) + result.residual == pytest.approx(1.0, abs=1e-9)


def test_timedep_finite_ramp_race_closed_form():
    # pair (0,1) constant, pair (0,2) ramping over tau after t1: erf integral
    e = 2e-27
    w = (0.4, 0.35, 0.25)
    s = Superposition(w, ((0, e, e), (e, 0, 0), (e, 0, 0)))
    a = e * (w[0] + w[1]) / HBAR
    b = e * (w[0] + w[2]) / HBAR
    t1 = 1.0 / a
    tau = 2.0 / a
    profiles = ProfileSet(overrides={(0, 2): RampProfile(t_on=t1, t_rise=tau)})
    result = timedep_probabilities(s, profiles)
    # hand integral of p_2 = int S(t) e w2 f(t) / hbar dt over the three regimes
    rate1 = e * w[1] / HBAR

    def survival_ramp(u):   # S(t1 + u) for 0 <= u <= tau
        return math.exp(-(a * (t1 + u) + b * u * u / (2 * tau)))

    c = b / (2 * tau)
    sq = math.sqrt(c)
    shift = a / (2 * sq)
    gauss = 0.5 * math.sqrt(math.pi / c) * math.exp(-a * t1 + shift * shift) * (
        math.erf(sq * tau + shift) - math.erf(shift))
    p1_hand = rate1 * ((1 - math.exp(-a * t1)) / a + gauss
                       + survival_ramp(tau) / (a + b))
    rate2_end = e * w[2] / HBAR
    # ramp region: rate into 2 is rate2_end * u / tau
    from reductionlab.quadrature import gauss_legendre
    x, wq = gauss_legendre(80)
    u = 0.5 * tau * (x + 1)
    wu = 0.5 * tau * wq
    ramp_part = sum(wi * survival_ramp(ui) * rate2_end * ui / tau
                    for ui, wi in zip(u, wu))
    p2_hand = ramp_part + rate2_end * survival_ramp(tau) / (a + b)
    assert result.probabilities[1] == pytest.approx(p1_hand, abs=1e-6)
    assert result.probabilities[2] == pytest.approx(p2_hand, abs=1e-6)


def test_timedep_warns_on_short_horizon():
    s = Superposition((0.5, 0.5), ((0.0, 1e-30), (1e-30, 0.0)))
    lifetime = HBAR / 1e-30
    with pytest.warns(UserWarning, match="horizon"):
        result = timedep_probabilities(s, horizon=0.1 * lifetime)
    assert result.horizon_warning
    assert result.residual > 0.9


def test_timedep_stable_superposition_raises():
    s = Superposition((0.5, 0.5), ((0.0, 0.0), (0.0, 0.0)))
    with pytest.raises(StableSuperpositionError):
        timedep_probabilities(s)


# ---------------------------------------------------------------------------
# profiles


def test_ramp_profile_shapes():
    r = RampProfile(t_on=1.0, t_rise=2.0)
    assert r.factor(0.5) == 0.0
    assert r.factor(2.0) == 0.5
    assert r.factor(3.5) == 1.0
    step = RampProfile(t_on=1.0)
    assert step.factor(0.999999) == 0.0 and step.factor(1.0) == 1.0


def test_table_profile_validation():
    with pytest.raises(ValueError):
        TableProfile(((0.0, 0.5), (0.0, 0.7)))
    with pytest.raises(ValueError):
        TableProfile(((0.0, 1.5),))
    t = TableProfile(((0.0, 0.0), (1.0, 1.0)))
    assert t.factor(0.25) == pytest.approx(0.25)
    assert t.factor(5.0) == 1.0


def test_mixture_profile_is_exact_average():
    mix = MixtureProfile(((0.5, RampProfile(1.0)), (0.5, RampProfile(3.0))))
    assert mix.factor(0.0) == 0.0
    assert mix.factor(2.0) == 0.5
    assert mix.factor(4.0) == 1.0
    f0, slope = mix.linear_piece(1.5, 2.5)
    assert f0 == 0.5 and slope == 0.0


# ---------------------------------------------------------------------------
# superposition validation


def test_superposition_validation():
    with pytest.raises(ValueError):
        Superposition((0.5, 0.6), ((0, 1e-30), (1e-30, 0)))
    with pytest.raises(ValueError):
        Superposition((0.5, 0.5), ((0, 1e-30), (2e-30, 0)))
    with pytest.raises(ValueError):
        Superposition((0.5, 0.5), ((1e-30, 1e-30), (1e-30, 0)))
    with pytest.raises(ValueError):
        Superposition((0.5, 0.5), ((0, -1e-30), (-1e-30, 0)))


# ---------------------------------------------------------------------------
# lifetimes and probes


def test_two_state_lifetime_nanosecond_scale():
    e = 1e9 * HBAR
    assert two_state_lifetime(e) == pytest.approx(1e-9)


def test_two_state_lifetime_zero_coupling_is_infinite():
    assert two_state_lifetime(0.0) == math.inf


def test_two_state_lifetime_water_sphere_fixture():
    from reductionlab.solidstate import fluid_sphere_lifetime
    tau = fluid_sphere_lifetime(1e-6, 1000.0)
    m = math.pi / 6 * 1e-18 * 1000.0
    eg = 12 / 5 * CONSTANTS.G * m * m / 1e-6
    assert two_state_lifetime(eg) == pytest.approx(tau, rel=1e-12)


def test_discontinuity_probe_symmetric_columns_agree():
    probe = discontinuity_probe(((0, 1e-30, 2e-30), (1e-30, 0, 2e-30),
                                 (2e-30, 2e-30, 0)))
    assert not probe.discontinuous
    head = probe.limit[0] + probe.limit[1]
    assert probe.limit[0] / head == pytest.approx(probe.two_state[0], abs=1e-8)


def test_discontinuity_probe_asymmetric_columns_flagged():
    probe = discontinuity_probe(((0, 1, 2), (1, 0, 0), (2, 0, 0)))
    assert probe.discontinuous
    # limit: column masses (3 w1, 1 w2) vs the plain two-state (w1, w2)
    head = probe.limit[0] + probe.limit[1]
    assert probe.limit[0] / head == pytest.approx(0.75, abs=1e-6)
    assert probe.two_state == (0.5, 0.5)


def test_discontinuity_probe_third_weight_scaling():
    probe = discontinuity_probe(((0, 1, 2), (1, 0, 0), (2, 0, 0)))
    w3, probs = probe.path[-1]
    assert w3 == 1e-9
    assert probs[2] < 1e-8


# ---------------------------------------------------------------------------
# mean-potential transform


def test_mean_potential_rates_identical_distributions():
    s = Superposition((0.5, 0.5), ((0.0, 0.0), (0.0, 0.0)))
    sphere = UniformSphere(1.0, 0.2)
    exact, approx = decay_rate_via_mean_potential(s, [sphere, sphere])
    assert exact == pytest.approx([0.0, 0.0], abs=1e-20)
    assert approx == pytest.approx([0.0, 0.0], abs=1e-20)


def test_mean_potential_rates_match_row_sums():
    cfg = QuadratureConfig(rel_tolerance=1e-4)
    m, d = 2.0, 0.5
    sphere = UniformSphere(m, d)
    moved = Displaced(sphere, (2 * d, 0, 0))
    from reductionlab.massdist import pair_eg
    e = pair_eg(sphere, moved, cfg)
    s = Superposition((0.5, 0.5), ((0.0, e), (e, 0.0)))
    exact, approx = decay_rate_via_mean_potential(s, [sphere, moved], cfg)
    rows = state_decay_rates(s)
    for a, b in zip(exact, rows):
        assert a == pytest.approx(b, rel=1e-2)
    # congruent rigid displacement: equal self energies, so both forms agree
    for a, b in zip(approx, exact):
        assert a == pytest.approx(b, rel=1e-9)


def test_mean_potential_rates_reject_mismatched_couplings():
    sphere = UniformSphere(2.0, 0.5)
    moved = Displaced(sphere, (1.0, 0, 0))
    s = Superposition((0.5, 0.5), ((0.0, 1e-3), (1e-3, 0.0)))
    with pytest.raises(CouplingMismatchError):
        decay_rate_via_mean_potential(s, [sphere, moved])
