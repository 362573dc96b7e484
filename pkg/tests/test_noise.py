import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dickeprep.collective_spin import dicke_state, initial_plus_state
from dickeprep.noise import (
    NoiseModel,
    conditional_fidelity,
    decay_prob,
    dephasing_flip_prob,
    majority_vote,
    noisy_controlled_rotation,
    noisy_round,
    record_jitters,
    round_success_probability,
    run_noisy_preparation,
    success_lower_bound,
)
from dickeprep.phase_estimation import make_plan, round_time, run_preparation
from oracles import enumerate_expected_fidelity, majority_correct_prob

GAMMA = 5e6
LAB = NoiseModel(t1=50e-6, t_phi=2e-6, gamma=GAMMA)


def test_channel_probabilities_first_round():
    t = round_time(1, GAMMA)
    assert dephasing_flip_prob(t, 2e-6) == pytest.approx(0.1347, abs=1e-4)
    assert decay_prob(t, 50e-6) == pytest.approx(0.00626, abs=1e-5)
    assert dephasing_flip_prob(t, math.inf) == 0.0
    assert decay_prob(t, math.inf) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1e-3), st.floats(1e-7, 1e-2))
def test_channel_probabilities_are_bounded(t, scale):
    assert 0 <= dephasing_flip_prob(t, scale) <= 0.5
    assert 0 <= decay_prob(t, scale) <= 1


def test_rates_shrink_geometrically_with_round():
    q = [dephasing_flip_prob(round_time(j, GAMMA), 2e-6) for j in range(1, 8)]
    assert all(b < a for a, b in zip(q, q[1:]))
    # the small-t limit halves with each round
    assert q[-1] / q[-2] == pytest.approx(0.5, rel=1e-2)


@pytest.mark.parametrize("kwargs", [{"t1": 0}, {"t_phi": -1}, {"sigma_t": -1e-9}, {"repetitions": 0}, {"gamma": 0}])
def test_noise_model_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        NoiseModel(**kwargs)


def test_dephasing_flip_frequency():
    trials = 100_000
    plan = make_plan(4, GAMMA)
    noise = NoiseModel(t_phi=2e-6, gamma=GAMMA)
    rng = np.random.default_rng(7)
    eigen = dicke_state(4, 0)
    flips = sum(noisy_round(eigen, 1, 0, plan, noise, rng)[2].dephasing_flip for _ in range(trials))
    p = dephasing_flip_prob(round_time(1, GAMMA), 2e-6)
    assert abs(flips / trials - p) < 3 * math.sqrt(p * (1 - p) / trials)


def test_decay_frequency_and_coin():
    trials = 100_000
    noise = NoiseModel(t1=5e-6, gamma=GAMMA)
    t = round_time(1, GAMMA)
    rng = np.random.default_rng(8)
    state = initial_plus_state(4)
    events = [noisy_controlled_rotation(state, t, noise, rng)[1] for _ in range(trials)]
    decays = [e for e in events if e is not None]
    p = decay_prob(t, noise.t1)
    assert abs(len(decays) / trials - p) < 3 * math.sqrt(p * (1 - p) / trials)
    ones = sum(e.recorded_bit for e in decays)
    assert abs(ones / len(decays) - 0.5) < 3 * math.sqrt(0.25 / len(decays))
    assert all(0 <= e.decay_time <= t for e in decays)


def test_decay_keeps_populations():
    noise = NoiseModel(t1=1e-9, gamma=GAMMA)  # decay is certain
    state = initial_plus_state(10)
    out, ev = noisy_controlled_rotation(state, round_time(1, GAMMA), noise, np.random.default_rng(0))
    assert ev is not None and ev.decayed
    np.testing.assert_allclose(out.probabilities, state.probabilities, atol=1e-14)
    phase = np.angle(out.amplitudes / state.amplitudes)
    expected = np.angle(np.exp(1j * GAMMA * ev.decay_time * state.m_values))
    np.testing.assert_allclose(np.exp(1j * phase), np.exp(1j * expected), atol=1e-12)


@pytest.mark.parametrize("n", [4, 16, 100])
def test_noiseless_model_reproduces_ideal_run(n):
    plan = make_plan(n, GAMMA)
    for seed in range(20):
        ideal = run_preparation(plan, np.random.default_rng(seed))
        noisy = run_noisy_preparation(plan, NoiseModel(gamma=GAMMA), np.random.default_rng(seed))
        assert noisy.bits == ideal.bits
        assert noisy.fidelity == pytest.approx(ideal.fidelity, abs=1e-12)
        assert noisy.extras["success"]


def test_majority_vote_rules():
    rng = np.random.default_rng(0)
    assert majority_vote([1, 1, 0], rng) == (1, False)
    assert majority_vote([0, 0, 1, 1, 0], rng) == (0, False)
    draws = [majority_vote([0, 1], np.random.default_rng(s))[0] for s in range(2000)]
    assert abs(np.mean(draws) - 0.5) < 0.05


@pytest.mark.parametrize("m_reps", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("p_decay,p_flip", [(0.0, 0.0), (0.2, 0.0), (0.0, 0.3), (0.1, 0.13), (0.6, 0.45)])
def test_round_success_matches_enumeration(m_reps, p_decay, p_flip):
    assert round_success_probability(m_reps, p_decay, p_flip) == pytest.approx(
        majority_correct_prob(m_reps, p_decay, p_flip), abs=1e-13
    )
    assert round_success_probability(m_reps, p_decay, p_flip, ties="fail") == pytest.approx(
        majority_correct_prob(m_reps, p_decay, p_flip, ties_half=False), abs=1e-13
    )


def test_round_success_single_repetition_closed_form():
    pd, q = 0.07, 0.2
    assert round_success_probability(1, pd, q) == pytest.approx((1 - pd) * (1 - q))


def test_success_bound_values():
    values = {m: success_lower_bound(20, m, LAB)[0] for m in (1, 3, 5, 7)}
    assert values[1] == pytest.approx(0.7332, abs=1e-4)
    assert values[3] == pytest.approx(0.9285, abs=1e-4)
    assert values[5] == pytest.approx(0.9751, abs=1e-4)
    assert values[7] == pytest.approx(0.9903, abs=1e-4)


def test_success_bound_increases_over_odd_repetitions():
    bounds = [success_lower_bound(20, m, LAB)[0] for m in range(1, 16, 2)]
    assert all(b > a for a, b in zip(bounds, bounds[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.floats(0, 0.9), st.floats(0, 0.49))
def test_round_success_is_a_probability(m_reps, p_decay, p_flip):
    p = round_success_probability(m_reps, p_decay, p_flip)
    assert -1e-12 <= p <= 1 + 1e-12


def test_bound_holds_against_trajectories():
    n, m_reps, trials = 30, 3, 1500
    plan = make_plan(n, GAMMA)
    bound, _ = success_lower_bound(plan.n_rounds, m_reps, NoiseModel(t1=50e-6, t_phi=2e-6, gamma=GAMMA))
    noise = NoiseModel(t1=50e-6, t_phi=2e-6, gamma=GAMMA, repetitions=m_reps)
    recs = [run_noisy_preparation(plan, noise, np.random.default_rng(s)) for s in range(trials)]
    success = np.mean([r.extras["success"] for r in recs])
    fid = np.mean([r.fidelity for r in recs])
    se = math.sqrt(bound * (1 - bound) / trials)
    # all-rounds success is exactly the product of per-round factors; fidelity can only add to it
    assert abs(success - bound) < 4 * se
    assert fid > bound - 4 * se


@pytest.mark.parametrize("reps", [1, 3])
def test_conditional_fidelity_matches_record_enumeration(reps):
    n, rounds = 6, 3
    plan = make_plan(n, GAMMA, rounds)
    rng = np.random.default_rng(reps)
    jitters = rng.normal(0, 20e-9, size=(rounds, reps))
    noise = NoiseModel(t_phi=2e-6, gamma=GAMMA, repetitions=reps, sigma_t=1e-9)
    q = [dephasing_flip_prob(round_time(j, GAMMA), 2e-6) for j in range(1, rounds + 1)]
    expected = enumerate_expected_fidelity(n, rounds, reps, GAMMA * jitters, q_flip=q)
    assert conditional_fidelity(plan, noise, jitters) == pytest.approx(expected, abs=1e-12)


def test_conditional_fidelity_noiseless_is_window_mass():
    plan = make_plan(500, GAMMA, 6)
    assert conditional_fidelity(plan, NoiseModel(gamma=GAMMA), np.zeros((6, 1))) == pytest.approx(
        0.995800070725942, abs=1e-12
    )


def test_conditional_fidelity_agrees_with_trajectories():
    n, trials = 40, 2000
    plan = make_plan(n, GAMMA)
    noise = NoiseModel(t1=50e-6, t_phi=2e-6, gamma=GAMMA, sigma_t=5e-9, repetitions=3)
    traj, cond = [], []
    for s in range(trials):
        rec = run_noisy_preparation(plan, noise, np.random.default_rng(s))
        traj.append(rec.fidelity)
        cond.append(conditional_fidelity(plan, noise, record_jitters(rec)))
    diff = np.array(traj) - np.array(cond)
    assert abs(diff.mean()) < 4 * diff.std(ddof=1) / math.sqrt(trials)
    assert np.std(cond) < np.std(traj)


def test_conditional_fidelity_rejects_wrong_shape():
    plan = make_plan(16, GAMMA)
    with pytest.raises(ValueError):
        conditional_fidelity(plan, NoiseModel(repetitions=3), np.zeros((plan.n_rounds, 1)))


def test_noisy_run_is_deterministic():
    plan = make_plan(50, GAMMA)
    noise = NoiseModel(t1=50e-6, t_phi=2e-6, gamma=GAMMA, sigma_t=1e-9, repetitions=3)
    a = run_noisy_preparation(plan, noise, np.random.default_rng(3))
    b = run_noisy_preparation(plan, noise, np.random.default_rng(3))
    assert a.bits == b.bits and a.fidelity == b.fidelity and a.extras == b.extras
