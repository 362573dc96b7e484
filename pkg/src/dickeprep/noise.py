"""Ancilla noise for the phase-estimation rounds.

Three channels act on each controlled rotation of duration ``t``:

* pure dephasing of the ancilla, modelled as a readout flip with probability
  ``(1 - exp(-t / T_phi)) / 2``;
* zero-temperature decay of the ancilla.  With the echo-integrated gate the
  rotation survives with probability ``exp(-t / (2 T1))``; otherwise the spins
  receive an unconditional phase ``exp(i gamma t' J_z)`` and the readout is a
  fair coin;
* timing jitter ``dt ~ Normal(0, sigma_t^2)`` on the gate duration.  The
  controlled gate picks up an extra ``exp(i gamma dt J_z)``; the feedback
  rotation is an ancilla pulse and is not stretched.  ``jitter_on_feedback``
  instead scales ``J_z - A_{j-1}`` by the perturbed angle.

Random draws happen in a fixed order per repetition (jitter, decay test, decay
time, coin / measurement, dephasing flip), and a disabled channel draws
nothing.  The noiseless pipeline therefore consumes exactly the variates of
:func:`dickeprep.phase_estimation.run_round`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .collective_spin import CollectiveState, initial_plus_state
from .phase_estimation import (
    PreparationPlan,
    PreparationRecord,
    _decoded,
    accumulate,
    binary_phase_measurement,
    population,
    round_phases,
    round_time,
)


@dataclass(frozen=True)
class NoiseModel:
    t1: float = math.inf  # s, ancilla energy relaxation
    t_phi: float = math.inf  # s, ancilla pure dephasing
    gamma: float = 5e6  # rad/s
    sigma_t: float = 0.0  # s, timing jitter std
    repetitions: int = 1  # M
    jitter_on_feedback: bool = False

    def __post_init__(self):
        if not (self.t1 > 0 and self.t_phi > 0):
            raise ValueError("T1 and T_phi must be positive (inf disables)")
        if not self.sigma_t >= 0:
            raise ValueError("sigma_t must be nonnegative")
        if int(self.repetitions) != self.repetitions or self.repetitions < 1:
            raise ValueError("repetitions must be a positive integer")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def kappa(self) -> float:
        return 1.0 / self.t1

    @property
    def is_noiseless(self) -> bool:
        return math.isinf(self.t1) and math.isinf(self.t_phi) and self.sigma_t == 0.0


def dephasing_flip_prob(t: float, t_phi: float) -> float:
    if t < 0:
        raise ValueError("negative duration")
    if math.isinf(t_phi):
        return 0.0
    return -0.5 * math.expm1(-t / t_phi)


def decay_prob(t: float, t1: float) -> float:
    if t < 0:
        raise ValueError("negative duration")
    if math.isinf(t1):
        return 0.0
    return -math.expm1(-t / (2 * t1))


@dataclass(frozen=True)
class RepetitionEvent:
    decayed: bool
    decay_time: float | None
    jitter: float
    dephasing_flip: bool
    true_bit: int | None  # None when no projection happened
    recorded_bit: int


@dataclass(frozen=True)
class RoundEventLog:
    round: int
    repetitions: tuple[RepetitionEvent, ...]
    voted_bit: int
    tie: bool

    @property
    def projected(self) -> bool:
        """At least one repetition implemented the projector."""
        return any(not r.decayed for r in self.repetitions)

    @property
    def correct_bit(self) -> int | None:
        """Outcome of the first projection; it fixes the eigenspace of the round."""
        for r in self.repetitions:
            if not r.decayed:
                return r.true_bit
        return None

    @property
    def success(self) -> bool:
        return self.projected and self.voted_bit == self.correct_bit


def _sample_decay_time(u: float, t: float, kappa: float) -> float:
    # inverse CDF of kappa e^{-kappa t'} / (1 - e^{-kappa t}) on [0, t]
    return -math.log1p(u * math.expm1(-kappa * t)) / kappa


def noisy_controlled_rotation(
    state: CollectiveState,
    t: float,
    noise: NoiseModel,
    rng: np.random.Generator,
    gamma: float | None = None,
) -> tuple[CollectiveState, RepetitionEvent | None]:
    """Decay branch of the echo-integrated controlled rotation.

    Returns ``(state, None)`` when the ancilla survives (the caller then
    applies the ideal measurement) and ``(phased_state, event)`` when it
    decays.
    """
    if math.isinf(noise.t1):
        return state, None
    if rng.random() >= decay_prob(t, noise.t1):
        return state, None
    gamma = noise.gamma if gamma is None else gamma
    t_dec = _sample_decay_time(rng.random(), t, noise.kappa)
    phased = state.replace(state.amplitudes * np.exp(1j * gamma * t_dec * state.m_values))
    bit = int(rng.random() < 0.5)
    return phased, RepetitionEvent(True, t_dec, 0.0, False, None, bit)


def jittered_phases(m, j, a_prev, offset, delta_theta, on_feedback=False):
    if on_feedback:
        return round_phases(m, j, a_prev, offset, delta_theta)
    return round_phases(m, j, a_prev, offset) + delta_theta * m


def noisy_round(
    state: CollectiveState,
    j: int,
    a_prev: int,
    plan: PreparationPlan,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> tuple[int, CollectiveState, RepetitionEvent]:
    """One repetition of round ``j``; returns the recorded (possibly wrong) bit."""
    t = round_time(j, plan.gamma)
    jitter = float(rng.normal(0.0, noise.sigma_t)) if noise.sigma_t > 0 else 0.0
    state, decay = noisy_controlled_rotation(state, t, noise, rng, plan.gamma)
    if decay is not None:
        return decay.recorded_bit, state, replace(decay, jitter=jitter)
    phases = jittered_phases(state.m_values, j, a_prev, plan.target_offset, plan.gamma * jitter, noise.jitter_on_feedback)
    meas = binary_phase_measurement(state, phases, rng)
    flip = False
    if not math.isinf(noise.t_phi):
        flip = bool(rng.random() < dephasing_flip_prob(t, noise.t_phi))
    recorded = meas.bit ^ int(flip)
    return recorded, meas.state, RepetitionEvent(False, None, jitter, flip, meas.bit, recorded)


def majority_vote(bits, rng: np.random.Generator) -> tuple[int, bool]:
    ones = sum(bits)
    zeros = len(bits) - ones
    if ones == zeros:
        return int(rng.random() < 0.5), True
    return int(ones > zeros), False


def majority_round(
    state: CollectiveState,
    j: int,
    a_prev: int,
    plan: PreparationPlan,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> tuple[int, CollectiveState, RoundEventLog]:
    """Repeat round ``j`` ``noise.repetitions`` times on the evolving state and vote.

    The feedback accumulator stays at ``a_prev`` for every repetition.
    """
    events, recorded = [], []
    for _ in range(noise.repetitions):
        bit, state, ev = noisy_round(state, j, a_prev, plan, noise, rng)
        events.append(ev)
        recorded.append(bit)
    voted, tie = majority_vote(recorded, rng)
    return voted, state, RoundEventLog(j, tuple(events), voted, tie)


def run_noisy_preparation(
    plan: PreparationPlan,
    noise: NoiseModel,
    rng: np.random.Generator,
    initial_state: CollectiveState | None = None,
) -> PreparationRecord:
    """Noisy counterpart of :func:`~dickeprep.phase_estimation.run_preparation`.

    ``extras["success"]`` is true iff every round both projected at least once
    and voted for the eigenspace it projected onto.
    """
    state = initial_plus_state(plan.n_spins) if initial_state is None else initial_state
    a = 0
    bits, logs = [], []
    for j in range(1, plan.n_rounds + 1):
        voted, state, log = majority_round(state, j, a, plan, noise, rng)
        bits.append(voted)
        logs.append(log)
        a += voted << (j - 1)
    m = _decoded(plan.n_rounds, a, plan.target_offset, plan.n_spins)
    n_decays = sum(r.decayed for lg in logs for r in lg.repetitions)
    n_flips = sum(r.dephasing_flip for lg in logs for r in lg.repetitions)
    return PreparationRecord(
        bits=tuple(bits),
        accumulators=tuple(accumulate(bits)),
        decoded_m=m,
        final_state=state,
        fidelity=population(state, m),
        born_probabilities=(),
        events=tuple(logs),
        extras={
            "success": all(lg.success for lg in logs),
            "n_decays": n_decays,
            "n_flips": n_flips,
            "n_ties": sum(lg.tie for lg in logs),
        },
    )


# --- analytic success bound ---------------------------------------------------


def _binom_pmf(n: int, k: int, p: float) -> float:
    return math.comb(n, k) * p**k * (1 - p) ** (n - k)


def round_success_probability(m_reps: int, p_decay: float, p_flip: float, ties: str = "half") -> float:
    """Probability that a round projects at least once and votes correctly.

    ``d`` decayed repetitions report fair coins; the ``M - d`` others report the
    projected bit, flipped with probability ``p_flip``.  ``ties="half"`` scores
    an even split as 1/2, ``ties="fail"`` as 0.
    """
    if ties not in ("half", "fail"):
        raise ValueError("ties must be 'half' or 'fail'")
    tie_value = 0.5 if ties == "half" else 0.0
    total = 0.0
    for d in range(m_reps):  # d = M would violate the projection condition
        w_d = _binom_pmf(m_reps, d, p_decay)
        if w_d == 0.0:
            continue
        honest = m_reps - d
        acc = 0.0
        for ch in range(honest + 1):
            w_h = _binom_pmf(honest, ch, 1 - p_flip)
            for cr in range(d + 1):
                c = ch + cr
                if 2 * c > m_reps:
                    score = 1.0
                elif 2 * c == m_reps:
                    score = tie_value
                else:
                    continue
                acc += w_h * _binom_pmf(d, cr, 0.5) * score
        total += w_d * acc
    return total


def success_lower_bound(k_rounds: int, m_reps: int, noise: NoiseModel, ties: str = "half") -> tuple[float, list[float]]:
    """Probability that all ``k_rounds`` rounds succeed, and the per-round factors."""
    if k_rounds < 1 or m_reps < 1:
        raise ValueError("need K >= 1 and M >= 1")
    per_round = []
    for j in range(1, k_rounds + 1):
        t = round_time(j, noise.gamma)
        per_round.append(
            round_success_probability(m_reps, decay_prob(t, noise.t1), dephasing_flip_prob(t, noise.t_phi), ties)
        )
    return float(np.prod(per_round)), per_round


# --- conditional expectation over measurement records -------------------------


def _vote_correct_prob(p_reps: np.ndarray) -> np.ndarray:
    """P(majority of independent Bernoulli(p_r) bits is correct), ties scored 1/2.

    ``p_reps`` has shape (n_m, M); the count distribution is built by convolution.
    """
    n_m, m_reps = p_reps.shape
    dist = np.zeros((n_m, m_reps + 1))
    dist[:, 0] = 1.0
    for r in range(m_reps):
        p = p_reps[:, r : r + 1]
        shifted = np.zeros_like(dist)
        shifted[:, 1:] = dist[:, :-1]
        dist = dist * (1 - p) + shifted * p
    counts = np.arange(m_reps + 1)
    score = np.where(2 * counts > m_reps, 1.0, np.where(2 * counts == m_reps, 0.5, 0.0))
    return dist @ score


def conditional_fidelity(
    plan: PreparationPlan,
    noise: NoiseModel,
    jitters: np.ndarray,
    initial_state: CollectiveState | None = None,
) -> float:
    """Mean fidelity over all measurement records, decays and flips, for fixed jitter.

    All Kraus operators are diagonal in m_z, so given the spin value m every
    repetition is an independent Bernoulli trial.  The record decodes to m
    iff every round votes for the bit of m, hence
    ``E[F | jitters] = sum_m p0(m) prod_j P(vote_j correct | m)``.
    ``jitters[j-1, r]`` is the time deviation (s) of repetition r in round j.
    Averaging this over jitter draws estimates the same mean as
    :func:`run_noisy_preparation` with far smaller variance.
    """
    jitters = np.asarray(jitters, dtype=float)
    if jitters.shape != (plan.n_rounds, noise.repetitions):
        raise ValueError(f"jitters must have shape {(plan.n_rounds, noise.repetitions)}")
    state = initial_plus_state(plan.n_spins) if initial_state is None else initial_state
    m = state.m_values
    n = plan.n_rounds
    rel = np.rint(m - plan.target_offset).astype(np.int64)
    a_m = rel % (2**n)
    valid = np.array(
        [_decoded(n, int(a), plan.target_offset, plan.n_spins) == int(mm) for a, mm in zip(a_m, rel + plan.target_offset)]
    )
    weight = state.probabilities * valid
    for j in range(1, n + 1):
        t = round_time(j, plan.gamma)
        q = dephasing_flip_prob(t, noise.t_phi)
        pd = decay_prob(t, noise.t1)
        a_prev = a_m % (2 ** (j - 1))
        bit = (a_m >> (j - 1)) & 1
        p_reps = np.empty((m.size, noise.repetitions))
        for r in range(noise.repetitions):
            phi = jittered_phases(m, j, a_prev, plan.target_offset, plan.gamma * jitters[j - 1, r], noise.jitter_on_feedback)
            p_true = np.where(bit == 0, np.cos(phi / 2) ** 2, np.sin(phi / 2) ** 2)
            honest = (1 - q) * p_true + q * (1 - p_true)
            p_reps[:, r] = (1 - pd) * honest + 0.5 * pd
        weight = weight * _vote_correct_prob(p_reps)
    return float(weight.sum())


def record_jitters(record: PreparationRecord) -> np.ndarray:
    """Jitter draws of a noisy trajectory as an (n_rounds, M) array."""
    return np.array([[r.jitter for r in log.repetitions] for log in record.events])
