"""Noiseless single-ancilla phase estimation of J_z on the symmetric subspace.

The ancilla circuit of each round (Hadamard, controlled rotation, feedback
Z-rotation, Hadamard, readout) is collapsed into the pair of diagonal
measurement operators ``(1 +/- exp(i phi(m_z))) / 2``.  Every binary
measurement consumes exactly one uniform variate ``u`` and reports outcome 0
iff ``u < P(0)``; the full-state oracle uses the same rule so both simulators
produce identical records from identical generators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .collective_spin import (
    CollectiveOperator,
    CollectiveState,
    binomial_weights,
    check_spin_number,
    initial_plus_state,
    product_state,
)


class InconsistentRecordError(RuntimeError):
    """Both outcomes of a measurement have vanishing probability."""


def n_bits(n_spins: int) -> int:
    """K = ceil(log2 N) + 1."""
    n_spins = check_spin_number(n_spins)
    return (n_spins - 1).bit_length() + 1


@dataclass(frozen=True)
class PreparationPlan:
    n_spins: int
    gamma: float  # rad/s
    n_rounds: int
    target_offset: int = 0

    @property
    def k_bits(self) -> int:
        return n_bits(self.n_spins)

    @property
    def round_times(self) -> tuple[float, ...]:
        return tuple(round_time(j, self.gamma) for j in range(1, self.n_rounds + 1))

    @property
    def total_time(self) -> float:
        return float(sum(self.round_times))


def round_time(j: int, gamma: float) -> float:
    """Controlled-rotation duration of round j, ``pi / (2^(j-1) gamma)``."""
    return math.pi / (2 ** (j - 1) * gamma)


def make_plan(n_spins: int, gamma: float, n_rounds: int | None = None, target_offset: int = 0) -> PreparationPlan:
    n_spins = check_spin_number(n_spins)
    if n_spins < 2:
        raise ValueError("N >= 2 required")
    if not gamma > 0:
        raise ValueError(f"coupling must be positive, got {gamma}")
    k = n_bits(n_spins)
    if n_rounds is None:
        n_rounds = k
    if not 1 <= n_rounds <= k:
        raise ValueError(f"n_rounds must lie in 1..{k}, got {n_rounds}")
    if abs(target_offset) > n_spins / 2:
        raise ValueError(f"target offset {target_offset} outside [-N/2, N/2]")
    return PreparationPlan(n_spins, float(gamma), int(n_rounds), int(target_offset))


def feedback_angle(j: int, a_prev: int) -> float:
    return math.pi * a_prev * 2.0 ** (1 - j)


def round_phases(m: np.ndarray, j: int, a_prev: int, offset: float = 0.0, angle_error: float = 0.0) -> np.ndarray:
    """Eigenphases of ``U_j = exp(i pi 2^(1-j) (J_z - offset - A_{j-1}))``.

    ``angle_error`` is added to the nominal rotation angle ``pi 2^(1-j)``.
    """
    return (math.pi * 2.0 ** (1 - j) + angle_error) * (m - offset - a_prev)


_SNAP = 1e-13


def measurement_operators(phases: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals of ``(1 + exp(i phases)) / 2`` and ``(1 - exp(i phases)) / 2``.

    Entries below 1e-13 in magnitude are set to exact zero so that projected
    states keep an exactly sparse support.
    """
    c = 0.5 * np.cos(phases)
    s = 0.5 * np.sin(phases)
    k0 = np.empty(c.shape, dtype=complex)
    k1 = np.empty(c.shape, dtype=complex)
    k0.real, k0.imag = 0.5 + c, s
    k1.real, k1.imag = 0.5 - c, -s
    k0[np.abs(k0) < _SNAP] = 0.0
    k1[np.abs(k1) < _SNAP] = 0.0
    return k0, k1


def round_projector(n_spins: int, j: int, a_prev: int, b: int, offset: float = 0.0) -> CollectiveOperator:
    """``P(b) = (1 + (-1)^b U_j) / 2`` as a diagonal operator."""
    if j < 1 or b not in (0, 1):
        raise ValueError("need j >= 1 and b in {0, 1}")
    m = np.arange(n_spins + 1) - n_spins / 2
    k0, k1 = measurement_operators(round_phases(m, j, a_prev, offset))
    return CollectiveOperator(n_spins, diagonal=k1 if b else k0)


@dataclass(frozen=True)
class Measurement:
    bit: int
    state: CollectiveState
    probability: float  # probability of the sampled branch
    p0: float


def binary_phase_measurement(state: CollectiveState, phases: np.ndarray, rng: np.random.Generator) -> Measurement:
    """Sample the two-outcome measurement ``(1 +/- exp(i phases)) / 2``.

    Uses ``(1 + e^{i phi})/2 = e^{i phi/2} cos(phi/2)`` and
    ``(1 - e^{i phi})/2 = -i e^{i phi/2} sin(phi/2)``.
    """
    amps = state.amplitudes
    nz = np.flatnonzero(amps)
    sub = amps[nz]
    half = 0.5 * phases[nz]
    c = np.cos(half)
    s = np.sin(half)
    c[np.abs(c) < _SNAP] = 0.0
    s[np.abs(s) < _SNAP] = 0.0
    w = sub.real**2 + sub.imag**2
    p0 = float(w @ (c * c))
    p1 = float(w @ (s * s))
    total = p0 + p1
    if total <= 1e-300:
        raise InconsistentRecordError("both measurement outcomes have zero probability")
    p0, p1 = p0 / total, p1 / total
    if rng.random() < p0:
        bit, prob, kraus = 0, p0, c
    else:
        bit, prob, kraus = 1, p1, -1j * s
    if prob <= 0.0:
        raise InconsistentRecordError("sampled a zero-probability outcome")
    out = np.zeros_like(amps)
    out[nz] = sub * kraus * np.exp(1j * half) / math.sqrt(prob * total)
    return Measurement(bit, state.replace(out), prob, p0)


def run_round(state: CollectiveState, j: int, a_prev: int, rng: np.random.Generator, offset: float = 0.0) -> Measurement:
    return binary_phase_measurement(state, round_phases(state.m_values, j, a_prev, offset), rng)


def decode(a: int, k: int) -> int:
    """Map the bit accumulator to m_z; ``a = 2^(k-1)`` goes to the negative branch."""
    if not 0 <= a < 2**k:
        raise ValueError(f"accumulator {a} outside [0, 2^{k})")
    return a if a < 2 ** (k - 1) else a - 2**k


def accumulate(bits) -> list[int]:
    """``A_j = sum_{l<=j} 2^(l-1) b_l`` for j = 1..len(bits)."""
    out, a = [], 0
    for l, b in enumerate(bits, start=1):
        a += b << (l - 1)
        out.append(a)
    return out


@dataclass(frozen=True)
class PreparationRecord:
    bits: tuple[int, ...]
    accumulators: tuple[int, ...]
    decoded_m: int
    final_state: CollectiveState
    fidelity: float
    born_probabilities: tuple[float, ...]
    events: tuple[Any, ...] = ()
    accepted: bool = True
    target_m: int | None = None
    extras: dict = field(default_factory=dict)


def _decoded(n_rounds: int, a: int, offset: int, n_spins: int) -> int:
    """Residue-class member nearest ``offset + decode(a)`` inside the spectrum.

    A noisy record can name a class with no member in ``[-N/2, N/2]``; the
    raw value is returned then and the fidelity is zero.
    """
    m = offset + decode(a, n_rounds)
    half = n_spins / 2
    if abs(m) <= half:
        return m
    period = 2**n_rounds
    inside = [c for c in (m - period, m + period) if abs(c) <= half]
    return min(inside, key=lambda c: abs(c - m)) if inside else m


def population(state: CollectiveState, m_z: int) -> float:
    """|<N, m_z|psi>|^2, zero for values outside the spectrum."""
    if abs(m_z) > state.n_spins / 2:
        return 0.0
    return float(abs(state.amplitude(m_z)) ** 2)


def run_preparation(plan: PreparationPlan, rng: np.random.Generator, initial_state: CollectiveState | None = None) -> PreparationRecord:
    """Run ``plan.n_rounds`` rounds starting from ``|+>^N`` (or ``initial_state``).

    With a truncated schedule the decoded value is the residue class member
    closest to ``plan.target_offset``.
    """
    state = initial_plus_state(plan.n_spins) if initial_state is None else initial_state
    bits, probs = [], []
    a = 0
    for j in range(1, plan.n_rounds + 1):
        meas = run_round(state, j, a, rng, plan.target_offset)
        bits.append(meas.bit)
        probs.append(meas.probability)
        a += meas.bit << (j - 1)
        state = meas.state
    m = _decoded(plan.n_rounds, a, plan.target_offset, plan.n_spins)
    return PreparationRecord(
        bits=tuple(bits),
        accumulators=tuple(accumulate(bits)),
        decoded_m=m,
        final_state=state,
        fidelity=population(state, m),
        born_probabilities=tuple(probs),
    )


@dataclass(frozen=True)
class BatchOutcome:
    bits: np.ndarray  # (trials, rounds)
    decoded_m: np.ndarray
    fidelity: np.ndarray


def run_preparation_batch(plan: PreparationPlan, uniforms: np.ndarray, initial_state: CollectiveState | None = None) -> BatchOutcome:
    """Noiseless runs for many trials at once from their measurement uniforms.

    Row t of ``uniforms`` holds the ``plan.n_rounds`` draws trial t would
    consume in :func:`run_preparation`, so both give the same records.  Every
    Kraus operator is diagonal and the populations after a record depend only
    on that record, so each distinct prefix is evaluated once.
    """
    u = np.atleast_2d(np.asarray(uniforms, dtype=float))
    if u.shape[1] != plan.n_rounds:
        raise ValueError(f"need {plan.n_rounds} uniforms per trial")
    state = initial_plus_state(plan.n_spins) if initial_state is None else initial_state
    m = state.m_values
    branches = {0: state.probabilities}  # accumulator -> normalized populations
    a = np.zeros(u.shape[0], dtype=np.int64)
    bits = np.zeros(u.shape, dtype=np.int64)
    for j in range(1, plan.n_rounds + 1):
        nxt = {}
        for acc in np.unique(a):
            pops = branches[int(acc)]
            half = 0.5 * round_phases(m, j, int(acc), plan.target_offset)
            c, s = np.cos(half), np.sin(half)
            c[np.abs(c) < _SNAP] = 0.0
            s[np.abs(s) < _SNAP] = 0.0
            w0, w1 = pops * c * c, pops * s * s
            p0 = w0.sum() / (w0.sum() + w1.sum())
            rows = np.flatnonzero(a == acc)
            b = (u[rows, j - 1] >= p0).astype(np.int64)
            bits[rows, j - 1] = b
            if np.any(b == 0):
                nxt[int(acc)] = w0 / w0.sum()
            if np.any(b == 1):
                nxt[int(acc) + (1 << (j - 1))] = w1 / w1.sum()
        a = a + (bits[:, j - 1] << (j - 1))
        branches = nxt
    decoded = np.empty(a.size, dtype=np.int64)
    fid = np.empty(a.size)
    for acc in np.unique(a):
        rows = a == acc
        mm = _decoded(plan.n_rounds, int(acc), plan.target_offset, plan.n_spins)
        decoded[rows] = mm
        fid[rows] = branches[int(acc)][mm + plan.n_spins // 2] if abs(mm) <= plan.n_spins / 2 else 0.0
    return BatchOutcome(bits, decoded, fid)


# --- targeted preparation with post-selection ---------------------------------


def targeting_angle(n_spins: int, m: int) -> float:
    """chi with ``(cos chi - sin chi)^2 / 2 = m/N + 1/2``."""
    n_spins = check_spin_number(n_spins)
    if abs(m) > n_spins / 2:
        raise ValueError(f"target m={m} outside [-N/2, N/2]")
    s = -2.0 * m / n_spins
    assert -1.0 <= s <= 1.0
    return 0.5 * math.asin(s)


def rotated_plus_state(n_spins: int, chi: float) -> CollectiveState:
    """``exp(-i 2 chi J_y) |+>^N`` via its product-state expansion."""
    return product_state(n_spins, math.cos(math.pi / 4 + chi), math.sin(math.pi / 4 + chi))


def targeted_distribution(n_spins: int, m: int) -> np.ndarray:
    """Dicke populations of the rotated initial state, indexed by m_z + N/2."""
    return binomial_weights(n_spins, m / n_spins + 0.5)


def targeted_success_probability(n_spins: int, m: int) -> float:
    return float(targeted_distribution(n_spins, m)[m + n_spins // 2])


def run_targeted_preparation(
    n_spins: int,
    m: int,
    gamma: float,
    rng: np.random.Generator,
    n_rounds: int | None = None,
) -> PreparationRecord:
    """Prepare ``|N, m>`` by post-selecting the all-zero record.

    Rounds measure ``exp(i pi 2^(1-j) (J_z - m - A_{j-1}))`` starting from the
    rotated product state peaked at m.  ``accepted`` is true iff the decoded
    value equals m.
    """
    plan = make_plan(n_spins, gamma, n_rounds, target_offset=m)
    chi = targeting_angle(n_spins, m)
    rec = run_preparation(plan, rng, rotated_plus_state(n_spins, chi))
    accepted = rec.decoded_m == m
    return PreparationRecord(
        bits=rec.bits,
        accumulators=rec.accumulators,
        decoded_m=rec.decoded_m,
        final_state=rec.final_state,
        fidelity=rec.fidelity,
        born_probabilities=rec.born_probabilities,
        accepted=accepted,
        target_m=m,
        extras={"chi": chi},
    )
