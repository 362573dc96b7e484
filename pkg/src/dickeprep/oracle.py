"""Brute-force reference on the full 2^N (or 2^(N+1)) Hilbert space.

Bit i of a basis index is spin i, value 1 meaning spin down; with an ancilla
the ancilla is the highest bit.  The circuit is simulated gate by gate
(Hadamard, controlled J_z rotation, feedback Z-rotation, Hadamard, readout)
and shares the sampling rule ``bit = 0 iff u < P(0)`` with the collective
simulator, so equal probabilities give equal records.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .collective_spin import CollectiveState, check_spin_number, initial_plus_state
from .phase_estimation import PreparationPlan, PreparationRecord, _decoded, accumulate, round_time

MAX_SPINS = 12


@functools.lru_cache(maxsize=32)
def _bits(n_spins: int) -> np.ndarray:
    idx = np.arange(2**n_spins)
    out = (idx[:, None] >> np.arange(n_spins)[None, :]) & 1
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=32)
def hamming_weights(n_spins: int) -> np.ndarray:
    w = _bits(n_spins).sum(axis=1)
    w.setflags(write=False)
    return w


def jz_diagonal(n_spins: int) -> np.ndarray:
    """``J_z = N/2 - (number of ones)`` on every bitstring."""
    return n_spins / 2 - hamming_weights(n_spins)


def _check_size(n_spins: int) -> int:
    n_spins = check_spin_number(n_spins, allow_odd=True)
    if n_spins > MAX_SPINS:
        raise ValueError(f"full-state oracle limited to N <= {MAX_SPINS}")
    return n_spins


@dataclass(frozen=True)
class FullState:
    n_spins: int
    amplitudes: np.ndarray
    with_ancilla: bool = False

    def __post_init__(self):
        _check_size(self.n_spins)
        a = np.array(self.amplitudes, dtype=complex).reshape(-1)
        expected = 2 ** (self.n_spins + int(self.with_ancilla))
        if a.size != expected:
            raise ValueError(f"expected {expected} amplitudes, got {a.size}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    def spin_part(self) -> np.ndarray:
        """Spin amplitudes, requiring the ancilla (if any) to be in |0>."""
        if not self.with_ancilla:
            return self.amplitudes
        rows = self.amplitudes.reshape(2, -1)
        if np.linalg.norm(rows[1]) > 1e-12:
            raise ValueError("ancilla is not in |0>")
        return rows[0]


def embed(state: CollectiveState) -> FullState:
    """``|N, m>`` -> equal superposition of the C(N, N/2 - m) strings of that weight."""
    n = _check_size(state.n_spins)
    w = hamming_weights(n)
    k = n - w  # Dicke index m + N/2 equals the number of zeros
    counts = np.array([math.comb(n, int(x)) for x in range(n + 1)], dtype=float)
    return FullState(n, state.amplitudes[k] / np.sqrt(counts[w]))


def project(full: FullState, allow_odd: bool = True) -> CollectiveState:
    """Adjoint of :func:`embed`: component of the state in the symmetric subspace."""
    n = full.n_spins
    psi = full.spin_part()
    w = hamming_weights(n)
    sums = np.bincount(w, weights=psi.real, minlength=n + 1) + 1j * np.bincount(w, weights=psi.imag, minlength=n + 1)
    counts = np.array([math.comb(n, x) for x in range(n + 1)], dtype=float)
    amps_by_weight = sums / np.sqrt(counts)
    return CollectiveState(n, amps_by_weight[::-1], allow_odd)


def _swap_permutation(n_spins: int, i: int) -> np.ndarray:
    idx = np.arange(2**n_spins)
    bi = (idx >> i) & 1
    bj = (idx >> (i + 1)) & 1
    diff = bi ^ bj
    return idx ^ (diff << i) ^ (diff << (i + 1))


def symmetrize_check(full: FullState) -> float:
    """Largest ``||SWAP_(i,i+1) psi - psi||`` over adjacent spin pairs."""
    n = full.n_spins
    rows = full.amplitudes.reshape(-1, 2**n)
    worst = 0.0
    for i in range(n - 1):
        perm = _swap_permutation(n, i)
        worst = max(worst, float(np.linalg.norm(rows[:, perm] - rows)))
    return worst


_H = np.array([[1, 1], [1, -1]]) / math.sqrt(2)


def _apply_hadamard(rows: np.ndarray) -> np.ndarray:
    return _H @ rows


@dataclass(frozen=True)
class CircuitRound:
    bit: int
    p0: float
    probability: float


def circuit_round(
    spins: np.ndarray,
    generator_diag: np.ndarray,
    angle: float,
    feedback: float,
    rng: np.random.Generator,
    unconditional_factor: bool = True,
) -> tuple[CircuitRound, np.ndarray]:
    """One round on ``|0>_a (x) spins``; returns the outcome and the post-measurement spins.

    ``generator_diag`` is the diagonal of the coupled spin operator (J_z for
    uniform coupling); the controlled gate is ``exp(i angle G)`` on ancilla
    |1>, optionally preceded by ``exp(-i angle/2 G)`` on both branches.  The
    feedback rotation gives ancilla |1> a relative phase ``exp(-i feedback)``.
    """
    full = np.zeros((2, spins.size), dtype=complex)
    full[0] = spins
    full = _apply_hadamard(full)
    if unconditional_factor:
        full = full * np.exp(-0.5j * angle * generator_diag)[None, :]
    full[1] = full[1] * np.exp(1j * angle * generator_diag)
    full[0] *= np.exp(0.5j * feedback)
    full[1] *= np.exp(-0.5j * feedback)
    full = _apply_hadamard(full)
    p0 = float(np.vdot(full[0], full[0]).real)
    p1 = float(np.vdot(full[1], full[1]).real)
    total = p0 + p1
    p0 /= total
    bit = 0 if rng.random() < p0 else 1
    prob = p0 if bit == 0 else 1.0 - p0
    post = full[bit] / np.linalg.norm(full[bit])
    return CircuitRound(bit, p0, prob), post


def _run_circuit(
    plan: PreparationPlan,
    spins: np.ndarray,
    generator_diag: np.ndarray,
    rng: np.random.Generator,
    unconditional_factor: bool,
) -> tuple[list[CircuitRound], np.ndarray, int]:
    rounds = []
    a = 0
    for j in range(1, plan.n_rounds + 1):
        angle = plan.gamma * round_time(j, plan.gamma)  # pi 2^(1-j)
        feedback = angle * (a + plan.target_offset)
        r, spins = circuit_round(spins, generator_diag, angle, feedback, rng, unconditional_factor)
        rounds.append(r)
        a += r.bit << (j - 1)
    return rounds, spins, a


def full_pe_run(
    plan: PreparationPlan,
    rng: np.random.Generator,
    initial_state: CollectiveState | None = None,
    unconditional_factor: bool = True,
) -> PreparationRecord:
    """Gate-level phase estimation with uniform coupling on the full state."""
    n = _check_size(plan.n_spins)
    if n > 10:
        raise ValueError("full_pe_run supports N <= 10")
    start = initial_plus_state(n) if initial_state is None else initial_state
    rounds, spins, a = _run_circuit(plan, embed(start).amplitudes.copy(), jz_diagonal(n), rng, unconditional_factor)
    bits = [r.bit for r in rounds]
    m = _decoded(plan.n_rounds, a, plan.target_offset, n)
    final = FullState(n, spins)
    target = embed(CollectiveState(n, np.eye(n + 1)[int(m + n // 2)])).amplitudes
    return PreparationRecord(
        bits=tuple(bits),
        accumulators=tuple(accumulate(bits)),
        decoded_m=m,
        final_state=project(final),
        fidelity=float(abs(np.vdot(target, spins)) ** 2),
        born_probabilities=tuple(r.probability for r in rounds),
        extras={"p0": tuple(r.p0 for r in rounds), "symmetry_deviation": symmetrize_check(final)},
    )


@dataclass(frozen=True)
class NonuniformReport:
    record: PreparationRecord
    dicke_populations: np.ndarray  # |<N, m|psi>|^2, indexed by m + N/2
    symmetry_deviation: float
    perturbation_size: float  # sum_i |dgamma_i / (2 gamma)|
    small_perturbation: bool
    extras: dict = field(default_factory=dict)

    @property
    def max_dicke_population(self) -> float:
        return float(self.dicke_populations.max())


def nonuniform_pe_run(
    plan: PreparationPlan,
    deviations,
    rng: np.random.Generator,
    small_threshold: float = 0.1,
) -> NonuniformReport:
    """Phase estimation with spin-dependent couplings ``gamma_i = gamma (1 + deviations[i])``.

    The coupled operator becomes ``sum_i (1 + d_i) Z_i / 2``; symmetric input
    states are no longer mapped into the symmetric subspace.
    """
    n = _check_size(plan.n_spins)
    if n > 10:
        raise ValueError("nonuniform_pe_run supports N <= 10")
    d = np.asarray(deviations, dtype=float)
    if d.shape != (n,):
        raise ValueError(f"need {n} relative coupling deviations")
    z = 1 - 2 * _bits(n)  # +1 for |0>, -1 for |1>
    generator = 0.5 * (z * (1 + d)[None, :]).sum(axis=1)
    start = embed(initial_plus_state(n)).amplitudes.copy()
    rounds, spins, a = _run_circuit(plan, start, generator, rng, True)
    bits = [r.bit for r in rounds]
    m = _decoded(plan.n_rounds, a, plan.target_offset, n)
    final = FullState(n, spins)
    sym = project(final)
    pops = np.abs(sym.amplitudes) ** 2
    record = PreparationRecord(
        bits=tuple(bits),
        accumulators=tuple(accumulate(bits)),
        decoded_m=m,
        final_state=sym,
        fidelity=float(pops[int(m + n // 2)]),
        born_probabilities=tuple(r.probability for r in rounds),
    )
    size = float(np.abs(d / 2).sum())
    return NonuniformReport(record, pops, symmetrize_check(final), size, size < small_threshold)
