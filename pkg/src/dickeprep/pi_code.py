"""Permutation-invariant code words and preparation of their metrology probe.

Code words live on the Dicke components ``m_z = g j - N/2`` with ``N = g n u``.
The probe ``(|0_L> + |1_L>)/sqrt(2)`` is built in two stages: averaging
operators ``cos(theta J_y)`` shape the binomial amplitude profile of ``|+>^N``,
then post-selected phase measurements of ``J_z`` remove the components off
the code lattice.

N may be odd here (the smallest code has N = 9); states are created with
``allow_odd=True`` and m_z takes half-integer values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize

from .collective_spin import CollectiveOperator, CollectiveState, initial_plus_state, y_function_matrix

NINE_QUBIT_ANGLE = 0.57056


@dataclass(frozen=True)
class PiCodeParams:
    g: int
    n: int
    u: Fraction = Fraction(1)

    def __post_init__(self):
        u = Fraction(self.u)
        object.__setattr__(self, "u", u)
        if int(self.g) != self.g or int(self.n) != self.n or self.g < 2 or self.n < 2:
            raise ValueError("g and n must be integers > 1")
        if u < 1:
            raise ValueError("u must be >= 1")
        if (self.g * self.n * u).denominator != 1:
            raise ValueError(f"N = g n u = {self.g * self.n * u} is not an integer")

    @property
    def n_spins(self) -> int:
        return int(self.g * self.n * self.u)

    @property
    def distance_t(self) -> int:
        """Largest t with g, n > 2t + 1."""
        return max((min(self.g, self.n) - 2) // 2, 0)

    def lattice_m(self) -> np.ndarray:
        """Supported m_z values ``g j - N/2``, j = 0..n."""
        return self.g * np.arange(self.n + 1) - self.n_spins / 2

    def lattice_index(self) -> np.ndarray:
        return self.g * np.arange(self.n + 1)


def _lattice_state(params: PiCodeParams, coeffs: np.ndarray) -> CollectiveState:
    amps = np.zeros(params.n_spins + 1, dtype=complex)
    amps[params.lattice_index()] = coeffs
    return CollectiveState(params.n_spins, amps, allow_odd=True)


def _sqrt_binomials(n: int) -> np.ndarray:
    return np.sqrt([math.comb(n, j) for j in range(n + 1)], dtype=float)


def codewords(params: PiCodeParams) -> tuple[CollectiveState, CollectiveState]:
    c = _sqrt_binomials(params.n) / math.sqrt(2 ** (params.n - 1))
    j = np.arange(params.n + 1)
    return _lattice_state(params, np.where(j % 2 == 0, c, 0.0)), _lattice_state(params, np.where(j % 2 == 1, c, 0.0))


def probe_state(params: PiCodeParams) -> CollectiveState:
    return _lattice_state(params, _sqrt_binomials(params.n) / math.sqrt(2**params.n))


def y_projector(n_spins: int, theta: float) -> CollectiveOperator:
    """``(exp(-i theta J_y) + exp(i theta J_y)) / 2 = cos(theta J_y)``."""
    if not math.isfinite(theta):
        raise ValueError("angle must be finite")
    return CollectiveOperator(n_spins, matrix=y_function_matrix(n_spins, lambda w: np.cos(theta * w)))


def jz_phase_filter(n_spins: int, phase: float, sign: int = -1) -> CollectiveOperator:
    """``(1 + sign * exp(i phase J_z)) / 2`` as a diagonal operator."""
    m = np.arange(n_spins + 1) - n_spins / 2
    return CollectiveOperator(n_spins, diagonal=0.5 * (1 + sign * np.exp(1j * phase * m)))


def _apply_and_renormalize(op: CollectiveOperator, state: CollectiveState) -> tuple[CollectiveState, float]:
    out = op.apply(state)
    p = out.norm() ** 2
    if p <= 0.0:
        raise ValueError("post-selection has zero probability")
    return out.replace(out.amplitudes / math.sqrt(p)), p


@dataclass(frozen=True)
class ProbePreparation:
    state: CollectiveState
    fidelity: float  # |<target|state>|
    p_succ: float

    @property
    def fidelity_squared(self) -> float:
        return self.fidelity**2


def shaped_initial_state(n_spins: int, angles) -> tuple[CollectiveState, float]:
    """``prod_l cos(theta_l J_y) |+>^N`` renormalized, with its success probability."""
    state = initial_plus_state(n_spins, allow_odd=True)
    p_total = 1.0
    for theta in angles:
        state, p = _apply_and_renormalize(y_projector(n_spins, float(theta)), state)
        p_total *= p
    return state, p_total


def prepare_9qubit(repetitions: int = 5, theta: float = NINE_QUBIT_ANGLE) -> ProbePreparation:
    """Shaping with one averaging operator, then ``[(1 - exp(i 2pi/3 J_z))/2]^M``.

    The filter is applied literally and the state renormalized once at the end;
    components with phase ``exp(+-i 2pi/3)`` are attenuated by 1/2 per use.
    """
    if repetitions < 1:
        raise ValueError("M >= 1 required")
    params = PiCodeParams(3, 3)
    n = params.n_spins
    state, p_shape = shaped_initial_state(n, [theta])
    filt = jz_phase_filter(n, 2 * math.pi / 3, sign=-1)
    amps = state.amplitudes * filt.diagonal**repetitions
    p_filter = float(np.vdot(amps, amps).real)
    final = state.replace(amps / math.sqrt(p_filter))
    return ProbePreparation(final, abs(probe_state(params).overlap(final)), p_shape * p_filter)


def ratio_residual(params: PiCodeParams, angles) -> float:
    """Squared distance between achieved and target lattice amplitude ratios."""
    state, _ = shaped_initial_state(params.n_spins, angles)
    lat = state.amplitudes[params.lattice_index()]
    if abs(lat[0]) < 1e-300:
        return math.inf
    target = _sqrt_binomials(params.n)
    return float(np.sum(np.abs(lat / lat[0] - target) ** 2))


@dataclass(frozen=True)
class AngleSearch:
    angles: tuple[float, ...]
    residual: float
    initial_residual: float
    converged: bool


def find_angles(
    params: PiCodeParams,
    n_projectors: int = 1,
    restarts: int = 32,
    seed: int = 0,
    tol: float = 1e-6,
) -> AngleSearch:
    """Nelder-Mead over ``[0, pi/2]^L`` from seeded random starts.

    Among restarts the lowest residual wins; ties within 1e-12 go to the
    smallest angle vector so the choice is reproducible.
    """
    if n_projectors < 1:
        raise ValueError("need at least one projector")
    rng = np.random.default_rng(seed)
    bounds = [(0.0, math.pi / 2)] * n_projectors

    def objective(x):
        return ratio_residual(params, np.clip(x, 0.0, math.pi / 2))

    best = None
    for _ in range(restarts):
        x0 = rng.uniform(0.0, math.pi / 2, n_projectors)
        res = minimize(objective, x0, method="Nelder-Mead", bounds=bounds, options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 4000})
        x = np.sort(np.clip(res.x, 0.0, math.pi / 2))
        f = objective(x)
        if best is None or f < best[1] - 1e-12 or (abs(f - best[1]) <= 1e-12 and tuple(x) < tuple(best[0])):
            best = (x, f)
    initial = ratio_residual(params, [])
    return AngleSearch(tuple(float(v) for v in best[0]), best[1], initial, best[1] <= tol)


def stabilizer_phases(params: PiCodeParams, a: int) -> np.ndarray:
    """Eigenvalues of ``S(a) = exp(i 2 a pi / g (J_z + N/2))`` on the Dicke basis."""
    k = np.arange(params.n_spins + 1)
    return np.exp(2j * math.pi * a * k / params.g)


def _fixed_space(params: PiCodeParams, a: int) -> np.ndarray:
    # exact integer test: phase is 1 iff g divides a k
    k = np.arange(params.n_spins + 1)
    return (a * k) % params.g == 0


def stabilizer_measure(state: CollectiveState, params: PiCodeParams, a: int, rng: np.random.Generator) -> tuple[int, CollectiveState]:
    """Measure "S(a) = 1" versus "S(a) != 1" with one uniform draw."""
    if state.n_spins != params.n_spins:
        raise ValueError("state size does not match the code")
    keep = _fixed_space(params, a)
    probs = state.probabilities
    p_plus = float(probs[keep].sum() / probs.sum())
    plus = rng.random() < p_plus
    mask = keep if plus else ~keep
    amps = np.where(mask, state.amplitudes, 0.0)
    return (1 if plus else -1), state.replace(amps / np.linalg.norm(amps))


def prepare_probe(params: PiCodeParams, angles, repetitions: int = 1) -> ProbePreparation:
    """Shape with ``angles`` then post-select ``S(a) = 1`` for a = 1..g-1, round-robin.

    The stabilizer projectors are exact, so repeating them does not change
    the result beyond the first pass; ``repetitions`` is kept for schedules
    that mirror a hardware sequence.
    """
    state, p = shaped_initial_state(params.n_spins, angles)
    amps = state.amplitudes.copy()
    for _ in range(repetitions):
        for a in range(1, params.g):
            amps = np.where(_fixed_space(params, a), amps, 0.0)
    p_filter = float(np.vdot(amps, amps).real)
    if p_filter <= 0.0:
        raise ValueError("post-selection has zero probability")
    final = state.replace(amps / math.sqrt(p_filter))
    return ProbePreparation(final, abs(probe_state(params).overlap(final)), p * p_filter)
