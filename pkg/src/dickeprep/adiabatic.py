"""Conditional phases from an adiabatic pass through a spin-ancilla avoided crossing.

Each Dicke component ``|N, m>`` couples the ancilla-excited state to a single
partner state with strength ``G(m) = g sqrt(N/2 (N/2 + 1) - m (m - 1))``.
Waiting ``dt`` at the crossing imprints ``-G(m) dt``; to leading order in
``m / N`` this is a constant plus ``g dt (m^2 - m) / N``, so the effective
controlled unitary is ``exp(i g dt / N (J_z^2 - J_z))`` on the ancilla-|1>
branch.  Phase estimation of that generator resolves ``lambda = m^2 - m``,
which identifies m uniquely once m >= 1 (m and 1 - m share lambda).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .collective_spin import CollectiveState, binomial_weights, check_spin_number
from .phase_estimation import (
    PreparationRecord,
    accumulate,
    binary_phase_measurement,
    rotated_plus_state,
    targeting_angle,
)


@dataclass(frozen=True)
class AdiabaticParams:
    n_spins: int
    g: float  # rad/s
    dwell: float = 0.0  # s, waiting time at the crossing
    omega1: float = 2 * math.pi * 2.37e9  # rad/s
    omega2: float = 2 * math.pi * 3.37e9  # rad/s

    def __post_init__(self):
        check_spin_number(self.n_spins)
        if not self.omega2 > self.omega1:
            raise ValueError("need omega2 > omega1")
        if self.dwell < 0:
            raise ValueError("dwell time must be nonnegative")


def _check_m(m_z, n_spins: int):
    m = np.asarray(m_z, dtype=float)
    if np.any(np.abs(m) > n_spins / 2):
        raise ValueError(f"m_z outside [-N/2, N/2] for N={n_spins}")
    return m


def effective_coupling(m_z, n_spins: int, g: float):
    m = _check_m(m_z, n_spins)
    half = n_spins / 2
    out = g * np.sqrt(half * (half + 1) - m * (m - 1))
    return float(out) if out.ndim == 0 else out


def subspace_eigenvalues(m_z: float, omega: float, params: AdiabaticParams) -> tuple[float, float]:
    """Upper and lower eigenvalue of the two-level block labelled by m_z."""
    if m_z == -params.n_spins / 2:
        raise ValueError("m_z = -N/2 does not couple to a partner state")
    big_g = effective_coupling(m_z, params.n_spins, params.g)
    root = math.hypot(big_g, (params.omega2 - omega) / 2)
    base = params.omega2 / 2 + (params.n_spins / 2 - m_z) * params.omega1
    return base + root, base - root


def gap(m_z: float, omega: float, params: AdiabaticParams) -> float:
    upper, lower = subspace_eigenvalues(m_z, omega, params)
    return upper - lower


@dataclass(frozen=True)
class AccumulatedPhase:
    exact: float
    taylor: float

    @property
    def deviation(self) -> float:
        return self.exact - self.taylor


def accumulated_phase(m_z: float, dwell: float, n_spins: int, g: float) -> AccumulatedPhase:
    """``-G(m) dt`` and its expansion ``g dt ((m^2 - m)/s - s/2)`` with ``s = sqrt(N(N+2))``."""
    exact = -effective_coupling(m_z, n_spins, g) * dwell
    s = math.sqrt(n_spins * (n_spins + 2))
    taylor = g * dwell * ((m_z * m_z - m_z) / s - s / 2)
    return AccumulatedPhase(exact, taylor)


def effective_unitary(n_spins: int, g: float, dwell: float) -> np.ndarray:
    """Diagonal of ``exp(i g dt / N (J_z^2 - J_z))`` applied on the ancilla-|1> branch."""
    if dwell < 0:
        raise ValueError("dwell time must be nonnegative")
    m = np.arange(n_spins + 1) - n_spins / 2
    return np.exp(1j * g * dwell / n_spins * (m * m - m))


def quadratic_label(m) -> np.ndarray:
    m = np.asarray(m)
    return m * m - m


def invert_label(lam: int) -> int | None:
    """The m >= 1 with ``m^2 - m = lam``, or None when lam is not of that form."""
    if lam < 0:
        return None
    r = math.isqrt(1 + 4 * lam)
    if r * r != 1 + 4 * lam:
        return None
    return (1 + r) // 2


@dataclass(frozen=True)
class AdiabaticSchedule:
    n_spins: int
    g: float
    centre: int
    window: tuple[int, int]  # m range trusted for inversion
    n_rounds: int

    @property
    def dwell_times(self) -> tuple[float, ...]:
        # g dt_j / N = pi 2^(1-j)
        return tuple(self.n_spins * math.pi * 2.0 ** (1 - j) / self.g for j in range(1, self.n_rounds + 1))

    @property
    def label_range(self) -> tuple[int, int]:
        lo, hi = self.window
        labels = quadratic_label(np.arange(lo, hi + 1))
        return int(labels.min()), int(labels.max())


def make_schedule(n_spins: int, g: float) -> AdiabaticSchedule:
    """Centre at ``round(2 sqrt N)``, window ``0..round(4 sqrt N)``, enough rounds to resolve its labels."""
    n_spins = check_spin_number(n_spins)
    if not g > 0:
        raise ValueError("coupling must be positive")
    centre = int(round(2 * math.sqrt(n_spins)))
    top = min(int(round(4 * math.sqrt(n_spins))), n_spins // 2)
    lam_hi = int(quadratic_label(top))
    return AdiabaticSchedule(n_spins, float(g), centre, (0, top), max(lam_hi.bit_length(), 1))


def window_mass(n_spins: int) -> float:
    """Initial-state probability on the schedule window."""
    sched = make_schedule(n_spins, 1.0)
    p = binomial_weights(n_spins, sched.centre / n_spins + 0.5)
    lo, hi = sched.window
    return float(p[lo + n_spins // 2 : hi + n_spins // 2 + 1].sum())


def adiabatic_preparation(n_spins: int, g: float, rng: np.random.Generator) -> PreparationRecord:
    """Phase estimation of ``J_z^2 - J_z`` using the adiabatic controlled phase.

    Round j dwells for ``N pi 2^(1-j) / g`` and feeds back the bits measured
    so far, exactly as for ``J_z``.  The decoded label is inverted on the
    m >= 1 branch; ``extras["status"]`` is ``"ok"``, ``"ambiguous"`` (label 0,
    where m = 0 and m = 1 coincide) or ``"out_of_window"``.  Only ``"ok"``
    trials are accepted.
    """
    sched = make_schedule(n_spins, g)
    chi = targeting_angle(n_spins, sched.centre)
    state: CollectiveState = rotated_plus_state(n_spins, chi)
    lam = quadratic_label(state.m_values)
    lam_lo, lam_hi = sched.label_range
    bits, probs = [], []
    a = 0
    for j, dwell in enumerate(sched.dwell_times, start=1):
        phases = g * dwell / n_spins * (lam - lam_lo - a)
        meas = binary_phase_measurement(state, phases, rng)
        bits.append(meas.bit)
        probs.append(meas.probability)
        a += meas.bit << (j - 1)
        state = meas.state
    label = lam_lo + a
    m = invert_label(label)
    if label == 0:
        status = "ambiguous"
    elif m is None or not sched.window[0] <= m <= sched.window[1] or label > lam_hi:
        status = "out_of_window"
    else:
        status = "ok"
    decoded = m if m is not None else sched.centre
    return PreparationRecord(
        bits=tuple(bits),
        accumulators=tuple(accumulate(bits)),
        decoded_m=decoded,
        final_state=state,
        fidelity=float(abs(state.amplitude(decoded)) ** 2) if status == "ok" else 0.0,
        born_probabilities=tuple(probs),
        accepted=status == "ok",
        target_m=sched.centre,
        extras={"label": label, "status": status, "chi": chi},
    )
