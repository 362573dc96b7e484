"""Phase sensitivity of Ramsey product states and of Dicke states read out by J_z^2."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .collective_spin import (
    CollectiveOperator,
    CollectiveState,
    OperatorSpec,
    build_collective_operators,
    check_spin_number,
    dicke_state,
    expectation,
    rotate_y,
)


def ramsey_state(n_spins: int) -> CollectiveState:
    """``exp(i pi/2 J_y) |0...0>``, the product probe of Ramsey spectroscopy."""
    n_spins = check_spin_number(n_spins)
    return rotate_y(dicke_state(n_spins, n_spins // 2), -math.pi / 2)


def ramsey_expectation(n_spins: int, theta: float) -> float:
    """``<J_z>`` after a further rotation by theta: ``(N/2) sin theta``."""
    n_spins = check_spin_number(n_spins)
    return 0.5 * n_spins * math.sin(theta)


def error_propagation(state: CollectiveState, measured: CollectiveOperator, theta: float, atol: float = 1e-12) -> float:
    """``(Delta M)^2 / |d<M>/dtheta|^2`` on ``exp(-i theta J_y) state``.

    The derivative is ``<i [J_y, M]>`` on the rotated state.  A vanishing
    derivative means the readout carries no information about theta and the
    result is ``inf``.
    """
    n = state.n_spins
    if measured.hermiticity_defect() > 1e-10:
        raise ValueError("measured operator is not Hermitian")
    ops = build_collective_operators(n)
    rotated = rotate_y(state, theta)
    m_dense = measured.dense()
    jy = ops.jy.dense()
    mean = expectation(rotated, measured).real
    second = expectation(rotated, CollectiveOperator(n, matrix=m_dense @ m_dense)).real
    slope = expectation(rotated, CollectiveOperator(n, matrix=1j * (jy @ m_dense - m_dense @ jy))).real
    variance = max(second - mean**2, 0.0)
    scale = max(1.0, float(np.abs(m_dense).max()) * n)
    if abs(slope) <= atol * scale:
        return math.inf
    return variance / slope**2


@dataclass(frozen=True)
class Jz2Moments:
    jx2: float
    jy2: float
    jz2: float
    jz_jx2_jz: float
    var_jx2: float  # (Delta J_x^2)^2
    var_jz2: float  # (Delta J_z^2)^2


def jz2_moments(state: CollectiveState) -> Jz2Moments:
    """Exact moments from explicit operator words on the (N+1)-dim representation."""
    x, y, z = (OperatorSpec.word(c) for c in "xyz")
    ev = lambda spec: expectation(state, spec).real  # noqa: E731
    jx2, jz2 = ev(x * x), ev(z * z)
    return Jz2Moments(
        jx2=jx2,
        jy2=ev(y * y),
        jz2=jz2,
        jz_jx2_jz=ev(z * x * x * z),
        var_jx2=max(ev(x * x * x * x) - jx2**2, 0.0),
        var_jz2=max(ev(z * z * z * z) - jz2**2, 0.0),
    )


def _jz2_variance_from_moments(mo: Jz2Moments, theta: float) -> float:
    t2 = math.tan(theta) ** 2
    if t2 == 0.0 or not math.isfinite(t2):
        raise ValueError(f"J_z^2 readout variance is singular at theta={theta}")
    f = mo.var_jz2 / (mo.var_jx2 * t2) + t2
    num = (
        mo.var_jx2 * f
        + 4 * mo.jx2
        - 3 * mo.jy2
        - 2 * mo.jz2 * (1 + mo.jx2)
        + 6 * mo.jz_jx2_jz
    )
    den = 4 * (mo.jx2 - mo.jz2) ** 2
    if den == 0.0:
        return math.inf
    return num / den


def jz2_variance(n_spins: int, m_z: int, theta: float) -> float:
    """``(Delta theta)^2`` for a J_z^2 readout of ``|N, m_z>`` rotated by theta."""
    return _jz2_variance_from_moments(jz2_moments(dicke_state(n_spins, m_z)), theta)


def _golden_section(func, lo: float, hi: float, tol: float) -> tuple[float, float]:
    inv_phi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = func(c), func(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = func(d)
    x = 0.5 * (a + b)
    return x, func(x)


def _minimize_on_open_interval(func, lo: float, hi: float, tol: float = 1e-8) -> tuple[float, float]:
    """Golden-section search; if a coarse scan shows several local minima, refine around the best."""
    grid = np.linspace(lo, hi, 402)[1:-1]
    vals = np.array([func(t) for t in grid])
    interior_minima = np.sum((vals[1:-1] < vals[:-2]) & (vals[1:-1] < vals[2:]))
    if interior_minima > 1:
        i = int(np.argmin(vals))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    return _golden_section(func, lo, hi, tol)


@dataclass(frozen=True)
class SensitivityReport:
    n_spins: int
    m_z: int
    theta_opt: float
    variance_at_opt: float
    closed_form_min: float
    small_angle_limit: float
    moments: Jz2Moments

    @property
    def relative_gap(self) -> float:
        return abs(self.variance_at_opt - self.closed_form_min) / self.closed_form_min


def optimize_jz2_readout(n_spins: int, m_z: int, tol: float = 1e-8) -> SensitivityReport:
    """Minimize the J_z^2 readout variance over theta in (0, pi/2)."""
    mo = jz2_moments(dicke_state(n_spins, m_z))
    theta, var = _minimize_on_open_interval(lambda t: _jz2_variance_from_moments(mo, t), 0.0, math.pi / 2, tol)
    return SensitivityReport(
        n_spins=n_spins,
        m_z=m_z,
        theta_opt=theta,
        variance_at_opt=var,
        closed_form_min=min_variance(n_spins, m_z),
        small_angle_limit=dicke_limit_variance(n_spins, m_z),
        moments=mo,
    )


def _denominator(n_spins: int, m_z: int) -> int:
    n_spins = check_spin_number(n_spins)
    if abs(m_z) > n_spins / 2:
        raise ValueError(f"|m_z| = {abs(m_z)} exceeds N/2")
    den = n_spins**2 + 2 * n_spins - 12 * m_z**2
    if den <= 0:
        raise ValueError(f"N^2 + 2N - 12 m_z^2 = {den} <= 0: outside the closed-form regime")
    return den


def min_variance(n_spins: int, m_z: int) -> float:
    """``(2m^2 + 2)/D + (64m^4 - 16m^2)/D^2`` with ``D = N^2 + 2N - 12m^2``."""
    den = _denominator(n_spins, m_z)
    m2 = m_z * m_z
    return (2 * m2 + 2) / den + (64 * m2 * m2 - 16 * m2) / den**2


def dicke_limit_variance(n_spins: int, m_z: int) -> float:
    """``theta -> 0`` limit of the J_z^2 readout variance of ``|N, m_z>``.

    Obtained by inserting the exact Dicke moments into the variance formula:
    ``2(1 + 4m^2)/D + (64m^4 - 16m^2)/D^2``.  Agrees with :func:`min_variance`
    at m_z = 0 only.
    """
    den = _denominator(n_spins, m_z)
    m2 = m_z * m_z
    return 2 * (1 + 4 * m2) / den + (64 * m2 * m2 - 16 * m2) / den**2
