import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dickeprep.adiabatic import (
    AdiabaticParams,
    accumulated_phase,
    adiabatic_preparation,
    effective_coupling,
    effective_unitary,
    gap,
    invert_label,
    make_schedule,
    quadratic_label,
    subspace_eigenvalues,
    window_mass,
)
from dickeprep.collective_spin import binomial_weights

G = 1e6


def test_coupling_at_the_top_of_the_ladder():
    for n in (4, 100, 400):
        assert effective_coupling(n / 2, n, G) == pytest.approx(G * math.sqrt(n))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 100).map(lambda k: 2 * k), st.integers(0, 10**6))
def test_coupling_symmetric_under_m_to_one_minus_m(n, raw):
    m = raw % (n // 2) + 1  # keeps 1 - m inside the spectrum
    assert effective_coupling(m, n, G) == pytest.approx(effective_coupling(1 - m, n, G), rel=1e-14)


def test_coupling_rejects_out_of_range():
    with pytest.raises(ValueError):
        effective_coupling(6, 10, G)


def test_gap_at_resonance_is_twice_the_coupling():
    p = AdiabaticParams(400, G)
    for m in (1, 10, 40):
        assert gap(m, p.omega2, p) == pytest.approx(2 * effective_coupling(m, 400, G), rel=1e-9)
    far = gap(10, p.omega1, p)
    assert far == pytest.approx(math.hypot(2 * effective_coupling(10, 400, G), p.omega2 - p.omega1), rel=1e-12)
    with pytest.raises(ValueError):
        subspace_eigenvalues(-200, p.omega2, p)


def test_phase_expansion_accuracy_inside_the_window():
    n, dwell = 400, 1e-6
    for m in range(1, 41):
        ph = accumulated_phase(m, dwell, n, G)
        scale = G * dwell * (m * m - m) / n
        if scale:
            assert abs(ph.deviation) / scale < 0.01


def test_taylor_expansion_exact_at_m_zero_and_one():
    for m in (0, 1):
        ph = accumulated_phase(m, 2e-6, 100, G)
        assert ph.deviation == pytest.approx(0, abs=1e-9)


def test_effective_unitaries_compose():
    n = 40
    u1, u2 = effective_unitary(n, G, 1e-6), effective_unitary(n, G, 2.5e-6)
    np.testing.assert_allclose(u1 * u2, effective_unitary(n, G, 3.5e-6), atol=1e-12)
    np.testing.assert_allclose(np.abs(u1), 1)


def test_label_degeneracy():
    m = np.arange(-20, 21)
    lam = quadratic_label(m)
    np.testing.assert_array_equal(lam, quadratic_label(1 - m))
    assert quadratic_label(0) == quadratic_label(1) == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10_000))
def test_label_inversion_on_upper_branch(m):
    assert invert_label(int(quadratic_label(m))) == m


def test_invert_label_rejects_non_labels():
    assert invert_label(-2) is None
    assert invert_label(3) is None
    assert invert_label(0) == 1


def test_schedule_for_400_spins():
    s = make_schedule(400, G)
    assert s.centre == 40
    assert s.window == (0, 80)
    assert s.label_range == (0, 6320)
    assert s.n_rounds == 13
    assert 2**s.n_rounds > 6320
    assert s.dwell_times[0] == pytest.approx(400 * math.pi / G)
    assert s.dwell_times[1] / s.dwell_times[0] == pytest.approx(0.5)


@pytest.mark.parametrize("n", [100, 400, 1000])
def test_window_holds_almost_all_weight(n):
    assert 1 - window_mass(n) < 1e-3
    s = make_schedule(n, G)
    p = binomial_weights(n, s.centre / n + 0.5)
    m = np.arange(n + 1) - n // 2
    assert abs((p * m).sum() - s.centre) < 1e-9


def test_adiabatic_preparation_statistics():
    n, trials = 400, 300
    recs = [adiabatic_preparation(n, G, np.random.default_rng(s)) for s in range(trials)]
    ok = [r for r in recs if r.extras["status"] == "ok"]
    assert len(ok) / trials > 0.99
    assert all(r.fidelity > 0.99 for r in ok)
    for r in recs:
        assert r.extras["status"] in ("ok", "ambiguous", "out_of_window")
        if r.accepted:
            assert quadratic_label(r.decoded_m) == r.extras["label"]


def test_adiabatic_preparation_is_deterministic():
    a = adiabatic_preparation(100, G, np.random.default_rng(9))
    b = adiabatic_preparation(100, G, np.random.default_rng(9))
    assert a.bits == b.bits and a.fidelity == b.fidelity
