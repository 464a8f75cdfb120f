import math

import numpy as np
import pytest
from scipy.integrate import quad

from corrkin import formation
from corrkin.plasma import derive_params, reduced_input

SQ3 = math.sqrt(3.0)


def params(gamma=0.1, x=1.0, x0=None, hbar=1e-6):
    return derive_params(reduced_input(gamma, x, x0, hbar_reduced=hbar))


def test_collisional_energy_limits():
    for x in (0.5, 1.0, 2.0):
        p = params(x=x)
        assert formation.coll_energy(0.0, p) == pytest.approx(0.0, abs=1e-15)
        e_inf = formation.coll_energy(1e5, p)
        assert e_inf == pytest.approx(-SQ3 * 0.1**1.5 / (4 * x), rel=1e-6)


def test_rate_is_derivative_of_energy():
    p = params(x=2.0)
    t = np.linspace(0.05, 8, 60)
    h = 1e-5
    fd = (formation.coll_energy(t + h, p) - formation.coll_energy(t - h, p)) / (2 * h)
    assert np.allclose(formation.coll_rate(t, p), fd, rtol=1e-6, atol=1e-10)


def test_static_rate_classical_limit():
    # with hbar -> 0 the screened rate is the derivative of the closed-form energy
    # when the closed form is evaluated at sqrt(2) times the time
    for x in (0.5, 1.0, 2.0):
        p = params(x=x, hbar=1e-7)
        t = np.linspace(0.1, 6, 40)
        mapped = formation.coll_rate(math.sqrt(2) * t, p) * math.sqrt(2)
        assert np.allclose(formation.rate_static(t, p), mapped, rtol=1e-5, atol=1e-10)


def test_static_rate_integrates_to_saturation():
    p = params(x=1.0, hbar=0.05)
    total, _ = quad(lambda t: float(formation.rate_static(t, p)), 0, 200, limit=400)
    assert total == pytest.approx(-SQ3 * 0.1**1.5 / 4, rel=0.05)


def test_dynamic_rate_is_finite_and_negative_early():
    p = params(hbar=0.1)
    r = formation.rate_dynamic(np.linspace(0.01, 3, 50), p)
    assert np.all(np.isfinite(r))
    assert r[0] < 0


def test_rate_needs_physical_input_and_nonnegative_time():
    p = params()
    with pytest.raises(ValueError):
        formation.rate_static(-1.0, p)
    bare = type(p)(**{**p.__dict__, "source": None})
    with pytest.raises(ValueError):
        formation.rate_static(1.0, bare)


@pytest.mark.parametrize("x0", [0.5, 1.0, 2.0])
def test_budget_end_points(x0):
    p = params(x=1.0, x0=x0)
    b = formation.kinetic_energy_curve(np.array([0.0, 2e4]), p)
    amp = SQ3 * 0.1**1.5
    assert b.e_total == pytest.approx(amp / (2 * (1 + x0)))
    # before any evolution the kinetic energy holds the full interaction energy
    assert b.e_kin[0] == pytest.approx(b.e_total)
    assert b.e_corr[-1] == pytest.approx(-amp / 4, rel=1e-4)


def test_equal_screening_is_stationary():
    p = params(x=1.0, x0=1.0)
    b = formation.kinetic_energy_curve(np.linspace(0, 20, 200), p)
    assert np.allclose(b.e_corr, b.e_corr[0], atol=1e-14)


def test_limit_branch_is_continuous():
    t = np.linspace(0, 10, 50)
    at = formation.init_energy(t, params(x=1.0, x0=1.0))
    for d in (1e-4, -1e-4):
        near = formation.init_energy(t, params(x=1.0, x0=1.0 + d))
        assert np.allclose(near, at, atol=2e-4 * np.max(np.abs(at)))
    inside = formation.init_energy(t, params(x=1.0, x0=1.0 + 5e-8))
    assert np.allclose(inside, at, rtol=1e-12)


def test_formation_time_constant_in_reduced_units():
    taus = []
    for gamma in (0.01, 0.1, 1.0):
        p = params(gamma=gamma)
        t = np.linspace(0, 30, 6001) * p.tau_unit
        b = formation.kinetic_energy_curve(t, p)
        taus.append(formation.formation_time(b) * p.omega_p)
    assert np.ptp(taus) < 1e-3 * taus[0]


def test_formation_time_needs_saturation():
    p = params()
    t = np.linspace(0, 0.5, 100)
    with pytest.raises(formation.NonSaturatingError):
        formation.formation_time(formation.kinetic_energy_curve(t, p))


def test_total_energy_rejects_non_positive_sum():
    p = params(x=1.0, x0=1.0)
    bad = type(p)(**{**p.__dict__, "x": -2.0})
    with pytest.raises(ValueError):
        formation.total_energy(bad)


def test_collisional_energy_golden_value():
    # frozen from an arbitrary-precision derivative of y * (1 - erfcx(y)) at y = 2
    p = params(gamma=1.0, x=2.0)
    t = math.sqrt(2.0) / p.omega_p
    assert formation.coll_energy(t, p) == pytest.approx(-0.20745578952041714, rel=1e-12)


def test_total_energy_anchor():
    assert formation.total_energy(params(gamma=1.0, x=1.0, x0=1.0)) == pytest.approx(SQ3 / 4, rel=1e-15)


def test_dynamic_rate_small_time_series():
    # z1 -> omega_p sqrt(-i t hbar/T), and erfcx(z) ~ 1 - 2 z / sqrt(pi)
    p = params(hbar=0.1)
    src = p.source
    h = 1e-9 / p.omega_p
    r1, r4 = formation.rate_dynamic(np.array([h, 4 * h]), p)
    pref = src.e2 * p.kappa * src.temperature / src.hbar
    series = -pref * 2 / math.sqrt(math.pi) * p.omega_p * math.sqrt(h * src.hbar / src.temperature / 2)
    assert r1 == pytest.approx(series, rel=1e-4)
    assert r4 / r1 == pytest.approx(2.0, rel=1e-4)


def test_dynamic_rate_time_integral_converges():
    # the constant imaginary offset of z1 leaves a 1/t^2 tail, so each doubling
    # of the horizon halves the increment
    p = params(hbar=0.1)
    rate = lambda t: float(formation.rate_dynamic(t, p))
    horizons = [h / p.omega_p for h in (50.0, 100.0, 200.0)]
    values = [quad(rate, 0, h, limit=1000)[0] for h in horizons]
    steps = np.diff(values)
    assert steps[1] / steps[0] == pytest.approx(0.5, rel=0.01)
    assert abs(steps[1]) < 3e-3 * abs(values[-1])


def test_formation_time_follows_inverse_plasma_frequency():
    times = []
    for gamma in (0.1, 0.1 * 2 ** (2 / 3) * 2 ** (2 / 3)):
        p = params(gamma=gamma)
        t = np.linspace(0, 30, 6001) * p.tau_unit
        times.append((formation.formation_time(formation.kinetic_energy_curve(t, p)), p.omega_p))
    (t1, w1), (t2, w2) = times
    assert t2 / t1 == pytest.approx(w1 / w2, rel=0.2)
