"""Closed-form build-up of correlation energy after a sudden switch-on.

All energies are per particle in units of ``T`` and times are physical
(``t``); the reduced time is ``tau = omega_p t / sqrt(2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .plasma import PlasmaParams
from .specfun import d_y_cal_F, cal_F, erfcx_complex, principal_sqrt, screened_bracket

_SQRT_PI = math.sqrt(math.pi)
# below this relative separation of x0 and x the analytic limit is used
LIMIT_SEPARATION = 1e-7


class NonSaturatingError(RuntimeError):
    """The correlation energy curve has not levelled off."""


@dataclass(frozen=True)
class EnergyBudget:
    """Energy components per particle (units of T) on a time grid.

    ``e_corr`` is the negative of the kinetic-energy gain so that a
    correlated state carries negative correlation energy.
    """

    t: np.ndarray
    tau: np.ndarray
    e_total: float
    e_init: np.ndarray
    e_coll: np.ndarray
    e_kin: np.ndarray
    e_corr: np.ndarray


def _amplitude(params: PlasmaParams) -> float:
    return math.sqrt(3.0) * params.Gamma**1.5


def _reduced_tau(t, params: PlasmaParams) -> np.ndarray:
    return np.asarray(t, dtype=float) * params.omega_p / math.sqrt(2.0)


def _physical(params: PlasmaParams):
    src = params.source
    if src is None:
        raise ValueError("rate formulas need the physical input attached to the parameters")
    return src


def _check_time(t) -> np.ndarray:
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0):
        raise ValueError("time must be non-negative")
    return tt


def rate_static(t, params: PlasmaParams):
    """Formation rate of correlation energy with static Debye screening.

    Energy per particle per unit time.  For a screening length other than
    the Debye length (``x != 1``) the Debye wave number enters both the
    prefactor and the argument.
    """
    src = _physical(params)
    tt = _check_time(t)
    x = params.x
    z = x * params.omega_p * principal_sqrt(tt * tt - 1j * tt * src.hbar / src.temperature)
    pref = src.e2 * params.kappa * src.temperature / (2.0 * src.hbar * x)
    return -pref * np.imag(screened_bracket(z))


def rate_dynamic(t, params: PlasmaParams):
    """Formation rate with dynamical (random-phase) screening."""
    src = _physical(params)
    tt = _check_time(t)
    z1 = params.omega_p * principal_sqrt(2.0 * tt * tt - 1j * tt * src.hbar / src.temperature)
    pref = src.e2 * params.kappa * src.temperature / src.hbar
    return -pref * np.imag(erfcx_complex(z1))


def coll_energy(t, params: PlasmaParams):
    """Collisional correlation energy of an initially uncorrelated classical plasma."""
    y = params.x * _reduced_tau(_check_time(t), params)
    val = d_y_cal_F(y)
    return -_amplitude(params) / (4.0 * params.x) * np.real(val)


def coll_rate(t, params: PlasmaParams):
    """Time derivative of :func:`coll_energy` from its own closed form."""
    x = params.x
    y = x * _reduced_tau(_check_time(t), params)
    ex = np.real(erfcx_complex(y))
    second = -(6.0 * y + 4.0 * y**3) * ex + 4.0 / _SQRT_PI * (1.0 + y * y)
    dy_dt = x * params.omega_p / math.sqrt(2.0)
    return -_amplitude(params) / (4.0 * x) * second * dy_dt


def init_energy(t, params: PlasmaParams):
    """Energy released by correlations present at the initial time.

    Zero when the system starts uncorrelated (``x0`` infinite).  When
    ``x0`` equals ``x`` the analytic limit is evaluated.
    """
    tau = _reduced_tau(_check_time(t), params)
    x, x0 = params.x, params.x0
    amp = _amplitude(params)
    if math.isinf(x0):
        return np.zeros_like(tau)
    if abs(x0 - x) <= LIMIT_SEPARATION * x:
        return amp / (4.0 * x) * np.real(d_y_cal_F(x * tau))
    num = x * cal_F(x * tau) - x0 * cal_F(x0 * tau)
    return -amp / (2.0 * (x0 * x0 - x * x)) * np.real(num)


def total_energy(params: PlasmaParams) -> float:
    """Total interaction energy content per particle (units of T)."""
    if params.x + params.x0 <= 0:
        raise ValueError("x + x0 must be positive")
    if math.isinf(params.x0):
        return 0.0
    return _amplitude(params) / (2.0 * (params.x + params.x0))


def kinetic_energy_curve(t, params: PlasmaParams) -> EnergyBudget:
    tt = _check_time(t)
    e_total = total_energy(params)
    e_init = np.asarray(init_energy(tt, params), dtype=float)
    e_coll = np.asarray(coll_energy(tt, params), dtype=float)
    e_kin = e_total - e_init - e_coll
    return EnergyBudget(
        t=tt,
        tau=_reduced_tau(tt, params),
        e_total=e_total,
        e_init=e_init,
        e_coll=e_coll,
        e_kin=e_kin,
        e_corr=-e_kin,
    )


def formation_time(curve: EnergyBudget, saturation_tol: float = 0.01) -> float:
    """First time where the correlation energy is within 1/e of its final value.

    The final value is the last point of the curve; the curve counts as
    saturated when its last tenth changes by less than ``saturation_tol``
    of the total change.
    """
    t = np.asarray(curve.t, dtype=float)
    e = np.asarray(curve.e_corr, dtype=float)
    e_inf = e[-1]
    span = abs(e[0] - e_inf)
    if span == 0.0 or np.all(e == e_inf):
        return 0.0
    tail = t >= t[0] + 0.9 * (t[-1] - t[0])
    if np.max(np.abs(e[tail] - e_inf)) > saturation_tol * span:
        raise NonSaturatingError("correlation energy still changes at the end of the time grid")
    dist = np.abs(e - e_inf) - span / math.e
    idx = np.nonzero(dist <= 0)[0][0]
    if idx == 0:
        return float(t[0])
    # linear interpolation of the crossing between idx-1 and idx
    d0, d1 = dist[idx - 1], dist[idx]
    return float(t[idx - 1] + (t[idx] - t[idx - 1]) * d0 / (d0 - d1))
