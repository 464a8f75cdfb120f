"""Equilibrium observables: quasiparticle parts and the collision-delay corrections.

Units ``hbar = 1``.  Distributions are isotropic occupations ``f(|k|)`` of
one species with spin degeneracy ``spin``; pair integrals count both
partners' spin states (no exchange term).

The correction integrals use the weight
``P = |T|^2 2 pi delta(e1 + e2 - e3 - e4) f1 f2 (1 - f3 - f4)`` with the
energy delta resolved exactly: for incoming ``k, p`` the transfer is
``q = (k - p)/2 + R n`` with ``R = |k - p|/2`` and ``n`` on the unit sphere,
and ``int d^3q 2 pi delta(...) = 2 pi (m R / 2) int dOmega_n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .quasiparticle import (
    Medium,
    PanelFunction,
    SelfEnergyQuadrature,
    SpectralSettings,
    build_slice,
    rho_from_f,
)
from .scattering import EquilibriumOccupation, scattering_weight
from .shifts import CollisionKinematics, compute_shifts

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ThermoQuadrature:
    """Gauss rules for the one-, two- and three-momentum integrals.

    Momenta run to ``k_span`` thermal momenta ``sqrt(2 m T)`` above the
    Fermi momentum (if any).
    """

    n_k: int = 48
    n_cos: int = 16
    n_pair: int = 32
    n_shell_cos: int = 12
    n_shell_phi: int = 8
    k_span: float = 7.0


@dataclass
class ObservableSet:
    n: float
    e: float
    stress: np.ndarray
    extras: dict = field(default_factory=dict)

    def as_dict(self, prefix: str = "") -> dict:
        return {f"{prefix}n": self.n, f"{prefix}e": self.e,
                f"{prefix}stress": [[float(x) for x in row] for row in self.stress]}


def _k_max(occupation, mass: float, temperature: float, span: float) -> float:
    mu = max(getattr(occupation, "mu", 0.0), 0.0)
    return math.sqrt(2.0 * mass * mu) + span * math.sqrt(2.0 * mass * temperature)


def _radial_rule(k_max: float, n: int):
    x, w = leggauss(n)
    return 0.5 * k_max * (x + 1.0), 0.5 * k_max * w


def _radial_nodes(occupation, mass: float, temperature: float, span: float, n: int):
    """Gauss nodes on ``[0, k_max]``; split into thermal-width panels around a Fermi edge."""
    mu = getattr(occupation, "mu", 0.0)
    k_max = _k_max(occupation, mass, temperature, span)
    if mu <= 0:
        return _radial_rule(k_max, n)
    k_f = math.sqrt(2.0 * mass * mu)
    width = min(span * temperature * mass / k_f, 0.5 * k_f) if k_f > 0 else k_max
    cuts = [0.0, k_f - width, k_f, k_f + width, max(k_max, k_f + 2 * width)]
    x, w = leggauss(n)
    nodes, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        nodes.append(0.5 * (b - a) * (x + 1.0) + a)
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def density_of(occupation, mass: float, temperature: float, spin: int,
               quad: ThermoQuadrature = ThermoQuadrature()) -> float:
    k, w = _radial_nodes(occupation, mass, temperature, quad.k_span, 4 * quad.n_k)
    return spin * float(np.dot(w, k * k * occupation(k))) / (2.0 * math.pi**2)


def chemical_potential(density: float, mass: float, temperature: float, spin: int = 1,
                       statistics: str = "fermi", tol: float = 1e-10) -> float:
    """Chemical potential of the ideal gas with the given density (Brent's method)."""
    if statistics == "boltzmann":
        lam3 = (_TWO_PI / (mass * temperature)) ** 1.5
        return temperature * math.log(density * lam3 / spin)

    def excess(mu):
        occ = EquilibriumOccupation(mass, temperature, mu, statistics)
        return density_of(occ, mass, temperature, spin) - density

    lo, hi = -50.0 * temperature, 10.0 * temperature
    while excess(hi) < 0:
        hi *= 2.0
    return brentq(excess, lo, hi, xtol=tol * temperature, rtol=1e-15)


# ---------------------------------------------------------------------------
# quasiparticle part


def qp_observables(occupation, mass: float = 1.0, temperature: float = 1.0, spin: int = 1,
                   forward=None, eps=None, quad: ThermoQuadrature = ThermoQuadrature(),
                   fd_step: float = 1e-5) -> ObservableSet:
    """Density, energy and stress of the quasiparticle gas.

    ``forward(k_vec, p_vec)`` is the real forward amplitude entering the
    energy as ``(1/2) sum int int T f f`` (a number is a constant amplitude,
    ``None`` means none).  ``eps(|k|)`` is the quasiparticle energy used in
    the stress (free dispersion by default).  The stress tensor is the
    isotropic ``sum int (k_j d eps/d k_i + delta_ij eps) f - delta_ij E``.
    """
    k, w = _radial_nodes(occupation, mass, temperature, quad.k_span, quad.n_k)
    fk = occupation(k)
    radial = spin * w * k * k * fk / (2.0 * math.pi**2)
    n = float(np.sum(radial))
    kinetic = float(np.dot(radial, k * k / (2.0 * mass)))
    pair = 0.0
    if forward is not None:
        c, cw = leggauss(quad.n_cos)
        K, P, C = np.meshgrid(k, k, c, indexing="ij")
        kv = np.stack([np.zeros_like(K), np.zeros_like(K), K], axis=-1)
        pv = np.stack([P * np.sqrt(1 - C * C), np.zeros_like(P), P * C], axis=-1)
        amp = forward(kv, pv) if callable(forward) else float(forward) * np.ones(K.shape)
        # int d3k d3p / (2pi)^6 over |k|, |p|, cos
        wt = (w * k * k * fk)[:, None, None] * (w * k * k * fk)[None, :, None] * cw[None, None, :]
        pair = 0.5 * spin * spin * float(np.sum(wt * amp)) * 4 * math.pi * _TWO_PI / _TWO_PI**6
    energy = kinetic + pair
    if eps is None:
        e_k = k * k / (2.0 * mass)
        de_k = k / mass
    else:
        e_k = np.asarray(eps(k), dtype=float)
        de_k = (np.asarray(eps(k + fd_step)) - np.asarray(eps(np.maximum(k - fd_step, 0.0)))) / (
            k + fd_step - np.maximum(k - fd_step, 0.0))
    trace_part = float(np.dot(radial, k * de_k / 3.0 + e_k))
    stress = (trace_part - energy) * np.eye(3)
    return ObservableSet(n=n, e=energy, stress=stress, extras={"kinetic": kinetic, "pair": pair})


# ---------------------------------------------------------------------------
# collision-delay corrections


def _shell_directions(n_cos: int, n_phi: int):
    c, cw = leggauss(n_cos)
    phi = (np.arange(n_phi) + 0.5) * _TWO_PI / n_phi
    C, F = np.meshgrid(c, phi, indexing="ij")
    S = np.sqrt(1 - C * C)
    vec = np.stack([S * np.cos(F), S * np.sin(F), C], axis=-1).reshape(-1, 3)
    wt = (cw[:, None] * np.full(n_phi, _TWO_PI / n_phi)[None, :]).ravel()
    return vec, wt


def delta_observables(occupation, model, mass: float = 1.0, temperature: float = 1.0,
                      spin: int = 1, amplitude: float = 1.0,
                      quad: ThermoQuadrature = ThermoQuadrature(), fd_step: float = 1e-4) -> ObservableSet:
    """Correlated density, energy and stress from the collision delays.

    ``dn = sum int P delta_t``, ``dE = (1/2) sum int P (e1 + e2) delta_t`` and
    ``dJ_ij = (1/2) sum int P [(p+q)_i D4_j + (k-q)_i D3_j - p_i D2_j]`` with
    shifts at the energy shell.  The stress is returned orientation-averaged
    (exact for isotropic occupations).
    """
    weight = scattering_weight(model, amplitude)
    k, wk = _radial_nodes(occupation, mass, temperature, quad.k_span, quad.n_pair)
    c, cw = leggauss(quad.n_cos)
    n_dir, n_w = _shell_directions(quad.n_shell_cos, quad.n_shell_phi)
    pauli = bool(getattr(occupation, "pauli", True))
    dn = de = 0.0
    dj = np.zeros((3, 3))
    for ki, kw in zip(k, wk):
        kvec = np.array([0.0, 0.0, ki])
        P, C = np.meshgrid(k, c, indexing="ij")
        pv = np.stack([P * np.sqrt(1 - C * C), np.zeros_like(P), P * C], axis=-1).reshape(-1, 3)
        # d3k -> 4 pi k^2 dk ; d3p -> 2 pi p^2 dp dcos (azimuth relative to k)
        pw = (wk[:, None] * k[:, None] ** 2 * cw[None, :]).ravel() * _TWO_PI
        rel = 0.5 * (kvec - pv)
        big_r = np.linalg.norm(rel, axis=-1)
        q = rel[:, None, :] + big_r[:, None, None] * n_dir[None, :, :]
        K = np.broadcast_to(kvec, q.shape)
        Pv = np.broadcast_to(pv[:, None, :], q.shape)
        e1 = ki * ki / (2 * mass)
        e2 = np.sum(Pv * Pv, axis=-1) / (2 * mass)
        k3 = K - q
        k4 = Pv + q
        f1 = occupation(np.array(ki))
        f2 = occupation(np.linalg.norm(Pv, axis=-1))
        f3 = occupation(np.linalg.norm(k3, axis=-1))
        f4 = occupation(np.linalg.norm(k4, axis=-1))
        block = (1.0 - f3 - f4) if pauli else 1.0
        kin = CollisionKinematics(K, Pv, q, np.zeros(q.shape), 0.0, mass)
        sh = compute_shifts(model, kin, fd_step)
        tsq = weight.t_squared(e1 + e2, K, Pv, q, np.zeros(q.shape), 0.0)
        meas = pw[:, None] * n_w[None, :] * (0.5 * mass * big_r)[:, None] * _TWO_PI
        pw_full = 4 * math.pi * ki * ki * kw * meas * tsq * f1 * f2 * block
        dt = np.broadcast_to(sh.delta_t, pw_full.shape)
        dn += float(np.sum(pw_full * dt))
        de += 0.5 * float(np.sum(pw_full * (e1 + e2) * dt))
        d2, d3, d4 = (np.broadcast_to(v, q.shape) for v in (sh.delta_2, sh.delta_3, sh.delta_4))
        flux = (np.einsum("...i,...j->...ij", k4, d4) + np.einsum("...i,...j->...ij", k3, d3)
                - np.einsum("...i,...j->...ij", Pv, d2))
        dj += 0.5 * np.einsum("ab,abij->ij", pw_full, flux)
    norm = spin * spin / _TWO_PI**9
    iso = np.trace(dj) / 3.0 * np.eye(3)
    return ObservableSet(n=norm * dn, e=norm * de, stress=norm * iso,
                         extras={"frame_stress": (norm * dj).tolist()})


# ---------------------------------------------------------------------------
# consistency of the correlated density with the off-shell occupation


@dataclass(frozen=True)
class ConsistencyGrid:
    """Two resolution levels for the trend report."""

    n_k: tuple = (24, 32)
    thermo: tuple = (ThermoQuadrature(n_pair=24, n_cos=12, n_shell_cos=10),
                     ThermoQuadrature(n_pair=36, n_cos=16, n_shell_cos=14))
    self_energy: SelfEnergyQuadrature = SelfEnergyQuadrature(n_beta=1)
    spectral: SpectralSettings = SpectralSettings()
    k_span: float = 6.0
    tolerance: float = 0.05
    trend_tolerance: float = 0.01


def offshell_density(occupation, model, mass: float, temperature: float, spin: int, n_k: int,
                     settings: ConsistencyGrid = ConsistencyGrid(), include_mean_field: bool = True) -> dict:
    """``sum int (rho - f)`` and ``sum int (rho - z f)`` from the quasiparticle slices."""
    medium = Medium(occupation, mass, temperature, spin)
    kmax = _k_max(occupation, mass, temperature, settings.k_span)
    k, w = _radial_rule(kmax, n_k)
    minus_f = []
    minus_zf = []
    for kv in k:
        sl = build_slice(float(kv), medium, model, settings.self_energy, settings.spectral, include_mean_field)
        fk = float(occupation(kv))
        diff = float(rho_from_f([fk], [sl])[0]) - fk
        minus_f.append(diff)
        minus_zf.append(diff - sl.slope * fk)
    fac = spin * w * k * k / (2.0 * math.pi**2)
    return {"rho_minus_f": float(np.dot(fac, minus_f)), "rho_minus_zf": float(np.dot(fac, minus_zf))}


def consistency_check(occupation, model, mass: float = 1.0, temperature: float = 1.0, spin: int = 1,
                      settings: ConsistencyGrid = ConsistencyGrid(), include_mean_field: bool = False) -> dict:
    """Compare the correlated density from the collision delays with the off-shell density.

    The delay route works with free single-particle energies, so the
    slices omit the mean-field shift by default.

    ``lhs`` is the delay-weighted scattering integral, ``rhs`` is
    ``sum int (rho - f)`` from the spectral slices.  Both are evaluated at
    two resolutions; when either side moves by more than
    ``trend_tolerance`` between them the verdict is ``inconclusive``.
    """
    levels = []
    for n_k, tq in zip(settings.n_k, settings.thermo):
        lhs = delta_observables(occupation, model, mass, temperature, spin, quad=tq).n
        rhs = offshell_density(occupation, model, mass, temperature, spin, n_k, settings, include_mean_field)
        levels.append({"n_k": n_k, "n_pair": tq.n_pair, "lhs": lhs, **rhs})
    fine, coarse = levels[-1], levels[0]
    lhs, rhs = fine["lhs"], fine["rho_minus_f"]
    rel = abs(lhs - rhs) / abs(lhs) if lhs != 0 else math.inf
    trend = max(abs(fine[key] - coarse[key]) / max(abs(fine[key]), 1e-300) for key in ("lhs", "rho_minus_f"))
    if trend > settings.trend_tolerance:
        verdict = "inconclusive"
    else:
        verdict = "pass" if rel <= settings.tolerance else "fail"
    return {"lhs": lhs, "rhs": rhs, "rel_diff": rel, "rho_minus_zf": fine["rho_minus_zf"],
            "trend": trend, "verdict": verdict, "levels": levels}


def kb_energy(occupation, model, mass: float = 1.0, temperature: float = 1.0, spin: int = 1, n_k: int = 24,
              settings: ConsistencyGrid = ConsistencyGrid(), include_mean_field: bool = True) -> dict:
    """Energy from the one-particle propagator, ``sum int dk dw/(2pi)^4 (w + k^2/2m) g_lt / 2``.

    With the extended quasiparticle propagator the frequency integral is
    ``(eps + k^2/2m) rho / 2 + PV int dw/2pi sigma_lt / (w - eps) / 2``.
    Returned with its kinetic part ``sum int k^2/2m rho``.
    """
    medium = Medium(occupation, mass, temperature, spin)
    k, w = _radial_rule(_k_max(occupation, mass, temperature, settings.k_span), n_k)
    total = []
    kinetic = []
    for kv in k:
        sl = build_slice(float(kv), medium, model, settings.self_energy, settings.spectral, include_mean_field)
        fk = float(occupation(kv))
        rho = float(rho_from_f([fk], [sl])[0])
        pv = 0.0
        if np.any(sl.sigma_lt):
            pv = -PanelFunction(sl.edges, sl.order, sl.sigma_lt).principal_value(sl.eps) / _TWO_PI
        total.append(0.5 * (sl.eps + sl.kinetic) * rho + 0.5 * pv)
        kinetic.append(sl.kinetic * rho)
    fac = spin * w * k * k / (2.0 * math.pi**2)
    e = float(np.dot(fac, total))
    kin = float(np.dot(fac, kinetic))
    return {"energy": e, "kinetic": kin, "interaction": e - kin}
