"""Occupations, two-body interactions and scattering-phase models.

Units: ``hbar = 1``; momenta are wavevectors, energies ``k**2 / (2 m)``.
Vector arguments carry the Cartesian components in the last axis.

Phase models share one call signature, ``phase(omega, k, p, q, r, t)``,
with ``omega`` the two-particle energy, ``k, p`` the incoming momenta,
``q`` the transfer (outgoing ``k - q`` and ``p + q``), ``r`` the position
and ``t`` the time.  Models that know their derivatives expose
``gradient`` returning a :class:`PhaseGradient`; the shift calculus falls
back to central differences otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import expit

from .plasma import Distribution


def _norm(v):
    return np.sqrt(np.sum(np.asarray(v, dtype=float) ** 2, axis=-1))


# ---------------------------------------------------------------------------
# occupations


@dataclass(frozen=True)
class EquilibriumOccupation:
    """Fermi-Dirac (or Boltzmann) occupation ``f(k)`` of free energies."""

    mass: float
    temperature: float
    mu: float
    statistics: str = "fermi"

    def energy(self, k):
        return np.asarray(k, dtype=float) ** 2 / (2.0 * self.mass)

    def of_energy(self, e):
        x = (np.asarray(e, dtype=float) - self.mu) / self.temperature
        if self.statistics == "fermi":
            return expit(-x)
        if self.statistics == "boltzmann":
            return np.exp(-x)
        raise ValueError(f"unknown statistics {self.statistics!r}")

    def __call__(self, k):
        return self.of_energy(self.energy(k))

    @property
    def pauli(self) -> bool:
        return self.statistics == "fermi"


@dataclass(frozen=True)
class ZeroOccupation:
    mass: float = 1.0
    pauli: bool = True

    def __call__(self, k):
        return np.zeros_like(np.asarray(k, dtype=float))


class TabulatedOccupation:
    """Occupation interpolated from a :class:`Distribution` (zero beyond the grid)."""

    def __init__(self, dist: Distribution, pauli: bool = True):
        self.mass = dist.mass
        self.pauli = pauli
        nodes = dist.grid.nodes
        vals = dist.values
        # even extension through k = 0 keeps the spline isotropic
        xs = np.concatenate([-nodes[::-1], nodes])
        ys = np.concatenate([vals[::-1], vals])
        self._spline = CubicSpline(xs, ys)
        self._k_max = dist.grid.k_max

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        out = self._spline(np.minimum(k, self._k_max))
        return np.where(k > self._k_max, 0.0, np.maximum(out, 0.0))


# ---------------------------------------------------------------------------
# interactions for the self-energy


@dataclass(frozen=True)
class DebyeInteraction:
    """Statically screened Coulomb potential ``4 pi e2 / (q^2 + kappa^2)`` in Born approximation."""

    e2: float
    kappa: float

    def potential(self, q):
        q = np.asarray(q, dtype=float)
        return 4.0 * math.pi * self.e2 / (q * q + self.kappa**2)

    def matrix_element_sq(self, k, p, k3, k4):
        return self.potential(_norm(np.asarray(k) - np.asarray(k3))) ** 2

    def forward_amplitude(self, k, p):
        """Mean-field amplitude: zero, the Hartree term is cancelled by the neutralizing background."""
        return np.zeros(np.broadcast(np.asarray(k)[..., 0], np.asarray(p)[..., 0]).shape)

    def with_coupling(self, factor: float) -> "DebyeInteraction":
        return DebyeInteraction(self.e2 * factor, self.kappa)


@dataclass(frozen=True)
class SeparableTMatrix:
    """Rank-one separable interaction ``coupling |g><g|`` with ``g(p) = 1/(p^2 + beta^2)``.

    The two-body T-matrix is known in closed form,
    ``T(e; p, p') = g(p) g(p') tau(e)`` with ``tau = coupling / (1 - coupling J(e))``
    and the relative energy ``e = Omega - K^2 / (4 m)``.  Its phase serves
    as a phase-shift model and ``|T|^2`` as the scattering weight.
    """

    coupling: float
    beta: float
    mass: float = 1.0

    def __post_init__(self):
        if self.coupling <= -8.0 * math.pi * self.beta**3 / self.mass:
            raise ValueError("coupling binds a two-body state; only scattering states are modeled")

    def form_factor(self, p):
        p = np.asarray(p, dtype=float)
        return 1.0 / (p * p + self.beta**2)

    def _k(self, e):
        return np.sqrt(np.asarray(e, dtype=complex) * self.mass + 0j)

    def loop(self, e):
        """Two-particle propagator ``J(e)`` (retarded)."""
        k = self._k(e)
        return -self.mass / (8.0 * math.pi * self.beta * (self.beta - 1j * k) ** 2)

    def loop_derivative(self, e):
        k = self._k(e)
        k = np.where(k == 0, 1e-300, k)
        dj_dk = -1j * self.mass / (4.0 * math.pi * self.beta * (self.beta - 1j * k) ** 3)
        return dj_dk * self.mass / (2.0 * k)

    def tau(self, e):
        return self.coupling / (1.0 - self.coupling * self.loop(e))

    def density_of_states(self, e):
        """``sum_p g(p)^2 delta(e - p^2/m)``; equals ``-Im J / pi``."""
        e = np.maximum(np.asarray(e, dtype=float), 0.0)
        p = np.sqrt(self.mass * e)
        return self.mass * p * self.form_factor(p) ** 2 / (4.0 * math.pi**2)

    def relative_energy(self, omega, k, p):
        ktot = np.asarray(k, dtype=float) + np.asarray(p, dtype=float)
        return np.asarray(omega, dtype=float) - np.sum(ktot * ktot, axis=-1) / (4.0 * self.mass)

    # phase-model interface
    def phase_of_energy(self, e):
        return np.angle(self.tau(e))

    def phase_energy_derivative(self, e):
        lam = self.coupling
        return np.imag(lam * self.loop_derivative(e) / (1.0 - lam * self.loop(e)))

    def phase(self, omega, k, p, q, r, t):
        return self.phase_of_energy(self.relative_energy(omega, k, p))

    def gradient(self, omega, k, p, q, r, t):
        de = self.phase_energy_derivative(self.relative_energy(omega, k, p))
        ktot = np.asarray(k, dtype=float) + np.asarray(p, dtype=float)
        dk = -de[..., None] * ktot / (2.0 * self.mass)
        zero = np.zeros_like(dk)
        return PhaseGradient(d_omega=de, d_k=dk, d_p=dk, d_q=zero,
                             d_r=np.zeros(np.shape(r)), d_t=np.zeros_like(de))

    def t_squared(self, omega, k, p, q, r=None, t=0.0):
        k = np.asarray(k, dtype=float)
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        rel_in = _norm(k - p) / 2.0
        rel_out = _norm(k - p - 2.0 * q) / 2.0
        e = self.relative_energy(omega, k, p)
        return (self.form_factor(rel_in) * self.form_factor(rel_out)) ** 2 * np.abs(self.tau(e)) ** 2

    # self-energy interface
    def matrix_element_sq(self, k, p, k3, k4):
        k, p, k3, k4 = (np.asarray(v, dtype=float) for v in (k, p, k3, k4))
        rel_in = _norm(k - p) / 2.0
        rel_out = _norm(k3 - k4) / 2.0
        e = rel_out**2 / self.mass
        return (self.form_factor(rel_in) * self.form_factor(rel_out)) ** 2 * np.abs(self.tau(e)) ** 2

    def forward_amplitude(self, k, p):
        """First-order forward amplitude ``coupling g(p_rel)^2`` (mean field)."""
        rel = _norm(np.asarray(k, dtype=float) - np.asarray(p, dtype=float)) / 2.0
        return self.coupling * self.form_factor(rel) ** 2

    def with_coupling(self, factor: float) -> "SeparableTMatrix":
        return SeparableTMatrix(self.coupling * factor, self.beta, self.mass)


# ---------------------------------------------------------------------------
# phase-shift models


@dataclass
class PhaseGradient:
    """Partial derivatives of a phase model at a set of kinematic points."""

    d_omega: np.ndarray
    d_k: np.ndarray
    d_p: np.ndarray
    d_q: np.ndarray
    d_r: np.ndarray
    d_t: np.ndarray


def _shape_of(omega, k):
    return np.broadcast(np.asarray(omega, dtype=float), np.asarray(k, dtype=float)[..., 0]).shape


def _zero_gradient(omega, k, r, d_omega=None):
    shape = _shape_of(omega, k)
    zv = np.zeros(shape + (3,))
    d_om = np.zeros(shape) if d_omega is None else np.broadcast_to(d_omega, shape).astype(float)
    return PhaseGradient(d_omega=d_om, d_k=zv, d_p=zv.copy(), d_q=zv.copy(),
                         d_r=np.zeros(np.broadcast(np.zeros(shape), np.asarray(r, dtype=float)[..., 0]).shape + (3,)),
                         d_t=np.zeros(shape))


@dataclass(frozen=True)
class ConstantPhase:
    value: float = 0.0

    def phase(self, omega, k, p, q, r, t):
        return np.full(_shape_of(omega, k), float(self.value))

    def gradient(self, omega, k, p, q, r, t):
        return _zero_gradient(omega, k, r)


@dataclass(frozen=True)
class EnergyPhase:
    """Phase depending on the two-particle energy only."""

    func: Callable
    derivative: Callable | None = None

    def phase(self, omega, k, p, q, r, t):
        return np.broadcast_to(self.func(np.asarray(omega, dtype=float)), _shape_of(omega, k)).astype(float)

    @property
    def analytic(self) -> bool:
        return self.derivative is not None

    def gradient(self, omega, k, p, q, r, t):
        if self.derivative is None:
            raise NotImplementedError
        return _zero_gradient(omega, k, r, self.derivative(np.asarray(omega, dtype=float)))


@dataclass(frozen=True)
class BreitWignerPhase:
    """Isolated resonance ``-arctan((width/2) / (E - E_R))``, continued through ``E_R``.

    With ``relative=True`` the energy is measured in the pair rest frame,
    ``E = omega - |k + p|^2 / (4 m)``; otherwise ``E = omega``.
    """

    resonance: float
    width: float
    relative: bool = False
    mass: float = 1.0

    def _energy(self, omega, k, p):
        omega = np.asarray(omega, dtype=float)
        if not self.relative:
            return np.broadcast_to(omega, _shape_of(omega, k))
        ktot = np.asarray(k, dtype=float) + np.asarray(p, dtype=float)
        return omega - np.sum(ktot * ktot, axis=-1) / (4.0 * self.mass)

    def phase_of_energy(self, e):
        return np.arctan((e - self.resonance) / (0.5 * self.width)) - 0.5 * math.pi

    def time_delay(self, e):
        half = 0.5 * self.width
        return half / ((e - self.resonance) ** 2 + half * half)

    def phase(self, omega, k, p, q, r, t):
        return self.phase_of_energy(self._energy(omega, k, p))

    def gradient(self, omega, k, p, q, r, t):
        de = self.time_delay(self._energy(omega, k, p))
        g = _zero_gradient(omega, k, r, de)
        if self.relative:
            ktot = np.asarray(k, dtype=float) + np.asarray(p, dtype=float)
            dk = -de[..., None] * ktot / (2.0 * self.mass)
            g.d_k = dk
            g.d_p = dk.copy()
        return g


@dataclass(frozen=True)
class CallablePhase:
    """Arbitrary user phase; ``grad`` (optional) returns a :class:`PhaseGradient`."""

    func: Callable
    grad: Callable | None = None

    def phase(self, omega, k, p, q, r, t):
        return np.asarray(self.func(omega, k, p, q, r, t), dtype=float)

    @property
    def analytic(self) -> bool:
        return self.grad is not None

    def gradient(self, omega, k, p, q, r, t):
        if self.grad is None:
            raise NotImplementedError
        return self.grad(omega, k, p, q, r, t)


def has_analytic_gradient(model) -> bool:
    return getattr(model, "analytic", True) and hasattr(model, "gradient")


@dataclass(frozen=True)
class UnitarityWeight:
    """Scattering weight ``|T|^2 = amplitude sin^2(phase)`` tied to a phase model."""

    model: object
    amplitude: float = 1.0

    def t_squared(self, omega, k, p, q, r=None, t=0.0):
        r = np.zeros(3) if r is None else r
        return self.amplitude * np.sin(self.model.phase(omega, k, p, q, r, t)) ** 2


def scattering_weight(model, amplitude: float = 1.0):
    """``|T|^2`` provider for a phase model: exact for the separable T-matrix."""
    if isinstance(model, SeparableTMatrix):
        return model
    return UnitarityWeight(model, amplitude)
