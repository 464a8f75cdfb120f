"""Plasma parameters, the Debye potential, momentum grids and initial states.

Physical inputs use Gaussian units with a consistent but otherwise free
choice of scales.  The solvers work in the reduced system where energy is
measured in ``T``, time in ``1/omega_p``, momentum in ``sqrt(m T)`` and
length in ``1/kappa``.  In that system ``hbar`` becomes
``hbar * omega_p / T`` and the coupling reduces to ``(Gamma, x, x0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import expit


class NormalizationError(RuntimeError):
    """Quadrature of a distribution misses its target density."""


@dataclass(frozen=True)
class PlasmaInput:
    """Physical inputs of a one-component plasma.

    ``kappa_0`` is the screening of the initial correlations; ``None``
    means the system starts uncorrelated.
    """

    e2: float
    mass: float
    density: float
    temperature: float
    hbar: float
    spin: int
    kappa_D: float
    kappa_0: float | None = None

    def __post_init__(self):
        for name in ("e2", "mass", "density", "temperature", "hbar", "kappa_D"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
        if int(self.spin) != self.spin or self.spin < 1:
            raise ValueError(f"spin must be an integer >= 1, got {self.spin!r}")
        if self.kappa_0 is not None and not (math.isfinite(self.kappa_0) and self.kappa_0 > 0):
            raise ValueError(f"kappa_0 must be positive when given, got {self.kappa_0!r}")


@dataclass(frozen=True)
class PlasmaParams:
    """Derived plasma scales.

    ``x0`` is ``math.inf`` without initial correlations.  ``hbar_reduced``
    is ``hbar omega_p / T``, the quantum parameter of the reduced units.
    """

    omega_p: float
    kappa: float
    Gamma: float
    a_e: float
    x: float
    x0: float
    tau_unit: float
    hbar_reduced: float
    spin: int
    source: PlasmaInput | None = field(default=None, compare=False)


def derive_params(inp: PlasmaInput) -> PlasmaParams:
    kappa = math.sqrt(4.0 * math.pi * inp.e2 * inp.density / inp.temperature)
    omega_p = math.sqrt(kappa * kappa * inp.temperature / inp.mass)
    a_e = (3.0 / (4.0 * math.pi * inp.density)) ** (1.0 / 3.0)
    x0 = math.inf if inp.kappa_0 is None else inp.kappa_0 / kappa
    return PlasmaParams(
        omega_p=omega_p,
        kappa=kappa,
        Gamma=inp.e2 / (a_e * inp.temperature),
        a_e=a_e,
        x=inp.kappa_D / kappa,
        x0=x0,
        tau_unit=math.sqrt(2.0) / omega_p,
        hbar_reduced=inp.hbar * omega_p / inp.temperature,
        spin=int(inp.spin),
        source=inp,
    )


def reduced_input(Gamma: float, x: float, x0: float | None = None,
                  hbar_reduced: float = 0.01, spin: int = 1) -> PlasmaInput:
    """Input in reduced units (T = m = omega_p = kappa = 1) for given couplings."""
    e2 = math.sqrt(3.0) * Gamma**1.5
    return PlasmaInput(
        e2=e2,
        mass=1.0,
        density=1.0 / (4.0 * math.pi * e2),
        temperature=1.0,
        hbar=hbar_reduced,
        spin=spin,
        kappa_D=x,
        kappa_0=x0,
    )


def debye_potential(q, kappa_i: float, e2: float):
    """Fourier transform ``4 pi e2 / (q**2 + kappa_i**2)`` of the Debye potential."""
    if kappa_i <= 0:
        raise ValueError("screening wave number must be positive")
    qq = np.asarray(q, dtype=float)
    if np.any(qq < 0):
        raise ValueError("momentum transfer must be non-negative")
    return 4.0 * math.pi * e2 / (qq * qq + kappa_i * kappa_i)


@dataclass(frozen=True)
class MomentumGrid:
    """Radial Gauss-Legendre grid on ``[0, k_max]``."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def count(self) -> int:
        return self.nodes.size

    @property
    def k_max(self) -> float:
        return float(self.nodes[-1] + 0.5 * self.weights[-1])

    @classmethod
    def gauss_legendre(cls, n: int, k_max: float) -> "MomentumGrid":
        if n < 2 or k_max <= 0:
            raise ValueError("grid needs at least two nodes and positive extent")
        u, w = leggauss(n)
        nodes = 0.5 * k_max * (u + 1.0)
        weights = 0.5 * k_max * w
        return cls(nodes=nodes, weights=weights)


@dataclass(frozen=True)
class Distribution:
    """Isotropic occupation ``values`` on ``grid`` for a gas with the given constants.

    Momenta are physical momenta; densities carry ``spin / (2 pi hbar)**3``.
    """

    grid: MomentumGrid
    values: np.ndarray
    mass: float = 1.0
    hbar: float = 1.0
    spin: int = 1

    def _moment(self, weight: np.ndarray) -> float:
        pref = self.spin / (2.0 * math.pi**2 * self.hbar**3)
        p = self.grid.nodes
        return pref * float(np.sum(self.grid.weights * p * p * weight * self.values))

    def density(self) -> float:
        return self._moment(np.ones_like(self.grid.nodes))

    def kinetic_energy(self) -> float:
        return self._moment(self.grid.nodes**2 / (2.0 * self.mass))


def maxwell_init(grid: MomentumGrid, density: float, temperature: float,
                 mass: float = 1.0, hbar: float = 1.0, spin: int = 1,
                 rtol: float = 1e-6) -> Distribution:
    """Non-degenerate Maxwell occupation normalized to ``density``."""
    amp = density * (2.0 * math.pi * hbar) ** 3 / (spin * (2.0 * math.pi * mass * temperature) ** 1.5)
    p = grid.nodes
    dist = Distribution(grid, amp * np.exp(-p * p / (2.0 * mass * temperature)), mass, hbar, spin)
    got = dist.density()
    if abs(got / density - 1.0) > rtol:
        raise NormalizationError(
            f"grid quadrature gives density {got:.8g} instead of {density:.8g}; extend k_max or add nodes")
    return dist


def fermi_dirac(grid: MomentumGrid, mu: float, temperature: float,
                mass: float = 1.0, hbar: float = 1.0, spin: int = 1) -> Distribution:
    """Fermi-Dirac occupation; ``temperature = 0`` gives the sharp step."""
    eps = grid.nodes**2 / (2.0 * mass)
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        values = np.where(eps < mu, 1.0, np.where(eps == mu, 0.5, 0.0))
    else:
        values = expit(-(eps - mu) / temperature)
    return Distribution(grid, values, mass, hbar, spin)
