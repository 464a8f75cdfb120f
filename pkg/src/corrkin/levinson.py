"""Non-Markovian Levinson kinetics of a homogeneous, isotropic plasma.

Reduced units: ``T = m = omega_p = kappa = 1``; ``hbar`` is the reduced
quantum parameter ``hbar omega_p / T`` and the coupling enters through
``e2 = sqrt(3) Gamma**1.5`` and the density ``n = 1 / (4 pi e2)``.

Representation of the collision integral
----------------------------------------
For an isotropic Wigner function and a potential depending on ``|q|``
the six-dimensional integral reduces to the four momentum magnitudes
``P1..P4``; the remaining integral over the transfer ``Q`` of
``V(Q)**2`` is done in closed form.  Because the screening momentum
``hbar * kappa_D`` is small compared to thermal momenta the inner
coordinates are

* ``P2`` on the outer Gauss-Legendre grid,
* ``d = P3 - P1`` on a sinh-stretched rule resolving ``hbar kappa_D``,
* the transition frequency ``omega = (P1^2+P2^2-P3^2-P4^2) / (2 hbar)``
  on Gauss panels (uniform near zero, geometric outwards),

with ``P4`` fixed by ``omega``.  The memory integral
``int cos(omega (t - s)) B(s) ds`` is carried by complex accumulators
updated with Filon weights for piecewise-linear ``B``.  The part caused by
the initial value, ``B(t0) sin(omega (t - t0)) / omega``, oscillates too
fast in ``omega`` for node quadrature and is integrated with product
weights that are exact for a polynomial interpolant on every panel.

The four-magnitude rule is not symmetric under the in/out relabeling, so
the raw density production is small but not zero.  ``evolve`` removes it
with a correction ``rho * (c0 + c1 P^2)`` that leaves the kinetic-energy
rate untouched; the raw imbalance is reported per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .plasma import MomentumGrid, PlasmaParams


class HistoryError(ValueError):
    """The stored history does not cover the requested memory interval."""


class InstabilityError(RuntimeError):
    """Time stepping produced negative or exploding occupations."""

    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class SolverSettings:
    """Numerical knobs of the Levinson solver (reduced units)."""

    n_k: int = 32
    k_max: float = 8.0
    n_offset: int = 20
    offset_max: float = 5.0
    offset_core: float = 0.2
    omega_fine: float = 10.0
    omega_panel: float = 0.5
    omega_ratio: float = 1.25
    panel_order: int = 4
    degenerate: bool = False
    interp_points: int = 8001
    negativity_tol: float = 1e-10


@dataclass(frozen=True)
class ReducedPlasma:
    """Couplings of the reduced problem."""

    Gamma: float
    x: float
    hbar: float
    spin: int = 1
    x0: float = math.inf

    @property
    def e2(self) -> float:
        return math.sqrt(3.0) * self.Gamma**1.5

    @property
    def density(self) -> float:
        return 1.0 / (4.0 * math.pi * self.e2)

    @classmethod
    def from_params(cls, params: PlasmaParams) -> "ReducedPlasma":
        return cls(Gamma=params.Gamma, x=params.x, hbar=params.hbar_reduced,
                   spin=params.spin, x0=params.x0)


# ---------------------------------------------------------------------------
# elementary kernel pieces


def transfer_integral(lo, hi, a: float, b: float | None = None):
    """``int_lo^hi dQ / ((Q^2 + a^2)(Q^2 + b^2))``, zero where ``hi <= lo``.

    With ``b`` omitted (or equal to ``a``) this is the squared Debye
    kernel.  Divided by ``(4 pi e2)^2`` it is the ``Q`` integral of
    ``V_a V_b``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if b is None or b == a:
        def prim(q):
            return (q / (q * q + a * a) + np.arctan(q / a) / a) / (2.0 * a * a)
    else:
        def prim(q):
            return (np.arctan(q / a) / a - np.arctan(q / b) / b) / (b * b - a * a)
    return np.where(hi > lo, prim(np.maximum(hi, lo)) - prim(lo), 0.0)


def kernel_weight(p1, p2, p3, p4, a: float, b: float | None = None):
    """Angle-integrated kernel for four momentum magnitudes."""
    lo = np.maximum(np.abs(np.asarray(p1) - p3), np.abs(np.asarray(p2) - p4))
    hi = np.minimum(np.asarray(p1) + p3, np.asarray(p2) + p4)
    return transfer_integral(lo, hi, a, b)


def collision_bracket(r1, r2, r3, r4, degenerate: bool):
    """Gain minus loss for the occupations of the four states."""
    if degenerate:
        return r3 * r4 * (1.0 - r1 - r2) - r1 * r2 * (1.0 - r3 - r4)
    return r3 * r4 - r1 * r2


def transition_frequency(p1, p2, p3, p4, hbar: float):
    return (np.asarray(p1) ** 2 + np.asarray(p2) ** 2 - np.asarray(p3) ** 2 - np.asarray(p4) ** 2) / (2.0 * hbar)


def filon_weights(theta):
    """Weights of ``int_0^1 exp(-i theta u) {1-u, u} du``."""
    th = np.asarray(theta, dtype=float)
    c = -1j * th
    small = np.abs(th) < 0.5
    a0 = np.empty(th.shape, dtype=complex)
    a1 = np.empty(th.shape, dtype=complex)
    big = ~small
    if big.any():
        cb = c[big]
        ec = np.exp(cb)
        w1 = (ec * (cb - 1.0) + 1.0) / (cb * cb)
        a1[big] = w1
        a0[big] = (ec - 1.0) / cb - w1
    if small.any():
        cs = c[small]
        s0 = np.zeros_like(cs)
        s1 = np.zeros_like(cs)
        term = np.ones_like(cs)
        for n in range(18):
            s1 += term / (n + 2)
            s0 += term / ((n + 1) * (n + 2))
            term = term * cs / (n + 1)
        a0[small] = s0
        a1[small] = s1
    return a0, a1


def _sin_kernel(om, s):
    return s * np.sinc(om * s / np.pi)


def _one_minus_cos_kernel(om, s):
    return 0.5 * om * s * s * np.sinc(om * s / (2.0 * np.pi)) ** 2


def _plain_sin_kernel(om, s):
    return np.sin(om * s)


def _cos_kernel(om, s):
    return np.cos(om * s)


# ---------------------------------------------------------------------------
# frequency panels and product weights


def omega_panel_edges(fine: float, width: float, ratio: float, omega_max: float) -> np.ndarray:
    n_fine = max(1, int(round(fine / width)))
    edges = list(np.linspace(0.0, n_fine * width, n_fine + 1))
    while edges[-1] < omega_max:
        edges.append(edges[-1] * ratio)
    e = np.array(edges)
    return np.concatenate([-e[::-1], e[1:]])


@dataclass(frozen=True)
class FrequencyPanels:
    edges: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    @classmethod
    def build(cls, edges: np.ndarray, order: int) -> "FrequencyPanels":
        u, w = leggauss(order)
        h = np.diff(edges)
        nodes = edges[:-1, None] + 0.5 * (u[None, :] + 1.0) * h[:, None]
        weights = 0.5 * w[None, :] * h[:, None]
        return cls(edges=edges, nodes=nodes.ravel(), weights=weights.ravel(), order=order)

    def product_weights(self, kernel, s: float) -> np.ndarray:
        """Weights ``int L_j(omega) kernel(omega, s) d omega`` per node.

        ``L_j`` are the Lagrange polynomials of each panel's Gauss nodes.
        Every panel is split into pieces short against the kernel's period
        and each piece gets a fixed Gauss rule.
        """
        k = self.order
        u_ref, _ = leggauss(k)
        diff_ref = u_ref[:, None] - u_ref[None, :]
        np.fill_diagonal(diff_ref, 1.0)
        bary = 1.0 / np.prod(diff_ref, axis=1)
        ug, wg = _SUB_RULE
        h = np.diff(self.edges)
        pieces = 1 + np.floor(h * abs(s) / (2.0 * math.pi)).astype(int)
        panel = np.repeat(np.arange(h.size), pieces)
        first = np.cumsum(pieces) - pieces
        piece_idx = np.arange(panel.size) - first[panel]
        width = 2.0 / pieces[panel]
        # fine points in reference coordinates of their panel
        u = -1.0 + width[:, None] * (piece_idx[:, None] + 0.5 * (ug[None, :] + 1.0))
        w = 0.5 * width[:, None] * wg[None, :]
        om = self.edges[panel][:, None] + 0.5 * (u + 1.0) * h[panel][:, None]
        kw = (kernel(om, s) * w * 0.5 * h[panel][:, None]).ravel()
        uu = u.ravel()
        d = uu[:, None] - u_ref[None, :]
        lag = np.prod(d, axis=1)[:, None] / d * bary[None, :]
        contrib = kw[:, None] * lag
        rows = np.repeat(panel, ug.size)
        out = np.zeros((h.size, k))
        np.add.at(out, rows, contrib)
        return out.ravel()


_SUB_RULE = leggauss(12)


# ---------------------------------------------------------------------------
# kernel cache


@dataclass
class KernelCache:
    """Precomputed nodes and weights of the reduced collision integral."""

    plasma: ReducedPlasma
    settings: SolverSettings
    grid: MomentumGrid
    offsets: np.ndarray
    offset_weights: np.ndarray
    panels: FrequencyPanels
    i1: np.ndarray
    i3: np.ndarray
    io: np.ndarray
    p4: np.ndarray
    weight: np.ndarray
    weight0: np.ndarray | None
    p3_table: np.ndarray
    c_rhs: float
    c_energy: float
    c_energy0: float
    c_density: float
    _interp_axis: np.ndarray = field(repr=False, default=None)
    _interp_matrix: np.ndarray = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return self.weight.size

    # occupations off the grid ------------------------------------------------
    def table(self, rho: np.ndarray) -> np.ndarray:
        """Occupation sampled on the fine interpolation axis."""
        return self._interp_matrix @ rho

    def at(self, table: np.ndarray, p) -> np.ndarray:
        return np.interp(p, self._interp_axis, table, left=0.0, right=0.0)

    def outer_values(self, rho: np.ndarray, table: np.ndarray | None = None):
        """Occupations ``(r3, r4)`` of the outgoing states at every inner node."""
        tab = self.table(rho) if table is None else table
        r3 = self.at(tab, self.p3_table)[self.i1, self.i3]
        j, f = self._p4_slot
        r4 = tab[j] + f * (tab[j + 1] - tab[j])
        return r3, r4

    def bracket(self, rho: np.ndarray, table: np.ndarray | None = None) -> np.ndarray:
        """Gain minus loss at every inner node."""
        r3, r4 = self.outer_values(rho, table)
        r1 = rho[self.i1]
        r2 = rho[self.i2]
        return collision_bracket(r1, r2, r3, r4, self.settings.degenerate)

    @property
    def i2(self) -> np.ndarray:
        return self._i2

    def per_outer(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.i1, weights=values, minlength=self.grid.count)

    def per_outer_frequency(self, values: np.ndarray) -> np.ndarray:
        n_om = self.panels.nodes.size
        flat = np.bincount(self.i1 * n_om + self.io, weights=values, minlength=self.grid.count * n_om)
        return flat.reshape(self.grid.count, n_om)

    def density(self, rho: np.ndarray) -> float:
        p = self.grid.nodes
        return self.c_density * float(np.sum(self.grid.weights * p * p * rho))

    def kinetic_energy(self, rho: np.ndarray) -> float:
        p = self.grid.nodes
        return self.c_density * float(np.sum(self.grid.weights * p**4 * rho)) / 2.0


def build_kernel(plasma: ReducedPlasma, settings: SolverSettings = SolverSettings()) -> KernelCache:
    s = settings
    grid = MomentumGrid.gauss_legendre(s.n_k, s.k_max)
    P, wP = grid.nodes, grid.weights
    hbar = plasma.hbar
    a = hbar * plasma.x
    b = None if math.isinf(plasma.x0) else hbar * plasma.x0

    core = s.offset_core * a
    umax = math.asinh(s.offset_max / core)
    u, w = leggauss(s.n_offset)
    u = 0.5 * (u + 1.0) * umax
    w = 0.5 * w * umax
    r = core * np.sinh(u)
    wr = w * core * np.cosh(u)
    offsets = np.concatenate([-r[::-1], r])
    offset_w = np.concatenate([wr[::-1], wr])

    edges = omega_panel_edges(s.omega_fine, s.omega_panel, s.omega_ratio, s.k_max**2 / hbar)
    panels = FrequencyPanels.build(edges, s.panel_order)
    om = panels.nodes

    p3_table = P[:, None] + offsets[None, :]

    i1_l, i2_l, i3_l, io_l, p4_l, w_l, w0_l = [], [], [], [], [], [], []
    for a1 in range(P.size):
        p1 = P[a1]
        p2 = P[:, None, None]
        p3 = p3_table[a1][None, :, None]
        omg = om[None, None, :]
        p4sq = p1 * p1 + p2 * p2 - p3 * p3 - 2.0 * hbar * omg
        ok = (p3 > 0) & (p3 < s.k_max) & (p4sq > 0) & (p4sq < s.k_max**2)
        ok = np.broadcast_to(ok, p4sq.shape)
        idx2, idx3, idxo = np.nonzero(ok)
        p4 = np.sqrt(p4sq[idx2, idx3, idxo])
        pp2 = P[idx2]
        pp3 = p3_table[a1, idx3]
        kern = kernel_weight(p1, pp2, pp3, p4, a)
        base = wP[idx2] * pp2 * pp3 * hbar * offset_w[idx3]
        keep = kern > 0
        i1_l.append(np.full(int(keep.sum()), a1, dtype=np.int32))
        i2_l.append(idx2[keep].astype(np.int32))
        i3_l.append(idx3[keep].astype(np.int32))
        io_l.append(idxo[keep].astype(np.int32))
        p4_l.append(p4[keep])
        w_l.append((base * kern)[keep])
        if b is not None:
            w0_l.append((base * kernel_weight(p1, pp2, pp3, p4, a, b))[keep])

    e4 = plasma.e2**2
    sp = plasma.spin
    cache = KernelCache(
        plasma=plasma,
        settings=s,
        grid=grid,
        offsets=offsets,
        offset_weights=offset_w,
        panels=panels,
        i1=np.concatenate(i1_l),
        i3=np.concatenate(i3_l),
        io=np.concatenate(io_l),
        p4=np.concatenate(p4_l),
        weight=np.concatenate(w_l),
        weight0=np.concatenate(w0_l) if b is not None else None,
        p3_table=p3_table,
        c_rhs=2.0 * sp * e4 / (math.pi**2 * hbar**4),
        c_energy=sp * sp * e4 / (4.0 * math.pi**4 * hbar**6),
        c_energy0=sp * sp * e4 / (4.0 * math.pi**4 * hbar**5),
        c_density=sp / (2.0 * math.pi**2 * hbar**3),
    )
    cache._i2 = np.concatenate(i2_l)
    axis = np.linspace(0.0, s.k_max, s.interp_points)
    cache._interp_axis = axis
    cache._interp_matrix = _lagrange_matrix(P, axis)
    step = axis[1] - axis[0]
    slot = np.clip(np.floor(cache.p4 / step).astype(np.int64), 0, axis.size - 2)
    cache._p4_slot = (slot, cache.p4 / step - slot)
    return cache


def _lagrange_matrix(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Barycentric interpolation matrix from ``nodes`` to points ``x``."""
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    bw = 1.0 / np.prod(diff, axis=1)
    d = x[:, None] - nodes[None, :]
    exact = d == 0.0
    d[exact] = 1.0
    t = bw[None, :] / d
    mat = t / t.sum(axis=1, keepdims=True)
    rows, cols = np.nonzero(exact)
    mat[rows] = 0.0
    mat[rows, cols] = 1.0
    return mat


def maxwell_reduced(cache: KernelCache) -> np.ndarray:
    """Maxwell occupation of the reduced problem on the cache grid."""
    pl = cache.plasma
    amp = pl.density * (2.0 * math.pi) ** 1.5 * pl.hbar**3 / pl.spin
    return amp * np.exp(-cache.grid.nodes**2 / 2.0)


# ---------------------------------------------------------------------------
# right-hand sides


@dataclass
class DistributionHistory:
    """Snapshots of the occupation at increasing times on the cache grid."""

    times_list: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array(self.times_list, dtype=float)

    @property
    def t0(self) -> float:
        return self.times_list[0]

    def append(self, t: float, rho: np.ndarray) -> None:
        if self.times_list and t <= self.times_list[-1]:
            raise HistoryError("history times must increase")
        self.times_list.append(float(t))
        self.snapshots.append(np.array(rho, dtype=float))


def _initial_frequency_sums(cache: KernelCache, rho0: np.ndarray, weight: np.ndarray) -> np.ndarray:
    return cache.per_outer_frequency(weight * cache.bracket(rho0))


def rhs_levinson(history: DistributionHistory, t: float, cache: KernelCache,
                 t_mem: float | None = None) -> np.ndarray:
    """Levinson collision term at time ``t`` from stored snapshots.

    This recomputes the memory integral from the whole history and is
    meant as the reference path; :func:`evolve` carries the same integral
    incrementally.  With ``t_mem`` only snapshots within ``t_mem`` of
    ``t`` enter and the node quadrature is used throughout.
    """
    times = history.times
    if times.size == 0:
        raise HistoryError("empty history")
    hit = np.nonzero(np.abs(times - t) <= 1e-9 * max(1.0, abs(t)))[0]
    if hit.size == 0:
        raise HistoryError(f"history has no snapshot at t = {t}")
    j_end = int(hit[0])
    j_start = 0
    if t_mem is not None:
        j_start = int(np.nonzero(times >= t - t_mem - 1e-12)[0][0])
    om = cache.panels.nodes
    acc = np.zeros(cache.size, dtype=complex)
    brackets = [cache.bracket(history.snapshots[j]) for j in range(j_start, j_end + 1)]
    for j in range(j_start, j_end):
        h = times[j + 1] - times[j]
        a0, a1 = filon_weights(om * h)
        phase = h * np.exp(-1j * om * (times[j] - t))
        acc += (phase * a0)[cache.io] * brackets[j - j_start] + (phase * a1)[cache.io] * brackets[j - j_start + 1]
    wnode = cache.weight * cache.panels.weights[cache.io]
    total = cache.per_outer(wnode * acc.real)
    if j_start == 0 and t > times[0]:
        s = t - times[0]
        corr = cache.panels.product_weights(_sin_kernel, s) - cache.panels.weights * _sin_kernel(om, s)
        total = total + _initial_frequency_sums(cache, history.snapshots[0], cache.weight) @ corr
    return cache.c_rhs * total / cache.grid.nodes


def rhs_initial_corr(rho0: np.ndarray, t: float, t0: float, cache: KernelCache) -> np.ndarray:
    """Collision term of the initial correlations (frozen ``rho0``, screening ``x0``)."""
    if cache.weight0 is None or t <= t0:
        return np.zeros(cache.grid.count)
    g = _initial_frequency_sums(cache, rho0, cache.weight0)
    sw = cache.panels.product_weights(_sin_kernel, t - t0)
    return -cache.c_rhs * (g @ sw) / cache.grid.nodes


# ---------------------------------------------------------------------------
# time evolution


@dataclass
class LevinsonResult:
    history: DistributionHistory
    t: np.ndarray
    tau: np.ndarray
    kinetic: np.ndarray
    corr_memory: np.ndarray
    corr_initial: np.ndarray
    density: np.ndarray
    raw_density_rate: np.ndarray
    raw_energy_defect: np.ndarray

    @property
    def e_total(self) -> float:
        return -float(self.corr_initial[0])

    @property
    def e_kin(self) -> np.ndarray:
        return self.e_total + self.kinetic - self.kinetic[0]

    @property
    def e_coll(self) -> np.ndarray:
        return self.corr_memory

    @property
    def e_init(self) -> np.ndarray:
        return self.corr_initial - self.corr_initial[0]

    @property
    def density_drift(self) -> np.ndarray:
        return np.abs(self.density / self.density[0] - 1.0)

    @property
    def total_energy(self) -> np.ndarray:
        return self.kinetic + self.corr_memory + self.corr_initial

    @property
    def energy_drift(self) -> np.ndarray:
        e = self.total_energy
        return np.abs(e - e[0]) / abs(e[0])

    @property
    def energy_drift_correlation_scale(self) -> np.ndarray:
        e = self.total_energy
        scale = max(np.max(np.abs(self.corr_memory)), np.max(np.abs(self.corr_initial)), 1e-300)
        return np.abs(e - e[0]) / scale


class _Stepper:
    """Heun integration with incremental memory accumulators."""

    def __init__(self, cache: KernelCache, rho_init: np.ndarray,
                 rho0: np.ndarray | None, conserve_density: bool, conserve_energy: bool):
        self.cache = cache
        self.conserve_density = conserve_density
        self.conserve_energy = conserve_energy
        om = cache.panels.nodes
        self.om = om
        self.wnode = cache.weight * cache.panels.weights[cache.io]
        self.wnode_om = self.wnode * om[cache.io]
        self.acc = np.zeros(cache.size, dtype=complex)
        self.rho_start = np.array(rho_init, dtype=float)
        self.b_start = cache.bracket(self.rho_start)
        self.g_start = cache.per_outer_frequency(cache.weight * self.b_start)
        self.g_init = None
        self.g_init_energy = None
        if cache.weight0 is not None:
            r0 = self.rho_start if rho0 is None else np.asarray(rho0, dtype=float)
            self.g_init = _initial_frequency_sums(cache, r0, cache.weight0)
            self.g_init_energy = cache.per_outer_frequency(cache.weight0 * _equilibrium_ratio(cache, r0))
        self._weights_cache: dict = {}
        p = cache.grid.nodes
        self.p = p
        w = cache.grid.weights
        self.m_n = cache.c_density * w * p * p
        self.m_e = cache.c_density * w * p**4 / 2.0

    def weights_at(self, s: float):
        key = round(s, 12)
        if key not in self._weights_cache:
            pan = self.cache.panels
            om = self.om
            w = pan.weights
            s1 = pan.product_weights(_sin_kernel, s)
            s2 = pan.product_weights(_one_minus_cos_kernel, s)
            s3 = pan.product_weights(_cos_kernel, s)
            s4 = pan.product_weights(_plain_sin_kernel, s)
            self._weights_cache[key] = (
                s1, s1 - w * _sin_kernel(om, s), s2 - w * _one_minus_cos_kernel(om, s), s3,
                s4, s4 - w * _plain_sin_kernel(om, s))
            if len(self._weights_cache) > 4:
                self._weights_cache.pop(next(iter(self._weights_cache)))
        return self._weights_cache[key]

    def rate(self, acc: np.ndarray, s: float):
        """Raw collision term and the rate balances it should satisfy.

        Returns ``(rhs, dn, de)`` where ``dn`` is the raw density rate and
        ``de`` the raw kinetic-energy rate minus its target, the negative
        rate of the correlation energy.
        """
        c = self.cache
        s1, c1, _, _, s4, c4 = self.weights_at(s)
        phase = np.exp(1j * self.om * s)[c.io]
        mem = (phase * acc).real
        total = c.per_outer(self.wnode * mem) + self.g_start @ c1
        w1 = c.grid.weights * self.p
        corr_rate = -c.c_energy * float(np.dot(w1, c.per_outer(self.wnode_om * mem) + self.g_start @ c4))
        if self.g_init is not None:
            total = total - self.g_init @ s1
            corr_rate += c.c_energy * float(np.dot(w1, self.g_init @ s4))
        rhs = c.c_rhs * total / self.p
        dn = float(np.dot(self.m_n, rhs))
        de = float(np.dot(self.m_e, rhs)) + corr_rate
        return rhs, dn, de

    def project(self, rhs: np.ndarray, rho: np.ndarray, dn: float, de: float) -> np.ndarray:
        """Add ``rho (c0 + c1 P^2)`` so that the selected balances hold."""
        fix_e = de if self.conserve_energy else 0.0
        if not self.conserve_density:
            return rhs
        if dn == 0.0 and fix_e == 0.0:
            return rhs
        p2 = self.p * self.p
        m = np.array([[np.dot(self.m_n, rho), np.dot(self.m_n, rho * p2)],
                      [np.dot(self.m_e, rho), np.dot(self.m_e, rho * p2)]])
        c0, c1 = np.linalg.solve(m, [-dn, -fix_e])
        return rhs + rho * (c0 + c1 * p2)

    def clip(self, rho: np.ndarray, neg: np.ndarray) -> np.ndarray:
        """Zero tiny negative values without changing density or kinetic energy."""
        clipped = np.where(neg, 0.0, rho)
        if not self.conserve_density:
            return clipped
        p2 = self.p * self.p
        dn = np.dot(self.m_n, clipped - rho)
        de = np.dot(self.m_e, clipped - rho) if self.conserve_energy else 0.0
        m = np.array([[np.dot(self.m_n, clipped), np.dot(self.m_n, clipped * p2)],
                      [np.dot(self.m_e, clipped), np.dot(self.m_e, clipped * p2)]])
        c0, c1 = np.linalg.solve(m, [-dn, -de])
        return clipped * (1.0 + c0 + c1 * p2)

    def energies(self, acc: np.ndarray, s: float):
        c = self.cache
        _, _, c2, s3, _, _ = self.weights_at(s)
        phase = np.exp(1j * self.om * s)[c.io]
        im = (phase * acc).imag
        outer = c.per_outer(self.wnode * im) + self.g_start @ c2
        w1 = c.grid.weights * self.p
        e_mem = -c.c_energy * float(np.dot(w1, outer))
        e_init = 0.0
        if self.g_init_energy is not None:
            e_init = -c.c_energy0 * float(np.dot(w1, self.g_init_energy @ s3))
        return e_mem, e_init

    def advance(self, rho: np.ndarray, b_now: np.ndarray, s_now: float, h: float, rhs_now: np.ndarray):
        c = self.cache
        a0, a1 = filon_weights(self.om * h)
        rot = h * np.exp(-1j * self.om * s_now)
        inc0 = (rot * a0)[c.io] * b_now
        w1 = (rot * a1)[c.io]
        rho_pred = rho + h * rhs_now
        b_pred = c.bracket(rho_pred)
        acc_pred = self.acc + inc0 + w1 * b_pred
        rhs_pred, dn, de = self.rate(acc_pred, s_now + h)
        rhs_pred = self.project(rhs_pred, rho_pred, dn, de)
        rho_new = rho + 0.5 * h * (rhs_now + rhs_pred)
        b_new = c.bracket(rho_new)
        self.acc = self.acc + inc0 + w1 * b_new
        return rho_new, b_new


def _equilibrium_ratio(cache: KernelCache, rho0: np.ndarray) -> np.ndarray:
    """``B0 / Delta E`` at every node for an equilibrium ``rho0``.

    Uses the factorized equilibrium form so that ``Delta E -> 0`` is
    regular.
    """
    r3, r4 = cache.outer_values(rho0)
    r1 = rho0[cache.i1]
    r2 = rho0[cache.i2]
    de = cache.plasma.hbar * cache.panels.nodes[cache.io]
    ratio = np.where(np.abs(de) > 1e-12, np.expm1(de) / np.where(de == 0, 1.0, de), 1.0)
    if cache.settings.degenerate:
        return r1 * r2 * (1.0 - r3) * (1.0 - r4) * ratio
    return r1 * r2 * ratio


def time_levels(t0: float, t_end: float, dt: float, dt_start: float, growth: float = 1.25) -> np.ndarray:
    """Step times: geometric growth from ``dt_start`` up to ``dt``, then uniform."""
    if dt <= 0 or dt_start <= 0 or t_end <= t0:
        raise ValueError("need positive steps and t_end > t0")
    levels = [t0]
    h = min(dt_start, dt)
    while levels[-1] < t_end - 1e-12:
        levels.append(min(levels[-1] + h, t_end))
        h = min(h * growth, dt)
    return np.array(levels)


def evolve(cache: KernelCache, rho_init: np.ndarray, t_end: float, dt: float,
           rho0: np.ndarray | None = None, conserve_density: bool = True,
           conserve_energy: bool = True, t0: float = 0.0, dt_start: float | None = None,
           progress=None) -> LevinsonResult:
    """Integrate the Levinson equation from ``t0`` to ``t_end`` (reduced time).

    Steps start at ``dt_start`` (default ``hbar / 4``, the rate switches on
    within the quantum time ``hbar / T``) and grow geometrically to ``dt``.

    ``rho0`` is the frozen equilibrium entering the initial-correlation
    term; it defaults to ``rho_init`` and is only used when the cache was
    built with a finite ``x0``.

    The raw quadrature of the collision term produces particles and
    kinetic energy at a small rate.  With ``conserve_density`` that rate
    is removed; ``conserve_energy`` in addition ties the kinetic-energy
    rate to the correlation-energy rate of the memory integral.  The
    removed rates are stored per step as ``raw_density_rate`` and
    ``raw_energy_defect`` (per particle and unit reduced time).
    """
    if dt_start is None:
        dt_start = cache.plasma.hbar / 4.0
    levels = time_levels(t0, t_end, dt, dt_start)
    st = _Stepper(cache, rho_init, rho0, conserve_density, conserve_energy)
    hist = DistributionHistory()
    rho = np.array(rho_init, dtype=float)
    b = st.b_start
    n0 = cache.density(rho)
    scale = float(np.max(np.abs(rho)))
    hist.append(t0, rho)
    kin, e_mem, e_ini, dens, raw_n, raw_e = [], [], [], [], [], []

    def record(r, s, dn, de):
        em, ei = st.energies(st.acc, s)
        kin.append(cache.kinetic_energy(r) / n0)
        e_mem.append(em / n0)
        e_ini.append(ei / n0)
        dens.append(cache.density(r))
        raw_n.append(dn / n0)
        raw_e.append(de / n0)

    rhs, dn, de = st.rate(st.acc, 0.0)
    rhs = st.project(rhs, rho, dn, de)
    record(rho, 0.0, dn, de)
    n_steps = levels.size - 1
    for j in range(n_steps):
        s = levels[j] - t0
        h = levels[j + 1] - levels[j]
        t_new = levels[j + 1]
        rho, b = st.advance(rho, b, s, h, rhs)
        neg = rho < 0
        if np.any(neg):
            worst = float(-rho[neg].min())
            if worst > cache.settings.negativity_tol:
                raise InstabilityError(
                    f"negative occupation {-worst:.3e} at t = {t_new:.4f}",
                    {"t": t_new, "rho": rho.copy(), "history": hist})
            rho = st.clip(rho, neg)
        if not np.all(np.isfinite(rho)) or float(np.max(np.abs(rho))) > 1e6 * scale:
            raise InstabilityError(f"occupation blow-up at t = {t_new:.4f}",
                                   {"t": t_new, "rho": rho.copy(), "history": hist})
        hist.append(t_new, rho)
        rhs, dn, de = st.rate(st.acc, t_new - t0)
        rhs = st.project(rhs, rho, dn, de)
        record(rho, t_new - t0, dn, de)
        if progress is not None:
            progress(j + 1, n_steps)
    return LevinsonResult(
        history=hist,
        t=levels,
        tau=levels / math.sqrt(2.0),
        kinetic=np.array(kin),
        corr_memory=np.array(e_mem),
        corr_initial=np.array(e_ini),
        density=np.array(dens),
        raw_density_rate=np.array(raw_n),
        raw_energy_defect=np.array(raw_e),
    )


def kinetic_energy_of(cache: KernelCache, rho: np.ndarray) -> float:
    """Kinetic energy density of ``rho`` (reduced units)."""
    return cache.kinetic_energy(rho)


def density_of(cache: KernelCache, rho: np.ndarray) -> float:
    return cache.density(rho)
