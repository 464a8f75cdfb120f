"""Self-energy slices, the extended quasiparticle spectral function and the rho[f] functional.

Units ``hbar = 1``.  For a fixed momentum ``k`` the correlation
self-energies ``sigma_lt`` and ``sigma_gt`` are rates (golden-rule form
with the squared matrix element supplied by the interaction).  Their sum
``gamma`` is represented on Gauss panels in ``omega`` by one polynomial
per panel; the dispersive part, its derivative and all spectral moments
are evaluated on that representation with principal-value and
Hadamard finite-part integrals done by subtraction, so the sum rules are
identities up to quadrature round-off.

The pole weight is the linearized renormalization ``z = 1 + sigma_c'(eps)``;
with it the zeroth and first spectral moments are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.optimize import brentq

_TWO_PI = 2.0 * math.pi


class PoleSearchError(RuntimeError):
    """The dispersion relation has no sign change in the search bracket."""


class ConvergenceWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------------------
# self-energy quadrature


@dataclass(frozen=True)
class SelfEnergyQuadrature:
    """Node counts of the partner-momentum integral.

    The partner radius ``|p|`` runs over ``[0, k + p_span sqrt(2 m T_eff)]``
    split at the kinks of the energy-shell boundary, ``n_p`` nodes per
    piece.  The partner polar cosine is restricted to the kinematically
    open interval and mapped so that the square-root edge of the shell is
    smooth (``n_cos`` nodes).  The outgoing relative direction around the
    total momentum uses ``n_alpha`` polar and ``n_beta`` azimuthal nodes.
    """

    n_p: int = 24
    n_cos: int = 16
    n_alpha: int = 12
    n_beta: int = 8
    p_span: float = 9.0


@dataclass(frozen=True)
class Medium:
    """Partner gas: occupation callable ``f(|k|)``, mass, temperature, spin."""

    occupation: object
    mass: float = 1.0
    temperature: float = 1.0
    spin: int = 1
    energy_scale: float | None = None

    @property
    def pauli(self) -> bool:
        return bool(getattr(self.occupation, "pauli", True))

    @property
    def thermal_energy(self) -> float:
        return self.temperature if self.energy_scale is None else max(self.energy_scale, self.temperature)


def _p_max(k: float, medium: Medium, quad: SelfEnergyQuadrature) -> float:
    return k + quad.p_span * math.sqrt(2.0 * medium.mass * medium.thermal_energy)


def _partner_nodes(k: float, medium: Medium, quad: SelfEnergyQuadrature):
    """Plain tensor rule over the partner momentum (mean-field integrals)."""
    x, wx = npleg.leggauss(2 * quad.n_p)
    hi = _p_max(k, medium, quad)
    pr, pw = 0.5 * hi * (x + 1.0), 0.5 * hi * wx
    c, cw = npleg.leggauss(quad.n_cos)
    pr_g, c_g = np.meshgrid(pr, c, indexing="ij")
    w = (np.outer(pw * pr * pr, cw) * _TWO_PI).ravel()
    sin_t = np.sqrt(1.0 - c_g * c_g).ravel()
    p_vec = np.stack([pr_g.ravel() * sin_t, np.zeros(sin_t.size), pr_g.ravel() * c_g.ravel()], axis=-1)
    return p_vec, w


def _shell_nodes(k: float, w: float, medium: Medium, quad: SelfEnergyQuadrature):
    """Partner momenta with open energy shell at external energy ``w``.

    Returns partner vectors, weights (including ``2 pi p^2``) and the
    relative momentum of the outgoing pair.
    """
    m = medium.mass
    hi = _p_max(k, medium, quad)
    cuts = [0.0, hi]
    disc = 2.0 * k * k - 4.0 * m * w
    if disc > 0:
        root = math.sqrt(disc)
        for b in (k + root, k - root, -k + root, -k - root):
            if 0.0 < b < hi:
                cuts.append(b)
    cuts = np.unique(np.array(cuts))
    x, wx = npleg.leggauss(quad.n_p)
    a, b = cuts[:-1, None], cuts[1:, None]
    pr = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
    pw = (0.5 * (b - a) * wx).ravel()
    # e_rel(c) = base - slope_c * c, linear in the polar cosine
    base = w + pr * pr / (4.0 * m) - k * k / (4.0 * m)
    slope_c = k * pr / (2.0 * m)
    u, wu = npleg.leggauss(quad.n_cos)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    vecs, weights, prels = [], [], []
    small = slope_c <= 1e-12 * max(1.0, abs(base).max() if base.size else 1.0)
    for i in range(pr.size):
        if small[i]:
            if base[i] <= 0:
                continue
            c = 2.0 * u - 1.0
            wc = 2.0 * wu
        else:
            c_edge = base[i] / slope_c[i]
            if c_edge <= -1.0:
                continue
            top = min(1.0, c_edge)
            # c = c_edge - v^2 removes the square-root edge when it is inside [-1, 1]
            v_lo = math.sqrt(max(c_edge - top, 0.0))
            v_hi = math.sqrt(c_edge + 1.0)
            v = v_lo + (v_hi - v_lo) * u
            c = c_edge - v * v
            wc = 2.0 * v * (v_hi - v_lo) * wu
        e_rel = np.maximum(base[i] - slope_c[i] * c, 0.0)
        st = np.sqrt(np.maximum(1.0 - c * c, 0.0))
        vecs.append(np.stack([pr[i] * st, np.zeros(c.size), pr[i] * c], axis=-1))
        weights.append(_TWO_PI * pw[i] * pr[i] ** 2 * wc)
        prels.append(np.sqrt(m * e_rel))
    if not vecs:
        return np.zeros((0, 3)), np.zeros(0), np.zeros(0)
    return np.concatenate(vecs), np.concatenate(weights), np.concatenate(prels)


def _direction_nodes(quad: SelfEnergyQuadrature):
    ca, wa = npleg.leggauss(quad.n_alpha)
    beta = (np.arange(quad.n_beta) + 0.5) * _TWO_PI / quad.n_beta
    ca_g, b_g = np.meshgrid(ca, beta, indexing="ij")
    sa = np.sqrt(1.0 - ca_g * ca_g)
    dirs = np.stack([sa * np.cos(b_g), sa * np.sin(b_g), ca_g], axis=-1).reshape(-1, 3)
    w = np.repeat(wa, quad.n_beta) * (_TWO_PI / quad.n_beta)
    return dirs, w


def _frame(axis):
    """Orthonormal frames with third vector along ``axis`` (rows)."""
    n = np.linalg.norm(axis, axis=-1, keepdims=True)
    e3 = np.where(n > 0, axis / np.where(n > 0, n, 1.0), np.array([0.0, 0.0, 1.0]))
    helper = np.where(np.abs(e3[..., :1]) < 0.9, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    e1 = np.cross(helper, e3)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(e3, e1)
    return e1, e2, e3


def born_selfenergy(k: float, omega, medium: Medium, interaction,
                    quad: SelfEnergyQuadrature = SelfEnergyQuadrature()):
    """Correlation self-energies ``(sigma_lt, sigma_gt)`` at momentum ``|k|`` and energies ``omega``.

    ``sigma_lt(k, w) = s sum_{p,k3,k4} |M|^2 (2pi)^4 delta^4 f3 f4 (1 - f2)``
    and ``sigma_gt`` with occupied and empty states exchanged; ``s`` is the
    partner spin degeneracy and ``|M|^2 = interaction.matrix_element_sq``.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    m = medium.mass
    f = medium.occupation
    dirs, d_w = _direction_nodes(quad)
    kv = np.array([0.0, 0.0, float(k)])
    pref = medium.spin * _TWO_PI / _TWO_PI**6
    lt = np.zeros(omega.size)
    gt = np.zeros(omega.size)
    for i, w in enumerate(omega):
        p_vec, p_w, prel = _shell_nodes(float(k), float(w), medium, quad)
        if p_w.size == 0:
            continue
        ktot = kv + p_vec
        e1, e2, e3 = _frame(ktot)
        unit = (dirs[None, :, 0:1] * e1[:, None, :] + dirs[None, :, 1:2] * e2[:, None, :]
                + dirs[None, :, 2:3] * e3[:, None, :])
        half = 0.5 * ktot[:, None, :]
        k3 = half + prel[:, None, None] * unit
        k4 = half - prel[:, None, None] * unit
        msq = interaction.matrix_element_sq(kv, p_vec[:, None, :], k3, k4)
        f2 = f(np.linalg.norm(p_vec, axis=-1))[:, None]
        f3 = f(np.linalg.norm(k3, axis=-1))
        f4 = f(np.linalg.norm(k4, axis=-1))
        meas = (p_w * 0.5 * m * prel)[:, None] * d_w[None, :] * msq
        if medium.pauli:
            lt[i] = np.sum(meas * f3 * f4 * (1.0 - f2))
            gt[i] = np.sum(meas * (1.0 - f3) * (1.0 - f4) * f2)
        else:
            lt[i] = np.sum(meas * f3 * f4)
            gt[i] = np.sum(meas * f2)
    return pref * lt, pref * gt


def mean_field(k: float, medium: Medium, interaction, quad: SelfEnergyQuadrature = SelfEnergyQuadrature()) -> float:
    """Energy-independent first-order shift ``s sum_p A_forward(k, p) f(p)``."""
    p_vec, p_w = _partner_nodes(k, medium, quad)
    amp = interaction.forward_amplitude(np.array([0.0, 0.0, float(k)]), p_vec)
    f2 = medium.occupation(np.linalg.norm(p_vec, axis=-1))
    return medium.spin * float(np.sum(p_w * amp * f2)) / _TWO_PI**3


# ---------------------------------------------------------------------------
# piecewise-polynomial functions of omega


def _log_abs(d: float) -> float:
    # endpoint terms at a shared panel edge cancel between neighbours
    return math.log(abs(d)) if d != 0 else 0.0


def _inverse(d: float) -> float:
    return 1.0 / d if d != 0 else 0.0


@dataclass
class PanelFunction:
    """Values on Gauss panels, one interpolating polynomial per panel."""

    edges: np.ndarray
    order: int
    values: np.ndarray
    _coef: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x, _ = npleg.leggauss(self.order)
        vand = npleg.legvander(x, self.order - 1)
        vals = np.asarray(self.values, dtype=float).reshape(-1, self.order)
        self._coef = np.linalg.solve(vand, vals.T).T

    @staticmethod
    def nodes_and_weights(edges: np.ndarray, order: int):
        x, w = npleg.leggauss(order)
        lo, hi = edges[:-1, None], edges[1:, None]
        return (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel(), (0.5 * (hi - lo) * w).ravel()

    def _local(self, j, w):
        lo, hi = self.edges[j], self.edges[j + 1]
        return (2.0 * np.asarray(w, dtype=float) - lo - hi) / (hi - lo), 2.0 / (hi - lo)

    def panel_value(self, j, w):
        u, _ = self._local(j, w)
        return npleg.legval(u, self._coef[j])

    def panel_derivative(self, j, w):
        u, scale = self._local(j, w)
        return npleg.legval(u, npleg.legder(self._coef[j])) * scale

    def locate(self, w: float) -> int:
        j = int(np.searchsorted(self.edges, w, side="right") - 1)
        if j < 0 or j >= self.edges.size - 1:
            return -1
        return j

    def __call__(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        out = np.zeros(w.shape)
        idx = np.searchsorted(self.edges, w, side="right") - 1
        inside = (idx >= 0) & (idx < self.edges.size - 1)
        for j in np.unique(idx[inside]):
            sel = idx == j
            out[sel] = self.panel_value(j, w[sel])
        return out

    def derivative(self, w: float) -> float:
        j = self.locate(w)
        return 0.0 if j < 0 else float(self.panel_derivative(j, w))

    def _near(self, j: int, x: float) -> bool:
        lo, hi = self.edges[j], self.edges[j + 1]
        return lo - (hi - lo) <= x <= hi + (hi - lo)

    def integral(self) -> float:
        nodes, weights = self.nodes_and_weights(self.edges, self.order)
        return float(np.dot(weights, self.values))

    def principal_value(self, x: float) -> float:
        """``PV int g(w) / (x - w) dw`` over the panels."""
        x_nodes, x_w = npleg.leggauss(self.order)
        total = 0.0
        for j in range(self.edges.size - 1):
            lo, hi = self.edges[j], self.edges[j + 1]
            w = 0.5 * (hi - lo) * x_nodes + 0.5 * (hi + lo)
            ww = 0.5 * (hi - lo) * x_w
            g = self.values[j * self.order:(j + 1) * self.order]
            if self._near(j, x):
                gx = float(self.panel_value(j, x))
                d = x - w
                d = np.where(d == 0, 1.0, d)
                total += float(np.dot(ww, (g - gx) / d)) + gx * (_log_abs(x - lo) - _log_abs(x - hi))
            else:
                total += float(np.dot(ww, g / (x - w)))
        return total

    def finite_part(self, x: float) -> float:
        """Hadamard ``FP int g(w) / (w - x)^2 dw`` over the panels."""
        x_nodes, x_w = npleg.leggauss(self.order)
        total = 0.0
        for j in range(self.edges.size - 1):
            lo, hi = self.edges[j], self.edges[j + 1]
            w = 0.5 * (hi - lo) * x_nodes + 0.5 * (hi + lo)
            ww = 0.5 * (hi - lo) * x_w
            g = self.values[j * self.order:(j + 1) * self.order]
            if self._near(j, x):
                gx = float(self.panel_value(j, x))
                dgx = float(self.panel_derivative(j, x))
                d = w - x
                total += float(np.dot(ww, (g - gx - dgx * d) / (d * d)))
                total += gx * (_inverse(lo - x) - _inverse(hi - x)) + dgx * (_log_abs(hi - x) - _log_abs(lo - x))
            else:
                total += float(np.dot(ww, g / (w - x) ** 2))
        return total

    def lorentzian_moment(self, x: float, eta: float, power: int = 0) -> float:
        """``int g(w) w^power R_eta(w - x) dw`` with ``R_eta = -d/dw Re 1/(w - x + i eta)``.

        Near ``x`` the polynomial is split into its value and slope at ``x``
        (integrated in closed form) and a remainder integrated on
        subintervals graded towards ``x``.
        """
        def kern(d):
            return (d * d - eta * eta) / (d * d + eta * eta) ** 2

        def prim0(d):
            return -d / (d * d + eta * eta)

        def prim1(d):
            return 0.5 * math.log(d * d + eta * eta) + eta * eta / (d * d + eta * eta)

        xs, xw = npleg.leggauss(self.order + 4)
        total = 0.0
        for j in range(self.edges.size - 1):
            lo, hi = self.edges[j], self.edges[j + 1]
            if self._near(j, x):
                def h(w, j=j):
                    return self.panel_value(j, w) * np.asarray(w) ** power
                gx = float(h(x))
                dgx = float(self.panel_derivative(j, x)) * x**power
                if power:
                    dgx += power * float(self.panel_value(j, x)) * x ** (power - 1)
                u = min(max(x, lo), hi)
                total += gx * (prim0(hi - x) - prim0(lo - x)) + dgx * (prim1(hi - x) - prim1(lo - x))
                cuts = [lo, hi, u]
                step = eta / 8.0
                while u - step > lo:
                    cuts.append(u - step)
                    step *= 2.0
                step = eta / 8.0
                while u + step < hi:
                    cuts.append(u + step)
                    step *= 2.0
                cuts = np.unique(np.array(cuts))
                a, b = cuts[:-1, None], cuts[1:, None]
                w = (0.5 * (b - a) * xs + 0.5 * (b + a)).ravel()
                ww = (0.5 * (b - a) * xw).ravel()
                d = w - x
                rest = h(w) - gx - dgx * d
                total += float(np.dot(ww, rest * kern(d)))
            else:
                w = 0.5 * (hi - lo) * xs + 0.5 * (hi + lo)
                ww = 0.5 * (hi - lo) * xw
                total += float(np.dot(ww, self.panel_value(j, w) * w**power * kern(w - x)))
        return total


def lorentzian_finite_part(g: PanelFunction, x: float, eta: float, power: int = 0) -> float:
    """Three-level Richardson limit ``eta -> 0`` of :meth:`PanelFunction.lorentzian_moment`."""
    m1 = g.lorentzian_moment(x, eta, power)
    m2 = g.lorentzian_moment(x, eta / 2.0, power)
    m3 = g.lorentzian_moment(x, eta / 4.0, power)
    return (8.0 * m3 - 6.0 * m2 + m1) / 3.0


# ---------------------------------------------------------------------------
# slices and the spectral function


@dataclass(frozen=True)
class SpectralSettings:
    """Layout of the omega panels (energies in units of the medium energy scale).

    The self-energies are not analytic at the free energy ``k^2/2m``
    (opening of the relative-motion phase space), so panels are graded
    geometrically towards it down to ``finest``; outwards they grow by
    ``ratio`` up to ``max_width`` and extend ``below``/``above``.
    ``eta`` caps the Lorentzian width used for the principal-value
    derivative; it is further limited to ``eta_fraction`` of the distance
    between the pole and the free energy.
    """

    order: int = 8
    core: float = 0.5
    finest: float = 1e-5
    ratio: float = 1.5
    max_width: float = 8.0
    below: float = 40.0
    above: float = 400.0
    eta: float = 0.02
    eta_fraction: float = 0.05


def omega_edges(threshold: float, scale: float, s: SpectralSettings, finest: float | None = None) -> np.ndarray:
    finest = s.finest if finest is None else finest
    h = s.core * scale
    inner = [h]
    while inner[-1] > finest * scale:
        inner.append(inner[-1] / 2.0)
    inner = np.array(inner)
    right = [threshold + h]
    width = h
    while right[-1] < threshold + s.above * scale:
        width = min(width * s.ratio, s.max_width * scale * max(1.0, (right[-1] - threshold) / (20.0 * scale)))
        right.append(right[-1] + width)
    left = [threshold - h]
    width = h
    while left[-1] > threshold - s.below * scale:
        width = min(width * s.ratio, s.max_width * scale)
        left.append(left[-1] - width)
    edges = np.concatenate([left[::-1], threshold - inner[1:], [threshold], threshold + inner[:0:-1], right])
    return np.unique(edges)


@dataclass
class SpectralSlice:
    """Self-energy data at a fixed momentum ``k``."""

    k: float
    mass: float
    omega: np.ndarray
    sigma_lt: np.ndarray
    sigma_gt: np.ndarray
    gamma: np.ndarray
    sigma_re: np.ndarray
    sigma_hf: float
    eps: float
    slope: float
    sigma_lt_pole: float
    sigma_gt_pole: float
    edges: np.ndarray
    order: int
    eta: float

    @property
    def kinetic(self) -> float:
        return self.k**2 / (2.0 * self.mass)

    @property
    def z(self) -> float:
        """Pole weight ``1 + d sigma / d omega`` at the pole (linearized renormalization)."""
        return 1.0 + self.slope

    @property
    def z_full(self) -> float:
        return 1.0 / (1.0 - self.slope)

    def gamma_function(self) -> PanelFunction:
        return PanelFunction(self.edges, self.order, self.gamma)

    def lesser_function(self) -> PanelFunction:
        return PanelFunction(self.edges, self.order, self.sigma_lt)

    def greater_function(self) -> PanelFunction:
        return PanelFunction(self.edges, self.order, self.sigma_gt)

    def dispersive(self, w: float) -> float:
        """``sigma_c(w) = int dw'/2pi P gamma(w') / (w - w')``."""
        return self.gamma_function().principal_value(w) / _TWO_PI


def free_slice(k: float, mass: float = 1.0) -> SpectralSlice:
    """Slice of a non-interacting particle (``gamma = 0``)."""
    edges = np.array([k * k / (2 * mass) - 1.0, k * k / (2 * mass) + 1.0])
    nodes, _ = PanelFunction.nodes_and_weights(edges, 2)
    zero = np.zeros(nodes.size)
    return SpectralSlice(k=k, mass=mass, omega=nodes, sigma_lt=zero, sigma_gt=zero, gamma=zero,
                         sigma_re=zero, sigma_hf=0.0, eps=k * k / (2 * mass), slope=0.0,
                         sigma_lt_pole=0.0, sigma_gt_pole=0.0, edges=edges, order=2, eta=0.02)


_GAP_PANELS = 20.0
_FINEST_FLOOR = 1e-14


def _solve_pole(gfun: PanelFunction, base: float, guess: float, width: float) -> float:
    def disp(w):
        return w - base - gfun.principal_value(w) / _TWO_PI

    lo, hi = guess - width, guess + width
    for _ in range(8):
        a, b = disp(lo), disp(hi)
        if a * b <= 0:
            return brentq(disp, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=300)
        lo, hi = guess - 2.0 * (guess - lo), guess + 2.0 * (hi - guess)
    raise PoleSearchError(
        f"no sign change of the dispersion relation on [{lo:.6g}, {hi:.6g}]: values {a:.3e}, {b:.3e}")


def build_slice(k: float, medium: Medium, interaction,
                quad: SelfEnergyQuadrature = SelfEnergyQuadrature(),
                settings: SpectralSettings = SpectralSettings(),
                include_mean_field: bool = True) -> SpectralSlice:
    """Self-energies on the graded omega mesh, the pole and the slope there."""
    scale = medium.thermal_energy
    kin = k * k / (2.0 * medium.mass)
    hf = mean_field(k, medium, interaction, quad) if include_mean_field else 0.0
    finest = settings.finest
    for _ in range(3):
        edges = omega_edges(kin, scale, settings, finest)
        nodes, _ = PanelFunction.nodes_and_weights(edges, settings.order)
        lt, gt = born_selfenergy(k, nodes, medium, interaction, quad)
        gfun = PanelFunction(edges, settings.order, lt + gt)
        eps = _solve_pole(gfun, kin + hf, kin + hf, 0.05 * scale)
        # a pole next to the threshold needs panels much smaller than their separation
        wanted = max(abs(eps - kin) / (_GAP_PANELS * scale), _FINEST_FLOOR)
        if wanted >= finest:
            break
        finest = wanted
    slope = -gfun.finite_part(eps) / _TWO_PI
    sre = np.array([gfun.principal_value(w) / _TWO_PI for w in nodes])
    lt_pole, gt_pole = born_selfenergy(k, np.array([eps]), medium, interaction, quad)
    gap = abs(eps - kin)
    eta = min(settings.eta * scale, settings.eta_fraction * gap) if gap > 0 else settings.eta * scale * 1e-3
    return SpectralSlice(k=k, mass=medium.mass, omega=nodes, sigma_lt=lt, sigma_gt=gt, gamma=lt + gt,
                         sigma_re=sre, sigma_hf=hf, eps=float(eps), slope=float(slope),
                         sigma_lt_pole=float(lt_pole[0]), sigma_gt_pole=float(gt_pole[0]),
                         edges=edges, order=settings.order, eta=float(eta))


@dataclass
class SpectralFunction:
    """Pole ``2 pi z delta(w - eps)`` plus the off-shell part ``gamma(w) / (w - eps)^2``."""

    slice: SpectralSlice

    @property
    def pole(self) -> float:
        return self.slice.eps

    @property
    def pole_weight(self) -> float:
        return self.slice.z

    def offshell(self, w):
        w = np.asarray(w, dtype=float)
        return self.slice.gamma_function()(w) / (w - self.pole) ** 2

    def lesser_offshell(self, w):
        w = np.asarray(w, dtype=float)
        return self.slice.lesser_function()(w) / (w - self.pole) ** 2

    def greater_offshell(self, w):
        w = np.asarray(w, dtype=float)
        return self.slice.greater_function()(w) / (w - self.pole) ** 2

    def moments(self):
        """Zeroth and first moments of ``a / 2pi``."""
        sl = self.slice
        if not np.any(sl.gamma):
            return sl.z, sl.z * sl.eps
        g = sl.gamma_function()
        m0 = lorentzian_finite_part(g, sl.eps, sl.eta, 0) / _TWO_PI
        m1 = lorentzian_finite_part(g, sl.eps, sl.eta, 1) / _TWO_PI
        return sl.z + m0, sl.z * sl.eps + m1

    def energy_weighted_target(self) -> float:
        return self.slice.kinetic + self.slice.sigma_hf


def spectral_function(k: float, slice: SpectralSlice) -> SpectralFunction:
    if abs(slice.k - k) > 1e-12 * max(1.0, abs(k)):
        raise ValueError(f"slice belongs to k = {slice.k}, not {k}")
    return SpectralFunction(slice)


# ---------------------------------------------------------------------------
# rho[f] and the quasiparticle collision term


def offshell_occupation(slice: SpectralSlice) -> float:
    """``-int dw/2pi sigma_lt(w) d/dw P 1/(w - eps)`` (Lorentzian-regularized, Richardson)."""
    if not np.any(slice.sigma_lt):
        return 0.0
    return lorentzian_finite_part(slice.lesser_function(), slice.eps, slice.eta, 0) / _TWO_PI


def rho_from_f(f_values, slices) -> np.ndarray:
    """Wigner occupation ``rho = z f + off-shell part`` at the slice momenta.

    Evaluated as ``f + FP int dw/2pi (sigma_lt - f gamma) / (w - eps)^2``:
    near equilibrium the numerator vanishes at the pole, which keeps the
    difference ``rho - f`` accurate where ``z - 1`` and the off-shell part
    are individually large and cancel.
    """
    f_values = np.asarray(f_values, dtype=float)
    out = []
    for fv, sl in zip(f_values, slices):
        if not np.any(sl.gamma):
            out.append(float(fv))
            continue
        combined = PanelFunction(sl.edges, sl.order, sl.sigma_lt - fv * sl.gamma)
        out.append(float(fv) + combined.finite_part(sl.eps) / _TWO_PI)
    return np.array(out)


def landau_silin_rhs(f_values, slices) -> np.ndarray:
    """``z [(1 - f) sigma_lt - f sigma_gt]`` at the quasiparticle poles."""
    f_values = np.asarray(f_values, dtype=float)
    return np.array([sl.z * ((1.0 - fv) * sl.sigma_lt_pole - fv * sl.sigma_gt_pole)
                     for fv, sl in zip(f_values, slices)])


@dataclass
class SumRuleRow:
    k: float
    z: float
    eps: float
    m0: float
    m1: float
    m1_target: float

    @property
    def m0_error(self) -> float:
        return abs(self.m0 - 1.0)

    @property
    def m1_error(self) -> float:
        return abs(self.m1 - self.m1_target)


def sum_rule_audit(slices) -> list[SumRuleRow]:
    rows = []
    for sl in slices:
        a = SpectralFunction(sl)
        m0, m1 = a.moments()
        rows.append(SumRuleRow(k=sl.k, z=sl.z, eps=sl.eps, m0=m0, m1=m1, m1_target=a.energy_weighted_target()))
    return rows
