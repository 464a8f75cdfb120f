"""Collision shifts from scattering-phase derivatives and the nonlocal collision integral.

Units ``hbar = 1``.  Shifts are computed from the phase model's partial
derivatives at the energy shell ``Omega = eps3 + eps4``:

* ``delta_2 = d_p - d_q - d_k``, ``delta_3 = -d_k``, ``delta_4 = -(d_k + d_q)``
  (displacements, length),
* ``delta_t = d_Omega`` (time delay), ``delta_E = -d_t / 2`` (energy gain),
  ``delta_K = d_r / 2`` (momentum gain),
* ``delta_r = (delta_2 + delta_3 + delta_4) / 4``.

Fields are callables ``f(k, r, t)`` with vector ``k`` and ``r`` in the last
axis; see :func:`homogeneous_field` and :func:`field_from_profile`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .scattering import PhaseGradient, has_analytic_gradient, scattering_weight

_TWO_PI = 2.0 * math.pi


class ShiftDiagnostic(RuntimeError):
    """Finite-difference shifts are dominated by noise (non-smooth model)."""


@dataclass
class CollisionKinematics:
    """Momenta ``k, p, q`` of a binary collision at position ``r`` and time ``t``.

    ``omega`` defaults to the energy shell ``eps3 + eps4`` with free
    energies of the given ``mass``.  Arrays broadcast over leading axes.
    """

    k: np.ndarray
    p: np.ndarray
    q: np.ndarray
    r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t: float | np.ndarray = 0.0
    mass: float = 1.0
    species: tuple = ("a", "b")
    omega: np.ndarray | None = None
    z: tuple | None = None

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.r = np.asarray(self.r, dtype=float)

    def energy(self, v):
        return np.sum(np.asarray(v) ** 2, axis=-1) / (2.0 * self.mass)

    @property
    def energies(self):
        return (self.energy(self.k), self.energy(self.p),
                self.energy(self.k - self.q), self.energy(self.p + self.q))

    @property
    def shell(self) -> np.ndarray:
        if self.omega is not None:
            return np.asarray(self.omega, dtype=float)
        _, _, e3, e4 = self.energies
        return e3 + e4


@dataclass
class ShiftSet:
    delta_2: np.ndarray
    delta_3: np.ndarray
    delta_4: np.ndarray
    delta_r: np.ndarray
    delta_t: np.ndarray
    delta_E: np.ndarray
    delta_K: np.ndarray

    def scaled(self, factor: float) -> "ShiftSet":
        return ShiftSet(*(factor * np.asarray(v) for v in (
            self.delta_2, self.delta_3, self.delta_4, self.delta_r,
            self.delta_t, self.delta_E, self.delta_K)))

    @classmethod
    def zeros(cls, shape=()) -> "ShiftSet":
        v = np.zeros(tuple(shape) + (3,))
        s = np.zeros(tuple(shape))
        return cls(v, v.copy(), v.copy(), v.copy(), s, s.copy(), v.copy())


def _unit(i):
    e = np.zeros(3)
    e[i] = 1.0
    return e


def finite_difference_gradient(model, omega, k, p, q, r, t, step: float = 1e-4) -> PhaseGradient:
    """Central-difference partial derivatives of ``model.phase``."""
    omega = np.asarray(omega, dtype=float)
    k, p, q, r = (np.asarray(v, dtype=float) for v in (k, p, q, r))
    t = np.asarray(t, dtype=float)
    ph = model.phase

    def vec_grad(which):
        comps = []
        for i in range(3):
            e = step * _unit(i)
            args_p = [omega, k, p, q, r, t]
            args_m = [omega, k, p, q, r, t]
            args_p[which] = args_p[which] + e
            args_m[which] = args_m[which] - e
            comps.append((ph(*args_p) - ph(*args_m)) / (2.0 * step))
        return np.stack(np.broadcast_arrays(*comps), axis=-1)

    d_om = (ph(omega + step, k, p, q, r, t) - ph(omega - step, k, p, q, r, t)) / (2.0 * step)
    d_t = (ph(omega, k, p, q, r, t + step) - ph(omega, k, p, q, r, t - step)) / (2.0 * step)
    return PhaseGradient(d_omega=d_om, d_k=vec_grad(1), d_p=vec_grad(2), d_q=vec_grad(3),
                         d_r=vec_grad(4), d_t=d_t)


def shifts_from_gradient(g: PhaseGradient) -> ShiftSet:
    d_k, d_p, d_q = (np.asarray(v, dtype=float) for v in (g.d_k, g.d_p, g.d_q))
    d_k, d_p, d_q = np.broadcast_arrays(d_k, d_p, d_q)
    d2 = d_p - d_q - d_k
    d3 = -d_k
    d4 = -(d_k + d_q)
    return ShiftSet(
        delta_2=d2, delta_3=d3, delta_4=d4,
        delta_r=(d2 + d3 + d4) / 4.0,
        delta_t=np.asarray(g.d_omega, dtype=float),
        delta_E=-0.5 * np.asarray(g.d_t, dtype=float),
        delta_K=0.5 * np.broadcast_to(np.asarray(g.d_r, dtype=float), d2.shape).copy(),
    )


def compute_shifts(model, kin: CollisionKinematics, step: float = 1e-4,
                   analytic: bool | None = None) -> ShiftSet:
    """Shifts at the energy shell; analytic derivatives when the model has them."""
    use = has_analytic_gradient(model) if analytic is None else analytic
    args = (kin.shell, kin.k, kin.p, kin.q, kin.r, kin.t)
    if use:
        g = model.gradient(*args)
    else:
        g = finite_difference_gradient(model, *args, step=step)
    return shifts_from_gradient(g)


def noise_check(model, kin: CollisionKinematics, step: float = 1e-4, tol: float = 0.2) -> float:
    """Ratio of finite-difference mismatch at ``h`` and ``h/2``; raises if not ~4.

    Compares against the analytic gradient when available, otherwise
    against a Richardson estimate from ``h/4``.
    """
    def flat(s: ShiftSet):
        return np.concatenate([np.ravel(s.delta_2), np.ravel(s.delta_3), np.ravel(s.delta_4),
                               np.ravel(s.delta_t), np.ravel(s.delta_E), np.ravel(s.delta_K)])

    a = flat(compute_shifts(model, kin, step, analytic=False))
    b = flat(compute_shifts(model, kin, step / 2, analytic=False))
    if has_analytic_gradient(model):
        ref = flat(compute_shifts(model, kin, analytic=True))
    else:
        c = flat(compute_shifts(model, kin, step / 4, analytic=False))
        ref = (16.0 * c - b) / 15.0
    e1 = np.max(np.abs(a - ref))
    e2 = np.max(np.abs(b - ref))
    if e1 == 0.0 and e2 == 0.0:
        return 4.0
    ratio = e1 / e2 if e2 > 0 else math.inf
    if not (4.0 * (1 - tol) <= ratio <= 4.0 * (1 + tol)):
        raise ShiftDiagnostic(f"finite-difference error ratio {ratio:.3f} (expected 4): model not smooth at step {step}")
    return ratio


def delta_gradient_prefactor(model, kin: CollisionKinematics, eps_bar=None, step: float = 1e-4) -> np.ndarray:
    """``1 - (1/2) div_r delta_2 - grad_r eps_bar_2 . d delta_2 / d omega``.

    ``eps_bar(p, r, t)`` is the partner energy field entering the
    correction (``None`` means homogeneous, no gradient).
    """
    def d2_at(r=None, omega=None):
        k2 = CollisionKinematics(kin.k, kin.p, kin.q, kin.r if r is None else r, kin.t, kin.mass,
                                 kin.species, kin.shell if omega is None else omega)
        return compute_shifts(model, k2, step).delta_2

    div = 0.0
    for i in range(3):
        e = step * _unit(i)
        div = div + (d2_at(r=kin.r + e)[..., i] - d2_at(r=kin.r - e)[..., i]) / (2.0 * step)
    out = 1.0 - 0.5 * div
    if eps_bar is not None:
        grad_e = np.stack([(eps_bar(kin.p, kin.r + step * _unit(i), kin.t)
                            - eps_bar(kin.p, kin.r - step * _unit(i), kin.t)) / (2.0 * step)
                           for i in range(3)], axis=-1)
        d_om = (d2_at(omega=kin.shell + step) - d2_at(omega=kin.shell - step)) / (2.0 * step)
        out = out - np.sum(grad_e * d_om, axis=-1)
    return np.asarray(out, dtype=float) * np.ones(np.shape(kin.shell))


# ---------------------------------------------------------------------------
# fields


def homogeneous_field(occupation):
    """Field ``f(k, r, t) = occupation(|k|)``."""
    def f(k, r, t):
        return occupation(np.linalg.norm(np.asarray(k, dtype=float), axis=-1))
    return f


def field_from_profile(occupation, profile):
    """Field ``occupation(|k|) * profile(r, t)``."""
    def f(k, r, t):
        return occupation(np.linalg.norm(np.asarray(k, dtype=float), axis=-1)) * profile(np.asarray(r, dtype=float), t)
    return f


# ---------------------------------------------------------------------------
# nonlocal collision integral


@dataclass(frozen=True)
class CollisionQuadrature:
    """Tensor rules: partner ``(|p|, cos, azimuth)`` and shell direction ``(cos, azimuth)``.

    The shell azimuth uses an even number of uniform nodes so that the
    node set is symmetric under reflection of the shell direction.
    """

    n_p: int = 24
    n_cos: int = 12
    n_phi: int = 8
    n_shell_cos: int = 12
    n_shell_phi: int = 8
    p_max: float = 6.0


@dataclass
class CollisionSetup:
    """Physical constants and options of the collision integral."""

    mass: float = 1.0
    spin: int = 1
    amplitude: float = 1.0
    z: object = None
    z_at_shifted: bool = False
    eps_bar: object = None
    with_prefactor: bool = True
    fd_step: float = 1e-4


def _rotation_to(k):
    """Rotation matrix whose third column is the direction of ``k``."""
    n = np.linalg.norm(k)
    e3 = k / n if n > 0 else np.array([0.0, 0.0, 1.0])
    helper = np.array([1.0, 0.0, 0.0]) if abs(e3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(helper, e3)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    return np.stack([e1, e2, e3], axis=-1)


def _partner_rule(quad: CollisionQuadrature):
    x, w = leggauss(quad.n_p)
    pr = 0.5 * quad.p_max * (x + 1.0)
    pw = 0.5 * quad.p_max * w
    c, cw = leggauss(quad.n_cos)
    phi = (np.arange(quad.n_phi) + 0.5) * _TWO_PI / quad.n_phi
    P, C, F = np.meshgrid(pr, c, phi, indexing="ij")
    S = np.sqrt(1.0 - C * C)
    vec = np.stack([P * S * np.cos(F), P * S * np.sin(F), P * C], axis=-1).reshape(-1, 3)
    wt = (pw[:, None, None] * pr[:, None, None] ** 2 * cw[None, :, None]
          * np.full(quad.n_phi, _TWO_PI / quad.n_phi)[None, None, :]).ravel()
    return vec, wt


def _sphere_rule(n_cos: int, n_phi: int):
    if n_phi % 2:
        raise ValueError("shell azimuth needs an even node count")
    c, cw = leggauss(n_cos)
    phi = (np.arange(n_phi) + 0.5) * _TWO_PI / n_phi
    C, F = np.meshgrid(c, phi, indexing="ij")
    S = np.sqrt(1.0 - C * C)
    vec = np.stack([S * np.cos(F), S * np.sin(F), C], axis=-1).reshape(-1, 3)
    wt = (cw[:, None] * np.full(n_phi, _TWO_PI / n_phi)[None, :]).ravel()
    return vec, wt


def _z_of(setup: CollisionSetup, k):
    if setup.z is None:
        return 1.0
    return setup.z(np.linalg.norm(k, axis=-1))


@dataclass
class CollisionDiagnostics:
    clamped: int = 0
    nodes: int = 0


def nonlocal_collision_integral(f_a, f_b, model, k_out, r=None, t: float = 0.0,
                                setup: CollisionSetup = CollisionSetup(),
                                quad: CollisionQuadrature = CollisionQuadrature(),
                                shifts_override=None, swap_outgoing: bool = False,
                                diagnostics: CollisionDiagnostics | None = None,
                                part: str = "net") -> np.ndarray:
    """``d f_a / d t`` at the momenta ``k_out`` (rows) from the nonlocal scattering integral.

    Outgoing momenta lie on the shifted energy shell
    ``eps1 + eps2 - eps3 - eps4 + 2 delta_E = 0``; the shell radius uses
    ``delta_E`` from the unshifted shell (first order).  Shifts come from
    ``model`` unless ``shifts_override(kin) -> ShiftSet`` is given.
    With ``swap_outgoing`` the two outgoing states are labeled the other
    way round (a bookkeeping check; identical species give the same result).
    ``part="loss"`` keeps only the loss term (a rate scale).
    """
    if part not in ("net", "loss"):
        raise ValueError("part must be 'net' or 'loss'")
    r = np.zeros(3) if r is None else np.asarray(r, dtype=float)
    k_out = np.atleast_2d(np.asarray(k_out, dtype=float))
    m = setup.mass
    weight = scattering_weight(model, setup.amplitude)
    p_loc, p_w = _partner_rule(quad)
    n_dir, n_w = _sphere_rule(quad.n_shell_cos, quad.n_shell_phi)
    if swap_outgoing:
        n_dir = -n_dir
    out = np.zeros(k_out.shape[0])
    for i, kvec in enumerate(k_out):
        rot = _rotation_to(kvec)
        pv = p_loc @ rot.T
        kk = np.broadcast_to(kvec, pv.shape)
        rel = 0.5 * (kk - pv)
        big_r = np.linalg.norm(rel, axis=-1)
        # unshifted shell for the shift evaluation
        K = kk[:, None, :]
        P = pv[:, None, :]
        q0 = rel[:, None, :] + big_r[:, None, None] * n_dir[None, :, :]
        shape = q0.shape[:2]
        K, P = np.broadcast_to(K, q0.shape), np.broadcast_to(P, q0.shape)
        kin0 = CollisionKinematics(K, P, q0, np.broadcast_to(r, q0.shape), t, m)
        sh = shifts_override(kin0) if shifts_override is not None else compute_shifts(model, kin0, setup.fd_step)
        d_e = np.broadcast_to(sh.delta_E, shape)
        r_eff_sq = big_r[:, None] ** 2 + 2.0 * m * d_e
        valid = r_eff_sq > 0
        r_eff = np.sqrt(np.where(valid, r_eff_sq, 0.0))
        q = rel[:, None, :] + r_eff[..., None] * n_dir[None, :, :]
        e1 = np.sum(K * K, axis=-1) / (2 * m)
        e2 = np.sum(P * P, axis=-1) / (2 * m)
        d2, d3, d4 = (np.broadcast_to(v, q.shape) for v in (sh.delta_2, sh.delta_3, sh.delta_4))
        dr = np.broadcast_to(sh.delta_r, q.shape)
        dk = np.broadcast_to(sh.delta_K, q.shape)
        dt = np.broadcast_to(sh.delta_t, shape)
        rr = np.broadcast_to(r, q.shape)
        f1 = f_a(K, rr, t)
        f2 = f_b(P, rr - d2, t)
        k3 = K - q - dk
        k4 = P + q - dk
        f3 = f_a(k3, rr - d3, t - dt)
        f4 = f_b(k4, rr - d4, t - dt)
        tsq = weight.t_squared(e1 + e2 - d_e, K - 0.5 * dk, P - 0.5 * dk, q, rr - dr, t - 0.5 * dt)
        if setup.z_at_shifted:
            zz = _z_of(setup, K) * _z_of(setup, P) * _z_of(setup, k3) * _z_of(setup, k4)
        else:
            zz = _z_of(setup, K) * _z_of(setup, P) * _z_of(setup, K - q) * _z_of(setup, P + q)
        pref = 1.0
        if setup.with_prefactor and shifts_override is None:
            kin_shell = CollisionKinematics(K, P, q, rr, t, m)
            pref = delta_gradient_prefactor(model, kin_shell, setup.eps_bar, setup.fd_step)
        loss = (1.0 - f3) * (1.0 - f4) * f1 * f2
        bracket = -loss if part == "loss" else f3 * f4 * (1.0 - f1) * (1.0 - f2) - loss
        meas = (p_w[:, None] * n_w[None, :]) * (0.5 * m * r_eff) * valid
        out[i] = setup.spin * float(np.sum(meas * zz * tsq * pref * bracket)) / _TWO_PI**5
        if diagnostics is not None:
            diagnostics.nodes += int(meas.size)
            diagnostics.clamped += int(np.count_nonzero(~valid))
    return out


def local_buu_integral(f_a, f_b, weight, k_out, r=None, t: float = 0.0, mass: float = 1.0,
                       spin: int = 1, quad: CollisionQuadrature = CollisionQuadrature(),
                       bracket=None) -> np.ndarray:
    """Standard Boltzmann-Uehling-Uhlenbeck collision integral (no shifts, ``z = 1``).

    Written in pair coordinates: for each partner the outgoing momenta are
    ``K/2 +- |k - p|/2 n'`` with ``n'`` on the unit sphere.  ``bracket(f1,
    f2, f3, f4)`` replaces the gain-minus-loss combination when given.
    """
    r = np.zeros(3) if r is None else np.asarray(r, dtype=float)
    k_out = np.atleast_2d(np.asarray(k_out, dtype=float))
    x, w = leggauss(quad.n_p)
    radii = 0.5 * quad.p_max * (x + 1.0)
    rad_w = 0.5 * quad.p_max * w
    cth, cth_w = leggauss(quad.n_cos)
    azim = (np.arange(quad.n_phi) + 0.5) * _TWO_PI / quad.n_phi
    sc, sc_w = leggauss(quad.n_shell_cos)
    sphi = (np.arange(quad.n_shell_phi) + 0.5) * _TWO_PI / quad.n_shell_phi
    res = []
    for kvec in k_out:
        rot = _rotation_to(kvec)
        total = 0.0
        f1 = f_a(kvec, r, t)
        e1 = kvec @ kvec / (2 * mass)
        for a, pr in enumerate(radii):
            for b, c in enumerate(cth):
                s = math.sqrt(1.0 - c * c)
                loc = np.stack([pr * s * np.cos(azim), pr * s * np.sin(azim), np.full(azim.size, pr * c)], axis=-1)
                pv = loc @ rot.T
                f2 = f_b(pv, np.broadcast_to(r, pv.shape), t)
                half_rel = 0.5 * np.linalg.norm(kvec - pv, axis=-1)
                centre = 0.5 * (kvec + pv)
                for g, cs in enumerate(sc):
                    ss = math.sqrt(1.0 - cs * cs)
                    nprime = np.stack([ss * np.cos(sphi), ss * np.sin(sphi), np.full(sphi.size, cs)], axis=-1)
                    # pair (partner node, shell azimuth)
                    k3 = centre[:, None, :] - half_rel[:, None, None] * nprime[None, :, :]
                    k4 = centre[:, None, :] + half_rel[:, None, None] * nprime[None, :, :]
                    rr = np.broadcast_to(r, k3.shape)
                    f3 = f_a(k3, rr, t)
                    f4 = f_b(k4, rr, t)
                    qv = kvec - k3
                    e2 = np.sum(pv * pv, axis=-1) / (2 * mass)
                    tsq = weight.t_squared((e1 + e2)[:, None], np.broadcast_to(kvec, k3.shape),
                                           np.broadcast_to(pv[:, None, :], k3.shape), qv, rr, t)
                    if bracket is None:
                        gain_loss = f3 * f4 * (1 - f1) * (1 - f2[:, None]) - (1 - f3) * (1 - f4) * f1 * f2[:, None]
                    else:
                        gain_loss = bracket(f1, f2[:, None], f3, f4)
                    jac = 0.5 * mass * half_rel
                    wts = rad_w[a] * pr * pr * cth_w[b] * (_TWO_PI / quad.n_phi) * sc_w[g] * (_TWO_PI / quad.n_shell_phi)
                    total += wts * float(np.sum(jac[:, None] * tsq * gain_loss))
        res.append(spin * total / _TWO_PI**5)
    return np.array(res)
