"""Scenario execution: each runner returns named artifacts as text.

Nothing touches the disk here; :mod:`corrkin.cli` writes the artifacts
only after a runner has finished and every number has been checked for
finiteness.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, formation
from .config import ConfigError, Scenario
from .plasma import PlasmaInput, derive_params


class ComputationError(RuntimeError):
    """A computation produced non-finite output or failed a diagnostic."""


class DisjointRangeError(ValueError):
    """Two curves share no common abscissa range."""


# ---------------------------------------------------------------------------
# formatting


def _fmt(value) -> str:
    value = float(value)
    if not math.isfinite(value):
        raise ComputationError(f"non-finite value {value!r} in output")
    return format(value + 0.0, ".12e")


def header_lines(scenario: Scenario, extra: dict | None = None) -> list[str]:
    lines = [f"# corrkin {__version__}", f"# config_hash {scenario.digest}"]
    lines += [f"# {entry}" for entry in scenario.canonical().splitlines()]
    for key, value in (extra or {}).items():
        lines.append(f"# {key} {value}")
    return lines


def render_csv(scenario: Scenario, columns: list[str], rows, extra: dict | None = None) -> str:
    out = io.StringIO()
    for line in header_lines(scenario, extra):
        out.write(line + "\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return out.getvalue()


def _check_finite(obj, path="report"):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")
    elif isinstance(obj, float) and not math.isfinite(obj):
        raise ComputationError(f"non-finite value at {path}")


def render_json(scenario: Scenario, payload: dict) -> str:
    _check_finite(payload)
    doc = {"version": __version__, "config_hash": scenario.digest, **payload}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# reference curves and comparison


@dataclass
class ReferenceCurve:
    label: str
    tau: np.ndarray
    value: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        if self.tau.shape != self.value.shape or self.tau.ndim != 1 or self.tau.size < 2:
            raise ValueError(f"{self.label}: need two equal-length columns with at least two rows")
        if not (np.all(np.isfinite(self.tau)) and np.all(np.isfinite(self.value))):
            raise ValueError(f"{self.label}: non-finite entries")
        if np.any(np.diff(self.tau) <= 0):
            raise ValueError(f"{self.label}: tau must be strictly increasing")

    @classmethod
    def from_csv(cls, path, column: str = "value", label: str | None = None) -> "ReferenceCurve":
        with open(path, encoding="utf-8") as handle:
            body = [ln for ln in handle if ln.strip() and not ln.lstrip().startswith("#")]
        reader = csv.reader(body)
        names = [n.strip() for n in next(reader)]
        if "tau" not in names:
            raise ValueError(f"{path}: no tau column")
        if column not in names:
            if len(names) == 2:
                column = names[1 - names.index("tau")]
            else:
                raise ValueError(f"{path}: no column {column!r}")
        rows = [r for r in reader if r]
        i_t, i_v = names.index("tau"), names.index(column)
        return cls(label or str(path), [float(r[i_t]) for r in rows], [float(r[i_v]) for r in rows],
                   source=str(path))


def compare(curve_a: ReferenceCurve, curve_b: ReferenceCurve) -> dict:
    """Relative deviation of ``curve_b`` from ``curve_a`` on their common range.

    Both curves are sampled at the nodes of whichever has fewer nodes in
    the overlap, the other by linear interpolation.
    """
    lo = max(curve_a.tau[0], curve_b.tau[0])
    hi = min(curve_a.tau[-1], curve_b.tau[-1])
    if lo >= hi:
        raise DisjointRangeError(f"tau ranges [{curve_a.tau[0]}, {curve_a.tau[-1]}] and "
                                 f"[{curve_b.tau[0]}, {curve_b.tau[-1]}] do not overlap")

    def inside(c):
        m = (c.tau >= lo) & (c.tau <= hi)
        return c.tau[m]

    ta, tb = inside(curve_a), inside(curve_b)
    grid = ta if ta.size <= tb.size else tb
    va = np.interp(grid, curve_a.tau, curve_a.value)
    vb = np.interp(grid, curve_b.tau, curve_b.value)
    scale = np.abs(va)
    diff = np.abs(vb - va)
    rel = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), np.where(diff > 0, np.inf, 0.0))
    return {"max_rel": float(np.max(rel)), "rms_rel": float(np.sqrt(np.mean(rel**2))),
            "n_points": int(grid.size), "tau_min": float(lo), "tau_max": float(hi),
            "reference": curve_a.label, "candidate": curve_b.label}


# ---------------------------------------------------------------------------
# runners


def _plasma(scenario: Scenario) -> PlasmaInput:
    return scenario.plasma_input()


def run_formation(scenario: Scenario) -> dict:
    knobs = scenario.knobs("formation")
    inp = _plasma(scenario)
    params = derive_params(inp)
    if "x" in knobs or "x0" in knobs:
        kd = knobs.get("x", params.x) * params.kappa
        x0 = knobs.get("x0", None if math.isinf(params.x0) else params.x0)
        inp = PlasmaInput(inp.e2, inp.mass, inp.density, inp.temperature, inp.hbar, inp.spin,
                          kd, None if x0 is None else x0 * params.kappa)
        params = derive_params(inp)
    tau = np.linspace(0.0, knobs.get("t_end", 10.0), knobs.get("n_t", 201))
    curve = formation.kinetic_energy_curve(tau * params.tau_unit, params)
    rows = zip(curve.tau, curve.e_kin, curve.e_coll, curve.e_init, curve.e_corr)
    extra = {"Gamma": _fmt(params.Gamma), "x": _fmt(params.x),
             "x0": "inf" if math.isinf(params.x0) else _fmt(params.x0)}
    return {"formation.csv": render_csv(scenario, ["tau", "e_kin", "e_coll", "e_init", "e_corr"], rows, extra)}


def run_levinson(scenario: Scenario, overrides: dict | None = None) -> dict:
    from .levinson import InstabilityError, ReducedPlasma, SolverSettings, build_kernel, evolve, maxwell_reduced

    knobs = {**scenario.knobs("levinson"), **{k: v for k, v in (overrides or {}).items() if v is not None}}
    params = derive_params(_plasma(scenario))
    plasma = ReducedPlasma.from_params(params)
    corr = knobs.get("initial_corr", "none" if math.isinf(params.x0) else "config")
    if corr == "config":
        x0 = params.x0
    elif corr == "none":
        x0 = math.inf
    elif corr.startswith("debye:"):
        try:
            kappa0 = float(corr.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad initial_corr {corr!r}", key="initial_corr") from exc
        x0 = kappa0 / params.kappa
    else:
        raise ConfigError(f"initial_corr must be 'none' or 'debye:<kappa0>', got {corr!r}", key="initial_corr")
    plasma = ReducedPlasma(plasma.Gamma, plasma.x, plasma.hbar, plasma.spin, x0)
    defaults = SolverSettings()
    settings = SolverSettings(n_k=knobs.get("grid_n", defaults.n_k),
                              n_offset=knobs.get("n_offset", defaults.n_offset),
                              degenerate=knobs.get("degenerate", False))
    cache = build_kernel(plasma, settings)
    rho = maxwell_reduced(cache)
    try:
        res = evolve(cache, rho, knobs.get("t_end", 5.0) * math.sqrt(2.0), knobs.get("dt", 0.05))
    except InstabilityError as exc:
        raise ComputationError(f"solver aborted: {exc}") from exc
    rows = zip(res.tau, res.e_kin, res.density_drift, res.energy_drift)
    csv_text = render_csv(scenario, ["tau", "e_kin", "density_drift", "energy_drift"], rows,
                          {"Gamma": _fmt(plasma.Gamma), "x": _fmt(plasma.x),
                           "x0": "inf" if math.isinf(x0) else _fmt(x0)})
    report = {
        "steps": int(res.t.size - 1),
        "max_density_drift": float(res.density_drift.max()),
        "max_energy_drift": float(res.energy_drift.max()),
        "max_energy_drift_correlation_scale": float(res.energy_drift_correlation_scale.max()),
        "max_raw_density_rate": float(np.abs(res.raw_density_rate).max()),
        "max_raw_energy_defect": float(np.abs(res.raw_energy_defect).max()),
        "final_e_kin": float(res.e_kin[-1]),
    }
    return {"levinson.csv": csv_text, "levinson.json": render_json(scenario, report)}


def _qp_setup(scenario: Scenario, section: str):
    """Medium in units with hbar = 1 (momenta as wave numbers, mass -> m / hbar^2)."""
    from .scattering import DebyeInteraction, EquilibriumOccupation, SeparableTMatrix
    from .thermo import chemical_potential

    inp = _plasma(scenario)
    knobs = scenario.knobs(section)
    mass = inp.mass / inp.hbar**2
    stats = knobs.get("statistics", "fermi")
    if stats not in ("fermi", "boltzmann"):
        raise ConfigError(f"statistics must be fermi or boltzmann, got {stats!r}", key="statistics")
    mu = knobs["mu"] if "mu" in knobs else chemical_potential(inp.density, mass, inp.temperature, inp.spin, stats)
    occ = EquilibriumOccupation(mass, inp.temperature, mu, stats)
    kind = knobs.get("interaction", "separable")
    if kind == "separable":
        try:
            model = SeparableTMatrix(knobs.get("coupling", -0.5), knobs.get("beta", 1.0), mass)
        except ValueError as exc:
            raise ConfigError(str(exc), key="coupling") from exc
    elif kind == "debye":
        model = DebyeInteraction(inp.e2, inp.kappa_D)
    else:
        raise ConfigError(f"interaction must be separable or debye, got {kind!r}", key="interaction")
    return inp, mass, occ, model, knobs


def run_qp(scenario: Scenario) -> dict:
    from .quasiparticle import Medium, build_slice, rho_from_f, sum_rule_audit

    inp, mass, occ, model, knobs = _qp_setup(scenario, "qp")
    medium = Medium(occ, mass, inp.temperature, inp.spin)
    k_max = knobs.get("k_max", 4.0 * math.sqrt(2.0 * mass * inp.temperature))
    ks = np.linspace(k_max / knobs.get("n_k", 10), k_max, knobs.get("n_k", 10))
    slices = [build_slice(float(k), medium, model, include_mean_field=knobs.get("mean_field", True)) for k in ks]
    f = occ(ks)
    rho = rho_from_f(f, slices)
    rows = [(k, fk, sl.z, rk, rk - fk) for k, fk, sl, rk in zip(ks, f, slices, rho)]
    audit = sum_rule_audit(slices)
    audit_rows = [(r.k, r.z, r.eps, r.m0, r.m0_error, r.m1, r.m1_target, r.m1_error) for r in audit]
    return {
        "qp_rho.csv": render_csv(scenario, ["k", "f", "z", "rho", "rho_minus_f"], rows, {"mu": _fmt(occ.mu)}),
        "qp_sumrules.csv": render_csv(scenario, ["k", "z", "eps", "m0", "m0_error", "m1", "m1_target", "m1_error"],
                                      audit_rows),
    }


def _phase_model(knobs: dict, mass: float):
    from .scattering import BreitWignerPhase, ConstantPhase, SeparableTMatrix

    kind = knobs.get("model", "breit-wigner")
    if kind == "breit-wigner":
        return BreitWignerPhase(knobs.get("resonance", 1.0), knobs.get("width", 0.5), relative=True, mass=mass)
    if kind == "separable":
        return SeparableTMatrix(knobs.get("coupling", -0.5), knobs.get("beta", 1.0), mass)
    if kind == "constant":
        return ConstantPhase()
    raise ConfigError(f"model must be breit-wigner, separable or constant, got {kind!r}", key="model")


def run_shifts(scenario: Scenario) -> dict:
    from .shifts import CollisionKinematics, compute_shifts

    inp = _plasma(scenario)
    knobs = scenario.knobs("shifts")
    mass = inp.mass / inp.hbar**2
    model = _phase_model(knobs, mass)
    vec = {}
    for name, default in (("k", (0.0, 0.0, 1.0)), ("p", (0.5, 0.0, -0.5)), ("q", (0.2, 0.3, 0.1))):
        v = knobs.get(name, default)
        if len(v) != 3:
            raise ConfigError(f"{name} needs three components", key=name)
        vec[name] = np.array(v)
    kin = CollisionKinematics(vec["k"], vec["p"], vec["q"], np.zeros(3), 0.0, mass)
    step = knobs.get("step", 1e-4)
    analytic = compute_shifts(model, kin, step)
    numeric = compute_shifts(model, kin, step, analytic=False)
    rows = []
    for name in ("delta_2", "delta_3", "delta_4", "delta_r", "delta_K", "delta_t", "delta_E"):
        a = np.atleast_1d(getattr(analytic, name))
        b = np.atleast_1d(getattr(numeric, name))
        for i, (x, y) in enumerate(zip(a, b)):
            comp = "xyz"[i] if a.size == 3 else "-"
            rows.append((name, comp, x, y))
    text = render_csv(scenario, ["shift", "component", "value", "finite_difference"],
                      [(n, c, x, y) for n, c, x, y in rows], {"omega": _fmt(kin.shell)})
    table = "\n".join(f"{n:8s} {c}  {_fmt(x):>20s}  {_fmt(y):>20s}" for n, c, x, y in rows)
    return {"shifts.csv": text, "__stdout__": f"{'shift':8s} c  {'value':>20s}  {'finite diff.':>20s}\n{table}\n"}


def run_nlcollide(scenario: Scenario) -> dict:
    from .scattering import EquilibriumOccupation
    from .shifts import (CollisionQuadrature, CollisionSetup, field_from_profile, homogeneous_field,
                         local_buu_integral, nonlocal_collision_integral)
    from .scattering import scattering_weight
    from .thermo import chemical_potential

    inp = _plasma(scenario)
    knobs = scenario.knobs("nlcollide")
    mass = inp.mass / inp.hbar**2
    model = _phase_model(knobs, mass)
    stats = knobs.get("statistics", "fermi")
    mu = knobs["mu"] if "mu" in knobs else chemical_potential(inp.density, mass, inp.temperature, inp.spin, stats)
    occ = EquilibriumOccupation(mass, inp.temperature, mu, stats)
    grad = knobs.get("gradient", 0.0)
    f_a = homogeneous_field(occ)
    f_b = field_from_profile(occ, lambda r, t: 1.0 + grad * r[..., 0]) if grad else f_a
    k_max = knobs.get("k_max", 3.0 * math.sqrt(2.0 * mass * inp.temperature))
    n_k = knobs.get("n_k", 8)
    ks = np.linspace(k_max / n_k, k_max, n_k)
    kvec = np.stack([np.zeros(n_k), np.zeros(n_k), ks], axis=-1)
    quad = CollisionQuadrature(n_p=knobs.get("n_p", 16), p_max=k_max + 6.0 * math.sqrt(2 * mass * inp.temperature))
    amp = knobs.get("amplitude", 1.0)
    setup = CollisionSetup(mass=mass, spin=inp.spin, amplitude=amp, z_at_shifted=knobs.get("z_at_shifted", False))
    nonlocal_rate = nonlocal_collision_integral(f_a, f_b, model, kvec, setup=setup, quad=quad)
    local_rate = local_buu_integral(f_a, f_b, scattering_weight(model, amp), kvec, mass=mass, spin=inp.spin, quad=quad)
    rows = zip(ks, occ(ks), nonlocal_rate, local_rate)
    return {"nlcollide.csv": render_csv(scenario, ["k", "f", "dfdt_nonlocal", "dfdt_local"], rows, {"mu": _fmt(mu)})}


def run_thermo(scenario: Scenario) -> dict:
    from .scattering import SeparableTMatrix
    from .thermo import consistency_check, delta_observables, qp_observables

    inp, mass, occ, model, knobs = _qp_setup(scenario, "thermo")
    if not isinstance(model, SeparableTMatrix):
        raise ConfigError("thermo needs the separable interaction", key="interaction")
    qp = qp_observables(occ, mass, inp.temperature, inp.spin, forward=model.forward_amplitude)
    dl = delta_observables(occ, model, mass, inp.temperature, inp.spin)
    report = {
        "mu": float(occ.mu),
        "n_qp": qp.n, "delta_n": dl.n, "e_qp": qp.e, "delta_e": dl.e,
        "stress_qp": qp.stress.tolist(), "delta_stress": dl.stress.tolist(),
    }
    if knobs.get("check", True):
        chk = consistency_check(occ, model, mass, inp.temperature, inp.spin, include_mean_field=False)
        report["consistency"] = {"lhs": chk["lhs"], "rhs": chk["rhs"], "rel_diff": chk["rel_diff"],
                                 "trend": chk["trend"], "verdict": chk["verdict"], "levels": chk["levels"]}
    return {"thermo.json": render_json(scenario, report)}


def run_compare(scenario: Scenario) -> dict:
    knobs = scenario.knobs("compare")
    for key in ("reference", "candidate"):
        if key not in knobs:
            raise ConfigError(f"[compare] needs {key!r}", key=key)
    column = knobs.get("column", "e_kin")
    base = Path(scenario.source).parent if scenario.source else Path(".")
    a = ReferenceCurve.from_csv(base / knobs["reference"], column, label=knobs["reference"])
    b = ReferenceCurve.from_csv(base / knobs["candidate"], column, label=knobs["candidate"])
    return {"compare.json": render_json(scenario, {"column": column, **compare(a, b)})}


RUNNERS = {
    "formation": run_formation,
    "levinson": run_levinson,
    "qp": run_qp,
    "shifts": run_shifts,
    "nlcollide": run_nlcollide,
    "thermo": run_thermo,
    "compare": run_compare,
}


def run(subcommand: str, scenario: Scenario, **overrides) -> dict:
    runner = RUNNERS[subcommand]
    return runner(scenario, overrides) if subcommand == "levinson" else runner(scenario)
