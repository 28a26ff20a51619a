"""Scenario catalog, eps-sweep orchestration, slope fitting and reports.

A scenario is a named preset fixing the problem class (potentials,
couplings, datum, grid, step sizes); a sweep runs it for a descending list
of eps values with the horizon T0/eps, collects per-snapshot diagnostics,
and fits log-log slopes of the headline quantities against eps.

The box is an envelope grid sized once for the most demanding (smallest
eps) member, so the ground state, the chi cutoff and the test dictionary
are shared by every member of a sweep; this realizes the extent-growth
refinement rule uniformly and is recorded in the manifest.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import time
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__ as _pkg_version
from .classical import (ClassicalState, Trajectory, hamiltonian,
                        solve_trajectory, write_trajectory_csv)
from .diagnostics import (DiagnosticsEngine, build_test_dictionary,
                          identity_residuals, quadrature_pote,
                          quadrature_pote_phi)
from .errors import ConfigError, InsufficientDataError, SolidynError
from .evolution import EvolutionConfig, FieldState, evolve
from .grid import SpectralGrid
from .ground_state import (GroundState, NonlinearityParams,
                           solve_ground_state_canonical)
from .potentials import (PotentialSet, c2_norm_estimate, constant_potential,
                         gaussian_bump, gaussian_kernel, gaussian_rotation_2d,
                         zero_vector_potential)

DEFAULT_EPSILONS = (0.2, 0.1, 0.05, 0.025)
SIGMA0_DEFAULT = 0.1
WORKERS_ENV = "SOLIDYN_WORKERS"


# ---------------------------------------------------------------------------
# scenario catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """A fully resolved preset: every number a run needs."""

    name: str
    dim: int
    extent: float
    npts: int
    dt: float
    t0: float                      # horizon constant; t_final = t0 / eps
    t_final_fixed: float | None    # fixed horizon (overrides t0/eps)
    x0_macro: tuple                # initial macro position x_0
    xi0: tuple                     # initial velocity
    observer_stride: int
    history_stride: int            # 0 disables the identity-residual stream
    m: int = 1
    p: float = 1.0
    alpha: tuple = (1.0,)
    gamma12: float = 0.0
    beta: tuple = (0.0,)
    kernel_sigma: float = 2.0
    kernel_amp: float = 0.0        # 0 disables the nonlocal kernel
    trap_depth: float = 1.0        # V = (1 + depth) - depth exp(-|z-c|^2/2w^2)
    trap_width: float = 1.0
    trap_center: tuple = (0.0,)
    v_constant: float | None = None   # constant V instead of the trap
    b_field: float = 0.0           # gaussian-rotation A strength (2D)
    a_sigma: float = 4.0
    gs_tol: float = 1e-9
    sigma0: float = SIGMA0_DEFAULT

    def grid(self) -> SpectralGrid:
        return SpectralGrid(self.dim, self.extent, self.npts)

    def params(self) -> NonlinearityParams:
        gamma = np.zeros((self.m, self.m))
        if self.m > 1:
            gamma[0, 1] = gamma[1, 0] = self.gamma12
        return NonlinearityParams.create(
            self.m, self.p, alpha=self.alpha, gamma=gamma, beta=self.beta)

    def potentials(self) -> PotentialSet:
        if self.v_constant is not None:
            v = constant_potential(self.dim, self.v_constant)
        else:
            # bounded anharmonic trap, locally harmonic at the well bottom;
            # a literal quadratic would violate the C^3-boundedness the
            # estimates assume (and its exact Ehrenfest property hides the
            # generic O(eps) tracking rate)
            v = gaussian_bump(self.dim, 1.0 + self.trap_depth,
                              -self.trap_depth, self.trap_width,
                              center=self.trap_center)
        if self.b_field != 0.0:
            if self.dim != 2:
                raise ConfigError("b_field requires a 2D scenario")
            a = gaussian_rotation_2d(self.b_field, self.a_sigma)
        else:
            a = zero_vector_potential(self.dim)
        phi = (gaussian_kernel(self.dim, self.kernel_sigma, self.kernel_amp)
               if self.kernel_amp > 0 else None)
        return PotentialSet(V=v, A=a, Phi=phi)

    def t_final(self, eps: float) -> float:
        return self.t_final_fixed if self.t_final_fixed is not None else self.t0 / eps


_CATALOG = {
    # Class I: scalar, A=0, Phi=0, constant V (free translation); the
    # whole t=5 error budget is scheme error, hence the smaller dt
    "free": dict(dim=1, extent=160.0, npts=2560, dt=5e-4, t0=1.0,
                 t_final_fixed=5.0, x0_macro=(0.0,), xi0=(np.pi / 8,),
                 observer_stride=200, history_stride=20, v_constant=1.0),
    # Class I: scalar in the anharmonic trap (the headline theorem runs)
    "harmonic": dict(dim=1, extent=160.0, npts=2560, dt=1e-3, t0=1.0,
                     t_final_fixed=None, x0_macro=(0.4,), xi0=(0.0,),
                     observer_stride=100, history_stride=10),
    # Class III flavor: trap + Hartree channel (the local term stays on:
    # the elliptic profile system needs it to have a nontrivial soliton)
    "hartree1d": dict(dim=1, extent=160.0, npts=2560, dt=1e-3, t0=1.0,
                      t_final_fixed=None, x0_macro=(0.4,), xi0=(0.0,),
                      observer_stride=100, history_stride=10,
                      beta=(1.0,), kernel_amp=1.0, kernel_sigma=2.0),
    # Class II: 2D scalar with a small bounded magnetic potential
    "magnetic2d": dict(dim=2, extent=88.0, npts=384, dt=2e-3, t0=0.5,
                       t_final_fixed=None, x0_macro=(0.0, 0.0),
                       xi0=(0.0, 0.0), observer_stride=25, history_stride=0,
                       p=0.5, trap_center=(0.15, 0.0), b_field=0.025,
                       gs_tol=1e-8),
    # Class IV: magnetic + Hartree (catalog preset; not in the headline suite)
    "magnetic_hartree2d": dict(dim=2, extent=88.0, npts=384, dt=2e-3, t0=0.5,
                               t_final_fixed=None, x0_macro=(0.0, 0.0),
                               xi0=(0.0, 0.0), observer_stride=25,
                               history_stride=0, p=0.5,
                               trap_center=(0.15, 0.0), b_field=0.025,
                               beta=(1.0,), kernel_amp=1.0, kernel_sigma=2.0,
                               gs_tol=1e-8),
    # Class V: two weakly coupled components, Phi = 0
    "coupled2": dict(dim=1, extent=160.0, npts=2560, dt=1e-3, t0=1.0,
                     t_final_fixed=None, x0_macro=(0.4,), xi0=(0.0,),
                     observer_stride=100, history_stride=10,
                     m=2, alpha=(1.0, 1.2), gamma12=0.1, beta=(0.0, 0.0)),
}


def scenario_names():
    return sorted(_CATALOG)


def build_scenario(name: str, overrides: dict | None = None) -> Scenario:
    if name not in _CATALOG:
        raise ConfigError(f"unknown scenario {name!r}; catalog: {scenario_names()}")
    cfg = dict(_CATALOG[name])
    if overrides:
        unknown = set(overrides) - set(Scenario.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario overrides: {sorted(unknown)}")
        cfg.update(overrides)
    return Scenario(name=name, **cfg)


@dataclass(frozen=True)
class SweepSpec:
    """What to run: scenario preset, eps list, seed, optional overrides."""

    scenario: str
    epsilons: tuple = DEFAULT_EPSILONS
    seed: int = 12345
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.epsilons) == 0:
            raise ConfigError("epsilon list must not be empty")
        eps = tuple(float(e) for e in self.epsilons)
        if any(e <= 0 for e in eps):
            raise ConfigError("epsilons must be positive")
        if list(eps) != sorted(eps, reverse=True):
            raise ConfigError("epsilons must be descending")
        object.__setattr__(self, "epsilons", eps)

    def validate_for_slopes(self):
        if len(self.epsilons) < 3:
            raise ConfigError("slope fits need at least 3 eps values")


# ---------------------------------------------------------------------------
# config files (INI sections mirror the documented keys)
# ---------------------------------------------------------------------------

_OVERRIDE_SECTIONS = {
    "grid": {"npts": int, "extent": float, "dt": float},
    "potentials": {"trap_depth": float, "trap_width": float,
                   "b_field": float, "a_sigma": float, "v_constant": float,
                   "kernel_sigma": float, "kernel_amp": float},
    "nonlinearity": {"p": float, "gamma12": float},
    "datum": {},     # x0 / xi0 handled as comma lists below
    "diagnostics": {"observer_stride": int, "history_stride": int,
                    "sigma0": float, "gs_tol": float},
}


def load_config(path) -> SweepSpec:
    """Read a sweep spec from structured text with sections
    [sweep], [grid], [potentials], [nonlinearity], [datum], [diagnostics]."""
    import configparser

    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if "sweep" not in cp or "scenario" not in cp["sweep"]:
        raise ConfigError("config needs a [sweep] section with scenario=")
    sweep = cp["sweep"]
    scenario = sweep.get("scenario")
    if scenario not in _CATALOG:
        raise ConfigError(f"unknown scenario {scenario!r} in config")
    epsilons = tuple(float(tok) for tok in
                     sweep.get("epsilons", "").replace(",", " ").split()) \
        or DEFAULT_EPSILONS
    seed = int(sweep.get("seed", "12345"))
    overrides = {}
    if "t0" in sweep:
        overrides["t0"] = float(sweep["t0"])
    if "t_final" in sweep:
        overrides["t_final_fixed"] = float(sweep["t_final"])
    for section, keys in _OVERRIDE_SECTIONS.items():
        if section not in cp:
            continue
        for key, conv in keys.items():
            if key in cp[section]:
                overrides[key] = conv(cp[section][key])
    if "datum" in cp:
        for key, name in (("x0", "x0_macro"), ("xi0", "xi0")):
            if key in cp["datum"]:
                overrides[name] = tuple(
                    float(tok) for tok in
                    cp["datum"][key].replace(",", " ").split())
    return SweepSpec(scenario=scenario, epsilons=epsilons, seed=seed,
                     overrides=overrides)


# ---------------------------------------------------------------------------
# slope fitting
# ---------------------------------------------------------------------------

@dataclass
class SlopeReport:
    quantity: str
    epsilons: list
    values: list
    slope: float
    intercept: float
    fit_residual: float
    used: list                  # eps actually fitted (above the floor)
    floor: float
    monotone: bool

    def format_lines(self):
        out = [f"quantity={self.quantity} slope={self.slope:.4f} "
               f"intercept={self.intercept:.4f} residual={self.fit_residual:.3e} "
               f"n_used={len(self.used)} floor={self.floor:.3e} "
               f"monotone={'yes' if self.monotone else 'NO'}"]
        for e, v in zip(self.epsilons, self.values):
            tag = "" if e in self.used else "   (below floor, excluded)"
            out.append(f"  eps={e:<8g} value={v:.12e}{tag}")
        return out


def fit_slopes(quantity: str, epsilons, values, floor: float = 0.0) -> SlopeReport:
    """Least squares on (log eps, log value), using only points above
    10x the estimated discretization floor; flags non-monotone data."""
    epsilons = [float(e) for e in epsilons]
    values = [float(v) for v in values]
    pairs = [(e, v) for e, v in zip(epsilons, values) if v > 10.0 * floor]
    if len(pairs) < 3:
        raise InsufficientDataError(
            f"{quantity}: only {len(pairs)} of {len(values)} points above "
            f"10x floor {floor:.3e}")
    le = np.log([p[0] for p in pairs])
    lv = np.log([p[1] for p in pairs])
    coef, res_arr, *_ = np.polyfit(le, lv, 1, full=True)
    slope, intercept = float(coef[0]), float(coef[1])
    fit_res = float(res_arr[0]) if len(res_arr) else 0.0
    ordered = [v for _, v in sorted(pairs, key=lambda p: -p[0])]
    monotone = all(a >= b for a, b in zip(ordered, ordered[1:]))
    return SlopeReport(quantity=quantity, epsilons=epsilons, values=values,
                       slope=slope, intercept=intercept, fit_residual=fit_res,
                       used=[p[0] for p in pairs], floor=floor,
                       monotone=monotone)


# ---------------------------------------------------------------------------
# streaming identity-residual tracker
# ---------------------------------------------------------------------------

class IdentityTracker:
    """Observer retaining a short window of snapshots at a fixed stride and
    evaluating the density/momentum identity residuals at stencil spans
    (1, 2, 4) on the same stream (the stride-halving study)."""

    SPANS = (1, 2, 4)

    def __init__(self, potentials, params, epsilon, stride_steps, dt,
                 eval_every: int = 2):
        self.potentials = potentials
        self.params = params
        self.epsilon = epsilon
        self.stride = stride_steps
        self.dt_sample = stride_steps * dt
        self.eval_every = max(1, eval_every)
        self.window = deque(maxlen=2 * max(self.SPANS) + 1)
        self.n_samples = 0
        self.results = {s: [] for s in self.SPANS}
        self.warned_coarse = self.dt_sample > 10.0 * dt

    def __call__(self, field_state: FieldState, classical: ClassicalState):
        if field_state.step_index % self.stride != 0:
            return None
        self.window.append(field_state)
        self.n_samples += 1
        if self.n_samples % self.eval_every != 0:
            return None
        for span in self.SPANS:
            if len(self.window) < 2 * span + 1:
                continue
            center = len(self.window) - 1 - span
            triple = [self.window[center - span], self.window[center],
                      self.window[center + span]]
            res = identity_residuals(triple, self.potentials, self.params,
                                     self.epsilon, span=1)
            if res:
                self.results[span].append(res[0])
        return None

    def summary(self):
        out = {}
        for span in self.SPANS:
            rows = self.results[span]
            if not rows:
                continue
            out[str(span)] = {
                "span_dt": rows[0].span_dt,
                "max_continuity": max(float(np.max(r.continuity)) for r in rows),
                "max_momentum": max(r.momentum for r in rows),
                "n_samples": len(rows),
            }
        return out


# ---------------------------------------------------------------------------
# sweep execution
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    return f"{float(v):.17g}"


def write_diagnostics_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(records[0].header())
        for rec in records:
            w.writerow(_fmt(v) for v in rec.row())


def ground_state_cache_key(scenario: Scenario) -> str:
    payload = json.dumps({
        "dim": scenario.dim, "extent": scenario.extent, "npts": scenario.npts,
        "m": scenario.m, "p": scenario.p, "alpha": list(scenario.alpha),
        "gamma12": scenario.gamma12, "tol": scenario.gs_tol,
    }, sort_keys=True)
    return hashlib.sha1(payload.encode()).hexdigest()[:16]


def obtain_ground_state(scenario: Scenario, cache_dir=None) -> GroundState:
    """Solve (or load a cached) canonical ground state for the scenario."""
    key = ground_state_cache_key(scenario)
    path = None
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        path = os.path.join(cache_dir, f"gs_{key}.npz")
        if os.path.exists(path):
            return GroundState.load(path)
    gs = solve_ground_state_canonical(scenario.params(), scenario.grid(),
                                      tol=scenario.gs_tol)
    if path is not None:
        gs.save(path)
    return gs


def predicted_plateau(scenario: Scenario, epsilons) -> float:
    """chi plateau: twice the largest predicted |eps x_eps(t)| over the whole
    sweep plus a soliton-tail margin (10 amplitude e-foldings, so the
    cutoff-mass criterion 1e-10 has headroom)."""
    params = scenario.params()
    pots = scenario.potentials()
    maxc = 0.0
    for eps in epsilons:
        state0 = ClassicalState(position=np.asarray(scenario.x0_macro) / eps,
                                velocity=np.asarray(scenario.xi0),
                                time=0.0, epsilon=eps)
        t_final = scenario.t_final(eps)
        n = max(1, int(round(t_final / 0.01)))
        traj = solve_trajectory(state0, pots, params, np.ones(scenario.m),
                                dt=t_final / n, n_steps=n)
        maxc = max(maxc, traj.max_abs_macro_position())
    margin = max(0.5, 10.0 * max(epsilons))
    return 2.0 * maxc + margin


@dataclass
class MemberResult:
    eps: float
    ok: bool
    error: str = ""
    error_category: str = ""
    summary: dict = field(default_factory=dict)


def run_member(scenario_name: str, overrides: dict, eps: float,
               gs_path: str, plateau: float, out_dir: str,
               seed: int) -> MemberResult:
    """One sweep member: classical trajectory, evolution with diagnostics,
    CSV output, summary json.  Importable at module level so a process
    pool can execute members in parallel."""
    t_start = time.time()
    scenario = build_scenario(scenario_name, overrides)
    try:
        gs = GroundState.load(gs_path)
        grid = scenario.grid()
        params = scenario.params()
        pots = scenario.potentials()
        state0 = ClassicalState(position=np.asarray(scenario.x0_macro) / eps,
                                velocity=np.asarray(scenario.xi0),
                                time=0.0, epsilon=eps)
        t_final = scenario.t_final(eps)

        engine = DiagnosticsEngine(grid, pots, params, gs, eps,
                                   chi_plateau=plateau,
                                   trust=scenario.sigma0,
                                   stride=scenario.observer_stride)
        observers = [engine]
        tracker = None
        notify_stride = scenario.observer_stride
        if scenario.history_stride > 0:
            tracker = IdentityTracker(pots, params, eps,
                                      scenario.history_stride, scenario.dt)
            observers.append(tracker)
            notify_stride = int(np.gcd(scenario.observer_stride,
                                       scenario.history_stride))

        config = EvolutionConfig(
            epsilon=eps, dt=scenario.dt, t_final=t_final, grid=grid,
            potentials=pots, params=params, ground_state=gs,
            classical0=state0, observer_stride=notify_stride)
        final_state, records = evolve(config, observers=observers)

        # classical trajectory for export (same axis, coarse stride)
        if t_final > 0:
            n_cl = max(1, int(round(t_final / max(scenario.dt, 1e-3))))
            traj = solve_trajectory(state0, pots, params, gs.masses,
                                    dt=t_final / n_cl, n_steps=n_cl)
        else:
            traj = solve_trajectory(state0, pots, params, gs.masses,
                                    dt=1e-3, n_steps=0)
        write_trajectory_csv(
            traj, os.path.join(out_dir, f"classical_eps{eps:g}.csv"),
            stride=max(1, len(traj.times) // 400))
        write_diagnostics_csv(
            records, os.path.join(out_dir, f"diag_eps{eps:g}.csv"))
        np.savez(os.path.join(out_dir, f"field_final_eps{eps:g}.npz"),
                 data=final_state.field.data, time=final_state.time,
                 eps=eps)

        summary = summarize_records(records, scenario, gs, eps)
        summary["runtime_sec"] = time.time() - t_start
        summary["hamiltonian_drift"] = float(np.max(np.abs(
            traj.h_total - traj.h_total[0]))) / (1.0 + abs(traj.h_total[0]))
        if tracker is not None:
            summary["identity"] = tracker.summary()
            summary["identity_warned_coarse"] = tracker.warned_coarse
        with open(os.path.join(out_dir, f"member_eps{eps:g}.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        return MemberResult(eps=eps, ok=True, summary=summary)
    except SolidynError as exc:
        return MemberResult(eps=eps, ok=False, error=str(exc),
                            error_category=exc.category)


def summarize_records(records, scenario: Scenario, gs: GroundState,
                      eps: float) -> dict:
    """Reduce a record stream to the per-member scalars the criteria use."""
    r0 = records[0]
    m = len(r0.masses)

    def sup(fn):
        return max(fn(r) for r in records)

    t_star = records[-1].time
    violated = False
    for r in records:
        if r.omega > scenario.sigma0 or r.gamma_dist > scenario.sigma0:
            t_star = r.time
            violated = True
            break

    mass_drift = sup(lambda r: float(np.max(np.abs(r.masses - r0.masses)
                                            / r0.masses)))
    e_scale = 1.0 + abs(r0.energy_total)
    return {
        "eps": eps,
        "t_final": records[-1].time,
        "n_records": len(records),
        "sup_error_h1": [sup(lambda r, j=j: float(r.error_h1[j]))
                         for j in range(m)],
        "sup_error_modulus": [sup(lambda r, j=j: float(r.error_modulus[j]))
                              for j in range(m)],
        "sup_omega_hat": sup(lambda r: r.omega_hat),
        "sup_omega": sup(lambda r: r.omega),
        "sup_gamma_dist": sup(lambda r: r.gamma_dist),
        "sup_eps_center_mismatch": eps * sup(lambda r: r.center_mismatch),
        "omega0": r0.omega,
        "estuno0": abs(r0.energy_total - gs.energy
                       - gs.total_mass * r0.hamiltonian_total),
        "mass_drift": mass_drift,
        "energy_drift": sup(lambda r: abs(r.energy_total - r0.energy_total)) / e_scale,
        "momentum_drift": sup(lambda r: float(np.linalg.norm(
            r.momentum_total - r0.momentum_total))),
        "t_star": t_star,
        "t_star_violated": violated,
        "min_diamagnetic_margin": min(r.diamagnetic_margin for r in records),
        "min_momentum_cs_margin": min(r.momentum_cs_margin for r in records),
        "min_kinetic_margin": min(r.kinetic_bound_margin for r in records),
        "max_split_recombination": sup(lambda r: r.split_recombination),
        "min_energy_gap": min(r.energy_gap for r in records),
        "n_fit_flagged": sum(int(r.fit_flagged) for r in records),
    }


# quantities whose eps-slopes are fitted, with conservative floor estimates
HEADLINE_FLOORS = {
    "sup_error_h1": 1e-7,
    "sup_error_modulus": 1e-7,
    "sup_omega_hat": 1e-9,
    "sup_omega": 1e-9,
    "omega0": 1e-11,
    "estuno0": 1e-11,
    "sup_eps_center_mismatch": 1e-9,
}


@dataclass
class RunResult:
    out_dir: str
    scenario: Scenario
    epsilons: tuple
    members: dict                 # eps -> MemberResult
    slopes: dict                  # name -> SlopeReport
    quadrature: dict
    partial: bool
    ground_state: GroundState

    def member_summaries(self):
        return {eps: m.summary for eps, m in self.members.items() if m.ok}


def _pool_size(n_tasks: int, workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, min(n_tasks, os.cpu_count() or 1))


def run_scenario(spec: SweepSpec, out_dir, workers=None,
                 cache_dir=None) -> RunResult:
    """Execute a sweep: ground state (cached), per-eps members (worker
    pool, isolated failures), slope fits, reports.  Deterministic given the
    spec and seed."""
    os.makedirs(out_dir, exist_ok=True)
    scenario = build_scenario(spec.scenario, spec.overrides)
    grid = scenario.grid()
    pots = scenario.potentials()
    pots.validate_on_box(0.5 * grid.extent * max(spec.epsilons))

    gs = obtain_ground_state(scenario, cache_dir)
    gs_path = os.path.join(out_dir, "groundstate.npz")
    gs.save(gs_path)

    plateau = predicted_plateau(scenario, spec.epsilons)
    manifest = build_manifest(spec, scenario, plateau)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    tasks = [(spec.scenario, dict(spec.overrides), eps, gs_path, plateau,
              str(out_dir), spec.seed) for eps in spec.epsilons]
    n_workers = _pool_size(len(tasks), workers)
    members = {}
    if n_workers == 1:
        for task in tasks:
            members[task[2]] = run_member(*task)
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(run_member, *task) for task in tasks]
            for task, fut in zip(tasks, futures):
                members[task[2]] = fut.result()

    for eps, mem in members.items():
        if not mem.ok:
            with open(os.path.join(out_dir, f"member_eps{eps:g}.json"), "w") as fh:
                json.dump({"failed": True, "category": mem.error_category,
                           "error": mem.error}, fh, indent=2, sort_keys=True)
    partial = not all(m.ok for m in members.values())

    quadrature = quadrature_lemma_report(gs, spec.epsilons)
    slopes = compute_slopes(spec, scenario, members, quadrature)

    write_slope_report(slopes, os.path.join(out_dir, "slopes.txt"))
    write_summary(spec, scenario, members, slopes, quadrature, plateau,
                  os.path.join(out_dir, "summary.txt"), partial)
    write_plot_script(spec, scenario, os.path.join(out_dir, "plots.gp"))
    return RunResult(out_dir=str(out_dir), scenario=scenario,
                     epsilons=spec.epsilons, members=members, slopes=slopes,
                     quadrature=quadrature, partial=partial, ground_state=gs)


def quadrature_lemma_report(gs: GroundState, epsilons) -> dict:
    """Concentration-lemma deviations for a Gaussian test function (the
    O(eps^2) claims) plus the trivial constant / windowed-linear cases."""
    dim = gs.grid.dim
    y = np.zeros(dim)
    y[0] = 0.3

    def gauss(z):
        d2 = sum((z[a] - (0.2 if a == 0 else 0.0)) ** 2 for a in range(dim))
        return np.exp(-d2)

    def const(z):
        return np.ones(np.shape(z[0]))

    w = 6.0

    def linear_windowed(z):
        d2 = sum(z[a] ** 2 for a in range(dim))
        return z[0] * np.exp(-0.5 * d2 / w ** 2)

    out = {"epsilons": [float(e) for e in epsilons]}
    out["pote_gauss"] = [float(np.max(row)) for row in
                         quadrature_pote(gs, gauss, y, epsilons)]
    out["pote_const"] = [float(np.max(row)) for row in
                         quadrature_pote(gs, const, y, epsilons)]
    out["pote_linear"] = [float(np.max(row)) for row in
                          quadrature_pote(gs, linear_windowed,
                                          np.zeros(dim), epsilons)]
    out["potephi_gauss"] = [float(np.max(row)) for row in
                            quadrature_pote_phi(gs, gauss, epsilons)]
    return out


def compute_slopes(spec: SweepSpec, scenario: Scenario, members: dict,
                   quadrature: dict) -> dict:
    slopes = {}
    ok = [(eps, members[eps].summary) for eps in spec.epsilons
          if members[eps].ok]
    if len(ok) >= 3:
        eps_list = [e for e, _ in ok]
        for name, floor in HEADLINE_FLOORS.items():
            sample = ok[0][1].get(name)
            if sample is None:
                continue
            if isinstance(sample, list):
                for j in range(len(sample)):
                    key = f"{name}_c{j + 1}"
                    try:
                        slopes[key] = fit_slopes(
                            key, eps_list, [s[name][j] for _, s in ok], floor)
                    except InsufficientDataError:
                        pass
            else:
                try:
                    slopes[name] = fit_slopes(
                        name, eps_list, [s[name] for _, s in ok], floor)
                except InsufficientDataError:
                    pass
        for qname in ("pote_gauss", "potephi_gauss"):
            try:
                slopes[qname] = fit_slopes(qname, quadrature["epsilons"],
                                           quadrature[qname], 1e-14)
            except InsufficientDataError:
                pass
    return slopes


def build_manifest(spec: SweepSpec, scenario: Scenario, plateau: float) -> dict:
    import scipy

    pots = scenario.potentials()
    a_c2 = (c2_norm_estimate(pots.A, 0.5 * scenario.extent * max(spec.epsilons))
            if scenario.b_field != 0.0 else 0.0)
    return {
        "package": {"name": "solidyn", "version": _pkg_version},
        "backends": {"python": sys.version.split()[0],
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "fft": "scipy.fft (pocketfft)"},
        "scenario": asdict(scenario),
        "sweep": {"epsilons": list(spec.epsilons), "seed": spec.seed,
                  "horizon": ("fixed t_final" if scenario.t_final_fixed
                              else "T0/eps"), "T0": scenario.t0},
        "policies": {
            "refinement": "envelope grid shared by all sweep members, sized "
                          "for the smallest eps (extent-growth rule applied "
                          "to the sweep maximum)",
            "chi_plateau": plateau,
            "dictionary": "see diagnostics.DICTIONARY_VERSION",
            "sigma0": scenario.sigma0,
            "A_c2_norm_estimate": a_c2,
        },
    }


def write_slope_report(slopes: dict, path):
    lines = ["# solidyn slope report", ""]
    for name in sorted(slopes):
        lines.extend(slopes[name].format_lines())
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def write_summary(spec, scenario, members, slopes, quadrature, plateau,
                  path, partial):
    lines = [f"scenario={scenario.name} T0={scenario.t0} "
             f"grid=N{scenario.dim} L={scenario.extent} n={scenario.npts} "
             f"dt={scenario.dt} sigma0={scenario.sigma0}",
             f"epsilons={list(spec.epsilons)} seed={spec.seed} "
             f"chi_plateau={plateau:.6g}",
             f"status={'PARTIAL' if partial else 'complete'}", ""]
    for eps in spec.epsilons:
        mem = members[eps]
        if not mem.ok:
            lines.append(f"eps={eps}: FAILED category={mem.error_category} "
                         f"error={mem.error}")
            continue
        s = mem.summary
        lines.append(
            f"eps={eps}: sup|err_mod|={max(s['sup_error_modulus']):.6e} "
            f"sup|err_h1|={max(s['sup_error_h1']):.6e} "
            f"sup_omega_hat={s['sup_omega_hat']:.6e} "
            f"omega0={s['omega0']:.6e} estuno0={s['estuno0']:.6e} "
            f"massdrift={s['mass_drift']:.2e} Edrift={s['energy_drift']:.2e} "
            f"T*={s['t_star']:.6g}{' (violated)' if s['t_star_violated'] else ''}")
    lines.append("")
    for name in sorted(slopes):
        rep = slopes[name]
        lines.append(f"slope {name}: {rep.slope:.4f} "
                     f"(n={len(rep.used)}, monotone="
                     f"{'yes' if rep.monotone else 'NO'})")
    lines.append("")
    lines.append("quadrature lemma max deviations per eps "
                 f"(eps={quadrature['epsilons']}):")
    for key in ("pote_gauss", "pote_const", "pote_linear", "potephi_gauss"):
        vals = " ".join(f"{v:.6e}" for v in quadrature[key])
        lines.append(f"  {key}: {vals}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _records_from_csv(path):
    """Rebuild lightweight record objects from a diagnostics CSV (exact:
    the %.17g formatting round-trips float64)."""
    from types import SimpleNamespace

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    import re

    header, body = rows[0], rows[1:]
    cols = {name: i for i, name in enumerate(header)}
    m = sum(1 for name in header if re.fullmatch(r"mass_\d+", name))
    dim = sum(1 for name in header if re.fullmatch(r"momentum_\d+", name))
    records = []
    for row in body:
        vals = [float(v) for v in row]

        def get(name):
            return vals[cols[name]]

        records.append(SimpleNamespace(
            time=get("time"),
            masses=np.array([get(f"mass_{j+1}") for j in range(m)]),
            energy_total=get("energy_total"),
            hamiltonian_total=get("hamiltonian"),
            momentum_total=np.array([get(f"momentum_{a+1}")
                                     for a in range(dim)]),
            omega_hat=get("omega_hat"), omega=get("omega"),
            gamma_dist=get("gamma_dist"),
            error_h1=np.array([get(f"err_h1_{j+1}") for j in range(m)]),
            error_modulus=np.array([get(f"err_mod_{j+1}") for j in range(m)]),
            center_mismatch=get("center_mismatch"),
            energy_gap=get("energy_gap"),
            diamagnetic_margin=get("diamag_margin"),
            momentum_cs_margin=get("momentum_cs_margin"),
            kinetic_bound_margin=get("kinetic_margin"),
            split_recombination=get("split_recomb"),
            fit_flagged=bool(get("fit_flagged")),
        ))
    return records


def reload_run(out_dir):
    """Reconstruct (spec, scenario, members, quadrature, gs) of a finished
    run directory from its manifest, ground state and per-eps CSVs."""
    with open(os.path.join(out_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    sc = dict(manifest["scenario"])
    name = sc.pop("name")
    for key in ("x0_macro", "xi0", "alpha", "beta", "trap_center"):
        sc[key] = tuple(sc[key])
    scenario = Scenario(name=name, **sc)
    epsilons = tuple(manifest["sweep"]["epsilons"])
    seed = manifest["sweep"]["seed"]
    gs = GroundState.load(os.path.join(out_dir, "groundstate.npz"))
    members = {}
    for eps in epsilons:
        csv_path = os.path.join(out_dir, f"diag_eps{eps:g}.csv")
        if not os.path.exists(csv_path):
            info = {"category": "unknown", "error": "missing member output"}
            jpath = os.path.join(out_dir, f"member_eps{eps:g}.json")
            if os.path.exists(jpath):
                with open(jpath) as fh:
                    info.update(json.load(fh))
            members[eps] = MemberResult(eps=eps, ok=False,
                                        error=info.get("error", ""),
                                        error_category=info.get("category", ""))
            continue
        records = _records_from_csv(csv_path)
        summary = summarize_records(records, scenario, gs, eps)
        members[eps] = MemberResult(eps=eps, ok=True, summary=summary)
    spec = SweepSpec(scenario=name, epsilons=epsilons, seed=seed)
    return spec, scenario, members, gs


def refit(out_dir):
    """Re-derive the slope report from the stored CSVs; idempotent
    (a second invocation reproduces slopes.txt byte for byte)."""
    spec, scenario, members, gs = reload_run(out_dir)
    quadrature = quadrature_lemma_report(gs, spec.epsilons)
    slopes = compute_slopes(spec, scenario, members, quadrature)
    write_slope_report(slopes, os.path.join(out_dir, "slopes.txt"))
    return slopes


def regenerate_report(out_dir):
    """Rebuild summary.txt and the plot script from the stored outputs."""
    spec, scenario, members, gs = reload_run(out_dir)
    quadrature = quadrature_lemma_report(gs, spec.epsilons)
    slopes = compute_slopes(spec, scenario, members, quadrature)
    plateau = predicted_plateau(scenario, spec.epsilons)
    partial = not all(m.ok for m in members.values())
    write_summary(spec, scenario, members, slopes, quadrature, plateau,
                  os.path.join(out_dir, "summary.txt"), partial)
    write_plot_script(spec, scenario, os.path.join(out_dir, "plots.gp"))
    return slopes


def write_plot_script(spec, scenario, path):
    """Plot script in gnuplot grammar; figures are artifacts of the CSVs."""
    eps_list = " ".join(f"{e:g}" for e in spec.epsilons)
    text = f"""# gnuplot script generated by solidyn for scenario {scenario.name}
set datafile separator ','
set logscale y
set key left top
set xlabel 't'
set ylabel 'H1 modulus error'
plot for [e in "{eps_list}"] sprintf('diag_eps%s.csv', e) \\
     using 1:(column('err_mod_1')) with lines title sprintf('eps=%s', e)
pause -1
set logscale xy
set xlabel 'eps'
set ylabel 'sup_t error'
# headline slope data: see slopes.txt; member summaries member_eps*.json
"""
    with open(path, "w") as fh:
        fh.write(text)
