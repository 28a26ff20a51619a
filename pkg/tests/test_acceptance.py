"""Acceptance suite: every criterion at its stated tolerance, one printed
pass/fail line per criterion.

The sweeps run once per session (shared fixtures); the 2D magnetic sweep is
the long pole.  A persistent ground-state cache directory can be supplied
through SOLIDYN_CACHE to skip re-solving across sessions.
"""

import os
import time

import numpy as np
import pytest

from solidyn.classical import ClassicalState
from solidyn.evolution import EvolutionConfig, evolve
from solidyn.grid import SpectralGrid, h1_norm_sq_arr, l2_norm_sq_arr
from solidyn.ground_state import (NonlinearityParams, closed_form_profile,
                                  solve_ground_state_canonical,
                                  system_residual, system_residual_arr)
from solidyn.harness import (SweepSpec, build_scenario, fit_slopes,
                             obtain_ground_state, run_scenario)

EPS_SWEEP = (0.2, 0.1, 0.05, 0.025)


def _report(criterion: str, ok: bool, detail: str = ""):
    marker = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {criterion}: {marker}" + (f"  [{detail}]" if detail else ""))
    assert ok, f"{criterion}: {detail}"


def _cache_dir(tmp_path_factory):
    env = os.environ.get("SOLIDYN_CACHE")
    if env:
        os.makedirs(env, exist_ok=True)
        return env
    return str(tmp_path_factory.mktemp("gs_cache"))


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return _cache_dir(tmp_path_factory)


def _sweep(name, tmp_path_factory, cache, epsilons=EPS_SWEEP, overrides=None):
    out = tmp_path_factory.mktemp(f"run_{name}")
    spec = SweepSpec(scenario=name, epsilons=epsilons,
                     overrides=overrides or {})
    return run_scenario(spec, out, cache_dir=cache)


@pytest.fixture(scope="session")
def harmonic_run(tmp_path_factory, cache_dir):
    return _sweep("harmonic", tmp_path_factory, cache_dir)


@pytest.fixture(scope="session")
def hartree_run(tmp_path_factory, cache_dir):
    return _sweep("hartree1d", tmp_path_factory, cache_dir)


@pytest.fixture(scope="session")
def magnetic_run(tmp_path_factory, cache_dir):
    return _sweep("magnetic2d", tmp_path_factory, cache_dir)


@pytest.fixture(scope="session")
def coupled_run(tmp_path_factory, cache_dir):
    return _sweep("coupled2", tmp_path_factory, cache_dir)


@pytest.fixture(scope="session")
def free_run(tmp_path_factory, cache_dir):
    return _sweep("free", tmp_path_factory, cache_dir)


def _summaries(result):
    assert not result.partial, \
        f"sweep {result.scenario.name} had failed members"
    return {eps: result.members[eps].summary for eps in result.epsilons}


# ---------------------------------------------------------------------------
# criterion 1: ground-state oracle
# ---------------------------------------------------------------------------

def test_criterion_1_ground_state_oracle():
    grid = SpectralGrid(1, 40.0, 1024)
    t0 = time.time()
    ok = True
    details = []
    for p in (0.5, 1.0):
        params = NonlinearityParams.create(1, p)
        exact = closed_form_profile(grid, p)[None]
        res_exact = system_residual_arr(exact, params, grid)
        gs = solve_ground_state_canonical(params, grid, tol=1e-9)
        err = np.sqrt(h1_norm_sq_arr(grid, gs.profile - exact))
        details.append(f"p={p}: H1={err:.2e} closed-form-res={res_exact:.2e}")
        ok &= err < 1e-5 and res_exact < 1e-8 and system_residual(gs) < 1e-6
    runtime = time.time() - t0
    ok &= runtime < 30.0
    _report("1 ground-state oracle", ok,
            "; ".join(details) + f"; runtime={runtime:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: conservation
# ---------------------------------------------------------------------------

def test_criterion_2_mass_conservation(harmonic_run, hartree_run,
                                       magnetic_run, coupled_run, free_run):
    worst = 0.0
    for run in (harmonic_run, hartree_run, magnetic_run, coupled_run,
                free_run):
        for eps, summ in _summaries(run).items():
            worst = max(worst, summ["mass_drift"])
    _report("2a mass conservation (all scenarios)", worst < 1e-10,
            f"max per-component relative drift {worst:.3e}")


def test_criterion_2_energy_drift_order(cache_dir, tmp_path_factory):
    # n=1024 member at eps=0.05 within the runtime budget, then dt halving
    overrides = dict(npts=1024, extent=128.0, history_stride=0)
    scenario = build_scenario("harmonic", overrides)
    gs = obtain_ground_state(scenario, cache_dir)

    def drift(dt):
        cl0 = ClassicalState(position=[scenario.x0_macro[0] / 0.05],
                             velocity=[0.0], time=0.0, epsilon=0.05)
        drifts = []

        def watch(st, cl):
            from solidyn.diagnostics import total_energy
            split = total_energy(st.field, scenario.potentials(),
                                 scenario.params(), 0.05)
            drifts.append(split.direct_total)
            return None

        cfg = EvolutionConfig(epsilon=0.05, dt=dt, t_final=2.0,
                              grid=scenario.grid(),
                              potentials=scenario.potentials(),
                              params=scenario.params(), ground_state=gs,
                              classical0=cl0, observer_stride=200)
        t0 = time.time()
        evolve(cfg, observers=[watch])
        el = time.time() - t0
        return max(abs(d - drifts[0]) for d in drifts) / (1 + abs(drifts[0])), el

    d1, el1 = drift(2e-3)
    d2, _ = drift(1e-3)
    ratio = d1 / d2
    ok = ratio >= 3.5 and el1 < 300.0
    _report("2b energy drift second order in dt", ok,
            f"drift(2e-3)={d1:.3e} drift(1e-3)={d2:.3e} ratio={ratio:.2f} "
            f"runtime={el1:.0f}s")


# ---------------------------------------------------------------------------
# criterion 3: energy expansion (E_eps = E(r) + M H + O(eps^2))
# ---------------------------------------------------------------------------

def test_criterion_3_energy_expansion(harmonic_run, magnetic_run):
    ok = True
    details = []
    for run in (harmonic_run, magnetic_run):
        summs = _summaries(run)
        rep = fit_slopes("estuno0", list(summs), [s["estuno0"]
                                                  for s in summs.values()],
                         floor=1e-11)
        details.append(f"{run.scenario.name}: slope={rep.slope:.3f}")
        ok &= rep.slope >= 1.7
    _report("3 energy expansion slope >= 1.7", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# criterion 4: initial-datum lemmas
# ---------------------------------------------------------------------------

def test_criterion_4_initial_datum(harmonic_run):
    summs = _summaries(harmonic_run)
    rep = fit_slopes("omega0", list(summs),
                     [s["omega0"] for s in summs.values()], floor=1e-11)
    quad = harmonic_run.quadrature
    pote = fit_slopes("pote", quad["epsilons"], quad["pote_gauss"], 1e-14)
    pphi = fit_slopes("potephi", quad["epsilons"], quad["potephi_gauss"], 1e-14)
    ok = rep.slope >= 1.7 and pote.slope >= 1.9 and pphi.slope >= 1.9
    _report("4 initial-datum lemmas", ok,
            f"Omega(0) slope={rep.slope:.3f}, pote={pote.slope:.3f}, "
            f"potePhi={pphi.slope:.3f}")


# ---------------------------------------------------------------------------
# criterion 5: density/momentum identities
# ---------------------------------------------------------------------------

def test_criterion_5_identities(harmonic_run, free_run):
    ok = True
    details = []
    # stride-halving convergence on the harmonic scenario
    for eps, summ in _summaries(harmonic_run).items():
        ident = summ["identity"]
        spans = sorted(int(k) for k in ident)
        if len(spans) < 3:
            ok = False
            details.append(f"eps={eps}: missing spans")
            continue
        dts = [ident[str(s)]["span_dt"] for s in spans]
        for key in ("max_momentum", "max_continuity"):
            vals = [ident[str(s)][key] for s in spans]
            slope = np.polyfit(np.log(dts), np.log(vals), 1)[0]
            ok &= slope >= 1.8
            if eps == min(_summaries(harmonic_run)):
                details.append(f"{key} order={slope:.2f}")
    # free case: total momentum constant
    mom = max(s["momentum_drift"] for s in _summaries(free_run).values())
    ok &= mom < 1e-8
    details.append(f"free momentum drift={mom:.2e}")
    _report("5 identity suite", ok, "; ".join(details))


def test_free_scenario_exact_translation(free_run):
    # no forcing: the soliton is exact up to scheme error for every eps
    worst = max(max(s["sup_error_h1"]) for s in _summaries(free_run).values())
    _report("free-scenario exactness (supporting example)", worst < 1e-5,
            f"max error_h1 over eps {worst:.3e}")


# ---------------------------------------------------------------------------
# criterion 6: main theorem, conclusion 2 (modulus tracking at rate eps)
# ---------------------------------------------------------------------------

def test_criterion_6_modulus_tracking(harmonic_run):
    summs = _summaries(harmonic_run)
    m = len(next(iter(summs.values()))["sup_error_modulus"])
    ok = True
    details = []
    for j in range(m):
        rep = fit_slopes(f"err_mod_c{j+1}", list(summs),
                         [s["sup_error_modulus"][j] for s in summs.values()],
                         floor=1e-7)
        details.append(f"component {j+1}: slope={rep.slope:.3f}")
        ok &= 0.8 <= rep.slope <= 1.3
    runtime = sum(s["runtime_sec"] for s in summs.values())
    ok &= runtime < 3600.0
    _report("6 modulus tracking slope in [0.8, 1.3]", ok,
            "; ".join(details) + f"; sweep runtime={runtime:.0f}s")


# ---------------------------------------------------------------------------
# criterion 7: main theorem, conclusion 1 with small A
# ---------------------------------------------------------------------------

def test_criterion_7_magnetic_tracking(magnetic_run):
    import json
    summs = _summaries(magnetic_run)
    rep = fit_slopes("err_h1", list(summs),
                     [max(s["sup_error_h1"]) for s in summs.values()],
                     floor=1e-7)
    mis = fit_slopes("eps_mismatch", list(summs),
                     [s["sup_eps_center_mismatch"] for s in summs.values()],
                     floor=1e-9)
    with open(os.path.join(magnetic_run.out_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    a_c2 = manifest["policies"]["A_c2_norm_estimate"]
    ok = (0.8 <= rep.slope <= 1.3) and mis.slope >= 1.7 and \
        0.005 <= a_c2 <= 0.1
    _report("7 magnetic tracking", ok,
            f"err_h1 slope={rep.slope:.3f}, |eps(y-x)| slope={mis.slope:.3f}, "
            f"||A||_C2~{a_c2:.3f}")


# ---------------------------------------------------------------------------
# criterion 8: Omega-hat control and T* monitor
# ---------------------------------------------------------------------------

def test_criterion_8_omega_control(harmonic_run, hartree_run):
    ok = True
    details = []
    for run in (harmonic_run, hartree_run):
        summs = _summaries(run)
        rep = fit_slopes("sup_omega_hat", list(summs),
                         [s["sup_omega_hat"] for s in summs.values()],
                         floor=1e-9)
        details.append(f"{run.scenario.name}: slope={rep.slope:.3f}")
        ok &= rep.slope >= 1.7
        for eps, summ in summs.items():
            if eps <= 0.1:
                ok &= not summ["t_star_violated"]
                if summ["t_star_violated"]:
                    details.append(f"{run.scenario.name} eps={eps}: "
                                   f"sigma0 violated at t={summ['t_star']}")
    _report("8 Omega-hat slope >= 1.7 and T* monitor", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# criterion 9: inequality suite
# ---------------------------------------------------------------------------

def test_criterion_9_inequalities(harmonic_run, hartree_run, magnetic_run,
                                  coupled_run, free_run):
    ok = True
    details = []
    for run in (harmonic_run, hartree_run, magnetic_run, coupled_run,
                free_run):
        for eps, s in _summaries(run).items():
            checks = (
                s["min_diamagnetic_margin"] >= -1e-10,
                s["min_momentum_cs_margin"] >= -1e-12,
                s["min_kinetic_margin"] >= -1e-10,
                s["max_split_recombination"] < 1e-10,
                s["min_energy_gap"] >= -1e-9,
            )
            if not all(checks):
                ok = False
                details.append(f"{run.scenario.name} eps={eps}: {checks}")
    _report("9 inequality suite (zero violations)", ok,
            "; ".join(details) if details else "all snapshots clean")


# ---------------------------------------------------------------------------
# criterion 10: coupled two-component runs
# ---------------------------------------------------------------------------

def test_criterion_10_coupled(coupled_run):
    summs = _summaries(coupled_run)
    ok = True
    details = []
    worst_mass = max(s["mass_drift"] for s in summs.values())
    ok &= worst_mass < 1e-10
    for j in range(2):
        rep = fit_slopes(f"err_mod_c{j+1}", list(summs),
                         [s["sup_error_modulus"][j] for s in summs.values()],
                         floor=1e-7)
        ok &= 0.8 <= rep.slope <= 1.3
        details.append(f"c{j+1} slope={rep.slope:.3f}")
    _report("10a coupled run: conservation + per-component tracking", ok,
            f"mass drift={worst_mass:.2e}; " + "; ".join(details))


def test_criterion_10_decoupled_limit(cache_dir):
    # gamma12 = 0: each component must reproduce the corresponding scalar
    # run to 1e-8 (identical datum, trap and grid)
    eps, t_final = 0.1, 5.0
    base = dict(npts=2560, extent=160.0, t_final_fixed=t_final,
                observer_stride=10 ** 9, history_stride=0)
    coupled = build_scenario("coupled2", dict(base, gamma12=0.0))
    gs_c = obtain_ground_state(coupled, cache_dir)
    cl0 = ClassicalState(position=[coupled.x0_macro[0] / eps],
                         velocity=[0.0], time=0.0, epsilon=eps)
    cfg = EvolutionConfig(epsilon=eps, dt=coupled.dt, t_final=t_final,
                          grid=coupled.grid(),
                          potentials=coupled.potentials(),
                          params=coupled.params(), ground_state=gs_c,
                          classical0=cl0, observer_stride=10 ** 9)
    final_c, _ = evolve(cfg)

    worst = 0.0
    for j, alpha in enumerate(coupled.alpha):
        scalar = build_scenario("harmonic", dict(base, alpha=(alpha,)))
        gs_s = obtain_ground_state(scalar, cache_dir)
        cfg_s = EvolutionConfig(epsilon=eps, dt=scalar.dt, t_final=t_final,
                                grid=scalar.grid(),
                                potentials=scalar.potentials(),
                                params=scalar.params(), ground_state=gs_s,
                                classical0=cl0, observer_stride=10 ** 9)
        final_s, _ = evolve(cfg_s)
        diff = np.sqrt(l2_norm_sq_arr(
            coupled.grid(), final_c.field.data[j] - final_s.field.data[0]))
        worst = max(worst, diff)
    _report("10b decoupled limit matches scalar runs", worst < 1e-8,
            f"max L2 difference {worst:.3e}")
