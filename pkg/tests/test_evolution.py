"""Split-step evolution: exactly solvable cases, conservation, splitting
order, gauge covariance and time reversal."""

import numpy as np
import pytest

from solidyn.classical import ClassicalState
from solidyn.errors import DomainTooSmallError, StabilityError
from solidyn.evolution import (EvolutionConfig, FieldState, StepperWorkspace,
                               apply_magnetic_hamiltonian,
                               build_initial_datum, evolve, nonlinear_rhs,
                               step_field)
from solidyn.grid import (SpectralGrid, VectorField, fftn, h1_norm_sq_arr,
                          integrate, l2_norm_sq_arr)
from solidyn.ground_state import (NonlinearityParams, closed_form_profile,
                                  solve_ground_state_canonical)
from solidyn.potentials import (PotentialSet, constant_potential,
                                constant_vector_potential,
                                gaussian_bump, gaussian_kernel,
                                gaussian_vector_potential_1d,
                                zero_vector_potential)


@pytest.fixture(scope="module")
def grid128():
    return SpectralGrid(1, 128.0, 2048)


@pytest.fixture(scope="module")
def params_cubic():
    return NonlinearityParams.create(1, 1.0)


@pytest.fixture(scope="module")
def gs(grid128, params_cubic):
    return solve_ground_state_canonical(params_cubic, grid128, tol=1e-10)


def _free_pots(dim=1, c=1.0):
    return PotentialSet(V=constant_potential(dim, c),
                        A=zero_vector_potential(dim))


def _config(gs, pots, params, eps=0.1, dt=1e-3, t_final=1.0, xc=0.0, xi=0.0,
            **kw):
    cl0 = ClassicalState(position=[xc], velocity=[xi], time=0.0, epsilon=eps)
    return EvolutionConfig(epsilon=eps, dt=dt, t_final=t_final, grid=gs.grid,
                           potentials=pots, params=params, ground_state=gs,
                           classical0=cl0, **kw)


# ---------------------------------------------------------------------------
# initial datum
# ---------------------------------------------------------------------------

def test_datum_at_rest_is_profile(gs):
    cl0 = ClassicalState(position=[0.0], velocity=[0.0], time=0.0, epsilon=0.1)
    datum = build_initial_datum(gs, cl0, _free_pots(), 0.1)
    assert np.max(np.abs(datum.data - gs.profile)) < 1e-13


def test_datum_boost_and_masses(gs, grid128):
    xi0 = 0.35
    cl0 = ClassicalState(position=[2.0], velocity=[xi0], time=0.0, epsilon=0.1)
    datum = build_initial_datum(gs, cl0, _free_pots(), 0.1)
    # modulus is the translated profile
    from solidyn.grid import fourier_shift_arr
    translated = fourier_shift_arr(grid128, gs.profile, [2.0]).real
    assert np.max(np.abs(np.abs(datum.data) - translated)) < 1e-12
    # per-component mass equals m_j to 1e-12 (phases are unimodular)
    mass = integrate(grid128, np.abs(datum.data) ** 2)
    assert abs(mass[0] - gs.masses[0]) < 1e-12 * gs.masses[0]
    # the spectral center of mass of the Fourier density shifts by xi0
    dh = fftn(datum.data[0], 1)
    dens = np.abs(dh) ** 2
    kmean = float(np.sum(grid128.axis_wavenumbers * dens) / np.sum(dens))
    assert kmean == pytest.approx(xi0, abs=1e-10)


def test_datum_domain_too_small(params_cubic):
    small = SpectralGrid(1, 40.0, 1024)
    gs_small_profile = closed_form_profile(small, 1.0)[None]
    from solidyn.ground_state import GroundState
    gs_small = GroundState(grid=small, params=params_cubic,
                           profile=gs_small_profile,
                           masses=integrate(small, gs_small_profile ** 2),
                           energy=0.0, residual=0.0, lambdas=np.ones(1))
    cl0 = ClassicalState(position=[0.0], velocity=[0.0], time=0.0, epsilon=0.1)
    with pytest.raises(DomainTooSmallError):
        build_initial_datum(gs_small, cl0, _free_pots(), 0.1)


# ---------------------------------------------------------------------------
# operator application
# ---------------------------------------------------------------------------

def test_magnetic_hamiltonian_plane_wave(grid128):
    k = 2 * np.pi * 12 / grid128.extent
    x = grid128.axis_coords
    f = VectorField(grid128, np.exp(1j * k * x)[None])
    out = apply_magnetic_hamiltonian(f, PotentialSet(
        V=constant_potential(1, 0.0), A=zero_vector_potential(1)), 0.1)
    assert np.max(np.abs(out.data - 0.5 * k ** 2 * f.data)) < 1e-10


def test_magnetic_hamiltonian_constant_a(grid128):
    # constant A = a: plane wave is an eigenfunction with 1/2 |k - a|^2
    k = 2 * np.pi * 12 / grid128.extent
    a = 0.25
    x = grid128.axis_coords
    f = VectorField(grid128, np.exp(1j * k * x)[None])
    pots = PotentialSet(V=constant_potential(1, 0.0),
                        A=constant_vector_potential(1, [a]))
    out = apply_magnetic_hamiltonian(f, pots, 0.1)
    assert np.max(np.abs(out.data - 0.5 * (k - a) ** 2 * f.data)) < 1e-10


def test_magnetic_hamiltonian_real_input_stays_real(grid128):
    f = VectorField(grid128,
                    np.exp(-grid128.axis_coords ** 2 / 9)[None].astype(complex))
    out = apply_magnetic_hamiltonian(f, _free_pots(c=0.7), 0.1)
    assert np.max(np.abs(out.data.imag)) < 1e-12


def test_nonlinear_rhs_pointwise(grid128, params_cubic):
    zero = VectorField(grid128, np.zeros((1, grid128.npts), dtype=complex))
    out = nonlinear_rhs(zero, _free_pots(), params_cubic, 0.1)
    assert np.max(np.abs(out.data)) == 0.0

    f = VectorField(grid128,
                    np.exp(-grid128.axis_coords ** 2 / 7)[None].astype(complex))
    out = nonlinear_rhs(f, _free_pots(), params_cubic, 0.1)
    expected = np.abs(f.data) ** 2 * f.data
    assert np.max(np.abs(out.data - expected)) < 1e-14


def test_nonlinear_rhs_constant_kernel_is_mass(grid128):
    # Phi = const c: the convolution collapses to c * (instantaneous mass)
    params = NonlinearityParams.create(1, 1.0, alpha=[0.0], beta=[1.0])
    c = 0.6
    pots = PotentialSet(V=constant_potential(1, 1.0),
                        A=zero_vector_potential(1),
                        Phi=constant_potential(1, c))
    f = VectorField(grid128,
                    np.exp(-grid128.axis_coords ** 2 / 5)[None].astype(complex))
    m1 = float(integrate(grid128, np.abs(f.data[0]) ** 2))
    out = nonlinear_rhs(f, pots, params, 0.1)
    assert np.max(np.abs(out.data - c * m1 * f.data)) < 1e-10 * c * m1
    # direct-summation cross-check of the collapsed convolution
    direct = c * grid128.cell_volume * np.sum(np.abs(f.data[0]) ** 2)
    assert direct == pytest.approx(c * m1, rel=1e-14)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def test_linear_flow_exact_phase(grid128, gs):
    params0 = NonlinearityParams.create(1, 1.0, alpha=[0.0])
    cfg = _config(gs, _free_pots(c=0.8), params0, dt=1e-3, t_final=1.0)
    ws = StepperWorkspace(cfg)
    k = 2 * np.pi * 9 / grid128.extent
    pw = np.exp(1j * k * grid128.axis_coords)[None]
    st = FieldState(field=VectorField(grid128, pw.copy()), time=0.0,
                    step_index=0)
    for _ in range(1000):
        st = step_field(st, ws)
    exact = pw * np.exp(-1j * (0.5 * k ** 2 + 0.8) * 1.0)
    assert np.max(np.abs(st.field.data - exact)) < 1e-12


def test_standing_soliton(gs, params_cubic, grid128):
    cfg = _config(gs, _free_pots(), params_cubic, dt=1e-3, t_final=5.0)
    final, _ = evolve(cfg)
    drift = np.sqrt(l2_norm_sq_arr(grid128, np.abs(final.field.data)
                                   - gs.profile))
    assert drift < 1e-6
    mass = integrate(grid128, np.abs(final.field.data) ** 2)
    assert abs(mass[0] - gs.masses[0]) / gs.masses[0] < 1e-10


def test_galilean_boosted_soliton(gs, params_cubic, grid128):
    xi0 = 0.3
    cfg = _config(gs, _free_pots(), params_cubic, dt=1e-3, t_final=5.0,
                  xi=xi0)
    final, _ = evolve(cfg)
    x = grid128.axis_coords
    dens = np.abs(final.field.data[0]) ** 2
    center = float(np.sum(x * dens) / np.sum(dens))
    assert abs(center - xi0 * 5.0) < 1e-4


def test_evolve_zero_horizon_returns_datum(gs, params_cubic):
    recorder = []

    def obs(st, cl):
        recorder.append(st.time)
        return st.time

    cfg = _config(gs, _free_pots(), params_cubic, t_final=0.0)
    final, recs = evolve(cfg, observers=[obs])
    assert final.step_index == 0
    assert recs == [0.0]
    datum = build_initial_datum(gs, cfg.classical0, cfg.potentials,
                                cfg.epsilon)
    assert np.array_equal(final.field.data, datum.data)


def test_observer_stride_larger_than_run(gs, params_cubic):
    times = []

    def obs(st, cl):
        times.append(st.time)
        return None

    cfg = _config(gs, _free_pots(), params_cubic, dt=1e-3, t_final=0.05,
                  observer_stride=10 ** 9)
    evolve(cfg, observers=[obs])
    assert times == [0.0, pytest.approx(0.05)]


def test_cfl_validation(gs, params_cubic):
    with pytest.raises(StabilityError):
        StepperWorkspace(_config(gs, _free_pots(), params_cubic, dt=5.0))
    # advection CFL with a strong 1D magnetic potential and large dt
    pots = PotentialSet(V=constant_potential(1, 1.0),
                        A=gaussian_vector_potential_1d(4.0, 3.0))
    with pytest.raises(StabilityError):
        StepperWorkspace(_config(gs, pots, params_cubic, dt=1e-1))


def test_splitting_second_order(gs, params_cubic, grid128):
    pots = PotentialSet(V=gaussian_bump(1, 2.0, -1.0, 1.0),
                        A=zero_vector_potential(1))

    def endpoint(dt):
        cfg = _config(gs, pots, params_cubic, eps=0.2, dt=dt, t_final=0.5,
                      xc=1.0)
        final, _ = evolve(cfg)
        return final.field.data

    ref = endpoint(2.5e-4)
    e1 = np.sqrt(h1_norm_sq_arr(grid128, endpoint(1e-3) - ref))
    e2 = np.sqrt(h1_norm_sq_arr(grid128, endpoint(5e-4) - ref))
    assert e1 / e2 >= 3.7


def test_gauge_covariance_constant_shift(gs, params_cubic, grid128):
    # A -> A + grad(chi) with linear chi = a.x: evolving the gauge
    # transformed datum e^{i a.x} phi_0 with A + a and untransforming
    # reproduces the original evolution
    a = 2 * np.pi * 4 / grid128.extent
    pots0 = PotentialSet(V=gaussian_bump(1, 2.0, -1.0, 1.0),
                         A=zero_vector_potential(1))
    pots1 = PotentialSet(V=gaussian_bump(1, 2.0, -1.0, 1.0),
                         A=constant_vector_potential(1, [a]))
    cfg0 = _config(gs, pots0, params_cubic, eps=0.1, dt=1e-3, t_final=1.0)
    final0, _ = evolve(cfg0)

    ws = StepperWorkspace(_config(gs, pots1, params_cubic, eps=0.1, dt=1e-3,
                                  t_final=1.0))
    datum = build_initial_datum(gs, cfg0.classical0, pots0, 0.1)
    x = grid128.axis_coords
    gauged = VectorField(grid128, np.exp(1j * a * x) * datum.data)
    st = FieldState(field=gauged, time=0.0, step_index=0)
    for _ in range(1000):
        st = step_field(st, ws)
    untransformed = np.exp(-1j * a * x) * st.field.data
    diff = np.sqrt(l2_norm_sq_arr(grid128, np.abs(untransformed)
                                  - np.abs(final0.field.data)))
    assert diff < 1e-8
    assert np.sqrt(l2_norm_sq_arr(grid128, untransformed
                                  - final0.field.data)) < 1e-6


def test_time_reversal(gs, params_cubic, grid128):
    # evolve to t=1, conjugate, reverse A, evolve back: datum recovered
    pots = PotentialSet(V=gaussian_bump(1, 2.0, -1.0, 1.0),
                        A=gaussian_vector_potential_1d(0.05, 4.0))
    cfg = _config(gs, pots, params_cubic, eps=0.1, dt=1e-3, t_final=1.0)
    datum = build_initial_datum(gs, cfg.classical0, pots, 0.1)
    final, _ = evolve(cfg)

    pots_rev = PotentialSet(V=pots.V, A=pots.A.scaled(-1.0))
    ws = StepperWorkspace(_config(gs, pots_rev, params_cubic, eps=0.1,
                                  dt=1e-3, t_final=1.0))
    st = FieldState(field=VectorField(grid128, np.conj(final.field.data)),
                    time=0.0, step_index=0)
    for _ in range(1000):
        st = step_field(st, ws)
    recovered = np.conj(st.field.data)
    assert np.sqrt(l2_norm_sq_arr(grid128, recovered - datum.data)) < 1e-6


def test_nonlocal_channel_conserves_mass(grid128):
    params = NonlinearityParams.create(1, 1.0, beta=[1.0])
    pots = PotentialSet(V=constant_potential(1, 1.0),
                        A=zero_vector_potential(1),
                        Phi=gaussian_kernel(1, 2.0))
    gs_h = solve_ground_state_canonical(params, grid128, tol=1e-9)
    cfg = _config(gs_h, pots, params, eps=0.1, dt=1e-3, t_final=1.0)
    final, _ = evolve(cfg)
    mass = integrate(grid128, np.abs(final.field.data) ** 2)
    assert abs(mass[0] - gs_h.masses[0]) / gs_h.masses[0] < 1e-11


def test_vector_nonlocal_rejected(grid128, gs):
    params = NonlinearityParams.create(2, 1.0, beta=[1.0, 0.0])
    pots = PotentialSet(V=constant_potential(1, 1.0),
                        A=zero_vector_potential(1),
                        Phi=gaussian_kernel(1, 2.0))
    from solidyn.errors import ConfigError
    with pytest.raises(ConfigError):
        _config(gs, pots, params)
