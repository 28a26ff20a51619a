"""Driving point-particle system: RK4, Lorentz force, first integral."""

import numpy as np
import pytest

from solidyn.classical import (ClassicalState, HamiltonianValue, from_macro,
                               hamiltonian, magnetic_field,
                               nonlocal_hamiltonian_const, solve_trajectory,
                               step_classical, to_macro)
from solidyn.errors import BlowUpError
from solidyn.ground_state import NonlinearityParams
from solidyn.potentials import (PotentialSet, constant_potential,
                                gaussian_bump, gaussian_kernel,
                                gradient_gauge_potential, harmonic_potential,
                                uniform_field_2d, zero_vector_potential)


def _free_pots(dim=1, c=1.0):
    return PotentialSet(V=constant_potential(dim, c),
                        A=zero_vector_potential(dim))


def test_magnetic_field_examples():
    assert np.max(np.abs(magnetic_field(zero_vector_potential(2),
                                        [0.3, 0.4]))) == 0.0
    H = magnetic_field(uniform_field_2d(0.7), [1.0, -2.0])
    assert H[0, 1] == pytest.approx(0.7)
    assert H[1, 0] == pytest.approx(-0.7)
    # pure gauge field: zero 2-form by symmetry of second derivatives
    gauge = gradient_gauge_potential(gaussian_bump(2, 0.0, 1.0, 1.2))
    assert np.max(np.abs(magnetic_field(gauge, [0.5, 0.2]))) < 1e-13


def test_free_motion_is_straight():
    st = ClassicalState(position=[1.0], velocity=[0.5], time=0.0, epsilon=0.3)
    pots = _free_pots()
    for _ in range(100):
        st = step_classical(st, pots, 1e-2)
    assert st.position[0] == pytest.approx(1.0 + 0.5 * 1.0, abs=1e-12)
    assert st.velocity[0] == pytest.approx(0.5, abs=1e-14)


def test_harmonic_oscillator_closed_form():
    # V = 1 + x^2/2, eps = 1: x(t) = cos t
    pots = PotentialSet(V=harmonic_potential(1, 1.0, 1.0),
                        A=zero_vector_potential(1))
    st = ClassicalState(position=[1.0], velocity=[0.0], time=0.0, epsilon=1.0)
    dt = 1e-3
    for target in (np.pi / 2, np.pi):
        while st.time < target - 0.5 * dt:
            st = step_classical(st, pots, dt)
        assert st.position[0] == pytest.approx(np.cos(st.time), abs=1e-8)


def test_cyclotron_orbit():
    # V const, uniform B = b: speed conserved, radius |xi0|/(eps b)
    b, eps = 0.8, 0.25
    pots = PotentialSet(V=constant_potential(2, 1.0), A=uniform_field_2d(b))
    xi0 = np.array([0.4, 0.0])
    st = ClassicalState(position=[0.0, 0.0], velocity=xi0, time=0.0,
                        epsilon=eps)
    params = NonlinearityParams.create(1, 1.0)
    period = 2 * np.pi / (eps * b)
    n = 40000
    traj = solve_trajectory(st, pots, params, np.ones(1), dt=period / n,
                            n_steps=n)
    speeds = np.linalg.norm(traj.velocities, axis=1)
    assert np.max(np.abs(speeds - np.linalg.norm(xi0))) < 1e-6
    # the orbit is a circle of radius |xi0|/(eps b): fit the center over one
    # full period (dropping the duplicated endpoint sample) and check
    center = traj.positions[:-1].mean(axis=0)
    radii = np.linalg.norm(traj.positions - center, axis=1)
    expected = np.linalg.norm(xi0) / (eps * b)
    assert np.max(np.abs(radii - expected)) < 1e-6
    # and the trajectory closes after one period
    assert np.linalg.norm(traj.positions[-1] - traj.positions[0]) < 1e-6


def test_hamiltonian_examples():
    pots = _free_pots(c=2.5)
    params = NonlinearityParams.create(1, 1.0)
    st = ClassicalState(position=[3.0], velocity=[0.0], time=0.0, epsilon=0.1)
    h = hamiltonian(st, pots, params, np.array([1.0]))
    assert h.total == pytest.approx(2.5)

    # harmonic: H = 1/2 sin^2 + 1 + 1/2 cos^2 = 1.5 along the trajectory
    pots = PotentialSet(V=harmonic_potential(1, 1.0, 1.0),
                        A=zero_vector_potential(1))
    st = ClassicalState(position=[1.0], velocity=[0.0], time=0.0, epsilon=1.0)
    traj = solve_trajectory(st, pots, params, np.ones(1), dt=1e-3,
                            n_steps=10000)
    assert np.max(np.abs(traj.h_total - 1.5)) < 1e-8


def test_nonlocal_constant():
    # m=1, beta=1, Phi(0)=1, mass m1 -> M_const = -m1/2
    params = NonlinearityParams.create(1, 1.0, beta=[1.0])
    pots = PotentialSet(V=constant_potential(1, 1.0),
                        A=zero_vector_potential(1),
                        Phi=gaussian_kernel(1, 2.0, amp=1.0))
    m1 = 2 * np.sqrt(2)
    val = nonlocal_hamiltonian_const(pots, params, np.array([m1]))
    assert val == pytest.approx(-m1 / 2)
    # zero whenever the kernel or the weights vanish
    off = PotentialSet(V=constant_potential(1, 1.0),
                       A=zero_vector_potential(1))
    assert nonlocal_hamiltonian_const(off, params, np.array([m1])) == 0.0
    no_weights = NonlinearityParams.create(1, 1.0)
    assert nonlocal_hamiltonian_const(pots, no_weights, np.array([m1])) == 0.0


def test_hamiltonian_eps_independent():
    pots = PotentialSet(V=gaussian_bump(1, 2.0, -1.0, 1.0),
                        A=zero_vector_potential(1))
    params = NonlinearityParams.create(1, 1.0)
    x0, xi0 = 0.3, 0.2
    values = []
    for eps in (1.0, 0.1, 0.01):
        st = ClassicalState(position=[x0 / eps], velocity=[xi0], time=0.0,
                            epsilon=eps)
        values.append(hamiltonian(st, pots, params, np.ones(1)).total)
    assert values[0] == pytest.approx(values[1], abs=1e-14)
    assert values[0] == pytest.approx(values[2], abs=1e-14)


def test_rescale_round_trip():
    st = ClassicalState(position=[2.0, -1.0], velocity=[0.3, 0.4], time=7.0,
                        epsilon=0.05)
    x, xi, s = to_macro(st)
    back = from_macro(x, xi, s, st.epsilon)
    assert np.allclose(back.position, st.position, atol=0)
    assert np.allclose(back.velocity, st.velocity, atol=0)
    assert back.time == pytest.approx(st.time, abs=1e-15)
    # eps = 1: both frames coincide
    st1 = ClassicalState(position=[2.0], velocity=[0.3], time=1.5, epsilon=1.0)
    x, xi, s = to_macro(st1)
    assert x[0] == st1.position[0] and s == st1.time


def test_rescaled_system_equivalence():
    # integrate the eps-scaled system directly and the eps-free system via
    # the conversion identity: two independent integrations must agree
    pots = PotentialSet(V=gaussian_bump(1, 2.0, -1.0, 1.0),
                        A=zero_vector_potential(1))
    params = NonlinearityParams.create(1, 1.0)
    eps = 0.1
    x0, xi0 = 0.4, 0.1
    direct = ClassicalState(position=[x0 / eps], velocity=[xi0], time=0.0,
                            epsilon=eps)
    n = 5000
    t_final = 10.0
    traj = solve_trajectory(direct, pots, params, np.ones(1),
                            dt=t_final / n, n_steps=n)
    macro = ClassicalState(position=[x0], velocity=[xi0], time=0.0,
                           epsilon=1.0)
    traj_macro = solve_trajectory(macro, pots, params, np.ones(1),
                                  dt=eps * t_final / n, n_steps=n)
    # x_eps(t) = x(eps t)/eps at matching samples
    assert np.max(np.abs(traj.positions[:, 0]
                         - traj_macro.positions[:, 0] / eps)) < 1e-8
    assert np.max(np.abs(traj.velocities - traj_macro.velocities)) < 1e-9


def test_rk4_convergence_order():
    pots = PotentialSet(V=harmonic_potential(1, 1.0, 1.0),
                        A=zero_vector_potential(1))

    def endpoint_error(dt):
        st = ClassicalState(position=[1.0], velocity=[0.0], time=0.0,
                            epsilon=1.0)
        n = int(round(2.0 / dt))
        for _ in range(n):
            st = step_classical(st, pots, dt)
        return abs(st.position[0] - np.cos(2.0))

    e1, e2 = endpoint_error(4e-3), endpoint_error(2e-3)
    assert e1 / e2 >= 14.0


def test_blow_up_detection():
    pots = _free_pots()
    st = ClassicalState(position=[np.inf], velocity=[0.0], time=0.0,
                        epsilon=1.0)
    with pytest.raises(BlowUpError):
        step_classical(st, pots, 1e-3)


def test_hamiltonian_value_fields():
    h = HamiltonianValue(kinetic=0.5, potential=1.0, nonlocal_const=-0.25)
    assert h.total == pytest.approx(1.25)
