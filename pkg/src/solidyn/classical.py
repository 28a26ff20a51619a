"""Point-particle system driving the soliton center:

    dx/dt  = xi
    dxi/dt = -eps grad V(eps x) - eps xi x B(eps x),      B = curl A,

integrated with classical RK4.  The cross product xi x B is realized in
any dimension through the antisymmetric matrix H[i,j] = d_i A_j - d_j A_i
acting on xi (N=1 gives zero force, N=2 reproduces the cyclotron orbit,
N=3 the usual vector product).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import BlowUpError, ConfigError
from .ground_state import NonlinearityParams
from .potentials import PotentialSet, VectorPotential


@dataclass(frozen=True)
class ClassicalState:
    """(x_eps, xi_eps) at time t for a given eps."""

    position: np.ndarray
    velocity: np.ndarray
    time: float
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.atleast_1d(np.asarray(self.position, dtype=float)))
        object.__setattr__(self, "velocity", np.atleast_1d(np.asarray(self.velocity, dtype=float)))
        if self.position.shape != self.velocity.shape:
            raise ConfigError("position/velocity dimension mismatch")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")

    @property
    def dim(self) -> int:
        return self.position.shape[0]


@dataclass(frozen=True)
class HamiltonianValue:
    """1/2 |xi|^2 + V(eps x) + M_const; constant in t and independent of eps."""

    kinetic: float
    potential: float
    nonlocal_const: float

    @property
    def total(self) -> float:
        return self.kinetic + self.potential + self.nonlocal_const


def magnetic_field(A: VectorPotential, point) -> np.ndarray:
    """Magnetic 2-form H[i,j] = d_i A_j - d_j A_i at a point (N x N,
    antisymmetric; a single scalar b off the diagonal in N=2, zero in N=1)."""
    jac = A.jacobian(np.asarray(point, dtype=float))
    return jac - np.swapaxes(jac, 0, 1)


def lorentz_term(A: VectorPotential, point, velocity) -> np.ndarray:
    """(xi x B)_i = sum_j H[i,j] xi_j; the sign convention is pinned by the
    N=2 cyclotron test."""
    H = magnetic_field(A, point)
    return H @ np.asarray(velocity, dtype=float)


def acceleration(state: ClassicalState, potentials: PotentialSet,
                 position=None, velocity=None) -> np.ndarray:
    x = state.position if position is None else position
    xi = state.velocity if velocity is None else velocity
    eps = state.epsilon
    z = eps * x
    return -eps * potentials.V.grad(z) - eps * lorentz_term(potentials.A, z, xi)


def step_classical(state: ClassicalState, potentials: PotentialSet, dt: float) -> ClassicalState:
    """One classical RK4 step; local truncation error O(dt^5)."""
    if dt <= 0:
        raise ConfigError("dt must be positive")
    x, xi = state.position, state.velocity

    def f(xv, vv):
        return vv, acceleration(state, potentials, position=xv, velocity=vv)

    k1x, k1v = f(x, xi)
    k2x, k2v = f(x + 0.5 * dt * k1x, xi + 0.5 * dt * k1v)
    k3x, k3v = f(x + 0.5 * dt * k2x, xi + 0.5 * dt * k2v)
    k4x, k4v = f(x + dt * k3x, xi + dt * k3v)
    xn = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    vn = xi + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(vn))):
        raise BlowUpError(f"classical state blew up at t={state.time}")
    return ClassicalState(position=xn, velocity=vn, time=state.time + dt,
                          epsilon=state.epsilon)


def nonlocal_hamiltonian_const(potentials: PotentialSet,
                               params: NonlinearityParams, masses) -> float:
    """M_const = -(Phi(0)/2M) (sum beta_j m_j^2 + sum_{i!=j} omega_ij m_i m_j);
    zero whenever the nonlocal channel is off."""
    masses = np.asarray(masses, dtype=float)
    if not potentials.has_nonlocal or not params.has_nonlocal_weights:
        return 0.0
    phi0 = potentials.phi_at_zero()
    total = float(np.sum(masses))
    self_term = float(np.dot(params.beta, masses ** 2))
    cross = float(masses @ params.omega @ masses)
    return -phi0 / (2.0 * total) * (self_term + cross)


def hamiltonian(state: ClassicalState, potentials: PotentialSet,
                params: NonlinearityParams, masses) -> HamiltonianValue:
    """First integral of the driving system (time- and eps-independent)."""
    z = state.epsilon * state.position
    return HamiltonianValue(
        kinetic=0.5 * float(np.dot(state.velocity, state.velocity)),
        potential=float(potentials.V.value(z)),
        nonlocal_const=nonlocal_hamiltonian_const(potentials, params, masses))


# ---------------------------------------------------------------------------
# rescaling between the eps-scaled system and the eps-free one
# ---------------------------------------------------------------------------

def to_macro(state: ClassicalState):
    """(x_eps, xi_eps, t) -> (x, xi, s) with x(s) = eps x_eps(s/eps),
    xi(s) = xi_eps(s/eps), s = eps t."""
    return (state.epsilon * state.position, state.velocity.copy(),
            state.epsilon * state.time)


def from_macro(x, xi, s, epsilon: float) -> ClassicalState:
    """Inverse of to_macro; the round trip is the identity."""
    x = np.asarray(x, dtype=float)
    return ClassicalState(position=x / epsilon, velocity=np.asarray(xi, dtype=float),
                          time=s / epsilon, epsilon=epsilon)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Uniformly sampled classical trajectory with Hamiltonian bookkeeping."""

    times: np.ndarray       # (n+1,)
    positions: np.ndarray   # (n+1, N)
    velocities: np.ndarray  # (n+1, N)
    h_total: np.ndarray     # (n+1,)
    epsilon: float

    def state_at(self, index: int) -> ClassicalState:
        return ClassicalState(position=self.positions[index],
                              velocity=self.velocities[index],
                              time=float(self.times[index]), epsilon=self.epsilon)

    def max_abs_position(self) -> float:
        return float(np.max(np.abs(self.positions)))

    def max_abs_macro_position(self) -> float:
        return self.epsilon * self.max_abs_position()


def solve_trajectory(state0: ClassicalState, potentials: PotentialSet,
                     params: NonlinearityParams, masses,
                     dt: float, n_steps: int, substeps: int | None = None) -> Trajectory:
    """Integrate n_steps of size dt, storing every step.  When dt exceeds
    1e-3 the integrator substeps internally so the stored grid stays on the
    caller's time axis while keeping the RK4 error budget."""
    if substeps is None:
        substeps = max(1, int(np.ceil(dt / 1e-3)))
    h = dt / substeps
    times = np.empty(n_steps + 1)
    xs = np.empty((n_steps + 1, state0.dim))
    vs = np.empty((n_steps + 1, state0.dim))
    hs = np.empty(n_steps + 1)
    st = state0
    for i in range(n_steps + 1):
        times[i] = st.time
        xs[i] = st.position
        vs[i] = st.velocity
        hs[i] = hamiltonian(st, potentials, params, masses).total
        if i == n_steps:
            break
        for _ in range(substeps):
            st = step_classical(st, potentials, h)
        # keep the time axis exact
        st = replace(st, time=state0.time + (i + 1) * dt)
    return Trajectory(times=times, positions=xs, velocities=vs, h_total=hs,
                      epsilon=state0.epsilon)


def write_trajectory_csv(traj: Trajectory, path, stride: int = 1):
    """CSV with columns t, x_1..x_N, xi_1..xi_N, H_total."""
    dim = traj.positions.shape[1]
    header = (["t"] + [f"x_{a+1}" for a in range(dim)]
              + [f"xi_{a+1}" for a in range(dim)] + ["H_total"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(0, len(traj.times), stride):
            row = ([traj.times[i]] + list(traj.positions[i])
                   + list(traj.velocities[i]) + [traj.h_total[i]])
            w.writerow(f"{v:.17g}" for v in row)
