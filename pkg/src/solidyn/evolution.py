"""Split-step evolution of the vector magnetic NLS system

    i dphi_j/dt = L_A phi_j + V(eps x) phi_j
                  - (local couplings) phi_j - (Phi(eps .) * |phi|^2_j) phi_j,

    L_A = -1/2 Lap - (1/i) A(eps x).grad + 1/2 |A(eps x)|^2 - (1/2i) div_x A(eps x),

with the sign convention that the scalar case reduces to the standard
focusing NLS i dphi/dt + 1/2 Lap phi - V phi + |phi|^2p phi = 0.

One Strang step is  M(dt/2) K(dt/2) Adv(dt) K(dt/2) M(dt/2):
  M   - pointwise phase rotation by V + |A|^2/2 and the (frozen) local and
        nonlocal nonlinear potentials; exact within the substep because all
        of them depend only on the moduli, which M preserves;
  K   - exact Fourier integration of -1/2 Lap;
  Adv - the mild advection A.grad + (1/2) div_x A by an explicit two-stage
        midpoint rule with spectral gradients, under an advection CFL bound.

Per-component mass is conserved to roundoff by M and K and to O(dt^3) per
step by Adv; drift is monitored every step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.fft as _fft

from .classical import ClassicalState, step_classical
from .errors import (BlowUpError, ConfigError, ConservationError,
                     DomainExitError, DomainTooSmallError, StabilityError)
from .grid import (SpectralGrid, VectorField, fftn, fourier_shift_arr, ifftn,
                   integrate)
from .ground_state import GroundState, NonlinearityParams, local_coupling_factors
from .potentials import PotentialSet


@dataclass(frozen=True)
class EvolutionConfig:
    """Everything a single run needs; immutable once validated."""

    epsilon: float
    dt: float
    t_final: float
    grid: SpectralGrid
    potentials: PotentialSet
    params: NonlinearityParams
    ground_state: GroundState
    classical0: ClassicalState
    observer_stride: int = 100
    cfl_limit: float = 2.0 * np.pi       # bound on dt * max|k|^2 / 2
    advection_cfl: float = 0.5           # bound on max|A| * max|k| * dt
    mass_step_tol: float = 1e-12
    mass_run_tol: float = 1e-10
    support_tol: float = 1e-12
    support_margin_frac: float = 0.25    # datum must vanish within L/4 of edge
    exit_margin_frac: float = 0.125      # center must stay L/8 off the edge

    def __post_init__(self):
        if self.epsilon <= 0 or self.dt <= 0 or self.t_final < 0:
            raise ConfigError("epsilon, dt must be positive, t_final >= 0")
        if self.observer_stride < 1:
            raise ConfigError("observer_stride must be >= 1")
        self.params.validate(self.grid.dim)
        if self.params.m > 1 and self.potentials.has_nonlocal \
                and self.params.has_nonlocal_weights:
            raise ConfigError("the nonlocal channel must be disabled in the "
                              "vectorial case m > 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class FieldState:
    """PDE state phi_eps at a time sample."""

    field: VectorField
    time: float
    step_index: int


class StepperWorkspace:
    """Grid samples of the potentials and precomputed phase factors for one
    evolution; owned exclusively by that evolution (never shared)."""

    def __init__(self, config: EvolutionConfig):
        grid = config.grid
        eps = config.epsilon
        self.config = config
        self.grid = grid

        kmax = float(np.max(np.abs(grid.axis_wavenumbers)))
        if config.dt * kmax ** 2 / 2.0 > config.cfl_limit:
            raise StabilityError(
                f"dt*max|k|^2/2 = {config.dt * kmax ** 2 / 2:.3g} exceeds the "
                f"stability constant {config.cfl_limit}")

        x = grid.coords()
        z = eps * x
        self.vx = potential_v = config.potentials.V.value(z)
        a_val = config.potentials.A.value(z)
        self.has_advection = bool(np.max(np.abs(a_val)) > 0)
        if self.has_advection:
            self.ax = a_val                                   # (N, *shape)
            self.abs_a_sq = np.sum(a_val * a_val, axis=0)
            self.div_ax = eps * config.potentials.A.divergence(z)
            a_max = float(np.max(np.abs(a_val)))
            if a_max * kmax * config.dt > config.advection_cfl:
                raise StabilityError(
                    f"advection CFL max|A|*max|k|*dt = "
                    f"{a_max * kmax * config.dt:.3g} exceeds "
                    f"{config.advection_cfl}")
        else:
            self.ax = None
            self.abs_a_sq = 0.0
            self.div_ax = None
        self.static_phase_part = potential_v + 0.5 * self.abs_a_sq

        self.karr = grid.wavenumbers()
        self.kin_half = np.exp(-0.5j * grid.k_squared() * (config.dt / 2.0))

        self.nonlocal_on = (config.potentials.has_nonlocal
                            and config.params.has_nonlocal_weights)
        if self.nonlocal_on:
            kernel = config.potentials.Phi.value(z)
            self.kernel_hat = (fftn(_fft.ifftshift(kernel), grid.dim)
                               * grid.cell_volume)
        else:
            self.kernel_hat = None

        # classical integrator substeps keep the RK4 grid at <= 1e-3
        self.classical_substeps = max(1, int(np.ceil(config.dt / 1e-3)))


def hartree_potentials(mod_sq: np.ndarray, ws: StepperWorkspace) -> np.ndarray | None:
    """Per-component convolution potentials Phi(eps .) * (beta_j |phi_j|^2
    + sum_{i != j} omega_ij |phi_i|^2), or None when the channel is off."""
    if not ws.nonlocal_on:
        return None
    params = ws.config.params
    weights = params.omega + np.diag(params.beta)
    mixed = np.tensordot(weights, mod_sq, axes=(1, 0))
    return ifftn(ws.kernel_hat * fftn(mixed, ws.grid.dim), ws.grid.dim).real


def _multiplicative_w(data: np.ndarray, ws: StepperWorkspace) -> np.ndarray:
    """The real multiplicative symbol W_j = V + |A|^2/2 - local - nonlocal."""
    mods = np.abs(data)
    w = ws.static_phase_part - local_coupling_factors(mods, ws.config.params)
    conv = hartree_potentials(mods * mods, ws)
    if conv is not None:
        w = w - conv
    return w


def _advection_rhs(data: np.ndarray, ws: StepperWorkspace) -> np.ndarray:
    """A(eps x).grad phi + (1/2) div_x A(eps x) phi (mass-neutral transport)."""
    dh = fftn(data, ws.grid.dim)
    out = None
    for a in range(ws.grid.dim):
        da = ifftn(1j * ws.karr[a] * dh, ws.grid.dim)
        term = ws.ax[a] * da
        out = term if out is None else out + term
    if ws.div_ax is not None:
        out = out + 0.5 * ws.div_ax * data
    return out


def step_field(state: FieldState, ws: StepperWorkspace) -> FieldState:
    """One Strang step; per-component mass change per step is monitored."""
    cfg = ws.config
    dt = cfg.dt
    grid = ws.grid
    data = state.field.data
    mass_before = integrate(grid, np.abs(data) ** 2).real

    data = np.exp(-0.5j * dt * _multiplicative_w(data, ws)) * data
    dh = fftn(data, grid.dim) * ws.kin_half
    if ws.has_advection:
        data = ifftn(dh, grid.dim)
        mid = data + (0.5 * dt) * _advection_rhs(data, ws)
        data = data + dt * _advection_rhs(mid, ws)
        dh = fftn(data, grid.dim)
    data = ifftn(dh * ws.kin_half, grid.dim)
    data = np.exp(-0.5j * dt * _multiplicative_w(data, ws)) * data

    mass_after = integrate(grid, np.abs(data) ** 2).real
    rel = np.max(np.abs(mass_after - mass_before) / mass_before)
    if not np.isfinite(rel):
        raise BlowUpError(f"field became non-finite at t={state.time:.6g}")
    if rel > cfg.mass_step_tol:
        raise ConservationError(
            f"per-step mass drift {rel:.3e} > {cfg.mass_step_tol} at "
            f"t={state.time:.6g}")
    return FieldState(field=VectorField(grid, data), time=(state.step_index + 1) * dt,
                      step_index=state.step_index + 1)


# ---------------------------------------------------------------------------
# initial datum and operator application
# ---------------------------------------------------------------------------

def build_initial_datum(gs: GroundState, classical0: ClassicalState,
                        potentials: PotentialSet, epsilon: float,
                        support_tol: float = 1e-12,
                        support_margin_frac: float = 0.25) -> VectorField:
    """Soliton datum phi_0^j(x) = r_j(x - xc) e^{i[A(eps xc).(x - xc) + x.xi0]}
    with (xc, xi0) the initial classical state.  The translation is a
    Fourier shift (exact for band-limited profiles), the phase factors are
    unimodular, so per-component masses equal m_j to roundoff."""
    grid = gs.grid
    xc = classical0.position
    xi0 = classical0.velocity
    prof = fourier_shift_arr(grid, gs.profile, xc).real

    x = grid.coords()
    a_at_xc = potentials.A.value(epsilon * xc)
    phase = np.zeros(grid.shape)
    for a in range(grid.dim):
        phase = phase + a_at_xc[a] * (x[a] - xc[a]) + x[a] * xi0[a]
    datum = prof * np.exp(1j * phase)

    # support margin: the datum must have decayed within L/4 of the edge
    dist_to_edge = np.min(0.5 * grid.extent - np.abs(x), axis=0)
    band = dist_to_edge <= support_margin_frac * grid.extent
    peak = float(np.max(np.abs(datum)))
    tail = float(np.max(np.abs(datum)[..., band])) if np.any(band) else 0.0
    if tail > support_tol * peak:
        raise DomainTooSmallError(
            f"datum amplitude {tail:.3e} (of peak {peak:.3g}) inside the "
            f"L/4 edge margin; enlarge the box")
    return VectorField(grid, datum)


def apply_magnetic_hamiltonian(f: VectorField, potentials: PotentialSet,
                               epsilon: float) -> VectorField:
    """(L_A + V(eps x)) f with spectral derivatives."""
    grid = f.grid
    x = grid.coords()
    z = epsilon * x
    vx = potentials.V.value(z)
    a_val = potentials.A.value(z)
    div_ax = epsilon * potentials.A.divergence(z)
    karr = grid.wavenumbers()

    fh = fftn(f.data, grid.dim)
    out = ifftn(0.5 * grid.k_squared() * fh, grid.dim)      # -1/2 Lap
    for a in range(grid.dim):
        da = ifftn(1j * karr[a] * fh, grid.dim)
        out = out + 1j * a_val[a] * da                       # -(1/i) A.grad
    out = out + (0.5j * div_ax + 0.5 * np.sum(a_val * a_val, axis=0) + vx) * f.data
    return VectorField(grid, out)


def nonlinear_rhs(f: VectorField, potentials: PotentialSet,
                  params: NonlinearityParams, epsilon: float) -> VectorField:
    """Right-hand side (|phi|^2p_j + Phi(eps .)*|phi|^2_j) phi_j of the system."""
    grid = f.grid
    mods = np.abs(f.data)
    factors = local_coupling_factors(mods, params)
    if potentials.has_nonlocal and params.has_nonlocal_weights:
        z = epsilon * grid.coords()
        kernel_hat = (fftn(_fft.ifftshift(potentials.Phi.value(z)), grid.dim)
                      * grid.cell_volume)
        weights = params.omega + np.diag(params.beta)
        mixed = np.tensordot(weights, mods * mods, axes=(1, 0))
        factors = factors + ifftn(kernel_hat * fftn(mixed, grid.dim), grid.dim).real
    return VectorField(grid, factors * f.data)


# ---------------------------------------------------------------------------
# the evolution loop
# ---------------------------------------------------------------------------

def evolve(config: EvolutionConfig, observers=()):
    """Run to t_final, stepping the driving classical system on the same
    time axis and invoking read-only observers at the configured stride.

    observers: callables (FieldState, ClassicalState) -> record | None;
    non-None returns are collected and returned with the final state.
    Deterministic given the config (single FFT backend, fixed seeds).
    """
    ws = StepperWorkspace(config)
    datum = build_initial_datum(config.ground_state, config.classical0,
                                config.potentials, config.epsilon,
                                support_tol=config.support_tol,
                                support_margin_frac=config.support_margin_frac)
    state = FieldState(field=datum, time=0.0, step_index=0)
    classical = config.classical0
    masses0 = integrate(config.grid, np.abs(datum.data) ** 2).real

    records = []

    def notify(st, cl):
        for obs in observers:
            rec = obs(st, cl)
            if rec is not None:
                records.append(rec)

    notify(state, classical)
    n_steps = config.n_steps
    sub_dt = config.dt / ws.classical_substeps
    exit_dist = config.exit_margin_frac * config.grid.extent
    half_box = 0.5 * config.grid.extent

    for step in range(n_steps):
        state = step_field(state, ws)
        for _ in range(ws.classical_substeps):
            classical = step_classical(classical, config.potentials, sub_dt)
        classical = replace(classical, time=state.time)

        mass_now = integrate(config.grid, np.abs(state.field.data) ** 2).real
        drift = float(np.max(np.abs(mass_now - masses0) / masses0))
        if drift > config.mass_run_tol:
            raise ConservationError(
                f"cumulative mass drift {drift:.3e} > {config.mass_run_tol} "
                f"at t={state.time:.6g} (step {state.step_index})")
        if float(np.max(np.abs(classical.position))) > half_box - exit_dist:
            raise DomainExitError(
                f"soliton center {classical.position} within L/8 of the box "
                f"edge at t={state.time:.6g}")
        if (step + 1) % config.observer_stride == 0 or step + 1 == n_steps:
            notify(state, classical)

    return state, records
