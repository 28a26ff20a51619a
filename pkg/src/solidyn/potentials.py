"""Analytic catalog of external potentials.

V (electric), A (magnetic) and Phi (nonlocal kernel) are supplied as
closed-form expressions with exact first and second derivatives, never as
sampled fields: the O(eps^2) diagnostics would otherwise be contaminated
by finite-difference noise.

Every evaluator takes coordinates stacked on the FIRST axis: z has shape
(N,) for a single point or (N, n, ..., n) for a grid sample, and returns
values broadcast over the trailing axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError


def _as_points(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z[None]
    return z


@dataclass(frozen=True)
class ScalarPotential:
    """Scalar field on R^N with exact gradient and Hessian."""

    name: str
    dim: int
    value_fn: Callable
    grad_fn: Callable
    hess_fn: Callable

    def value(self, z):
        return self.value_fn(_as_points(z))

    def grad(self, z):
        """Shape (N, ...)."""
        return self.grad_fn(_as_points(z))

    def hess(self, z):
        """Shape (N, N, ...)."""
        return self.hess_fn(_as_points(z))


@dataclass(frozen=True)
class VectorPotential:
    """Vector field on R^N with exact Jacobian J[i, j] = d_i A_j."""

    name: str
    dim: int
    value_fn: Callable
    jacobian_fn: Callable

    def value(self, z):
        """Shape (N, ...)."""
        return self.value_fn(_as_points(z))

    def jacobian(self, z):
        """Shape (N, N, ...) with J[i, j] = d_i A_j."""
        return self.jacobian_fn(_as_points(z))

    def divergence(self, z):
        jac = self.jacobian(z)
        return np.trace(jac, axis1=0, axis2=1)

    def scaled(self, factor: float) -> "VectorPotential":
        return VectorPotential(
            name=f"{factor}*{self.name}",
            dim=self.dim,
            value_fn=lambda z, f=self.value_fn: factor * f(z),
            jacobian_fn=lambda z, f=self.jacobian_fn: factor * f(z),
        )


# ---------------------------------------------------------------------------
# catalog: scalar potentials
# ---------------------------------------------------------------------------

def constant_potential(dim: int, c: float) -> ScalarPotential:
    def value(z):
        return np.full(z.shape[1:], c) if z.ndim > 1 else c
    def grad(z):
        return np.zeros_like(z)
    def hess(z):
        return np.zeros((dim, dim) + z.shape[1:])
    return ScalarPotential(f"constant({c})", dim, value, grad, hess)


def harmonic_potential(dim: int, v0: float, omega: float, center=None) -> ScalarPotential:
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    w2 = omega ** 2
    def value(z):
        d = z - c.reshape((dim,) + (1,) * (z.ndim - 1))
        return v0 + 0.5 * w2 * np.sum(d * d, axis=0)
    def grad(z):
        d = z - c.reshape((dim,) + (1,) * (z.ndim - 1))
        return w2 * d
    def hess(z):
        out = np.zeros((dim, dim) + z.shape[1:])
        for i in range(dim):
            out[i, i] = w2
        return out
    return ScalarPotential(f"harmonic(v0={v0},omega={omega},center={c.tolist()})",
                           dim, value, grad, hess)


def gaussian_bump(dim: int, v0: float, amp: float, sigma: float, center=None) -> ScalarPotential:
    """v0 + amp * exp(-|z-c|^2 / (2 sigma^2)); positive and C^3-bounded
    on all of R^N when v0 > 0 and amp >= -v0."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    s2 = sigma ** 2
    def _bump(z):
        d = z - c.reshape((dim,) + (1,) * (z.ndim - 1))
        return np.exp(-0.5 * np.sum(d * d, axis=0) / s2), d
    def value(z):
        g, _ = _bump(z)
        return v0 + amp * g
    def grad(z):
        g, d = _bump(z)
        return -amp * d * g / s2
    def hess(z):
        g, d = _bump(z)
        out = np.einsum("i...,j...->ij...", d, d) * (amp * g / s2 ** 2)
        for i in range(dim):
            out[i, i] -= amp * g / s2
        return out
    return ScalarPotential(
        f"gaussian_bump(v0={v0},amp={amp},sigma={sigma},center={c.tolist()})",
        dim, value, grad, hess)


def gaussian_kernel(dim: int, sigma: float, amp: float = 1.0) -> ScalarPotential:
    """Default nonlocal kernel: amp * exp(-|z|^2/(2 sigma^2)).

    Positive, C^3-bounded, maximum at the origin so grad Phi(0) = 0.
    Coulomb-type kernels are out of scope (not C^3 at 0)."""
    if amp <= 0 or sigma <= 0:
        raise ConfigError("gaussian kernel needs positive amp and sigma")
    return gaussian_bump(dim, 0.0, amp, sigma)


# ---------------------------------------------------------------------------
# catalog: vector potentials
# ---------------------------------------------------------------------------

def zero_vector_potential(dim: int) -> VectorPotential:
    def value(z):
        return np.zeros_like(z)
    def jacobian(z):
        return np.zeros((dim, dim) + z.shape[1:])
    return VectorPotential("zero", dim, value, jacobian)


def constant_vector_potential(dim: int, a) -> VectorPotential:
    """A = a (a constant-shift gauge, A = grad(a.z))."""
    a = np.asarray(a, dtype=float).reshape(dim)
    def value(z):
        return np.broadcast_to(a.reshape((dim,) + (1,) * (z.ndim - 1)),
                               (dim,) + z.shape[1:]).copy()
    def jacobian(z):
        return np.zeros((dim, dim) + z.shape[1:])
    return VectorPotential(f"constant({a.tolist()})", dim, value, jacobian)


def gaussian_vector_potential_1d(amp: float, sigma: float) -> VectorPotential:
    """A(z) = (amp exp(-z^2/(2 sigma^2)),): a bounded 1D magnetic potential
    (zero field, nonzero advection and divergence terms)."""
    s2 = sigma ** 2
    def value(z):
        return amp * np.exp(-0.5 * z * z / s2)
    def jacobian(z):
        return (-amp * z * np.exp(-0.5 * z * z / s2) / s2)[None]
    return VectorPotential(f"gaussian1d(amp={amp},sigma={sigma})", 1,
                           value, jacobian)


def uniform_field_2d(b: float) -> VectorPotential:
    """A = (-b z2/2, b z1/2): constant magnetic field B = b in the plane.
    (Unbounded on R^2; used only on the truncated box.)"""
    def value(z):
        return np.stack([-0.5 * b * z[1], 0.5 * b * z[0]])
    def jacobian(z):
        out = np.zeros((2, 2) + z.shape[1:])
        out[0, 1] = 0.5 * b    # d1 A2
        out[1, 0] = -0.5 * b   # d2 A1
        return out
    return VectorPotential(f"uniform_field(b={b})", 2, value, jacobian)


def gaussian_rotation_2d(b: float, sigma: float) -> VectorPotential:
    """A = (b/2) (-z2, z1) exp(-|z|^2/(2 sigma^2)): bounded, divergence-free,
    with B(0) = b and small C^2 norm for small b."""
    s2 = sigma ** 2
    def _w(z):
        return np.exp(-0.5 * (z[0] ** 2 + z[1] ** 2) / s2)
    def value(z):
        w = _w(z)
        return np.stack([-0.5 * b * z[1] * w, 0.5 * b * z[0] * w])
    def jacobian(z):
        w = _w(z)
        z1, z2 = z[0], z[1]
        out = np.empty((2, 2) + np.broadcast(z1, z2).shape)
        out[0, 0] = 0.5 * b * z1 * z2 * w / s2          # d1 A1
        out[1, 0] = -0.5 * b * w * (1.0 - z2 * z2 / s2)  # d2 A1
        out[0, 1] = 0.5 * b * w * (1.0 - z1 * z1 / s2)   # d1 A2
        out[1, 1] = -0.5 * b * z1 * z2 * w / s2          # d2 A2
        return out
    return VectorPotential(f"gaussian_rotation(b={b},sigma={sigma})", 2, value, jacobian)


def gradient_gauge_potential(scalar: ScalarPotential) -> VectorPotential:
    """A = grad(chi) for a catalog scalar chi: a pure gauge field."""
    def value(z):
        return scalar.grad(z)
    def jacobian(z):
        return scalar.hess(z)
    return VectorPotential(f"grad({scalar.name})", scalar.dim, value, jacobian)


# ---------------------------------------------------------------------------
# the (V, A, Phi) triple
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSet:
    """Electric potential V, magnetic potential A, nonlocal kernel Phi.

    Phi=None disables the nonlocal channel entirely.
    """

    V: ScalarPotential
    A: VectorPotential
    Phi: ScalarPotential | None = None

    def __post_init__(self):
        if self.V.dim != self.A.dim:
            raise ConfigError("V and A dimensions differ")
        if self.Phi is not None and self.Phi.dim != self.V.dim:
            raise ConfigError("Phi dimension differs from V")

    @property
    def dim(self) -> int:
        return self.V.dim

    @property
    def has_nonlocal(self) -> bool:
        return self.Phi is not None

    def phi_at_zero(self) -> float:
        if self.Phi is None:
            return 0.0
        return float(self.Phi.value(np.zeros(self.dim)))

    def validate_on_box(self, half_extent: float, samples: int = 33):
        """Check V > 0 (and Phi > 0, grad Phi(0) = 0) on the truncated
        macro domain by dense sampling."""
        ax = np.linspace(-half_extent, half_extent, samples)
        pts = np.array(np.meshgrid(*([ax] * self.dim), indexing="ij"))
        if np.min(self.V.value(pts)) <= 0:
            raise ConfigError(f"V={self.V.name} is not positive on the box")
        if self.Phi is not None:
            if np.min(self.Phi.value(pts)) <= 0:
                raise ConfigError(f"Phi={self.Phi.name} is not positive on the box")
            g0 = np.linalg.norm(self.Phi.grad(np.zeros(self.dim)))
            if g0 > 1e-12:
                raise ConfigError("Phi must have a critical point at the origin")


def c2_norm_estimate(A: VectorPotential, half_extent: float, samples: int = 65) -> float:
    """sup-norm estimate of ||A||_{C^2} on the box by dense sampling with
    spectral-free finite differences for the second derivatives."""
    ax = np.linspace(-half_extent, half_extent, samples)
    pts = np.array(np.meshgrid(*([ax] * A.dim), indexing="ij"))
    val = np.max(np.abs(A.value(pts)))
    jac = A.jacobian(pts)
    d1 = np.max(np.abs(jac))
    # second derivatives of each A_j via centered differences of the jacobian
    eps = 1e-5 * max(1.0, half_extent)
    d2 = 0.0
    for axis in range(A.dim):
        shift = np.zeros((A.dim,) + (1,) * A.dim)
        shift[axis] = eps
        jp = A.jacobian(pts + shift)
        jm = A.jacobian(pts - shift)
        d2 = max(d2, float(np.max(np.abs(jp - jm))) / (2 * eps))
    return float(val + d1 + d2)
