"""solidyn: semiclassical soliton dynamics for vector magnetic NLS systems.

Ground states of the coupled focusing elliptic system, split-step spectral
evolution of the PDE, RK4 integration of the driving point-particle system,
the diagnostic functionals of the soliton-tracking machinery, and an
eps-sweep harness that fits the O(eps) / O(eps^2) rates.
"""

__version__ = "0.1.0"
