"""Discrete geodesic morphing of manifold-valued images.

Subsystems
----------
manifold    exact geometry of the value manifolds (SPD, hyperbolic, flat)
field       grid images, deformations, warping, inversion, Jacobians
energy      hyperelastic density, regularizer, pair energy and gradients
pathsolver  alternating minimization of the discrete path energy
extension   continuous-time extension operators and recovery sequences
harness     CLI, file formats, synthetic data, rendering, experiments
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
