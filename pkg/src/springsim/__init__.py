"""Learned graph-network simulators for particle-spring systems.

Submodules: autodiff (tape engine), physics (ground truth), integrators
(RK1-RK4 and symplectic S1-S3), graphnet (GN block), models (predictors),
dataio (datasets and formats), training, evaluation, cli.
"""

__version__ = "0.1.0"
