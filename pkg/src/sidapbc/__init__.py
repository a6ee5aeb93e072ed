"""Verification and simulation toolkit for IDA-PBC and SIDA-PBC with generalized forces."""

from .core import (
    MatrixField,
    MechanicalSystem,
    ProbeBox,
    ScalarField,
    State,
    TargetDynamics,
    VectorField,
    fd_gradient,
    fd_jacobian,
    left_annihilator,
    open_loop_field,
    psd_sqrt,
    target_field,
)
from .matching import pde_count

__version__ = "0.1.0"
