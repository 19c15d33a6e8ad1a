"""Kinetic-theory residual operator, a reference DSMC gas solver, and a small
dense-network engine for parameter-condensation experiments."""
from . import _backend
from .errors import (
    DivergenceDetected,
    InvalidConfig,
    KitinetError,
    NonDivisibleDimension,
    NonFiniteInput,
    StaleReport,
    StaleTape,
)
from .kernel import (
    CollisionReport,
    KitiConfig,
    ParticleBatch,
    PairwiseKinematics,
    a_edition_forward,
    kitinet_forward,
    kitinet_vjp,
)

__version__ = "0.1.0"


def backend():
    """Name of the active kernel backend: ``"compiled"`` or ``"python"``."""
    return _backend.name()
