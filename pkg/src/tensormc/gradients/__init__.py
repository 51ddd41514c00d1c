from .objectives import (
    DREGS,
    KINDS,
    REPARAM,
    STL,
    GradientResult,
    finite_difference,
    grad_objective,
    objective_value,
    pack,
)
from .reference import dregs_direct_iwae
from .tape import Tape, record_reparam_sample, stop_gradient
