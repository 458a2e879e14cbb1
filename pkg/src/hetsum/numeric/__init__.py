from . import ops
from .checkpoint import CheckpointError, load_arrays, save_arrays
from .gradcheck import GradCheckReport, grad_check
from .optim import Adam, AdamState, MissingGradError, adam_step
from .tensor import ShapeError, Tensor, backward, no_grad

__all__ = [
    "Adam", "AdamState", "CheckpointError", "GradCheckReport", "MissingGradError",
    "ShapeError", "Tensor", "adam_step", "backward", "grad_check", "load_arrays",
    "no_grad", "ops", "save_arrays",
]
