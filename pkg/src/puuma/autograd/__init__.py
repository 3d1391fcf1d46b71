from . import ops
from .conv import conv3d, conv3d_reference, reference_kernels, upsample_nearest
from .gradcheck import grad_check, numeric_grad, parameter_grad_check, relative_error
from .io import read_tensor, tensor_from_bytes, tensor_to_bytes
from .tensor import (ShapeError, Tensor, backward, get_default_dtype, no_grad, precision,
                     set_debug, topological_order)

__all__ = [
    "ShapeError", "Tensor", "backward", "conv3d", "conv3d_reference", "get_default_dtype",
    "grad_check", "no_grad", "numeric_grad", "ops", "parameter_grad_check", "precision", "read_tensor",
    "reference_kernels", "relative_error", "set_debug", "tensor_from_bytes",
    "tensor_to_bytes", "topological_order", "upsample_nearest",
]
