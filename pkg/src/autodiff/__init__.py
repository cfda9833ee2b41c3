from src.autodiff.tensor import Parameter, Tensor, as_tensor, get_default_dtype, is_grad_enabled, no_grad, precision
from src.autodiff import ops
from src.autodiff.losses import cross_entropy, mse
from src.autodiff.nn import BatchNorm2d, Conv2d, ConvBNReLU, ConvTranspose2d, Module
from src.autodiff.optim import Adam, adam_step
from src.autodiff.gradcheck import GRAD_CHECKS, grad_check, run_grad_checks
from src.autodiff.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor", "Parameter", "as_tensor", "get_default_dtype", "is_grad_enabled", "no_grad", "precision",
    "ops", "cross_entropy", "mse",
    "Module", "Conv2d", "ConvTranspose2d", "BatchNorm2d", "ConvBNReLU",
    "Adam", "adam_step", "GRAD_CHECKS", "grad_check", "run_grad_checks",
    "load_checkpoint", "save_checkpoint",
]
