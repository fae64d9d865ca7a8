"""Hot loops, each with a numba and a pure-numpy implementation.

The public names dispatch on ``recdir._backend.BACKEND``; the ``*_numba`` and
``*_numpy`` variants stay importable so tests and benchmarks can compare them.
"""
from .ar import ar2_filter, ar2_filter_numba, ar2_filter_numpy
from .lm import quad_project, quad_project_numba, quad_project_numpy
from .mlp import (
    mlp_loss_grad,
    mlp_loss_grad_numba,
    mlp_loss_grad_numpy,
    mlp_predict,
    mlp_train,
    mlp_train_numba,
    mlp_train_numpy,
)

__all__ = [
    "ar2_filter", "ar2_filter_numba", "ar2_filter_numpy",
    "quad_project", "quad_project_numba", "quad_project_numpy",
    "mlp_loss_grad", "mlp_loss_grad_numba", "mlp_loss_grad_numpy",
    "mlp_predict", "mlp_train", "mlp_train_numba", "mlp_train_numpy",
]
