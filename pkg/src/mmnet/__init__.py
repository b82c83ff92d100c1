"""MMNet: two-branch micro-expression recognition on a numpy autograd core."""

from .config import RunConfig
from .errors import MMNetError
from .kernels import BACKEND
from .model import MMNet, build_model
from .tensor import Tensor, backward, no_grad

__version__ = "0.1.0"

__all__ = ["BACKEND", "MMNet", "MMNetError", "RunConfig", "Tensor", "backward", "build_model", "no_grad"]
