from .tensor import Tensor, Parameter, ParameterKind, ParameterStore, Tape, get_default_dtype, verification_mode
from .ops import BatchNormMode
from .rng import Rng, derive_seed
from .gradcheck import GradCheckReport, check_gradients, grad_check
