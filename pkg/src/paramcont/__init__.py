"""Homotopy and continuation training for small neural networks."""
from .continuation import (
    ContinuationTrace,
    ParcConfig,
    critical_residual,
    npc_run,
    parc_correct,
    parc_predict,
    parc_run,
)
from .errors import (
    ContinuationStalled,
    CorrectorFailed,
    DegenerateSecant,
    FormatError,
    MaxStepsExceeded,
    NumericalDivergence,
    SingularSystem,
)
from .homotopy import HomotopyKind, HomotopySpec, blended_loss, h_activation, h_brightness
from .models import MlpModel, autoencoder, classifier, init_params, loss_and_grads, make_objective
from .param_space import HomotopyPoint, Normalization, Secant, flatten, secant_from, unflatten

__version__ = "0.1.0"
