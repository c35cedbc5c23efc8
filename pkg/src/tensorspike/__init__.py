"""Bayes-optimal inference in the spiked tensor model."""

__version__ = "0.1.0"

from .amp import AmpResult, AmpState, amp_init, amp_run, amp_step, run_both_inits
from .errors import NumericError, TensorSpikeError, UsageError
from .free_energy import maximize_phi_rs, mmse, mutual_information, phi_rs, t_mmse
from .model import (
    AWGN,
    Bernoulli,
    Clusters,
    CustomChannel,
    Discrete,
    Gaussian,
    ModelSpec,
    Rademacher,
    make_instance,
    make_score,
    parse_prior,
)
from .phase import ThresholdSet, classify, compute_thresholds, table1, tri_critical
from .state_evolution import se_branches, se_fixed_point, se_step
from .tensor_core import SymmetricTensor, contract_leave_one, read_tensor, write_tensor

__all__ = [
    "__version__",
    "AWGN",
    "AmpResult",
    "AmpState",
    "Bernoulli",
    "Clusters",
    "CustomChannel",
    "Discrete",
    "Gaussian",
    "ModelSpec",
    "NumericError",
    "Rademacher",
    "SymmetricTensor",
    "TensorSpikeError",
    "ThresholdSet",
    "UsageError",
    "amp_init",
    "amp_run",
    "amp_step",
    "classify",
    "compute_thresholds",
    "contract_leave_one",
    "make_instance",
    "make_score",
    "maximize_phi_rs",
    "mmse",
    "mutual_information",
    "parse_prior",
    "phi_rs",
    "read_tensor",
    "run_both_inits",
    "se_branches",
    "se_fixed_point",
    "se_step",
    "t_mmse",
    "table1",
    "tri_critical",
    "write_tensor",
]
