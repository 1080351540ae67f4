"""Flow models with learnable so(N) gauge corrections.

Modules split along functional lines: `rng` (deterministic randomness),
`nn` (dense networks, manual reverse mode, Adam, checkpoints), `songauge`
(so(N) algebra and gauge diagnostics), `flowfield` (velocity assembly and
ODE sampling), `gmmdata` (Gaussian-mixture benchmark data), `fmtrain`
(conditional flow-matching training and the exact mixture oracle), and
`bench`/`cli` (experiment harness).
"""

from .rng import Prng
from .nn import AdamState, Mlp, adam_step, mlp_backward, mlp_forward, mlp_init, silu
from .songauge import GaugeFieldValue, SkewBasis, bracket, skew_basis
from .flowfield import (
    GaugeFlowModel, ModelKind, PlainFlowModel, build_model, integrate,
    load_model, param_count, save_model, velocity,
)
from .gmmdata import (
    Dataset, GmmSpec, build_means, gmm_log_density, load_dataset,
    sample_dataset, save_dataset,
)
from .fmtrain import (
    PathSample, TrainConfig, cfm_loss, eval_loss, marginal_velocity_oracle,
    oracle_velocity, sample_path, train,
)

__version__ = "0.1.0"

__all__ = [
    "Prng",
    "AdamState", "Mlp", "adam_step", "mlp_backward", "mlp_forward", "mlp_init", "silu",
    "GaugeFieldValue", "SkewBasis", "bracket", "skew_basis",
    "GaugeFlowModel", "ModelKind", "PlainFlowModel", "build_model", "integrate",
    "load_model", "param_count", "save_model", "velocity",
    "Dataset", "GmmSpec", "build_means", "gmm_log_density", "load_dataset",
    "sample_dataset", "save_dataset",
    "PathSample", "TrainConfig", "cfm_loss", "eval_loss", "marginal_velocity_oracle",
    "oracle_velocity", "sample_path", "train",
]
