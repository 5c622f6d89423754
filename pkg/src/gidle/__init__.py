"""gidle: distribution-preserving logit exclusion vs naive masking.

Log-space kernels, Unicode-script ban sets, composable logit processors, a
fully computable toy language model, and a mean/variance experiment harness
for measuring when the two masking strategies diverge.
"""

__version__ = "0.1.0"

from .numerics import (
    IndexSet,
    LogitVector,
    LogProbVector,
    ProbVector,
    allowed_log_mass,
    constrained_distribution,
    kl_divergence,
    log_softmax,
    softmax,
    total_variation,
)
from .processors import (
    Gidle,
    NaiveMask,
    Pipeline,
    RepetitionPenalty,
    StepContext,
    Temperature,
    TopK,
    TopP,
    gidle_process,
    naive_mask,
    run_pipeline,
)
from .vocab import BanSet, BanSpec, Vocabulary, build_ban_set, classify_token, load_vocabulary

__all__ = [
    "IndexSet",
    "LogitVector",
    "LogProbVector",
    "ProbVector",
    "allowed_log_mass",
    "constrained_distribution",
    "kl_divergence",
    "log_softmax",
    "softmax",
    "total_variation",
    "Gidle",
    "NaiveMask",
    "Pipeline",
    "RepetitionPenalty",
    "StepContext",
    "Temperature",
    "TopK",
    "TopP",
    "gidle_process",
    "naive_mask",
    "run_pipeline",
    "BanSet",
    "BanSpec",
    "Vocabulary",
    "build_ban_set",
    "classify_token",
    "load_vocabulary",
    "__version__",
]
