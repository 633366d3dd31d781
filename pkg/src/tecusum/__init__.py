"""Sequential detection of temporary, possibly asynchronous changes across data streams."""

from .fusion import (
    FusedStatistic,
    FusionRule,
    GlobalDetector,
    LocalStatistic,
    RuleKind,
    fuse,
    fuse_censored_adaptive,
    fuse_censored_fixed,
    fuse_max,
    fuse_sum,
)
from .local import (
    ChangePointEstimate,
    CusumState,
    FmaState,
    TeCusumState,
    cusum_update,
    estimate_change_point,
    fma_update,
    reset,
    tecusum_update,
)
from .methods import PRESET_NAMES, TUNED_ALPHA, BatchRunner, Method, preset_methods, preset_rule
from .models import GaussianMeanShiftModel, amplitude_for_snr, llr, snr_db

__version__ = "0.1.0"
