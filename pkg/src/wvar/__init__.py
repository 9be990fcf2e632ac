"""Worst-case VaR under scenario ambiguity.

Returns are segmented by penalized kernel change-point detection, a
two-layer Gaussian mixture with per-segment scenario weights is fitted by
EM, and VaR / WVaR / BVaR are read off the fitted scenario set.
"""

__version__ = "0.1.0"

from .em import FitConfig, FitResult, Responsibilities, e_step, fit, init_model, log_likelihood, m_step
from .mixture import (
    FlattenedMixture,
    GaussianComponent,
    LabelTrace,
    ScenarioComponent,
    TwoLayerMixture,
    flatten,
    sample,
    scenario_cdf,
    scenario_pdf,
    segment_pdf,
)
from .risk import (
    RiskReport,
    empirical_var,
    mixture_quantile,
    one_layer_overestimation_check,
    pooled_var,
    value_at_risk,
    worst_best_var,
)
from .segmentation import (
    KernelSpec,
    Segmentation,
    SegmentationResult,
    detect_changepoints,
    exhaustive_segmentation_oracle,
    kernel_cost,
    median_heuristic_bandwidth,
)
from .series import PriceSeries, ReturnSeries, load_prices, to_log_returns
