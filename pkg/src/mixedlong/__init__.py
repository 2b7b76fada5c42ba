"""Regression for longitudinal data with synchronous and asynchronous covariates."""

from .bandwidth import (
    BandwidthGrid,
    BandwidthRule,
    CvCurve,
    cv_bandwidth,
    power_grid,
    quartile_scaled_grid,
)
from .core import (
    DataError,
    DegenerateSmootherError,
    EmptyWindowError,
    FitReport,
    LongitudinalDataset,
    MixedLongError,
    NumericalError,
    SingularDesignError,
    SubjectRecord,
    validate_dataset,
)
from .estimators_async import (
    enumerate_pairs,
    fit_centering_lvcf,
    fit_lvcf,
    fit_simultaneous,
    fit_two_step,
    lvcf_align,
)
from .estimators_sync import (
    fit_centering,
    fit_naive,
    fit_plm,
    fit_pooled_full,
    screen_correlation,
)
from .kernels import (
    KernelSpec,
    apply_annihilator,
    kernel_eval,
    local_linear_weights,
    nw_mean,
    scaled_kernel,
)
from .io import RunConfig, UsageError, read_dataset, standardize, write_dataset
from .example import load_example
from .simulation import (
    MCEstimator,
    gen_dataset,
    run_mc,
    summaries_to_csv,
    table1_scenario,
    table2_scenario,
)

__version__ = "0.1.0"
