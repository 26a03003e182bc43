"""Factor-based AR-sieve bootstrap for high-dimensional time series.

Pipeline: estimate a latent factor model from accumulated symmetrised
autocovariances, fit a VAR sieve to the extracted factors by Yule-Walker,
resample centered residuals to regenerate factor paths, reconstruct
bootstrap panels through the loadings, and build bootstrap confidence
intervals (with interval scores) for mean statistics and spiked
autocovariance eigenvalues.
"""

from .bootstrap import (
    BootstrapConfig,
    BootstrapReplicate,
    NoiseCovEstimate,
    center_residuals,
    estimate_noise_cov,
    generate_factor_path,
    reconstruct_panel,
    reconstruct_panel_noise_augmented,
    resample_innovations,
    run_bootstrap,
)
from .errors import (
    ArsieveError,
    ConfigError,
    CsvParseError,
    DegenerateSpectrumError,
    ExplosiveModelError,
    InsufficientSampleError,
    InvalidInputError,
    InvalidLagError,
    NumericFailureError,
    ReplicateError,
    SingularSystemError,
)
from .factors import (
    FactorModelFit,
    LoadingMatrix,
    SymmetricSpectrum,
    accumulated_sym_autocov,
    estimate_loadings,
    estimate_num_factors,
    extract_factors,
    fit_factor_model,
    sym_eigendecomposition,
)
from .inference import (
    CoverageRow,
    IntervalEstimate,
    StatisticId,
    aggregate_coverage,
    empirical_quantile,
    interval_score,
    mean_statistic,
    normal_interval,
    normal_quantile,
    reverse_percentile_interval,
    spiked_eigenvalue,
    unreversed_percentile_interval,
)
from .panel import (
    FactorSeries,
    LagCovariance,
    PanelSeries,
    column_mean,
    demean,
    read_panel_csv,
    sample_autocov,
    write_panel_csv,
)
from .rng import SeededGenerator, draw_standard_normal, draw_uniform_index, stable_mix
from .simlab import (
    DgpSpec,
    DgpTruth,
    ExperimentGrid,
    emit_table,
    run_coverage_experiment,
    simulate,
    simulate_three_factor_var1,
    simulate_two_factor,
)
from .varsieve import (
    OrderSelection,
    VarSieveModel,
    factor_autocov,
    select_order,
    stability_check,
    yule_walker_fit,
)

__version__ = "0.1.0"
